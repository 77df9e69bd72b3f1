#include <cmath>

#include "l2g/training.hpp"

namespace l2g {

namespace {

void check_grads(const Parameters& params, const GradientMap& grads, const char* who) {
  if (grads.size() != params.size()) throw ContractViolation(std::string(who) + ": gradient keys differ from parameters");
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractViolation(std::string(who) + ": no gradient for '" + name + "'");
    if (it->second.shape() != p.shape()) {
      throw ContractViolation(std::string(who) + ": gradient for '" + name + "' has shape " +
                              shape_to_string(it->second.shape()) + ", parameter has " + shape_to_string(p.shape()));
    }
  }
}

}  // namespace

AdamState AdamState::for_parameters(const Parameters& params) {
  AdamState s;
  for (const auto& [name, p] : params) {
    s.first_moment.emplace(name, Tensor::zeros(p.shape()));
    s.second_moment.emplace(name, Tensor::zeros(p.shape()));
  }
  return s;
}

void adam_update(AdamState& opt, Parameters& params, const GradientMap& grads, double lr) {
  check_grads(params, grads, "adam_update");
  const std::uint64_t t = opt.step + 1;
  const double correction1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));

  Parameters next_params;
  std::map<std::string, Tensor> next_m, next_v;
  for (const auto& [name, p] : params) {
    auto m_it = opt.first_moment.find(name);
    auto v_it = opt.second_moment.find(name);
    if (m_it == opt.first_moment.end() || v_it == opt.second_moment.end() || m_it->second.shape() != p.shape() ||
        v_it->second.shape() != p.shape()) {
      throw ContractViolation("adam_update: optimizer state does not mirror parameter '" + name + "'");
    }
    auto g = grads.at(name).values();
    auto m = m_it->second.values();
    auto v = v_it->second.values();
    auto x = p.values();
    std::vector<double> m2(x.size()), v2(x.size()), x2(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      m2[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v2[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double m_hat = m2[i] / correction1;
      const double v_hat = v2[i] / correction2;
      x2[i] = x[i] - lr * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
    // Tensor construction rejects non-finite values before anything commits.
    next_m.emplace(name, Tensor(p.shape(), std::move(m2)));
    next_v.emplace(name, Tensor(p.shape(), std::move(v2)));
    next_params.emplace(name, Tensor(p.shape(), std::move(x2)));
  }
  params = std::move(next_params);
  opt.first_moment = std::move(next_m);
  opt.second_moment = std::move(next_v);
  opt.step = t;
}

void sgd_update(Parameters& params, const GradientMap& grads, double lr) {
  check_grads(params, grads, "sgd_update");
  Parameters next;
  for (const auto& [name, p] : params) {
    auto g = grads.at(name).values();
    auto x = p.values();
    std::vector<double> x2(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) x2[i] = x[i] - lr * g[i];
    next.emplace(name, Tensor(p.shape(), std::move(x2)));
  }
  params = std::move(next);
}

double lr_schedule(double initial_lr, std::size_t episode, std::size_t halve_every) {
  if (halve_every == 0) throw ContractViolation("lr_schedule: K must be positive");
  return initial_lr * std::pow(0.5, static_cast<double>(episode / halve_every));
}

}  // namespace l2g
