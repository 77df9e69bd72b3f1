#include <algorithm>
#include <cmath>
#include <numbers>

#include "l2g/errors.hpp"
#include "l2g/tasks.hpp"

namespace l2g {

namespace {

constexpr int kCenterRetries = 10000;

std::string class_label(std::size_t i, std::size_t total) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::max<std::size_t>(3, std::to_string(total - 1).size());
  return "c" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Fixed random affine -> tanh -> affine map from latent space into R^D.
class MixingMap {
 public:
  MixingMap(std::size_t latent_dim, std::size_t feature_dim, double latent_extent, std::uint64_t seed)
      : latent_(latent_dim), hidden_(std::max(feature_dim, 2 * latent_dim)), out_(feature_dim) {
    Rng rng(seed);
    const double s1 = 1.0 / (std::sqrt(static_cast<double>(latent_)) * latent_extent);
    w1_.resize(latent_ * hidden_);
    for (double& w : w1_) w = s1 * rng.normal();
    b1_.resize(hidden_);
    for (double& b : b1_) b = rng.uniform(-0.5, 0.5);
    const double s2 = 2.0 / std::sqrt(static_cast<double>(hidden_));
    w2_.resize(hidden_ * out_);
    for (double& w : w2_) w = s2 * rng.normal();
  }

  std::vector<double> operator()(const std::vector<double>& z) const {
    std::vector<double> h(b1_);
    for (std::size_t i = 0; i < latent_; ++i) {
      for (std::size_t j = 0; j < hidden_; ++j) h[j] += z[i] * w1_[i * hidden_ + j];
    }
    for (double& v : h) v = std::tanh(v);
    std::vector<double> y(out_, 0.0);
    for (std::size_t j = 0; j < hidden_; ++j) {
      for (std::size_t k = 0; k < out_; ++k) y[k] += h[j] * w2_[j * out_ + k];
    }
    return y;
  }

 private:
  std::size_t latent_, hidden_, out_;
  std::vector<double> w1_, b1_, w2_;
};

}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes < 2 * max_way) {
    throw ContractViolation("synthetic: num_classes " + std::to_string(num_classes) + " is below 2*max_way = " +
                            std::to_string(2 * max_way));
  }
  if (max_way < 1) throw ContractViolation("synthetic: max_way must be positive");
  if (!(noise_std > 0.0)) throw ContractViolation("synthetic: noise_std must be positive");
  if (!(class_separation >= 0.0) || !std::isfinite(class_separation)) {
    throw ContractViolation("synthetic: class_separation must be finite and non-negative");
  }
  if (latent_dim == 0 || feature_dim == 0) throw ContractViolation("synthetic: dimensions must be positive");
  if (kind == GeneratorKind::rotated_rings && latent_dim < 2) {
    throw ContractViolation("synthetic: rotated_rings needs latent_dim >= 2");
  }
  if (instances_per_class == 0) throw ContractViolation("synthetic: instances_per_class must be positive");
}

SyntheticData gen_synthetic_detailed(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t k = spec.num_classes;
  const std::size_t dz = spec.latent_dim;
  SyntheticData out;
  out.latent_points.resize(k);

  double extent = 1.0;
  if (spec.kind == GeneratorKind::gaussian_clusters) {
    const double per_axis = std::ceil(std::pow(static_cast<double>(k), 1.0 / static_cast<double>(dz)));
    extent = std::max(1.0, spec.class_separation * per_axis);
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> center(dz);
      bool placed = false;
      for (int attempt = 0; attempt < kCenterRetries && !placed; ++attempt) {
        for (double& v : center) v = rng.uniform(-extent, extent);
        placed = std::all_of(out.latent_centers.begin(), out.latent_centers.end(),
                             [&](const auto& other) { return distance(center, other) >= spec.class_separation; });
      }
      if (!placed) {
        throw GenerationError("synthetic: could not place class " + std::to_string(c) + " at separation " +
                              std::to_string(spec.class_separation));
      }
      out.latent_centers.push_back(center);
      for (std::size_t i = 0; i < spec.instances_per_class; ++i) {
        std::vector<double> z = center;
        for (double& v : z) v += spec.noise_std * rng.normal();
        out.latent_points[c].push_back(std::move(z));
      }
    }
  } else {
    // Ring radii are spaced by the separation; the assignment of radii to
    // labels is shuffled so label order carries no geometry.
    const auto radius_rank = sample_without_replacement(k, k, rng);
    extent = spec.class_separation * static_cast<double>(k + 1);
    for (std::size_t c = 0; c < k; ++c) {
      const double radius = spec.class_separation * static_cast<double>(radius_rank[c] + 1);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      std::vector<double> center(dz, 0.0);
      center[0] = radius * std::cos(phase + std::numbers::pi / 2);
      center[1] = radius * std::sin(phase + std::numbers::pi / 2);
      out.latent_centers.push_back(center);
      for (std::size_t i = 0; i < spec.instances_per_class; ++i) {
        const double angle = phase + rng.uniform(0.0, std::numbers::pi);
        std::vector<double> z(dz, 0.0);
        z[0] = radius * std::cos(angle);
        z[1] = radius * std::sin(angle);
        for (double& v : z) v += spec.noise_std * rng.normal();
        out.latent_points[c].push_back(std::move(z));
      }
    }
  }

  const MixingMap mix(dz, spec.feature_dim, extent, spec.mixing_seed);
  std::vector<ClassData> classes;
  for (std::size_t c = 0; c < k; ++c) {
    ClassData cls{class_label(c, k), {}};
    for (const auto& z : out.latent_points[c]) cls.instances.push_back(mix(z));
    classes.push_back(std::move(cls));
  }
  out.dataset = Dataset(spec.feature_dim, std::move(classes));
  return out;
}

Dataset gen_synthetic(const SyntheticSpec& spec, Rng& rng) { return gen_synthetic_detailed(spec, rng).dataset; }

}  // namespace l2g
