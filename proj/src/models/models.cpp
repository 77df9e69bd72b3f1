#include <cmath>

#include "l2g/errors.hpp"
#include "l2g/models.hpp"

namespace l2g {

namespace {

std::string layer_key(std::string_view prefix, std::size_t i, std::string_view part) {
  return std::string(prefix) + "." + std::to_string(i) + "." + std::string(part);
}

const Tensor& lookup(const Parameters& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ContractViolation("missing parameter '" + name + "'");
  return it->second;
}

Tensor mlp(std::string_view prefix, const std::vector<std::size_t>& dims, const Parameters& params, Tensor x) {
  const Tensor ones = Tensor::full({x.shape()[0], 1}, 1.0);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const Tensor& w = lookup(params, layer_key(prefix, i, "weight"));
    const Tensor& b = lookup(params, layer_key(prefix, i, "bias"));
    x = add(matmul(x, w), matmul(ones, b));
    if (i + 2 < dims.size()) x = relu(x);
  }
  return x;
}

void add_layer_shapes(std::map<std::string, Shape>& out, std::string_view prefix, const std::vector<std::size_t>& dims) {
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    out[layer_key(prefix, i, "weight")] = {dims[i], dims[i + 1]};
    out[layer_key(prefix, i, "bias")] = {1, dims[i + 1]};
  }
}

Prototypes aggregate(const Tensor& embedded, std::span<const std::size_t> group_sizes, bool average) {
  if (embedded.rank() != 2) throw ContractViolation("prototypes: embeddings must be [rows, M]");
  if (group_sizes.empty()) throw ContractViolation("prototypes: no class groups");
  std::size_t rows = 0;
  for (std::size_t c = 0; c < group_sizes.size(); ++c) {
    if (group_sizes[c] == 0) throw ContractViolation("prototypes: class group " + std::to_string(c) + " is empty");
    rows += group_sizes[c];
  }
  if (rows != embedded.shape()[0]) {
    throw ContractViolation("prototypes: group sizes cover " + std::to_string(rows) + " rows, embeddings have " +
                            std::to_string(embedded.shape()[0]));
  }
  // Aggregation as a [C, rows] weight matrix keeps the op differentiable.
  std::vector<double> weights(group_sizes.size() * rows, 0.0);
  std::size_t r = 0;
  for (std::size_t c = 0; c < group_sizes.size(); ++c) {
    const double w = average ? 1.0 / static_cast<double>(group_sizes[c]) : 1.0;
    for (std::size_t i = 0; i < group_sizes[c]; ++i) weights[c * rows + r++] = w;
  }
  return {matmul(Tensor({group_sizes.size(), rows}, std::move(weights)), embedded)};
}

void check_labels(std::span<const std::size_t> labels, std::size_t classes, std::size_t expected, const char* who) {
  if (labels.size() != expected) {
    throw ContractViolation(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(expected) + " queries");
  }
  for (std::size_t y : labels) {
    if (y >= classes) {
      throw ContractViolation(std::string(who) + ": label " + std::to_string(y) + " out of range for " +
                              std::to_string(classes) + " classes");
    }
  }
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes, bool transposed) {
  const std::size_t n = labels.size();
  std::vector<double> v(n * classes, 0.0);
  for (std::size_t q = 0; q < n; ++q) {
    v[transposed ? labels[q] * n + q : q * classes + labels[q]] = 1.0;
  }
  return transposed ? Tensor({classes, n}, std::move(v)) : Tensor({n, classes}, std::move(v));
}

}  // namespace

std::string_view head_name(HeadKind kind) { return kind == HeadKind::proto ? "proto" : "relation"; }

HeadKind parse_head(std::string_view name) {
  if (name == "proto") return HeadKind::proto;
  if (name == "relation") return HeadKind::relation;
  throw ContractViolation("unknown head '" + std::string(name) + "' (expected proto or relation)");
}

std::vector<std::size_t> RelationModule::layer_dims() const {
  std::vector<std::size_t> dims{2 * embed_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  return dims;
}

std::map<std::string, Shape> Model::parameter_shapes() const {
  std::map<std::string, Shape> out;
  add_layer_shapes(out, "embed", embedding.layer_dims);
  if (head.relation) add_layer_shapes(out, "relation", head.relation->layer_dims());
  return out;
}

Model make_model(HeadKind kind, std::size_t input_dim, std::vector<std::size_t> embed_dims,
                 std::vector<std::size_t> relation_hidden) {
  if (input_dim == 0 || embed_dims.empty()) throw ContractViolation("model: needs an input dim and at least one layer");
  for (std::size_t d : embed_dims) {
    if (d == 0) throw ContractViolation("model: zero-width embedding layer");
  }
  Model m;
  m.embedding.layer_dims.push_back(input_dim);
  m.embedding.layer_dims.insert(m.embedding.layer_dims.end(), embed_dims.begin(), embed_dims.end());
  m.head.kind = kind;
  if (kind == HeadKind::relation) {
    for (std::size_t d : relation_hidden) {
      if (d == 0) throw ContractViolation("model: zero-width relation layer");
    }
    m.head.relation = RelationModule{m.embedding.output_dim(), std::move(relation_hidden)};
  }
  return m;
}

Parameters init_parameters(const Model& model, Rng& rng) {
  Parameters params;
  for (const auto& [name, shape] : model.parameter_shapes()) {
    std::vector<double> v(shape_numel(shape), 0.0);
    if (name.ends_with(".weight")) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (double& x : v) x = rng.uniform(-limit, limit);
    }
    params.emplace(name, Tensor(shape, std::move(v)));
  }
  return params;
}

void check_parameters(const Model& model, const Parameters& params) {
  const auto expected = model.parameter_shapes();
  std::string problems;
  for (const auto& [name, shape] : expected) {
    auto it = params.find(name);
    if (it == params.end()) {
      problems += "\n  " + name + ": expected " + shape_to_string(shape) + ", found nothing";
    } else if (it->second.shape() != shape) {
      problems += "\n  " + name + ": expected " + shape_to_string(shape) + ", found " +
                  shape_to_string(it->second.shape());
    }
  }
  for (const auto& [name, t] : params) {
    if (!expected.contains(name)) problems += "\n  " + name + ": unexpected, found " + shape_to_string(t.shape());
  }
  if (!problems.empty()) throw ContractViolation("architecture mismatch:" + problems);
}

Tensor embed(const EmbeddingNet& net, const Parameters& params, const Tensor& x) {
  if (net.layer_dims.size() < 2) throw ContractViolation("embed: network has no layers");
  if (x.rank() != 2 || x.shape()[1] != net.input_dim()) {
    throw ContractViolation("embed: input " + shape_to_string(x.shape()) + " does not have width " +
                            std::to_string(net.input_dim()));
  }
  return mlp("embed", net.layer_dims, params, x);
}

Prototypes prototypes_mean(const Tensor& embedded_support, std::span<const std::size_t> group_sizes) {
  return aggregate(embedded_support, group_sizes, true);
}

Prototypes prototypes_sum(const Tensor& embedded_support, std::span<const std::size_t> group_sizes) {
  return aggregate(embedded_support, group_sizes, false);
}

Tensor proto_loss(const Prototypes& prototypes, const Tensor& embedded_queries, std::span<const std::size_t> labels) {
  const std::size_t classes = prototypes.count();
  check_labels(labels, classes, embedded_queries.shape().at(0), "proto_loss");
  const Tensor dist = sq_euclidean_rowwise(embedded_queries, prototypes.vectors);  // [Q, C]
  const Tensor to_true = sum_all(mul(dist, one_hot(labels, classes, false)));
  const Tensor log_norm = sum_all(logsumexp_last_axis(negate(dist)));
  return add(to_true, log_norm);
}

Tensor relation_scores(const Prototypes& prototypes, const Tensor& embedded_queries, const RelationModule& module,
                       const Parameters& params) {
  if (embedded_queries.rank() != 2 || prototypes.dim() != module.embed_dim ||
      embedded_queries.shape()[1] != module.embed_dim) {
    throw ContractViolation("relation_scores: prototype width " + std::to_string(prototypes.dim()) +
                            " and query shape " + shape_to_string(embedded_queries.shape()) +
                            " must both match embed dim " + std::to_string(module.embed_dim));
  }
  const std::size_t classes = prototypes.count();
  const std::size_t queries = embedded_queries.shape()[0];
  const std::size_t pairs = classes * queries;
  // Row c*Q + q pairs prototype c with query q.
  std::vector<double> pick_proto(pairs * classes, 0.0), pick_query(pairs * queries, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t q = 0; q < queries; ++q) {
      const std::size_t r = c * queries + q;
      pick_proto[r * classes + c] = 1.0;
      pick_query[r * queries + q] = 1.0;
    }
  }
  const Tensor left = matmul(Tensor({pairs, classes}, std::move(pick_proto)), prototypes.vectors);
  const Tensor right = matmul(Tensor({pairs, queries}, std::move(pick_query)), embedded_queries);
  const Tensor logits = mlp("relation", module.layer_dims(), params, concat_last_axis(left, right));
  return reshape(sigmoid(logits), {classes, queries});
}

Tensor relation_mse_loss(const Tensor& scores, std::span<const std::size_t> labels) {
  if (scores.rank() != 2) throw ContractViolation("relation_mse_loss: scores must be [C, numQueries]");
  check_labels(labels, scores.shape()[0], scores.shape()[1], "relation_mse_loss");
  return sum_all(square(sub(scores, one_hot(labels, scores.shape()[0], true))));
}

Tensor episode_loss(const Model& model, const Parameters& params, const Episode& episode) {
  if (episode.way() < 2) throw ContractViolation("episode_loss: needs at least 2 classes");
  const Tensor support = embed(model.embedding, params, episode.support_features());
  const Tensor queries = embed(model.embedding, params, episode.query_features());
  const auto groups = episode.support_group_sizes();
  const auto labels = episode.query_labels();
  if (model.head.kind == HeadKind::proto) {
    return proto_loss(prototypes_mean(support, groups), queries, labels);
  }
  if (!model.head.relation) throw ContractViolation("episode_loss: relation head without a relation module");
  return relation_mse_loss(relation_scores(prototypes_sum(support, groups), queries, *model.head.relation, params),
                           labels);
}

std::vector<std::vector<double>> class_scores(const Model& model, const Parameters& params, const Episode& episode) {
  if (episode.way() < 2) throw ContractViolation("predict: needs at least 2 classes");
  const Parameters frozen = detach_all(params);
  const Tensor support = embed(model.embedding, frozen, episode.support_features());
  const Tensor queries = embed(model.embedding, frozen, episode.query_features());
  const auto groups = episode.support_group_sizes();
  const std::size_t nq = episode.query_count();
  const std::size_t c = episode.way();
  std::vector<std::vector<double>> out(nq, std::vector<double>(c));
  if (model.head.kind == HeadKind::proto) {
    const Tensor dist = sq_euclidean_rowwise(queries, prototypes_mean(support, groups).vectors);
    for (std::size_t q = 0; q < nq; ++q) {
      for (std::size_t k = 0; k < c; ++k) out[q][k] = -dist.at(q, k);
    }
  } else {
    if (!model.head.relation) throw ContractViolation("predict: relation head without a relation module");
    const Tensor s = relation_scores(prototypes_sum(support, groups), queries, *model.head.relation, frozen);
    for (std::size_t q = 0; q < nq; ++q) {
      for (std::size_t k = 0; k < c; ++k) out[q][k] = s.at(k, q);
    }
  }
  return out;
}

std::vector<std::size_t> predict(const Model& model, const Parameters& params, const Episode& episode) {
  const auto scores = class_scores(model, params, episode);
  std::vector<std::size_t> out;
  out.reserve(scores.size());
  for (const auto& row : scores) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace l2g
