#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "l2g/autodiff.hpp"
#include "l2g/rng.hpp"
#include "l2g/tasks.hpp"

namespace l2g {

enum class HeadKind { proto, relation };

std::string_view head_name(HeadKind kind);
HeadKind parse_head(std::string_view name);

// Affine layers with relu between them and nothing after the last.
// Parameters are "embed.<i>.weight" [in,out] and "embed.<i>.bias" [1,out].
struct EmbeddingNet {
  std::vector<std::size_t> layer_dims;  // input dim D first, embedding dim M last

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return layer_dims.size() - 1; }
};

// MLP over concat(prototype, query) with a sigmoid output.
// Parameters are "relation.<i>.weight" and "relation.<i>.bias".
struct RelationModule {
  std::size_t embed_dim = 0;
  std::vector<std::size_t> hidden{32};

  std::vector<std::size_t> layer_dims() const;
};

struct Head {
  HeadKind kind = HeadKind::proto;
  std::optional<RelationModule> relation;  // present iff kind == relation
};

struct Model {
  EmbeddingNet embedding;
  Head head;

  std::map<std::string, Shape> parameter_shapes() const;
};

// Default widths: D -> 64 -> 64 -> 64 embedding, 2M -> 32 -> 1 relation module.
Model make_model(HeadKind kind, std::size_t input_dim, std::vector<std::size_t> embed_dims = {64, 64, 64},
                 std::vector<std::size_t> relation_hidden = {32});

// Glorot-uniform weights, zero biases.
Parameters init_parameters(const Model& model, Rng& rng);

// Throws ContractViolation listing expected vs found shapes on mismatch.
void check_parameters(const Model& model, const Parameters& params);

// One vector per episode class, ordered by class index: [C, M].
struct Prototypes {
  Tensor vectors;

  std::size_t count() const { return vectors.shape()[0]; }
  std::size_t dim() const { return vectors.shape()[1]; }
};

Tensor embed(const EmbeddingNet& net, const Parameters& params, const Tensor& x);

// `embedded_support` stacks the class groups row-wise in class order.
Prototypes prototypes_mean(const Tensor& embedded_support, std::span<const std::size_t> group_sizes);
Prototypes prototypes_sum(const Tensor& embedded_support, std::span<const std::size_t> group_sizes);

// Sum over queries of d(rho_y, q) + log sum_c exp(-d(rho_c, q)), d squared Euclidean.
Tensor proto_loss(const Prototypes& prototypes, const Tensor& embedded_queries, std::span<const std::size_t> labels);

// [C, numQueries] scores in (0, 1).
Tensor relation_scores(const Prototypes& prototypes, const Tensor& embedded_queries, const RelationModule& module,
                       const Parameters& params);

// Sum of (s-1)^2 over matched pairs plus s^2 over the rest.
Tensor relation_mse_loss(const Tensor& scores, std::span<const std::size_t> labels);

Tensor episode_loss(const Model& model, const Parameters& params, const Episode& episode);

// Proto: nearest prototype; relation: highest score. Ties go to the lower class index.
std::vector<std::size_t> predict(const Model& model, const Parameters& params, const Episode& episode);

// Raw per-query class scores used by predict: negative distances or relation scores, [numQueries, C].
std::vector<std::vector<double>> class_scores(const Model& model, const Parameters& params, const Episode& episode);

}  // namespace l2g
