#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "l2g/tensor.hpp"
#include "l2g/training.hpp"

namespace l2g {

using TensorMap = std::map<std::string, Tensor>;

// L2GCKPT1: magic, u32 tensor count, then per tensor u32 name length, UTF-8
// name, u32 rank, u64 dims, f64 little-endian values.
std::string encode_checkpoint(const TensorMap& tensors);
TensorMap decode_checkpoint(std::string_view bytes);
void save_checkpoint(const TensorMap& tensors, const std::filesystem::path& path);
TensorMap load_checkpoint(const std::filesystem::path& path);

// Trainer state is stored as parameters under their own names, Adam moments
// under "opt.m/<name>" and "opt.v/<name>", and scalars "opt.step" and
// "state.next_episode".
TensorMap state_to_tensors(const TrainerState& state);
TrainerState state_from_tensors(const TensorMap& tensors);
// Just the model parameters of a checkpoint.
Parameters parameters_from_tensors(const TensorMap& tensors);

}  // namespace l2g
