#include "l2g/checkpoint.hpp"

#include "l2g/binary_io.hpp"

namespace l2g {

namespace {

constexpr std::string_view kCheckpointMagic = "L2GCKPT1";
constexpr std::string_view kMomentPrefix = "opt.m/";
constexpr std::string_view kVariancePrefix = "opt.v/";
constexpr std::string_view kStepKey = "opt.step";
constexpr std::string_view kEpisodeKey = "state.next_episode";

bool is_state_key(const std::string& name) { return name.starts_with("opt.") || name.starts_with("state."); }

}  // namespace

std::string encode_checkpoint(const TensorMap& tensors) {
  std::string out(kCheckpointMagic);
  binary::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    binary::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    binary::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) binary::put_u64(out, d);
    for (double v : t.values()) binary::put_f64(out, v);
  }
  return out;
}

TensorMap decode_checkpoint(std::string_view bytes) {
  binary::Reader in(bytes, "L2GCKPT1");
  if (in.take(kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError("L2GCKPT1: bad magic");
  const std::uint32_t count = in.u32();
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(in.take(in.u32()));
    const std::uint32_t rank = in.u32();
    if (rank > 8) throw FormatError("L2GCKPT1: tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = in.u64();
      if (d == 0) throw FormatError("L2GCKPT1: tensor '" + name + "' has a zero dimension");
      numel *= d;
    }
    if (in.remaining() / 8 < numel) throw FormatError("L2GCKPT1: truncated values for '" + name + "'");
    std::vector<double> values(numel);
    for (double& v : values) v = in.f64();
    if (!out.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw FormatError("L2GCKPT1: duplicate tensor '" + name + "'");
    }
  }
  if (!in.at_end()) throw FormatError("L2GCKPT1: trailing bytes");
  return out;
}

void save_checkpoint(const TensorMap& tensors, const std::filesystem::path& path) {
  binary::write_file(path, encode_checkpoint(tensors));
}

TensorMap load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(binary::read_file(path)); }

TensorMap state_to_tensors(const TrainerState& state) {
  TensorMap out;
  for (const auto& [name, t] : state.params) {
    if (is_state_key(name)) throw ContractViolation("checkpoint: parameter name '" + name + "' is reserved");
    out.emplace(name, t.detach());
  }
  for (const auto& [name, t] : state.opt.first_moment) out.emplace(std::string(kMomentPrefix) + name, t);
  for (const auto& [name, t] : state.opt.second_moment) out.emplace(std::string(kVariancePrefix) + name, t);
  out.emplace(std::string(kStepKey), Tensor::scalar(static_cast<double>(state.opt.step)));
  out.emplace(std::string(kEpisodeKey), Tensor::scalar(static_cast<double>(state.next_episode)));
  return out;
}

TrainerState state_from_tensors(const TensorMap& tensors) {
  TrainerState state;
  for (const auto& [name, t] : tensors) {
    if (name.starts_with(kMomentPrefix)) {
      state.opt.first_moment.emplace(name.substr(kMomentPrefix.size()), t);
    } else if (name.starts_with(kVariancePrefix)) {
      state.opt.second_moment.emplace(name.substr(kVariancePrefix.size()), t);
    } else if (!is_state_key(name)) {
      state.params.emplace(name, t);
    }
  }
  auto step = tensors.find(std::string(kStepKey));
  auto episode = tensors.find(std::string(kEpisodeKey));
  if (step == tensors.end() || episode == tensors.end()) {
    throw FormatError("L2GCKPT1: checkpoint lacks optimizer state");
  }
  state.opt.step = static_cast<std::uint64_t>(step->second.item());
  state.next_episode = static_cast<std::size_t>(episode->second.item());
  if (state.opt.first_moment.size() != state.params.size() || state.opt.second_moment.size() != state.params.size()) {
    throw FormatError("L2GCKPT1: optimizer moments do not cover every parameter");
  }
  return state;
}

Parameters parameters_from_tensors(const TensorMap& tensors) {
  Parameters out;
  for (const auto& [name, t] : tensors) {
    if (!is_state_key(name)) out.emplace(name, t);
  }
  return out;
}

}  // namespace l2g
