#pragma once

// Model checkpoint.
//
//   offset 0   8 bytes  magic "FPNNCKPT"
//          8   u32      checkpoint version
//         12   u32      JSON length L
//         16   L bytes  JSON: model config, label transform, caller metadata
//     16 + L            tensor archive (see fpnn/io/binary.hpp) with every
//                       trainable tensor and batch-norm running statistic
//                       u64 FNV-1a 64 checksum of every preceding byte

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "fpnn/io/binary.hpp"
#include "fpnn/model/params.hpp"

namespace fpnn {

inline constexpr std::string_view kCheckpointMagic = "FPNNCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  FpnnParams params;
  nlohmann::json metadata;  // free-form caller data (preprocessing, scaler, training config)
};

namespace detail {

template <typename P, typename Fn>
void for_each_state_tensor(P& p, Fn&& fn) {
  for_each_conv_unit(p, [&](const std::string& name, auto& unit) {
    fn(name + ".bn_mean", unit.bn.running_mean);
    fn(name + ".bn_var", unit.bn.running_var);
  });
}

}  // namespace detail

inline std::string encode_checkpoint(const FpnnParams& p, const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::ordered_json j;
  j["format"] = "fpnn-checkpoint";
  j["model"] = config_to_json(p.config);
  j["label_offset"] = p.label_offset;
  j["label_scale"] = p.label_scale;
  j["metadata"] = metadata;
  const std::string js = j.dump();

  io::NamedTensors tensors;
  for_each_param(p, [&](const std::string& n, const Tensor& t) { tensors.emplace_back(n, t); });
  detail::for_each_state_tensor(p, [&](const std::string& n, const Tensor& t) { tensors.emplace_back(n, t); });

  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(js.size()));
  w.bytes(js);
  w.bytes(io::encode_archive(tensors));
  w.u64(io::fnv1a64(w.buffer()));
  return std::move(w.buffer());
}

/// Parses a checkpoint into a fresh model; nothing is returned unless every
/// tensor is present with the expected shape.
inline Checkpoint decode_checkpoint(std::string_view data) {
  if (data.size() < 24 || data.substr(0, 8) != kCheckpointMagic) throw FormatError("not a checkpoint (bad magic)");
  io::ByteReader r(data);
  r.bytes(8);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  io::ByteReader tail(data.substr(data.size() - 8));
  if (tail.u64() != io::fnv1a64(data.substr(0, data.size() - 8))) throw FormatError("checkpoint checksum mismatch");
  const std::uint32_t json_len = r.u32();
  if (json_len > r.remaining() - 8) throw FormatError("checkpoint truncated");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(r.bytes(json_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::size_t archive_start = r.position();
  const auto tensors = io::decode_archive(data.substr(archive_start, data.size() - 8 - archive_start));

  Checkpoint ck;
  try {
    ck.params = build_model(config_from_json(j.at("model")));
    ck.params.label_offset = j.at("label_offset").get<double>();
    ck.params.label_scale = j.at("label_scale").get<double>();
    ck.metadata = j.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  std::size_t used = 0;
  auto restore = [&](const std::string& n, Tensor& t) {
    const Tensor& src = io::find_tensor(tensors, n);
    if (src.shape() != t.shape()) {
      throw FormatError("checkpoint tensor " + n + " has shape " + shape_str(src.shape()) + ", expected " +
                        shape_str(t.shape()));
    }
    t = src;
    ++used;
  };
  for_each_param(ck.params, restore);
  detail::for_each_state_tensor(ck.params, restore);
  if (used != tensors.size()) throw FormatError("checkpoint has tensors the model does not use");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const FpnnParams& p,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  io::write_file_atomic(path, encode_checkpoint(p, metadata));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace fpnn
