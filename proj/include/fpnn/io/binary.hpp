#pragma once

// Binary tensor archive.
//
//   offset 0   8 bytes  magic "FPNNTNSR"
//          8   u32      format version
//         12   u32      tensor count
//         16   shape table, per tensor: u32 name length, name bytes,
//                       u32 rank, u64 extent * rank
//              payload, per tensor in table order: f64 * product(shape)
//              u64      FNV-1a 64 checksum of every preceding byte
//
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fpnn/core/tensor.hpp"

namespace fpnn::io {

inline constexpr std::string_view kArchiveMagic = "FPNNTNSR";
inline constexpr std::uint32_t kArchiveVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { buf_.append(s); }
  std::string& buffer() { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("archive truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::string encode_archive(const NamedTensors& tensors) {
  ByteWriter w;
  w.bytes(kArchiveMagic);
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u64(e);
  }
  for (const auto& entry : tensors)
    for (double v : entry.second.values()) w.f64(v);
  w.u64(fnv1a64(w.buffer()));
  return std::move(w.buffer());
}

inline NamedTensors decode_archive(std::string_view data) {
  if (data.size() < 24 || data.substr(0, 8) != kArchiveMagic) {
    throw FormatError("not a tensor archive (bad magic)");
  }
  ByteReader r(data);
  r.bytes(8);
  const std::uint32_t version = r.u32();
  if (version != kArchiveVersion) {
    throw VersionError("tensor archive version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kArchiveVersion) + ")");
  }
  const std::string_view body = data.substr(0, data.size() - 8);
  ByteReader tail(data.substr(data.size() - 8));
  if (tail.u64() != fnv1a64(body)) throw FormatError("tensor archive checksum mismatch");

  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, Shape>> table;
  table.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.bytes(r.u32()));
    const std::uint32_t rank = r.u32();
    if (rank > 16) throw FormatError("tensor archive: implausible rank");
    Shape shape(rank);
    for (auto& e : shape) e = r.u64();
    table.emplace_back(std::move(name), std::move(shape));
  }
  NamedTensors out;
  out.reserve(count);
  for (auto& [name, shape] : table) {
    const std::size_t n = shape_size(shape);
    if (r.remaining() < 8 + n * 8) throw FormatError("tensor archive payload truncated");
    std::vector<double> values(n);
    for (double& v : values) v = r.f64();
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 8) throw FormatError("tensor archive has trailing bytes");
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Writes via a temporary sibling and rename so readers never see partial files.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_archive(const std::filesystem::path& path, const NamedTensors& tensors) {
  write_file_atomic(path, encode_archive(tensors));
}

inline NamedTensors read_archive(const std::filesystem::path& path) {
  return decode_archive(read_file(path));
}

inline const Tensor& find_tensor(const NamedTensors& tensors, std::string_view name) {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw FormatError("archive has no tensor named '" + std::string(name) + "'");
}

inline std::uint64_t file_checksum(const std::filesystem::path& path) { return fnv1a64(read_file(path)); }

}  // namespace fpnn::io
