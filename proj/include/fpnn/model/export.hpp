#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fpnn/io/binary.hpp"
#include "fpnn/model/params.hpp"
#include "fpnn/preprocess/battery.hpp"

namespace fpnn {

/// 2D view of a convolution kernel: out_channel x (in_channel * kh * kw).
struct NamedMatrix {
  std::string name;
  Tensor matrix;
};

namespace detail {

template <typename P>
auto& block_at(P& p, std::size_t index, const std::string& stream) {
  if (stream != "raw" && stream != "diff") throw InvalidArgument("stream must be 'raw' or 'diff', got '" + stream + "'");
  auto& s = stream == "raw" ? p.raw : p.diff;
  if (!s.enabled()) throw InvalidArgument("stream '" + stream + "' is detached");
  if (index >= s.blocks.size()) {
    throw InvalidArgument("block index " + std::to_string(index) + " out of range for noi " +
                          std::to_string(s.blocks.size()));
  }
  return s.blocks[index];
}

// Panel order: 1x1 kernels (a-c), pool-branch conv (d), residual projection
// (e), then the 3x3 kernels (f-h).
template <typename B, typename Fn>
void visit_export_kernels(B& b, Fn&& fn) {
  fn("branch1x1", b.branch1x1.weight);
  fn("branch3x3_1x1", b.branch3x3_1x1.weight);
  fn("branch3x3stack_1x1", b.branch3x3stack_1x1.weight);
  fn("branch_pool", b.branch_pool.weight);
  if (!b.residual_conv.empty()) fn("residual_conv", b.residual_conv);
  fn("branch3x3_3x3", b.branch3x3_3x3.weight);
  fn("branch3x3stack_3x3a", b.branch3x3stack_3x3a.weight);
  fn("branch3x3stack_3x3b", b.branch3x3stack_3x3b.weight);
}

}  // namespace detail

inline std::vector<NamedMatrix> export_block_weights(const FpnnParams& params, std::size_t block_index,
                                                     const std::string& stream = "raw") {
  auto& b = detail::block_at(params, block_index, stream);
  std::vector<NamedMatrix> out;
  detail::visit_export_kernels(b, [&](const char* name, const Tensor& w) {
    const std::size_t rows = w.extent(0);
    out.push_back({name, w.reshaped(Shape{rows, w.size() / rows})});
  });
  return out;
}

/// Writes matrices back into the block; shapes must match the block's kernels.
inline void import_block_weights(FpnnParams& params, std::size_t block_index, const std::string& stream,
                                  const std::vector<NamedMatrix>& matrices) {
  auto& b = detail::block_at(params, block_index, stream);
  detail::visit_export_kernels(b, [&](const char* name, Tensor& w) {
    for (const auto& m : matrices) {
      if (m.name != name) continue;
      if (m.matrix.size() != w.size() || m.matrix.extent(0) != w.extent(0)) {
        throw ShapeError(std::string("imported matrix ") + name + " has shape " + shape_str(m.matrix.shape()));
      }
      w = m.matrix.reshaped(w.shape());
      return;
    }
    throw FormatError(std::string("missing matrix ") + name);
  });
}

/// CSV with header `out_channel,c0,c1,...`, one row per output channel.
inline std::string matrix_to_csv(const Tensor& m) {
  const std::size_t rows = m.extent(0), cols = m.extent(1);
  std::string s = "out_channel";
  for (std::size_t c = 0; c < cols; ++c) s += ",c" + std::to_string(c);
  s += '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    s += std::to_string(r);
    for (std::size_t c = 0; c < cols; ++c) {
      s += ',';
      s += detail::format_double(m[r * cols + c]);
    }
    s += '\n';
  }
  return s;
}

inline Tensor matrix_from_csv(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("out_channel", 0) != 0) throw FormatError(where + ": missing header");
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (rows == 0) cols = fields.size() - 1;
    if (fields.size() != cols + 1 || cols == 0) throw FormatError(where + ": ragged row " + std::to_string(rows));
    for (std::size_t c = 1; c < fields.size(); ++c) values.push_back(detail::parse_double(fields[c], where));
    ++rows;
  }
  if (rows == 0) throw FormatError(where + ": no rows");
  return Tensor(Shape{rows, cols}, std::move(values));
}

/// Writes `<prefix><name>.csv` per matrix and returns the paths in panel order.
inline std::vector<std::filesystem::path> write_block_weights(const std::filesystem::path& dir,
                                                              const std::vector<NamedMatrix>& matrices,
                                                              const std::string& prefix = "") {
  std::vector<std::filesystem::path> paths;
  for (const auto& m : matrices) {
    paths.push_back(dir / (prefix + m.name + ".csv"));
    io::write_file_atomic(paths.back(), matrix_to_csv(m.matrix));
  }
  return paths;
}

inline std::vector<NamedMatrix> read_block_weights(const std::filesystem::path& dir,
                                                   const std::vector<std::string>& names,
                                                   const std::string& prefix = "") {
  std::vector<NamedMatrix> out;
  for (const auto& n : names) {
    const auto path = dir / (prefix + n + ".csv");
    out.push_back({n, matrix_from_csv(io::read_file(path), path.string())});
  }
  return out;
}

}  // namespace fpnn
