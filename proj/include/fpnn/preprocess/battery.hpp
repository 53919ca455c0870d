#pragma once

// Battery records and the canonical on-disk dataset layout:
//
//   <root>/<battery dir>/meta.json   {"battery_id", "life", "nominal_capacity_ah", "charge_policy"}
//   <root>/<battery dir>/cycles.csv  cycle,charge_q_ah,voltage_v,current_a,temperature_c
//
// cycles.csv rows are grouped by ascending cycle, and by ascending charge_q_ah
// within a cycle. Battery directories are read in lexicographic order.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnn/core/error.hpp"
#include "fpnn/io/binary.hpp"

namespace fpnn {

inline constexpr double kNominalCapacityAh = 1.1;
inline constexpr std::size_t kMinCurveLength = 16;

/// Charge-phase curves of one cycle, indexed by charged capacity.
struct CycleCurve {
  int cycle_index = 0;
  std::vector<double> charged_capacity;  // Ah, strictly increasing
  std::vector<double> voltage;           // V
  std::vector<double> current;           // A
  std::vector<double> temperature;       // degC

  std::size_t length() const { return charged_capacity.size(); }
  friend bool operator==(const CycleCurve&, const CycleCurve&) = default;
};

struct BatteryRecord {
  std::string battery_id;
  std::vector<CycleCurve> cycles;
  int life = 0;  // cycle at which discharge capacity reaches 80% of nominal
  double nominal_capacity_ah = kNominalCapacityAh;
  std::string charge_policy;

  friend bool operator==(const BatteryRecord&, const BatteryRecord&) = default;
};

inline void validate_curve(const CycleCurve& c, const std::string& battery_id) {
  const std::string where = "battery " + battery_id + " cycle " + std::to_string(c.cycle_index);
  const std::size_t n = c.charged_capacity.size();
  if (c.voltage.size() != n || c.current.size() != n || c.temperature.size() != n) {
    throw DataError(where + ": series length mismatch");
  }
  if (n < kMinCurveLength) {
    throw DataError(where + ": curve has " + std::to_string(n) + " points, need at least " +
                    std::to_string(kMinCurveLength));
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!(c.charged_capacity[i] > c.charged_capacity[i - 1])) {
      throw DataError(where + ": charged capacity not strictly increasing at row " + std::to_string(i));
    }
  }
  for (const auto* series : {&c.charged_capacity, &c.voltage, &c.current, &c.temperature}) {
    for (double v : *series)
      if (!std::isfinite(v)) throw DataError(where + ": non-finite value");
  }
}

inline void validate_record(const BatteryRecord& b) {
  if (b.battery_id.empty()) throw DataError("battery with empty id");
  if (b.life <= 0) throw DataError("battery " + b.battery_id + ": life must be positive");
  for (std::size_t i = 0; i < b.cycles.size(); ++i) {
    if (b.cycles[i].cycle_index != static_cast<int>(i) + 1) {
      throw DataError("battery " + b.battery_id + ": cycle indices must run 1,2,3,... (found " +
                      std::to_string(b.cycles[i].cycle_index) + " at position " + std::to_string(i + 1) + ")");
    }
    validate_curve(b.cycles[i], b.battery_id);
  }
}

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

inline double parse_double(std::string_view field, const std::string& where) {
  double v = 0.0;
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw DataError(where + ": cannot parse number '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace detail

inline constexpr std::string_view kCyclesHeader = "cycle,charge_q_ah,voltage_v,current_a,temperature_c";

/// Writes one battery directory in the canonical layout.
inline void write_battery(const std::filesystem::path& dir, const BatteryRecord& b) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["battery_id"] = b.battery_id;
  meta["life"] = b.life;
  meta["nominal_capacity_ah"] = b.nominal_capacity_ah;
  meta["charge_policy"] = b.charge_policy;
  io::write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");

  std::string csv(kCyclesHeader);
  csv += '\n';
  for (const CycleCurve& c : b.cycles) {
    for (std::size_t i = 0; i < c.length(); ++i) {
      csv += std::to_string(c.cycle_index);
      for (double v : {c.charged_capacity[i], c.voltage[i], c.current[i], c.temperature[i]}) {
        csv += ',';
        csv += detail::format_double(v);
      }
      csv += '\n';
    }
  }
  io::write_file_atomic(dir / "cycles.csv", csv);
}

inline BatteryRecord load_battery(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  const auto csv_path = dir / "cycles.csv";
  if (!std::filesystem::exists(meta_path)) throw DataError(dir.string() + ": missing meta.json");
  if (!std::filesystem::exists(csv_path)) throw DataError(dir.string() + ": missing cycles.csv");

  BatteryRecord b;
  try {
    const auto meta = nlohmann::json::parse(io::read_file(meta_path));
    b.battery_id = meta.at("battery_id").get<std::string>();
    b.life = meta.at("life").get<int>();
    b.nominal_capacity_ah = meta.at("nominal_capacity_ah").get<double>();
    b.charge_policy = meta.value("charge_policy", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": invalid metadata: " + e.what());
  }

  std::istringstream in(io::read_file(csv_path));
  std::string line;
  if (!std::getline(in, line)) throw DataError(csv_path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCyclesHeader) throw DataError(csv_path.string() + ": unexpected header '" + line + "'");

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::string where = "battery " + b.battery_id + " row " + std::to_string(row);
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 5) throw DataError(where + ": expected 5 fields");
    const double cyc = detail::parse_double(fields[0], where);
    const int cycle = static_cast<int>(cyc);
    if (cycle != cyc || cycle < 1) throw DataError(where + ": invalid cycle number");
    if (b.cycles.empty() || b.cycles.back().cycle_index != cycle) {
      if (!b.cycles.empty() && cycle < b.cycles.back().cycle_index) {
        throw DataError(where + ": cycles not in ascending order");
      }
      b.cycles.push_back(CycleCurve{cycle, {}, {}, {}, {}});
    }
    CycleCurve& c = b.cycles.back();
    c.charged_capacity.push_back(detail::parse_double(fields[1], where));
    c.voltage.push_back(detail::parse_double(fields[2], where));
    c.current.push_back(detail::parse_double(fields[3], where));
    c.temperature.push_back(detail::parse_double(fields[4], where));
  }
  validate_record(b);
  return b;
}

/// Loads every battery directory under `root`; an empty directory yields an empty list.
inline std::vector<BatteryRecord> load_canonical_dataset(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw IoError("dataset directory not found: " + root.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<BatteryRecord> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(load_battery(d));
  return out;
}

}  // namespace fpnn
