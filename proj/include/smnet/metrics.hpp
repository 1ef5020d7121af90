#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "smnet/errors.hpp"

namespace smnet {

// One long-format observation. Files are append-only, one per run.
struct MetricRecord {
  std::string run;
  std::uint64_t seed = 0;
  std::size_t task = 0;
  std::size_t step = 0;
  std::string metric;
  double value = 0.0;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

inline constexpr const char* kMetricHeader = "run,seed,task,step,metric,value";

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string to_csv_row(const MetricRecord& r) {
  std::string out = r.run;
  out += ',' + std::to_string(r.seed) + ',' + std::to_string(r.task) + ',' + std::to_string(r.step) + ',';
  out += r.metric;
  out += ',' + format_double(r.value);
  return out;
}

inline MetricRecord parse_csv_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() != 6) throw ConfigError("metric row needs 6 fields: '" + line + "'");
  try {
    return {f[0], std::stoull(f[1]), std::stoull(f[2]), std::stoull(f[3]), f[4], std::stod(f[5])};
  } catch (const std::exception&) {
    throw ConfigError("malformed metric row: '" + line + "'");
  }
}

class MetricWriter {
 public:
  explicit MetricWriter(const std::string& path) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open metric file " + path);
    out_ << kMetricHeader << '\n';
  }

  void write(const MetricRecord& r) {
    out_ << to_csv_row(r) << '\n';
    ++count_;
  }

  void flush() { out_.flush(); }
  std::size_t count() const noexcept { return count_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t count_ = 0;
};

inline std::vector<MetricRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metric file " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricHeader) throw ConfigError(path + ": missing metric header");
  std::vector<MetricRecord> out;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse_csv_row(line));
  return out;
}

}  // namespace smnet
