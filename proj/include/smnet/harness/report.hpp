#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "smnet/metrics.hpp"

namespace smnet::harness {

struct SummaryRow {
  std::string metric;
  std::string bucket;  // "run" for per-run scalars, else a task range
  double mean = 0.0;
  double stddev = 0.0;  // across seeds, n - 1 denominator
  std::size_t seeds = 0;
};

struct TaskBucket {
  std::size_t first, last;
  std::string label;
};

inline std::vector<TaskBucket> task_buckets() {
  return {{1, 10, "tasks 1-10"}, {11, 30, "tasks 11-30"}, {31, 60, "tasks 31-60"}, {61, SIZE_MAX, "tasks 61+"},
          {1, SIZE_MAX, "all tasks"}};
}

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

// Records with task == 0 are per-run scalars; the rest are per-task values,
// averaged within each task bucket per run before aggregating across runs.
inline std::vector<SummaryRow> summarize(const std::vector<MetricRecord>& records) {
  // metric -> bucket -> run -> values
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>> groups;
  std::map<std::string, std::size_t> bucket_order;
  const auto buckets = task_buckets();
  for (std::size_t i = 0; i < buckets.size(); ++i) bucket_order[buckets[i].label] = i + 1;
  bucket_order["run"] = 0;
  for (const auto& r : records) {
    if (r.task == 0) {
      groups[r.metric]["run"][r.run].push_back(r.value);
      continue;
    }
    for (const auto& b : buckets)
      if (r.task >= b.first && r.task <= b.last) groups[r.metric][b.label][r.run].push_back(r.value);
  }
  std::vector<SummaryRow> out;
  for (const auto& [metric, by_bucket] : groups) {
    std::vector<std::pair<std::string, const std::map<std::string, std::vector<double>>*>> ordered;
    for (const auto& [bucket, runs] : by_bucket) ordered.emplace_back(bucket, &runs);
    std::sort(ordered.begin(), ordered.end(),
              [&](const auto& a, const auto& b) { return bucket_order[a.first] < bucket_order[b.first]; });
    for (const auto& [bucket, runs] : ordered) {
      std::vector<double> per_run;
      for (const auto& [run, values] : *runs) per_run.push_back(mean_std(values).first);
      const auto [m, s] = mean_std(per_run);
      out.push_back({metric, bucket, m, s, per_run.size()});
    }
  }
  return out;
}

inline void print_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.metric.size());
  char line[512];
  std::snprintf(line, sizeof line, "%-*s  %-12s  %14s  %12s  %5s\n", static_cast<int>(w), "metric", "bucket", "mean",
                "std", "runs");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-*s  %-12s  %14.6g  %12.6g  %5zu\n", static_cast<int>(w), r.metric.c_str(),
                  r.bucket.c_str(), r.mean, r.stddev, r.seeds);
    out << line;
  }
}

// Sorted list of metric files in a run directory.
inline std::vector<std::filesystem::path> metric_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("run directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("metrics-", 0) == 0 && e.path().extension() == ".csv")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no metric files in " + dir.string());
  return files;
}

inline std::vector<MetricRecord> read_run_dir(const std::filesystem::path& dir) {
  std::vector<MetricRecord> all;
  for (const auto& f : metric_files(dir)) {
    auto recs = read_metrics(f.string());
    all.insert(all.end(), recs.begin(), recs.end());
  }
  return all;
}

inline nlohmann::ordered_json summary_json(const std::vector<MetricRecord>& records) {
  using nlohmann::ordered_json;
  ordered_json j;
  std::set<std::string> runs;
  std::set<std::uint64_t> seeds;
  for (const auto& r : records) {
    runs.insert(r.run);
    seeds.insert(r.seed);
  }
  j["records"] = records.size();
  j["runs"] = std::vector<std::string>(runs.begin(), runs.end());
  j["seeds"] = std::vector<std::uint64_t>(seeds.begin(), seeds.end());
  const auto rows = summarize(records);
  ordered_json metrics = ordered_json::array();
  ordered_json streams = ordered_json::object();
  for (const auto& r : rows) {
    ordered_json row{{"metric", r.metric}, {"bucket", r.bucket}, {"mean", r.mean}, {"std", r.stddev},
                     {"runs", r.seeds}};
    metrics.push_back(row);
    // eval_<lengths>/<name> per-run scalars: one block per evaluation stream.
    if (r.bucket == "run" && r.metric.rfind("eval_", 0) == 0) {
      const auto slash = r.metric.find('/');
      if (slash == std::string::npos) continue;
      streams[r.metric.substr(5, slash - 5)][r.metric.substr(slash + 1)] = {
          {"mean", r.mean}, {"std", r.stddev}, {"runs", r.seeds}};
    }
  }
  j["metrics"] = metrics;
  j["eval_streams"] = streams;
  return j;
}

struct ExportResult {
  std::filesystem::path csv;
  std::filesystem::path summary;
  std::size_t rows = 0;
};

// format: csv, json or all. Outputs overwrite previous exports, so
// re-exporting an unchanged run reproduces the same bytes.
inline ExportResult export_run(const std::filesystem::path& dir, const std::string& format = "all") {
  if (format != "csv" && format != "json" && format != "all")
    throw std::invalid_argument("export format must be csv, json or all");
  const auto records = read_run_dir(dir);
  ExportResult res;
  res.rows = records.size();
  if (format != "json") {
    res.csv = dir / "export.csv";
    std::ofstream out(res.csv, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + res.csv.string());
    out << kMetricHeader << '\n';
    for (const auto& r : records) out << to_csv_row(r) << '\n';
  }
  if (format != "csv") {
    res.summary = dir / "summary.json";
    std::ofstream out(res.summary, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + res.summary.string());
    out << summary_json(records).dump(2) << '\n';
  }
  return res;
}

}  // namespace smnet::harness
