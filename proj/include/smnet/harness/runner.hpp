#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "smnet/baselines.hpp"
#include "smnet/checkpoint.hpp"
#include "smnet/harness/config.hpp"
#include "smnet/harness/gradcheck.hpp"
#include "smnet/harness/invariants.hpp"
#include "smnet/harness/report.hpp"
#include "smnet/metrics.hpp"
#include "smnet/stream_experiment.hpp"
#include "smnet/wcst.hpp"

namespace smnet::harness {

inline constexpr const char* kOutputRootEnv = "SMNET_OUTPUT_ROOT";

// Exit codes shared by the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitCheckFailed = 3;

inline std::filesystem::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

inline std::string run_tag(const ExperimentConfig& c) {
  return c.model == ModelKind::sparse_metanet ? "sparse-metanet" : baselines::protocol_name(c.baseline.protocol);
}

// Absolute directories are taken as given; relative ones live under the
// output root. Parent-directory components are rejected.
inline std::filesystem::path resolve_output_dir(const ExperimentConfig& c) {
  std::filesystem::path dir =
      c.output_dir.empty() ? std::filesystem::path(std::string(experiment_name(c.experiment)) + "-" + run_tag(c))
                           : std::filesystem::path(c.output_dir);
  for (const auto& part : dir)
    if (part == "..") throw ConfigError("output_dir must not contain '..': " + dir.string());
  return dir.is_absolute() ? dir : output_root() / dir;
}

inline std::string run_id(const ExperimentConfig& c, std::uint64_t seed) {
  return std::string(experiment_name(c.experiment)) + "-" + run_tag(c) + "-s" + std::to_string(seed);
}

inline std::filesystem::path metric_path(const std::filesystem::path& dir, std::uint64_t seed) {
  return dir / ("metrics-s" + std::to_string(seed) + ".csv");
}

class RecordSink {
 public:
  RecordSink(std::string run, std::uint64_t seed) : run_(std::move(run)), seed_(seed) {}

  void add(std::size_t task, std::size_t step, const std::string& metric, double value) {
    records_.push_back({run_, seed_, task, step, metric, value});
  }

  void write(const std::filesystem::path& path) const {
    MetricWriter w(path.string());
    for (const auto& r : records_) w.write(r);
    w.flush();
  }

  const std::vector<MetricRecord>& records() const noexcept { return records_; }

 private:
  std::string run_;
  std::uint64_t seed_;
  std::vector<MetricRecord> records_;
};

namespace detail {

inline void record_wcst_task(RecordSink& sink, const wcst::TaskRecord& t, std::size_t episodes_so_far) {
  sink.add(t.task_index, episodes_so_far, "updates_to_solve", static_cast<double>(t.updates_to_solve));
  sink.add(t.task_index, episodes_so_far, "perseveration_errors", static_cast<double>(t.perseveration_errors));
  sink.add(t.task_index, episodes_so_far, "episodes", static_cast<double>(t.episodes));
  sink.add(t.task_index, episodes_so_far, "solved", t.solved ? 1.0 : 0.0);
  sink.add(t.task_index, episodes_so_far, "diverged", t.diverged ? 1.0 : 0.0);
}

inline void record_eval(RecordSink& sink, const stream::EvalSummary& s) {
  const std::string p = "eval_" + s.lengths.label() + "/";
  std::size_t rounds = 0;
  for (const auto& t : s.metrics.tasks()) {
    rounds += t.length;
    sink.add(t.task_index, rounds, p + "task_accuracy", t.accuracy());
    if (t.perv_examples > 0)
      sink.add(t.task_index, rounds, p + "task_perseveration",
               static_cast<double>(t.perv_errors) / static_cast<double>(t.perv_examples));
  }
  sink.add(0, s.rounds, p + "accuracy", s.accuracy);
  sink.add(0, s.rounds, p + "perseveration_rate", s.perseveration_rate);
  sink.add(0, s.rounds, p + "interference", s.interference);
  sink.add(0, s.rounds, p + "rounds", static_cast<double>(s.rounds));
}

inline void record_training(RecordSink& sink, const stream::TrainResult& tr) {
  for (const auto& v : tr.validation) sink.add(v.tasks, v.tasks, "validation/accuracy", v.accuracy);
  sink.add(0, tr.train.rounds, "train/accuracy", tr.train.metrics.mean_task_accuracy());
  sink.add(0, tr.train.rounds, "train/perseveration_rate", tr.train.metrics.perseveration_rate());
  sink.add(0, tr.train.rounds, "train/best_tasks", static_cast<double>(tr.best_tasks));
  sink.add(0, tr.train.rounds, "train/diverged", tr.train.diverged ? 1.0 : 0.0);
}

inline void record_pretrain(RecordSink& sink, const baselines::PretrainResult& p) {
  for (std::size_t e = 0; e < p.validation.size(); ++e)
    sink.add(e + 1, e + 1, "pretrain/validation_accuracy", p.validation[e]);
  sink.add(0, p.validation.size(), "pretrain/best_epoch", static_cast<double>(p.best_epoch));
}

}  // namespace detail

// One seed of one experiment. Returns false only when a check suite fails.
inline bool run_seed(const ExperimentConfig& c, std::uint64_t seed, const std::filesystem::path& dir,
                     std::ostream* log = nullptr, std::mutex* log_mutex = nullptr) {
  RecordSink sink(run_id(c, seed), seed);
  bool passed = true;
  auto note = [&](const std::string& s) {
    if (!log) return;
    std::unique_lock<std::mutex> lock;
    if (log_mutex) lock = std::unique_lock<std::mutex>(*log_mutex);
    *log << "[" << run_id(c, seed) << "] " << s << '\n';
  };

  switch (c.experiment) {
    case Experiment::wcst: {
      const wcst::RunConfig cfg = c.wcst_run();
      std::size_t episodes = 0;
      auto on_task = [&](const wcst::TaskRecord& t) {
        episodes += t.episodes;
        detail::record_wcst_task(sink, t, episodes);
      };
      const wcst::RunResult r = c.model == ModelKind::sparse_metanet ? wcst::run(cfg, seed, on_task)
                                                                     : baselines::run_wcst(c.baseline, cfg, seed, on_task);
      sink.add(0, r.episodes, "gradient_updates", static_cast<double>(r.gradient_updates));
      sink.add(0, r.episodes, "fast_updates", static_cast<double>(r.fast_updates));
      sink.add(0, r.episodes, "restarts", static_cast<double>(r.restarts));
      sink.add(0, r.episodes, "run_diverged", r.diverged ? 1.0 : 0.0);
      note(std::to_string(r.tasks.size()) + " tasks, " + std::to_string(r.episodes) + " episodes");
      break;
    }
    case Experiment::stream: {
      const stream::ExperimentConfig cfg = c.stream_run();
      const auto splits = stream::load_splits(cfg);
      if (c.model == ModelKind::sparse_metanet) {
        const std::size_t d = splits[0].feature_dim;
        stream::TrainResult tr =
            stream::train_online(cfg, splits, stream::make_classifier(cfg, d, true, seed), c.trainer, true, seed);
        detail::record_training(sink, tr);
        note("trained on " + std::to_string(tr.train.tasks.size()) + " tasks");
        for (const auto& r : cfg.eval_lengths) {
          const auto s = stream::evaluate(tr.model, c.eval_trainer(), true, splits[2], cfg.stream, r, cfg.eval_tasks,
                                          seed);
          detail::record_eval(sink, s);
          note("eval " + r.label() + " accuracy " + format_double(s.accuracy));
        }
        save_checkpoint((dir / ("model-s" + std::to_string(seed) + ".smnet")).string(), tr.model, c.trainer);
      } else {
        const auto res = baselines::run_stream(c.baseline, cfg, splits, seed);
        if (res.train) detail::record_training(sink, *res.train);
        if (res.pretrained) detail::record_pretrain(sink, *res.pretrained);
        for (const auto& s : res.evals) {
          detail::record_eval(sink, s);
          note("eval " + s.lengths.label() + " accuracy " + format_double(s.accuracy));
        }
      }
      break;
    }
    case Experiment::pretrain: {
      const stream::ExperimentConfig cfg = c.stream_run();
      const auto splits = stream::load_splits(cfg);
      const auto p = baselines::pretrain(cfg, splits, c.baseline.optimizer, seed, c.pretrain);
      detail::record_pretrain(sink, p);
      save_checkpoint((dir / ("pretrained-s" + std::to_string(seed) + ".smnet")).string(), p.model,
                      baselines::plain_trainer(c.baseline));
      note("best epoch " + std::to_string(p.best_epoch));
      break;
    }
    case Experiment::check: {
      if (c.check_suite != "invariants") {
        const GradCheckResult g = check_gradients(c.check_seeds, seed);
        sink.add(0, g.coordinates, "check/gradient_max_rel_error", g.max_rel_error);
        sink.add(0, g.coordinates, "check/gradient_passed", g.passed() ? 1.0 : 0.0);
        note(std::string("gradients ") + (g.passed() ? "PASS" : "FAIL") + ": " + std::to_string(g.seeds) +
             " seeds, " + std::to_string(g.coordinates) + " coordinates, max rel error " +
             format_double(g.max_rel_error) + " at " + g.worst);
        passed = passed && g.passed();
      }
      if (c.check_suite != "gradients") {
        for (const auto& r : check_invariants(seed)) {
          sink.add(0, 0, "check/" + r.name, r.passed ? 1.0 : 0.0);
          note(r.name + (r.passed ? " PASS: " : " FAIL: ") + r.detail);
          passed = passed && r.passed;
        }
      }
      break;
    }
  }
  sink.write(metric_path(dir, seed));
  return passed;
}

struct RunOutcome {
  std::filesystem::path dir;
  std::vector<SummaryRow> summary;
  bool checks_passed = true;
};

// Every seed in its own job; at most `jobs` at once. Seeds are fully
// isolated, so results do not depend on scheduling.
inline RunOutcome run(const ExperimentConfig& c, std::ostream* log = nullptr) {
  validate(c);
  RunOutcome out;
  out.dir = resolve_output_dir(c);
  std::filesystem::create_directories(out.dir);
  {
    std::ofstream f(out.dir / "config.ini", std::ios::trunc);
    f << serialize(c);
  }
  for (std::uint64_t s : c.seeds) std::filesystem::remove(metric_path(out.dir, s));

  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> all_passed{true};
  std::vector<std::exception_ptr> errors(c.seeds.size());
  auto worker = [&] {
    for (std::size_t i; (i = next++) < c.seeds.size();) {
      try {
        if (!run_seed(c, c.seeds[i], out.dir, log, &log_mutex)) all_passed = false;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(c.jobs, c.seeds.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  export_run(out.dir, "all");
  out.summary = summarize(read_run_dir(out.dir));
  out.checks_passed = all_passed;
  return out;
}

}  // namespace smnet::harness
