#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "smnet/model.hpp"
#include "smnet/task_stream.hpp"
#include "smnet/trainer.hpp"

namespace smnet::stream {

// in -> hidden... (ReLU) -> out logits.
inline std::vector<LayerSpec> classifier_layers(std::size_t in, const std::vector<std::size_t>& hidden,
                                                std::size_t out, bool fast) {
  std::vector<LayerSpec> specs;
  std::size_t prev = in;
  for (std::size_t h : hidden) {
    specs.push_back({prev, h, Activation::leaky_relu, fast});
    prev = h;
  }
  specs.push_back({prev, out, Activation::identity, fast});
  return specs;
}

inline std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

// One online round: predict the batch, incur cross-entropy, let the trainer
// update. Predictions are those made before the update.
inline StepRecord classify_round(Trainer& trainer, const Batch& batch, std::vector<int>& predictions) {
  LossFn fn = [&](Tape& tape, FastWeightModel& m) {
    const Var logits = m.forward(tape, batch.features)[0];
    predictions = argmax_rows(tape.value(logits));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) correct += predictions[i] == batch.labels[i];
    return StepLoss{tape.cross_entropy(logits, batch.labels), correct, batch.size()};
  };
  return trainer.online_step(fn);
}

// Called at every task boundary before the new task's first round.
using TaskHook = std::function<void(const TaskSpec&)>;
using RoundHook = std::function<void(const StepRecord&)>;

struct StreamRun {
  StreamMetrics metrics;
  std::vector<TaskSpec> tasks;
  std::size_t rounds = 0;
  bool diverged = false;
};

// Drives `trainer` through a whole generated stream.
inline StreamRun run_stream(Trainer& trainer, StreamGenerator& gen, const TaskHook& on_task = {},
                            const RoundHook& on_round = {}) {
  StreamRun run;
  std::vector<int> predictions;
  while (!gen.done()) {
    if (!gen.current_task() || gen.task_round() >= gen.current_task()->length) {
      const TaskSpec& t = gen.next_task();
      run.tasks.push_back(t);
      if (on_task) on_task(t);
      run.metrics.begin_task(t);
    }
    const Batch b = gen.next_batch(true);
    const StepRecord rec = classify_round(trainer, b, predictions);
    run.metrics.observe(predictions, b);
    run.diverged = run.diverged || rec.diverged;
    ++run.rounds;
    if (on_round) on_round(rec);
  }
  run.metrics.end_task();
  return run;
}

struct LengthRange {
  std::size_t min = 1;
  std::size_t max = 15;

  std::string label() const { return std::to_string(min) + "-" + std::to_string(max); }
  friend bool operator==(const LengthRange&, const LengthRange&) = default;
};

inline std::vector<LengthRange> default_eval_lengths() { return {{1, 15}, {20, 35}, {40, 55}, {60, 75}}; }

inline StreamConfig with_lengths(StreamConfig cfg, LengthRange r, std::size_t tasks, std::uint64_t seed) {
  cfg.min_length = r.min;
  cfg.max_length = r.max;
  cfg.total_tasks = tasks;
  cfg.seed = seed;
  return cfg;
}

struct EvalSummary {
  LengthRange lengths;
  double accuracy = 0.0;
  double perseveration_rate = 0.0;
  double interference = 0.0;
  std::size_t rounds = 0;
  StreamMetrics metrics;
};

inline EvalSummary summarize(LengthRange r, const StreamRun& run) {
  return {r, run.metrics.mean_task_accuracy(), run.metrics.perseveration_rate(), run.metrics.mean_interference(),
          run.rounds, run.metrics};
}

// Fast-weight-only evaluation of a copy of `model`: fast state starts from
// zero, slow and meta weights stay frozen.
inline EvalSummary evaluate_fast_only(const FastWeightModel& model, const TrainerConfig& tcfg,
                                      const LabeledDataset& data, const StreamConfig& scfg, LengthRange r,
                                      std::size_t tasks, std::uint64_t seed) {
  FastWeightModel m = model;
  m.reset_fast_state();
  TrainerConfig cfg = tcfg;
  cfg.eval_fast_only = true;
  cfg.seed = derive_seed(seed, "eval-" + r.label());
  Trainer trainer(m, cfg);
  StreamGenerator gen(data, with_lengths(scfg, r, tasks, derive_seed(seed, "eval-stream-" + r.label())));
  return summarize(r, run_stream(trainer, gen));
}

struct ExperimentConfig {
  std::string dataset_path;  // SMDS1 file; empty selects the synthetic backend
  std::size_t synth_classes = 100;
  std::size_t synth_per_class = 500;
  std::size_t feature_dim = 32;
  std::uint64_t data_seed = 0;
  std::array<double, 3> split_fractions{0.4, 0.3, 0.3};
  StreamConfig stream;  // training stream; its seed is replaced per run
  std::vector<LengthRange> eval_lengths = default_eval_lengths();
  std::size_t eval_tasks = 400;
  std::vector<std::size_t> hidden{256, 128};
  std::size_t validate_every = 100;  // training tasks between validation checks; 0 disables
  std::size_t validation_tasks = 50;
  LengthRange validation_lengths{1, 15};
  TrainerConfig trainer;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Train/valid/test pools with disjoint classes.
inline std::array<LabeledDataset, 3> load_splits(const ExperimentConfig& cfg) {
  const LabeledDataset all =
      cfg.dataset_path.empty()
          ? synth_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.feature_dim, cfg.data_seed)
          : load_dataset(cfg.dataset_path);
  return split_classes(all, cfg.split_fractions, cfg.data_seed);
}

inline FastWeightModel make_classifier(const ExperimentConfig& cfg, std::size_t feature_dim, bool fast,
                                       std::uint64_t seed) {
  return FastWeightModel(classifier_layers(feature_dim, cfg.hidden, static_cast<std::size_t>(cfg.stream.nb_classes),
                                           fast),
                         Topology::sequential, seed);
}

// Scores a model on a stream: either fast-weight-only, or with online
// gradient updates from a fresh optimizer state (plain networks).
inline EvalSummary evaluate(const FastWeightModel& model, const TrainerConfig& tcfg, bool fast_only,
                            const LabeledDataset& data, const StreamConfig& scfg, LengthRange r, std::size_t tasks,
                            std::uint64_t seed) {
  if (fast_only) return evaluate_fast_only(model, tcfg, data, scfg, r, tasks, seed);
  FastWeightModel m = model;
  m.reset_fast_state();
  TrainerConfig cfg = tcfg;
  cfg.eval_fast_only = false;
  cfg.seed = derive_seed(seed, "eval-" + r.label());
  Trainer trainer(m, cfg);
  StreamGenerator gen(data, with_lengths(scfg, r, tasks, derive_seed(seed, "eval-stream-" + r.label())));
  return summarize(r, run_stream(trainer, gen));
}

struct ValidationPoint {
  std::size_t tasks = 0;  // training tasks seen
  double accuracy = 0.0;
};

struct TrainResult {
  FastWeightModel model;  // snapshot with the best validation score
  StreamRun train;
  std::vector<ValidationPoint> validation;
  std::size_t best_tasks = 0;
};

// Online training over the training stream under the trainer's schedule.
// Every `validate_every` tasks the model is scored on the validation stream
// and the best snapshot is kept.
inline TrainResult train_online(const ExperimentConfig& cfg, const std::array<LabeledDataset, 3>& splits,
                                FastWeightModel model, TrainerConfig tcfg, bool fast_only_validation,
                                std::uint64_t seed, const TaskHook& on_task = {}) {
  tcfg.seed = seed;
  tcfg.eval_fast_only = false;
  Trainer trainer(model, tcfg);
  StreamConfig scfg = cfg.stream;
  scfg.seed = derive_seed(seed, "train-stream");
  StreamGenerator gen(splits[0], scfg);

  TrainResult res;
  double best = -1.0;
  auto validate = [&](std::size_t tasks) {
    const EvalSummary s = evaluate(model, tcfg, fast_only_validation, splits[1], cfg.stream, cfg.validation_lengths,
                                   cfg.validation_tasks, derive_seed(seed, "validation"));
    res.validation.push_back({tasks, s.accuracy});
    if (s.accuracy > best) {
      best = s.accuracy;
      res.model = model;
      res.best_tasks = tasks;
    }
  };
  std::size_t seen = 0;
  TaskHook hook = [&](const TaskSpec& t) {
    if (cfg.validate_every > 0 && seen > 0 && seen % cfg.validate_every == 0) validate(seen);
    ++seen;
    if (on_task) on_task(t);
  };
  res.train = run_stream(trainer, gen, hook);
  trainer.end_window();
  if (cfg.validate_every > 0) validate(seen);
  else res.model = model;
  res.model.reset_fast_state();
  return res;
}

}  // namespace smnet::stream
