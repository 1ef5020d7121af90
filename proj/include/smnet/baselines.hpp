#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "smnet/stream_experiment.hpp"
#include "smnet/wcst.hpp"

namespace smnet::baselines {

// offline_reset: fresh network and optimizer at every task boundary.
// online: never reset. online_pretrained: pretrained start, then online.
// reset_pretrained: pretrained weights and a fresh optimizer at every boundary.
enum class Protocol { offline_reset, online, online_pretrained, reset_pretrained };

inline const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::offline_reset: return "offline-reset";
    case Protocol::online_pretrained: return "online-pretrained";
    case Protocol::reset_pretrained: return "reset-pretrained";
    case Protocol::online: break;
  }
  return "online";
}

inline Protocol parse_protocol(const std::string& s) {
  if (s == "offline-reset") return Protocol::offline_reset;
  if (s == "online") return Protocol::online;
  if (s == "online-pretrained") return Protocol::online_pretrained;
  if (s == "reset-pretrained") return Protocol::reset_pretrained;
  throw ConfigError("unknown baseline protocol '" + s +
                    "' (expected offline-reset, online, online-pretrained or reset-pretrained)");
}

struct BaselineSpec {
  Protocol protocol = Protocol::online;
  OptimizerSpec optimizer;

  friend bool operator==(const BaselineSpec&, const BaselineSpec&) = default;
};

// Plain (k = 1) trainer settings for a baseline.
inline TrainerConfig plain_trainer(const BaselineSpec& spec) {
  TrainerConfig t;
  t.k = 1;
  t.slow_optimizer = spec.optimizer;
  t.meta_optimizer = spec.optimizer;
  return t;
}

inline wcst::RunResult run_wcst(const BaselineSpec& spec, wcst::RunConfig cfg, std::uint64_t seed,
                                const wcst::TaskCallback& on_task = {}) {
  switch (spec.protocol) {
    case Protocol::offline_reset: cfg.agent = wcst::AgentKind::offline_reset; break;
    case Protocol::online: cfg.agent = wcst::AgentKind::online; break;
    default: throw ConfigError(std::string("protocol ") + protocol_name(spec.protocol) + " needs a task stream");
  }
  cfg.trainer.slow_optimizer = spec.optimizer;
  return wcst::run(cfg, seed, on_task);
}

struct PretrainOptions {
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::size_t batch_size = 32;

  friend bool operator==(const PretrainOptions&, const PretrainOptions&) = default;
};

struct PretrainResult {
  FastWeightModel model;  // nb_classes-way classifier: pretrained trunk, fresh head
  std::vector<double> validation;  // per epoch
  std::size_t best_epoch = 0;
};

// Copies every layer but the last from `trained` onto a classifier with a
// fresh nb_classes-way head.
inline FastWeightModel with_task_head(const FastWeightModel& trained, const stream::ExperimentConfig& cfg,
                                      std::size_t feature_dim, std::uint64_t seed) {
  FastWeightModel out = stream::make_classifier(cfg, feature_dim, false, derive_seed(seed, "pretrain-head"));
  for (std::size_t i = 0; i + 1 < out.layers().size(); ++i) {
    out.layers()[i].w.value = trained.layers()[i].w.value;
    out.layers()[i].b.value = trained.layers()[i].b.value;
  }
  return out;
}

// Supervised multi-epoch training on every training class (one output per
// class), stopped when online adaptation on the validation stream stops
// improving for `patience` epochs.
inline PretrainResult pretrain(const stream::ExperimentConfig& cfg, const std::array<stream::LabeledDataset, 3>& splits,
                               const OptimizerSpec& opt_spec, std::uint64_t seed, const PretrainOptions& opts = {}) {
  const stream::LabeledDataset& train = splits[0];
  const std::size_t d = train.feature_dim;
  std::map<std::uint32_t, int> local;
  for (std::uint32_t l : train.labels()) local.emplace(l, static_cast<int>(local.size()));
  FastWeightModel net(stream::classifier_layers(d, cfg.hidden, local.size(), false), Topology::sequential,
                      derive_seed(seed, "pretrain-init"));

  struct Example {
    std::uint32_t label;
    std::size_t index;
  };
  std::vector<Example> examples;
  for (const auto& [label, id] : local) {
    const std::size_t n = train.class_size(label);
    const auto held = static_cast<std::size_t>(std::floor(cfg.stream.holdout_fraction * static_cast<double>(n)));
    for (std::size_t i = 0; i < n - held; ++i) examples.push_back({label, i});
  }

  Optimizer opt(opt_spec);
  Rng rng = make_rng(seed, "pretrain-batches");
  const BaselineSpec probe{Protocol::online, opt_spec};
  PretrainResult res;
  double best = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    std::shuffle(examples.begin(), examples.end(), rng);
    for (std::size_t start = 0; start < examples.size(); start += opts.batch_size) {
      const std::size_t n = std::min(opts.batch_size, examples.size() - start);
      Tensor x = Tensor::matrix(n, d);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Example& e = examples[start + i];
        const auto src = train.example(e.label, e.index);
        std::copy(src.begin(), src.end(), x.row(i).begin());
        y[i] = local.at(e.label);
      }
      Tape tape;
      const Var logits = net.forward(tape, x)[0];
      tape.backward(tape.cross_entropy(logits, y));
      opt.step(net.slow_parameters());
      net.zero_grads();
    }
    const FastWeightModel candidate = with_task_head(net, cfg, d, seed);
    const double acc = stream::evaluate(candidate, plain_trainer(probe), false, splits[1], cfg.stream,
                                        cfg.validation_lengths, cfg.validation_tasks, derive_seed(seed, "validation"))
                           .accuracy;
    res.validation.push_back(acc);
    if (acc > best) {
      best = acc;
      res.model = candidate;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= opts.patience) {
      break;
    }
  }
  return res;
}

// Online evaluation where the learner is replaced by `fresh(task)` with a new
// optimizer state at every task boundary after the first.
inline stream::EvalSummary evaluate_with_task_resets(const std::function<FastWeightModel(std::size_t)>& fresh,
                                                     TrainerConfig tcfg, const stream::LabeledDataset& data,
                                                     const stream::StreamConfig& scfg, stream::LengthRange r,
                                                     std::size_t tasks, std::uint64_t seed) {
  FastWeightModel m = fresh(1);
  tcfg.eval_fast_only = false;
  tcfg.seed = derive_seed(seed, "eval-" + r.label());
  Trainer trainer(m, tcfg);
  stream::StreamGenerator gen(data, stream::with_lengths(scfg, r, tasks, derive_seed(seed, "eval-stream-" + r.label())));
  std::size_t n = 0;
  stream::TaskHook hook = [&](const stream::TaskSpec&) {
    if (++n == 1) return;
    m = fresh(n);
    trainer.rebind(m);
    trainer.reset_optimizers();
  };
  return stream::summarize(r, stream::run_stream(trainer, gen, hook));
}

struct StreamBaselineResult {
  std::vector<stream::EvalSummary> evals;  // one per evaluation length range
  std::optional<stream::TrainResult> train;
  std::optional<PretrainResult> pretrained;
};

inline StreamBaselineResult run_stream(const BaselineSpec& spec, const stream::ExperimentConfig& cfg,
                                       const std::array<stream::LabeledDataset, 3>& splits, std::uint64_t seed) {
  const std::size_t d = splits[0].feature_dim;
  const TrainerConfig tcfg = plain_trainer(spec);
  StreamBaselineResult res;
  std::optional<FastWeightModel> start;
  switch (spec.protocol) {
    case Protocol::online: {
      res.train = stream::train_online(cfg, splits, stream::make_classifier(cfg, d, false, seed), tcfg, false, seed);
      start = res.train->model;
      break;
    }
    case Protocol::online_pretrained:
    case Protocol::reset_pretrained:
      res.pretrained = pretrain(cfg, splits, spec.optimizer, seed);
      start = res.pretrained->model;
      break;
    case Protocol::offline_reset:
      break;
  }
  for (const auto& r : cfg.eval_lengths) {
    switch (spec.protocol) {
      case Protocol::online:
      case Protocol::online_pretrained:
        res.evals.push_back(stream::evaluate(*start, tcfg, false, splits[2], cfg.stream, r, cfg.eval_tasks, seed));
        break;
      case Protocol::reset_pretrained:
        res.evals.push_back(evaluate_with_task_resets([&](std::size_t) { return *start; }, tcfg, splits[2], cfg.stream,
                                                      r, cfg.eval_tasks, seed));
        break;
      case Protocol::offline_reset:
        res.evals.push_back(evaluate_with_task_resets(
            [&](std::size_t task) {
              return stream::make_classifier(cfg, d, false,
                                             derive_seed(seed, "offline-" + r.label() + "-" + std::to_string(task)));
            },
            tcfg, splits[2], cfg.stream, r, cfg.eval_tasks, seed));
        break;
    }
  }
  return res;
}

}  // namespace smnet::baselines
