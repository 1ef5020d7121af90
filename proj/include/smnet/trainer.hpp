#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "smnet/errors.hpp"
#include "smnet/fast_weights.hpp"
#include "smnet/model.hpp"
#include "smnet/optimizer.hpp"
#include "smnet/rng.hpp"
#include "smnet/sparse_mask.hpp"
#include "smnet/tape.hpp"

namespace smnet {

struct TrainerConfig {
  int k = 3;  // BPTT length; k = 1 is plain online gradient descent
  FastWeightConfig fast;
  OptimizerSpec slow_optimizer;
  OptimizerSpec meta_optimizer;
  std::uint64_t seed = 0;
  bool eval_fast_only = false;

  void validate() const {
    if (k < 1) throw ConfigError("BPTT length k must be positive");
    fast.validate();
  }

  friend bool operator==(const TrainerConfig&, const TrainerConfig&) = default;
};

enum class UpdateKind { fast, gradient };

inline const char* update_kind_name(UpdateKind k) { return k == UpdateKind::gradient ? "gradient" : "fast"; }

struct StepRecord {
  std::uint64_t t = 0;
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  UpdateKind update_kind = UpdateKind::fast;
  double wall_seconds = 0.0;
  bool diverged = false;
  std::size_t tape_nodes = 0;  // history retained after the step
};

// What a step's loss function reports back to the trainer.
struct StepLoss {
  Var loss;
  std::size_t correct = 0;
  std::size_t total = 0;
};

// Builds the step's forward pass on the tape and returns the incurred loss.
using LossFn = std::function<StepLoss(Tape&, FastWeightModel&)>;

// Online loop over a fast-weight model: every step predicts, incurs a loss
// and refreshes the gradient average; every k-th step updates slow and meta
// weights and truncates the graph, the others write sparse fast-weights.
class Trainer {
 public:
  Trainer(FastWeightModel& model, TrainerConfig cfg)
      : model_(&model),
        cfg_(cfg),
        slow_opt_(cfg.slow_optimizer),
        meta_opt_(cfg.meta_optimizer),
        mask_rng_(make_rng(cfg.seed, "mask")) {
    cfg_.validate();
    model_->zero_grads();
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainerConfig& config() const noexcept { return cfg_; }
  FastWeightModel& model() noexcept { return *model_; }
  const Tape& tape() const noexcept { return tape_; }
  Optimizer& slow_optimizer() noexcept { return slow_opt_; }
  Optimizer& meta_optimizer() noexcept { return meta_opt_; }

  std::uint64_t steps() const noexcept { return t_; }
  std::uint64_t gradient_updates() const noexcept { return gradient_updates_; }
  std::uint64_t fast_updates() const noexcept { return fast_updates_; }
  std::uint64_t mask_evaluations() const noexcept { return evaluations_; }
  bool diverged() const noexcept { return diverged_; }

  void set_eval_fast_only(bool on) {
    if (on != cfg_.eval_fast_only) end_window();
    cfg_.eval_fast_only = on;
  }

  void reset_optimizers() {
    slow_opt_.reset();
    meta_opt_.reset();
  }

  // Points the trainer at another model instance (e.g. a restored
  // checkpoint). Optimizer state is kept; call reset_optimizers() to drop it.
  void rebind(FastWeightModel& model) {
    end_window();
    model_ = &model;
    model_->zero_grads();
  }

  StepRecord online_step(const LossFn& loss_fn) {
    return cfg_.eval_fast_only ? fast_only_step(loss_fn) : training_step(loss_fn);
  }

  // Commits in-window fast-weights and drops the graph.
  void end_window() {
    model_->commit(tape_);
    tape_.truncate();
    if (cfg_.fast.carry_mode == CarryMode::reset)
      for (auto& l : model_->layers()) l.m.zero();
  }

 private:
  using Clock = std::chrono::steady_clock;

  StepRecord training_step(const LossFn& loss_fn) {
    const auto start = Clock::now();
    StepRecord rec;
    rec.t = ++t_;
    const bool gradient_step = rec.t % static_cast<std::uint64_t>(cfg_.k) == 0;
    rec.update_kind = gradient_step ? UpdateKind::gradient : UpdateKind::fast;

    StepLoss sl = loss_fn(tape_, *model_);
    rec.correct = sl.correct;
    rec.total = sl.total;
    rec.loss = tape_.value(sl.loss).item();
    if (!std::isfinite(rec.loss)) return diverge(rec, start, gradient_step);

    const GradMap grads = tape_.backward(sl.loss);
    std::vector<Tensor> layer_grads;
    layer_grads.reserve(model_->layers().size());
    for (auto& layer : model_->layers()) {
      layer_grads.push_back(grads.get(layer.w));
      if (layer.fast)
        layer.average = update_gradient_average(layer.average, layer_grads.back(), cfg_.fast.gamma,
                                                cfg_.fast.beta1);
    }

    if (gradient_step) {
      try {
        slow_opt_.step(model_->slow_parameters());
        const auto meta = model_->meta_parameters();
        if (!meta.empty()) meta_opt_.step(meta);
      } catch (const NumericError&) {
        return diverge(rec, start, true);
      }
      ++gradient_updates_;
      model_->zero_grads();
      end_window();
    } else {
      try {
        for (std::size_t i = 0; i < model_->layers().size(); ++i) {
          auto& layer = model_->layers()[i];
          if (!layer.fast) continue;
          const SparseMask mask = SparseMask::sample(layer.w.value.shape(), cfg_.fast.p_train, mask_rng_);
          Var previous = layer.live_m ? *layer.live_m : tape_.constant(layer.m);
          Var sparse = generate_sparse_fast_weights(tape_, layer.average, layer_grads[i], mask,
                                                    cfg_.fast.beta2, *model_->metas()[i]);
          layer.live_m = tape_.mask_blend(previous, sparse, mask.indices());
          evaluations_ += mask.nnz();
        }
      } catch (const NumericError&) {
        return diverge(rec, start, false);
      }
      ++fast_updates_;
    }
    rec.tape_nodes = tape_.node_count();
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return rec;
  }

  // Evaluation protocol: every step is a fast-weight update with p_eval;
  // slow and meta weights are read, never written.
  StepRecord fast_only_step(const LossFn& loss_fn) {
    const auto start = Clock::now();
    StepRecord rec;
    rec.t = ++t_;
    rec.update_kind = UpdateKind::fast;
    StepLoss sl = loss_fn(tape_, *model_);
    rec.correct = sl.correct;
    rec.total = sl.total;
    rec.loss = tape_.value(sl.loss).item();
    if (!std::isfinite(rec.loss)) return diverge(rec, start, true);

    const GradMap grads = tape_.backward(sl.loss);
    try {
      for (std::size_t i = 0; i < model_->layers().size(); ++i) {
        auto& layer = model_->layers()[i];
        if (!layer.fast) continue;
        const Tensor g = grads.get(layer.w);
        layer.average = update_gradient_average(layer.average, g, cfg_.fast.gamma, cfg_.fast.beta1);
        const SparseMask mask = SparseMask::sample(layer.w.value.shape(), cfg_.fast.p_eval, mask_rng_);
        const SparseGeneration gen =
            generate_sparse_fast_weights(layer.average, g, mask, cfg_.fast.beta2, *model_->metas()[i]);
        layer.m = accumulate_fast_weights(layer.m, gen.weights, mask);
        evaluations_ += gen.evaluations;
      }
    } catch (const NumericError&) {
      return diverge(rec, start, true);
    }
    ++fast_updates_;
    model_->zero_grads();
    tape_.truncate();
    rec.tape_nodes = tape_.node_count();
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return rec;
  }

  StepRecord diverge(StepRecord rec, Clock::time_point start, bool gradient_step) {
    diverged_ = true;
    rec.diverged = true;
    if (gradient_step) ++gradient_updates_;
    else ++fast_updates_;
    model_->zero_grads();
    end_window();
    rec.tape_nodes = tape_.node_count();
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return rec;
  }

  FastWeightModel* model_;
  TrainerConfig cfg_;
  Optimizer slow_opt_;
  Optimizer meta_opt_;
  Rng mask_rng_;
  Tape tape_;
  std::uint64_t t_ = 0;
  std::uint64_t gradient_updates_ = 0;
  std::uint64_t fast_updates_ = 0;
  std::uint64_t evaluations_ = 0;
  bool diverged_ = false;
};

}  // namespace smnet
