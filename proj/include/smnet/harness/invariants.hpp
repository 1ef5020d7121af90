#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "smnet/fast_weights.hpp"
#include "smnet/metrics.hpp"
#include "smnet/model.hpp"
#include "smnet/rng.hpp"
#include "smnet/sparse_mask.hpp"
#include "smnet/trainer.hpp"

namespace smnet::harness {

struct InvariantResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline Tensor noise(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = uniform(rng, -1.0, 1.0);
  return t;
}

// Small regression problem driven through the trainer.
inline LossFn regression_loss(const Tensor& x, const std::vector<int>& y) {
  return [&x, &y](Tape& tape, FastWeightModel& m) {
    return StepLoss{tape.cross_entropy(m.forward(tape, x)[0], y), 0, y.size()};
  };
}

inline FastWeightModel small_model(std::uint64_t seed) {
  return FastWeightModel({{6, 8, Activation::relu, true}, {8, 3, Activation::identity, true}}, Topology::sequential,
                         seed);
}

}  // namespace detail

// Unmasked coordinates are copied bit for bit, masked ones take the new value.
inline InvariantResult check_accumulation(std::size_t steps, std::uint64_t seed) {
  Rng rng = make_rng(seed, "check-accumulate");
  Tensor m = detail::noise({7, 9}, rng);
  for (std::size_t s = 0; s < steps; ++s) {
    const Tensor sparse = detail::noise({7, 9}, rng);
    const SparseMask mask = SparseMask::sample({7, 9}, uniform01(rng), rng);
    const Tensor next = accumulate_fast_weights(m, sparse, mask);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double want = mask.bit(i) ? sparse[i] : m[i];
      if (std::bit_cast<std::uint64_t>(next[i]) != std::bit_cast<std::uint64_t>(want))
        return {"accumulation", false, "coordinate " + std::to_string(i) + " at step " + std::to_string(s)};
    }
    m = next;
  }
  return {"accumulation", true, std::to_string(steps) + " steps"};
}

// Batched generation agrees with one scalar meta-learner call per coordinate.
inline InvariantResult check_coordinatewise(std::size_t trials, std::uint64_t seed) {
  Rng rng = make_rng(seed, "check-coordinatewise");
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    MetaLearner meta("meta", rng, 1.0);
    const Tensor avg = detail::noise({5, 11}, rng), grad = detail::noise({5, 11}, rng);
    const SparseMask mask = SparseMask::sample({5, 11}, 0.5, rng);
    const Tensor out = generate_sparse_fast_weights(avg, grad, mask, 0.5, meta).weights;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto f = preprocess_gradient(avg[i] + 0.5 * grad[i]);
      const double want = mask.bit(i) ? meta.forward(std::span<const double, 2>(f)) : 0.0;
      worst = std::max(worst, std::abs(out[i] - want));
    }
  }
  return {"coordinatewise", worst <= 1e-12, "max abs diff " + format_double(worst)};
}

// Gradient steps happen exactly when k divides t.
inline InvariantResult check_schedule(std::size_t steps, int k, std::uint64_t seed) {
  FastWeightModel model = detail::small_model(seed);
  TrainerConfig cfg;
  cfg.k = k;
  cfg.seed = seed;
  Trainer trainer(model, cfg);
  Rng rng = make_rng(seed, "check-schedule");
  const Tensor x = detail::noise({4, 6}, rng);
  const std::vector<int> y{0, 1, 2, 1};
  const LossFn fn = detail::regression_loss(x, y);
  std::size_t gradient_steps = 0;
  for (std::size_t s = 1; s <= steps; ++s) {
    const StepRecord r = trainer.online_step(fn);
    const bool expect = s % static_cast<std::size_t>(k) == 0;
    if ((r.update_kind == UpdateKind::gradient) != expect)
      return {"schedule", false, "unexpected update kind at t=" + std::to_string(s)};
    gradient_steps += expect;
  }
  return {"schedule", gradient_steps == steps / static_cast<std::size_t>(k),
          std::to_string(gradient_steps) + " gradient steps"};
}

// Fast-weight-only steps never write slow or meta weights.
inline InvariantResult check_fast_only_frozen(std::size_t steps, std::uint64_t seed) {
  FastWeightModel model = detail::small_model(seed);
  const FastWeightModel before = model;
  TrainerConfig cfg;
  cfg.seed = seed;
  cfg.eval_fast_only = true;
  Trainer trainer(model, cfg);
  Rng rng = make_rng(seed, "check-frozen");
  const Tensor x = detail::noise({4, 6}, rng);
  const std::vector<int> y{2, 0, 1, 1};
  const LossFn fn = detail::regression_loss(x, y);
  for (std::size_t s = 0; s < steps; ++s) trainer.online_step(fn);
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (!(model.layers()[i].w.value == before.layers()[i].w.value) ||
        !(model.layers()[i].b.value == before.layers()[i].b.value))
      return {"fast-only-frozen", false, "slow weights of layer " + std::to_string(i) + " moved"};
    const auto& a = *model.metas()[i];
    const auto& b = *before.metas()[i];
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    for (std::size_t j = 0; j < pa.size(); ++j)
      if (!(pa[j]->value == pb[j]->value)) return {"fast-only-frozen", false, pa[j]->name + " moved"};
  }
  const bool moved = !model.layers()[0].m.all_zero();
  return {"fast-only-frozen", moved, moved ? "fast-weights changed, others frozen" : "fast-weights never written"};
}

inline std::vector<InvariantResult> check_invariants(std::uint64_t seed = 0) {
  return {check_accumulation(10000, seed), check_coordinatewise(50, seed), check_schedule(3000, 3, seed),
          check_fast_only_frozen(200, seed)};
}

}  // namespace smnet::harness
