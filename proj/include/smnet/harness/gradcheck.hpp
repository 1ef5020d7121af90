#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "smnet/fast_weights.hpp"
#include "smnet/model.hpp"
#include "smnet/rng.hpp"
#include "smnet/sparse_mask.hpp"
#include "smnet/tape.hpp"

namespace smnet::harness {

// A k-step window with fixed inputs: step 0 uses the committed M, every later
// step first regenerates M from fixed gradient features and a fixed mask.
// Loss is the sum of the per-step cross-entropies, so gradients reach the
// slow weights directly and the meta-weights through applied fast-weights.
struct GradProblem {
  FastWeightModel model;
  std::vector<Tensor> inputs;
  std::vector<std::vector<int>> labels;
  // [step - 1][layer]
  std::vector<std::vector<Tensor>> averages, grads;
  std::vector<std::vector<SparseMask>> masks;
  double beta2 = 0.5;
};

struct GradCheckOptions {
  std::size_t in = 4, hidden1 = 5, hidden2 = 4, out = 3;
  std::size_t batch = 3;
  std::size_t steps = 3;
  double p = 0.5;
  double eps = 1e-5;
  double tolerance = 1e-5;
  double kink_margin = 1e-3;  // problems with a pre-activation this close to a kink are redrawn
};

struct GradCheckResult {
  std::size_t seeds = 0;
  std::size_t coordinates = 0;
  std::size_t redraws = 0;
  double max_rel_error = 0.0;
  std::string worst;  // parameter[index] with the largest error
  double tolerance = 1e-5;
  bool passed() const { return coordinates > 0 && max_rel_error <= tolerance; }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
}

inline Var window_loss(Tape& tape, GradProblem& p) {
  auto& layers = p.model.layers();
  for (auto& l : layers) l.live_m.reset();
  std::optional<Var> total;
  for (std::size_t s = 0; s < p.inputs.size(); ++s) {
    if (s > 0) {
      for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        if (!l.fast) continue;
        Var prev = l.live_m ? *l.live_m : tape.constant(l.m);
        Var sparse = generate_sparse_fast_weights(tape, p.averages[s - 1][i], p.grads[s - 1][i],
                                                  p.masks[s - 1][i], p.beta2, *p.model.metas()[i]);
        l.live_m = tape.mask_blend(prev, sparse, p.masks[s - 1][i].indices());
      }
    }
    Var loss = tape.cross_entropy(p.model.forward(tape, p.inputs[s])[0], p.labels[s]);
    total = total ? tape.add(*total, loss) : loss;
  }
  for (auto& l : layers) l.live_m.reset();
  return *total;
}

namespace detail {

inline double leaky(double z) { return z > 0.0 ? z : kLeakySlope * z; }

// Smallest |pre-activation| at a kink: the first (ReLU) layer at every step
// and both hidden layers of every meta-learner evaluation.
inline double kink_distance(GradProblem& p) {
  double best = 1e300;
  auto& layers = p.model.layers();
  Tape tape;
  for (auto& l : layers) l.live_m.reset();
  for (std::size_t s = 0; s < p.inputs.size(); ++s) {
    if (s > 0) {
      for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        if (!l.fast) continue;
        const MetaLearner& meta = *p.model.metas()[i];
        const Tensor f = masked_features(p.averages[s - 1][i], p.grads[s - 1][i], p.masks[s - 1][i], p.beta2);
        for (std::size_t r = 0; r < f.rows(); ++r) {
          std::vector<double> h1(MetaLearner::kHidden);
          for (std::size_t u = 0; u < MetaLearner::kHidden; ++u) {
            const double z = meta.b1.value[u] + meta.w1.value(u, 0) * f(r, 0) + meta.w1.value(u, 1) * f(r, 1);
            best = std::min(best, std::abs(z));
            h1[u] = leaky(z);
          }
          for (std::size_t u = 0; u < MetaLearner::kHidden; ++u) {
            double z = meta.b2.value[u];
            for (std::size_t v = 0; v < MetaLearner::kHidden; ++v) z += meta.w2.value(u, v) * h1[v];
            best = std::min(best, std::abs(z));
          }
        }
        Var prev = l.live_m ? *l.live_m : tape.constant(l.m);
        Var sparse = generate_sparse_fast_weights(tape, p.averages[s - 1][i], p.grads[s - 1][i],
                                                  p.masks[s - 1][i], p.beta2, *p.model.metas()[i]);
        l.live_m = tape.mask_blend(prev, sparse, p.masks[s - 1][i].indices());
      }
    }
    const auto& first = layers[0];
    const Tensor& m = first.live_m ? tape.value(*first.live_m) : first.m;
    const Tensor& x = p.inputs[s];
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t o = 0; o < first.out_dim(); ++o) {
        double z = first.b.value[o];
        for (std::size_t j = 0; j < first.in_dim(); ++j) z += (first.w.value(o, j) + m(o, j)) * x(r, j);
        best = std::min(best, std::abs(z));
      }
  }
  for (auto& l : layers) l.live_m.reset();
  return best;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

}  // namespace detail

// ReLU -> tanh -> identity network with every branch fast, committed M and
// gradient features drawn at random, meta-weights at unit scale so that
// pre-activations spread well away from the LeakyReLU kink.
inline GradProblem make_grad_problem(std::uint64_t seed, const GradCheckOptions& o = {}) {
  Rng rng = make_rng(seed, "gradcheck");
  GradProblem p;
  p.model = FastWeightModel({{o.in, o.hidden1, Activation::relu, true},
                             {o.hidden1, o.hidden2, Activation::tanh, true},
                             {o.hidden2, o.out, Activation::identity, true}},
                            Topology::sequential, seed);
  for (auto& meta : p.model.metas())
    for (Parameter* q : meta->parameters())
      for (double& v : q->value.values()) v = uniform(rng, -1.0, 1.0);
  for (auto& l : p.model.layers()) l.m = detail::random_tensor(l.m.shape(), rng, -0.3, 0.3);
  for (std::size_t s = 0; s < o.steps; ++s) {
    p.inputs.push_back(detail::random_tensor({o.batch, o.in}, rng, -1.0, 1.0));
    std::vector<int> y(o.batch);
    for (int& v : y) v = static_cast<int>(uniform_int(rng, 0, static_cast<std::int64_t>(o.out) - 1));
    p.labels.push_back(y);
  }
  p.averages.resize(o.steps - 1);
  p.grads.resize(o.steps - 1);
  p.masks.resize(o.steps - 1);
  for (std::size_t s = 0; s + 1 < o.steps; ++s)
    for (const auto& l : p.model.layers()) {
      // Magnitudes span both branches of the gradient encoding.
      Tensor g(l.w.value.shape()), a(l.w.value.shape());
      for (double& v : g.values()) v = uniform(rng, -1.0, 1.0) * std::exp(uniform(rng, -14.0, 0.0));
      for (double& v : a.values()) v = uniform(rng, -0.5, 0.5) * std::exp(uniform(rng, -14.0, 0.0));
      p.grads[s].push_back(g);
      p.averages[s].push_back(a);
      p.masks[s].push_back(SparseMask::sample(l.w.value.shape(), o.p, rng));
    }
  return p;
}

// Central differences on every slow and meta parameter of one problem.
inline void check_problem(GradProblem& p, const GradCheckOptions& o, GradCheckResult& res) {
  Tape tape;
  const GradMap grads = tape.backward(window_loss(tape, p));
  std::vector<Parameter*> params = p.model.slow_parameters();
  for (Parameter* q : p.model.meta_parameters()) params.push_back(q);
  auto loss_at = [&] {
    Tape t;
    return t.value(window_loss(t, p)).item();
  };
  for (Parameter* q : params) {
    const Tensor analytic = grads.get(*q);
    for (std::size_t i = 0; i < q->value.size(); ++i) {
      const double v = q->value[i];
      q->value[i] = v + o.eps;
      const double up = loss_at();
      q->value[i] = v - o.eps;
      const double down = loss_at();
      q->value[i] = v;
      const double err = relative_error(analytic[i], (up - down) / (2.0 * o.eps));
      ++res.coordinates;
      if (res.worst.empty() || err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = q->name + "[" + std::to_string(i) + "]";
      }
    }
  }
}

inline GradCheckResult check_gradients(std::size_t seeds, std::uint64_t base_seed = 0, const GradCheckOptions& o = {}) {
  GradCheckResult res;
  res.tolerance = o.tolerance;
  for (std::size_t s = 0; s < seeds; ++s) {
    std::uint64_t seed = derive_seed(base_seed, "gradcheck-" + std::to_string(s));
    GradProblem p = make_grad_problem(seed, o);
    while (detail::kink_distance(p) < o.kink_margin) {
      ++res.redraws;
      seed = derive_seed(seed, "redraw");
      p = make_grad_problem(seed, o);
    }
    check_problem(p, o, res);
    ++res.seeds;
  }
  return res;
}

}  // namespace smnet::harness
