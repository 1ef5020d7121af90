#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "smnet/errors.hpp"
#include "smnet/meta_learner.hpp"
#include "smnet/rng.hpp"
#include "smnet/sparse_mask.hpp"
#include "smnet/tape.hpp"
#include "smnet/tensor.hpp"

namespace smnet {

// What happens to the fast-weights when the computation graph is truncated.
enum class CarryMode { carry, reset };

inline const char* carry_mode_name(CarryMode m) { return m == CarryMode::reset ? "reset" : "carry"; }

inline CarryMode parse_carry_mode(const std::string& s) {
  if (s == "carry") return CarryMode::carry;
  if (s == "reset") return CarryMode::reset;
  throw ConfigError("unknown carry mode '" + s + "' (expected carry or reset)");
}

struct FastWeightConfig {
  double gamma = 0.9;   // gradient-average decay
  double beta1 = 0.5;   // scale of gradients fed into the average
  double beta2 = 0.5;   // scale of the fresh gradient added to the average
  double p_train = 0.3;
  double p_eval = 0.3;
  CarryMode carry_mode = CarryMode::carry;

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
    if (!(p_train >= 0.0 && p_train <= 1.0)) throw ConfigError("p_train must lie in [0, 1]");
    if (!(p_eval >= 0.0 && p_eval <= 1.0)) throw ConfigError("p_eval must lie in [0, 1]");
  }

  friend bool operator==(const FastWeightConfig&, const FastWeightConfig&) = default;
};

// gamma * I + beta1 * grad
inline Tensor update_gradient_average(const Tensor& average, const Tensor& grad, double gamma, double beta1) {
  Tensor::require_same_shape(average, grad, "gradient average");
  Tensor out = average;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gamma * average[i] + beta1 * grad[i];
  return out;
}

// Meta-learner input rows for the masked coordinates only: preprocess(I + beta2 * grad).
inline Tensor masked_features(const Tensor& average, const Tensor& grad, const SparseMask& mask, double beta2) {
  Tensor::require_same_shape(average, grad, "fast-weight generation");
  if (mask.shape() != grad.shape())
    throw DimensionError("fast-weight generation: mask", mask.shape(), grad.shape());
  Tensor features = Tensor::matrix(mask.nnz(), MetaLearner::kFeatures);
  for (std::size_t k = 0; k < mask.nnz(); ++k) {
    const std::uint32_t i = mask.indices()[k];
    if (!std::isfinite(grad[i])) throw NumericError("fast-weight generation", "non-finite gradient");
    const auto f = preprocess_gradient(average[i] + beta2 * grad[i]);
    features(k, 0) = f[0];
    features(k, 1) = f[1];
  }
  return features;
}

struct SparseGeneration {
  Tensor weights;           // zero outside the mask
  std::size_t evaluations;  // meta-learner forward passes, equals mask.nnz()
};

// Sparse fast-weights, evaluating the meta-learner only where the mask is set.
inline SparseGeneration generate_sparse_fast_weights(const Tensor& average, const Tensor& grad,
                                                     const SparseMask& mask, double beta2,
                                                     const MetaLearner& meta) {
  Tensor features = masked_features(average, grad, mask, beta2);
  Tensor out(grad.shape());
  if (mask.nnz() == 0) return {std::move(out), 0};
  const Tensor values = meta.forward_batch(features);
  for (std::size_t k = 0; k < mask.nnz(); ++k) out[mask.indices()[k]] = values[k];
  return {std::move(out), mask.nnz()};
}

// Recorded variant: gradients reach the meta-weights, never the gradient inputs.
inline Var generate_sparse_fast_weights(Tape& tape, const Tensor& average, const Tensor& grad,
                                        const SparseMask& mask, double beta2, MetaLearner& meta) {
  Tensor features = masked_features(average, grad, mask, beta2);
  if (mask.nnz() == 0) return tape.constant(Tensor(grad.shape()));
  Var values = meta.forward(tape, features);
  return tape.scatter(values, mask.indices(), grad.shape());
}

// (1 - A) * M_prev + M_sparse. Unmasked coordinates are copied bit for bit.
inline Tensor accumulate_fast_weights(const Tensor& previous, const Tensor& sparse, const SparseMask& mask) {
  Tensor::require_same_shape(previous, sparse, "fast-weight accumulation");
  if (mask.shape() != previous.shape())
    throw DimensionError("fast-weight accumulation: mask", mask.shape(), previous.shape());
  Tensor out = previous;
  for (std::uint32_t i : mask.indices()) out[i] = sparse[i];
  return out;
}

// Dense layer with a slow branch (W, b) and a fast branch M; I is the running
// gradient average that feeds the meta-learner.
class FastWeightLayer {
 public:
  FastWeightLayer() = default;

  FastWeightLayer(const std::string& name, std::size_t in, std::size_t out, Activation act, bool fast,
                  Rng& rng)
      : w(name + ".W", Tensor::matrix(out, in)),
        b(name + ".b", Tensor::vector(out)),
        m(Tensor::matrix(out, in)),
        average(Tensor::matrix(out, in)),
        activation(act),
        fast(fast) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.value.values()) v = uniform(rng, -bound, bound);
    for (double& v : b.value.values()) v = uniform(rng, -bound, bound);
  }

  Parameter w;
  Parameter b;
  Tensor m;        // committed fast-weights
  Tensor average;  // I
  Activation activation = Activation::identity;
  bool fast = true;
  std::optional<Var> live_m;  // in-window fast-weights, recorded on the tape

  std::size_t in_dim() const { return w.value.cols(); }
  std::size_t out_dim() const { return w.value.rows(); }

  Var forward(Tape& tape, Var x) {
    std::optional<Var> mv;
    if (fast) mv = live_m ? *live_m : tape.constant(m);
    return tape.dense(x, tape.leaf(w), mv, tape.leaf(b), activation);
  }

  Tensor forward(const Tensor& x) const {
    Tape tape;
    Var y = tape.dense(tape.constant(x), tape.constant(w.value),
                       fast ? std::optional<Var>(tape.constant(m)) : std::nullopt, tape.constant(b.value),
                       activation);
    return tape.value(y);
  }

  // Copies in-window fast-weights out of the tape before it is truncated.
  void commit(const Tape& tape) {
    if (live_m) m = tape.value(*live_m);
    live_m.reset();
  }

  void reset_fast_state() {
    m.zero();
    average.zero();
    live_m.reset();
  }
};

}  // namespace smnet
