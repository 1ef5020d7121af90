#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smnet/errors.hpp"
#include "smnet/tensor.hpp"

namespace smnet {

enum class OptimizerKind { sgd, adam, rmsprop };

inline const char* optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
    case OptimizerKind::sgd: break;
  }
  return "sgd";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd, adam or rmsprop)");
}

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double rms_decay = 0.99;
  double epsilon = 1e-8;
  double max_grad_norm = 0.0;  // global-norm clipping over the stepped list; 0 disables

  friend bool operator==(const OptimizerSpec&, const OptimizerSpec&) = default;
};

// First-order optimizer over a fixed, ordered parameter list. Moment buffers
// are created on the first step and indexed by position in that list.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec = {}) : spec_(spec) {}

  const OptimizerSpec& spec() const noexcept { return spec_; }
  std::uint64_t step_count() const noexcept { return steps_; }

  void reset() {
    first_.clear();
    second_.clear();
    steps_ = 0;
  }

  // Reads Parameter::grad. All gradients are validated before any parameter
  // moves, so a non-finite gradient leaves the model untouched.
  void step(std::span<Parameter* const> params) {
    for (const Parameter* p : params) {
      if (p->grad.shape() != p->value.shape())
        throw DimensionError("optimizer: gradient shape for " + p->name, p->grad.shape(),
                             p->value.shape());
      if (!p->grad.all_finite()) throw NumericError(p->name, "non-finite gradient");
    }
    if (first_.size() != params.size()) {
      first_.clear();
      second_.clear();
      for (const Parameter* p : params) {
        first_.emplace_back(p->value.shape());
        second_.emplace_back(p->value.shape());
      }
    }
    double clip = 1.0;
    if (spec_.max_grad_norm > 0.0) {
      double sq = 0.0;
      for (const Parameter* p : params)
        for (double g : p->grad.values()) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > spec_.max_grad_norm) clip = spec_.max_grad_norm / norm;
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double bc1 = 1.0 - std::pow(spec_.beta1, t);
    const double bc2 = 1.0 - std::pow(spec_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter& p = *params[k];
      Tensor& m = first_[k];
      Tensor& v = second_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = clip * p.grad[i];
        switch (spec_.kind) {
          case OptimizerKind::sgd:
            p.value[i] -= spec_.learning_rate * g;
            break;
          case OptimizerKind::adam: {
            m[i] = spec_.beta1 * m[i] + (1.0 - spec_.beta1) * g;
            v[i] = spec_.beta2 * v[i] + (1.0 - spec_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= spec_.learning_rate * mhat / (std::sqrt(vhat) + spec_.epsilon);
            break;
          }
          case OptimizerKind::rmsprop:
            v[i] = spec_.rms_decay * v[i] + (1.0 - spec_.rms_decay) * g * g;
            p.value[i] -= spec_.learning_rate * g / (std::sqrt(v[i]) + spec_.epsilon);
            break;
        }
      }
    }
  }

  const std::vector<Tensor>& first_moments() const noexcept { return first_; }
  const std::vector<Tensor>& second_moments() const noexcept { return second_; }

 private:
  OptimizerSpec spec_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::uint64_t steps_ = 0;
};

}  // namespace smnet
