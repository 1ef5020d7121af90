#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smnet/errors.hpp"
#include "smnet/fast_weights.hpp"
#include "smnet/meta_learner.hpp"
#include "smnet/rng.hpp"
#include "smnet/tape.hpp"

namespace smnet {

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::relu;
  bool fast = true;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// sequential: each layer feeds the next, one output.
// actor_critic: all but the last two layers form a trunk; the last two are
// an action head and a value head reading the trunk output.
enum class Topology { sequential, actor_critic };

// A network of fast-weight layers with one meta-learner per fast branch.
// Plain (baseline) networks are the same model with every branch disabled.
class FastWeightModel {
 public:
  FastWeightModel() = default;

  FastWeightModel(std::vector<LayerSpec> specs, Topology topology, std::uint64_t seed)
      : specs_(std::move(specs)), topology_(topology), seed_(seed) {
    if (specs_.empty()) throw ConfigError("model needs at least one layer");
    if (topology_ == Topology::actor_critic && specs_.size() < 3)
      throw ConfigError("actor-critic model needs a trunk and two heads");
    validate_dims();
    initialize(seed);
  }

  // Fresh slow and meta weights from a new seed; fast state zeroed.
  void initialize(std::uint64_t seed) {
    seed_ = seed;
    Rng init = make_rng(seed, "init");
    Rng meta_init = make_rng(seed, "meta-init");
    layers_.clear();
    metas_.clear();
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const auto& s = specs_[i];
      layers_.emplace_back("layer" + std::to_string(i), s.in, s.out, s.activation, s.fast, init);
      if (s.fast) metas_.emplace_back(MetaLearner("meta" + std::to_string(i), meta_init));
      else metas_.emplace_back(std::nullopt);
    }
  }

  const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
  Topology topology() const noexcept { return topology_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::vector<FastWeightLayer>& layers() noexcept { return layers_; }
  const std::vector<FastWeightLayer>& layers() const noexcept { return layers_; }
  std::vector<std::optional<MetaLearner>>& metas() noexcept { return metas_; }
  const std::vector<std::optional<MetaLearner>>& metas() const noexcept { return metas_; }

  bool has_fast_weights() const {
    for (const auto& l : layers_)
      if (l.fast) return true;
    return false;
  }

  std::vector<Parameter*> slow_parameters() {
    std::vector<Parameter*> ps;
    for (auto& l : layers_) {
      ps.push_back(&l.w);
      ps.push_back(&l.b);
    }
    return ps;
  }

  std::vector<Parameter*> meta_parameters() {
    std::vector<Parameter*> ps;
    for (auto& m : metas_)
      if (m)
        for (Parameter* p : m->parameters()) ps.push_back(p);
    return ps;
  }

  void zero_grads() {
    for (Parameter* p : slow_parameters()) p->zero_grad();
    for (Parameter* p : meta_parameters()) p->zero_grad();
  }

  void reset_fast_state() {
    for (auto& l : layers_) l.reset_fast_state();
  }

  void commit(const Tape& tape) {
    for (auto& l : layers_) l.commit(tape);
  }

  // Recorded forward pass. Returns {output} or {logits, value}.
  std::vector<Var> forward(Tape& tape, const Tensor& x) {
    Var h = tape.constant(x);
    const std::size_t trunk = topology_ == Topology::actor_critic ? layers_.size() - 2 : layers_.size();
    for (std::size_t i = 0; i < trunk; ++i) h = layers_[i].forward(tape, h);
    if (topology_ == Topology::sequential) return {h};
    return {layers_[trunk].forward(tape, h), layers_[trunk + 1].forward(tape, h)};
  }

  // Unrecorded forward pass using committed fast-weights.
  std::vector<Tensor> predict(const Tensor& x) const {
    Tensor h = x;
    const std::size_t trunk = topology_ == Topology::actor_critic ? layers_.size() - 2 : layers_.size();
    for (std::size_t i = 0; i < trunk; ++i) h = layers_[i].forward(h);
    if (topology_ == Topology::sequential) return {h};
    return {layers_[trunk].forward(h), layers_[trunk + 1].forward(h)};
  }

  // True when every hidden unit outputs zero on the probe batch: the
  // initialization cannot make progress.
  bool dead_on(const Tensor& probe) const {
    Tensor h = probe;
    const std::size_t hidden = topology_ == Topology::actor_critic ? layers_.size() - 2 : layers_.size() - 1;
    if (hidden == 0) return false;
    for (std::size_t i = 0; i < hidden; ++i) {
      h = layers_[i].forward(h);
      if (h.all_zero()) return true;
    }
    return false;
  }

 private:
  void validate_dims() const {
    const std::size_t trunk = topology_ == Topology::actor_critic ? specs_.size() - 2 : specs_.size();
    for (std::size_t i = 1; i < trunk; ++i)
      if (specs_[i].in != specs_[i - 1].out)
        throw ConfigError("layer " + std::to_string(i) + " input does not match previous output");
    if (topology_ == Topology::actor_critic) {
      const std::size_t feat = specs_[trunk - 1].out;
      if (specs_[trunk].in != feat || specs_[trunk + 1].in != feat)
        throw ConfigError("heads must read the trunk output");
    }
  }

  std::vector<LayerSpec> specs_;
  Topology topology_ = Topology::sequential;
  std::uint64_t seed_ = 0;
  std::vector<FastWeightLayer> layers_;
  std::vector<std::optional<MetaLearner>> metas_;
};

}  // namespace smnet
