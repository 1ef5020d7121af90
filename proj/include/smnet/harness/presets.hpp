#pragma once

#include <string>
#include <vector>

#include "smnet/harness/config.hpp"

namespace smnet::harness {

inline std::vector<std::string> preset_names() { return {"wcst", "online-stream", "enwik8", "wt103"}; }

namespace detail {

inline OptimizerSpec adam(double lr, double clip = 0.0) {
  OptimizerSpec o;
  o.kind = OptimizerKind::adam;
  o.learning_rate = lr;
  o.max_grad_norm = clip;
  return o;
}

inline void set_fast(ExperimentConfig& c, int k, double gamma, double beta1, double beta2, double p, double p_eval,
                     EvalFast eval) {
  c.trainer.k = k;
  c.trainer.fast.gamma = gamma;
  c.trainer.fast.beta1 = beta1;
  c.trainer.fast.beta2 = beta2;
  c.trainer.fast.p_train = p;
  c.trainer.fast.p_eval = p_eval;
  c.eval = eval;
}

}  // namespace detail

// Named hyperparameter sets. The language-model rows only document their
// values; no language-model experiment is implemented.
inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  c.seeds = {0, 1, 2, 3, 4};
  if (name == "wcst") {
    c.experiment = Experiment::wcst;
    detail::set_fast(c, 3, 0.9, 0.5, 0.5, 0.3, 0.3, {0.9, 0.5, 0.5});
    c.trainer.slow_optimizer = detail::adam(1e-3, 0.5);
    c.trainer.meta_optimizer = detail::adam(1e-3, 0.5);
    c.baseline.optimizer = detail::adam(1e-3, 0.5);
    c.wcst.tasks = 60;
    c.wcst.hidden = 256;
    c.wcst.max_episodes_per_task = 500;
    c.wcst.a2c.discount = 0.0;
    c.wcst.a2c.value_coef = 0.5;
    c.wcst.a2c.entropy_coef = 0.2;
  } else if (name == "online-stream") {
    c.experiment = Experiment::stream;
    detail::set_fast(c, 3, 0.99, 0.5, 0.5, 0.3, 0.5, {0.99, 0.5, 0.5});
    c.trainer.slow_optimizer = detail::adam(1e-3);
    c.trainer.meta_optimizer = detail::adam(1e-3);
    c.baseline.optimizer = detail::adam(1e-3);
  } else if (name == "enwik8") {
    c.experiment = Experiment::stream;
    detail::set_fast(c, 5, 0.0, 0.0, 1.0, 0.05, 0.5, {0.999, 0.5, 0.5});
  } else if (name == "wt103") {
    c.experiment = Experiment::stream;
    detail::set_fast(c, 4, 0.0, 0.0, 1.0, 0.05, 0.3, {0.999, 0.5, 0.5});
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected wcst, online-stream, enwik8 or wt103)");
  }
  return c;
}

}  // namespace smnet::harness
