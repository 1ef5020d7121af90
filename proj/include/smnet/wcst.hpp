#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "smnet/errors.hpp"
#include "smnet/model.hpp"
#include "smnet/rng.hpp"
#include "smnet/tape.hpp"
#include "smnet/trainer.hpp"

namespace smnet::wcst {

// Sorting rules; a card's code_indices are ordered the same way.
enum Rule : int { color = 0, shape = 1, number = 2 };

inline constexpr std::size_t kActions = 4;
inline constexpr std::size_t kEncodingDim = 12;

// One-hot rows used to encode each of the three card attributes.
inline constexpr std::array<std::array<double, 4>, 4> kCodeTable{{
    {0, 0, 0, 1},
    {0, 0, 1, 0},
    {0, 1, 0, 0},
    {1, 0, 0, 0},
}};

struct Card {
  std::array<int, 3> code{};  // color, shape, number; pairwise distinct, in 0..3

  std::array<double, kEncodingDim> encoding() const {
    std::array<double, kEncodingDim> e{};
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t j = 0; j < 4; ++j) e[a * 4 + j] = kCodeTable[static_cast<std::size_t>(code[a])][j];
    return e;
  }

  // Inverse of encoding(); throws if a block is not a code-table row.
  static Card decode(std::span<const double> e) {
    if (e.size() != kEncodingDim) throw DimensionError("card encoding must have 12 entries");
    Card c;
    for (std::size_t a = 0; a < 3; ++a) {
      int found = -1;
      for (std::size_t r = 0; r < 4; ++r) {
        bool eq = true;
        for (std::size_t j = 0; j < 4; ++j) eq = eq && e[a * 4 + j] == kCodeTable[r][j];
        if (eq) found = static_cast<int>(r);
      }
      if (found < 0) throw std::invalid_argument("card encoding block is not a code-table row");
      c.code[a] = found;
    }
    return c;
  }

  friend bool operator==(const Card&, const Card&) = default;
};

struct CardDraw {
  Card card;
  int target = 0;
  std::optional<int> target_prev;
};

struct StepOutcome {
  double reward = 0.0;
  bool correct = false;
  bool solved_task = false;
  bool perseveration = false;
};

struct EnvOptions {
  bool allow_same_task = false;
  int switch_window = 50;   // a solved task switches within this many episodes
  int episode_length = 16;  // cards per episode
  int solve_streak = 48;    // consecutive correct answers that solve a task

  friend bool operator==(const EnvOptions&, const EnvOptions&) = default;
};

// Card-sorting environment. The observation is the card encoding only; the
// active rule has to be inferred from rewards.
class Environment {
 public:
  explicit Environment(std::uint64_t seed, EnvOptions options = {})
      : options_(options), rng_(make_rng(seed, "wcst-env")) {}

  const EnvOptions& options() const noexcept { return options_; }
  std::optional<int> current_rule() const noexcept { return current_; }
  std::optional<int> old_rule() const noexcept { return old_; }
  int consecutive_correct() const noexcept { return streak_; }
  int episode_card_index() const noexcept { return card_in_episode_; }
  std::optional<int> episodes_until_switch() const noexcept { return until_switch_; }
  bool task_solved() const noexcept { return solved_; }
  std::uint64_t total_trials() const noexcept { return total_trials_; }
  std::uint64_t total_tasks() const noexcept { return total_tasks_; }
  std::uint64_t task_trials() const noexcept { return task_trials_; }
  std::size_t pending_cards() const noexcept { return pending_.size(); }

  // Forces a rule (tests and replay). Counts as a task switch.
  void set_rule(int rule) {
    if (rule < 0 || rule > 2) throw std::out_of_range("rule must be 0, 1 or 2");
    old_ = current_;
    current_ = rule;
    begin_task();
  }

  void next_task() {
    old_ = current_;
    int r = static_cast<int>(uniform_int(rng_, 0, 2));
    while (old_ && r == *old_ && !options_.allow_same_task) r = static_cast<int>(uniform_int(rng_, 0, 2));
    current_ = r;
    begin_task();
  }

  // Issues a card; it must be answered with step() in issue order.
  CardDraw next_card() {
    if (!current_) throw StateError("next_card before the first task");
    std::array<int, 4> pool{0, 1, 2, 3};
    for (int i = 0; i < 3; ++i) {
      const auto j = static_cast<std::size_t>(uniform_int(rng_, i, 3));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    CardDraw d;
    d.card.code = {pool[0], pool[1], pool[2]};
    d.target = d.card.code[static_cast<std::size_t>(*current_)];
    if (old_) d.target_prev = d.card.code[static_cast<std::size_t>(*old_)];
    pending_.push_back(d);
    return d;
  }

  StepOutcome step(int action) {
    if (action < 0 || action >= static_cast<int>(kActions)) throw std::out_of_range("action must be in 0..3");
    if (pending_.empty()) throw StateError("step without an issued card");
    const CardDraw d = pending_.front();
    pending_.pop_front();
    StepOutcome o;
    o.correct = action == d.target;
    o.reward = o.correct ? 1.0 : -1.0;
    o.perseveration = !o.correct && d.target_prev && action == *d.target_prev;
    if (o.correct) streak_ = std::min(streak_ + 1, options_.solve_streak);
    else streak_ = 0;
    if (!solved_ && streak_ >= options_.solve_streak) {
      solved_ = true;
      o.solved_task = true;
      until_switch_ = static_cast<int>(uniform_int(rng_, 1, options_.switch_window));
    }
    ++card_in_episode_;
    ++total_trials_;
    ++task_trials_;
    return o;
  }

  // Closes an episode; returns true when the scheduled rule switch fired.
  bool end_episode() {
    card_in_episode_ = 0;
    if (!until_switch_) return false;
    if (--*until_switch_ > 0) return false;
    next_task();
    return true;
  }

 private:
  void begin_task() {
    streak_ = 0;
    solved_ = false;
    until_switch_.reset();
    task_trials_ = 0;
    pending_.clear();
    ++total_tasks_;
  }

  EnvOptions options_;
  Rng rng_;
  std::optional<int> current_;
  std::optional<int> old_;
  int streak_ = 0;
  int card_in_episode_ = 0;
  std::optional<int> until_switch_;
  bool solved_ = false;
  std::uint64_t total_trials_ = 0;
  std::uint64_t total_tasks_ = 0;
  std::uint64_t task_trials_ = 0;
  std::deque<CardDraw> pending_;
};

struct A2cConfig {
  double discount = 0.9;
  double value_coef = 0.5;
  double entropy_coef = 0.01;

  friend bool operator==(const A2cConfig&, const A2cConfig&) = default;
};

struct A2cLoss {
  Var total;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;  // mean policy entropy (nats)
};

// Discounted returns within one episode; the episode end is terminal.
inline std::vector<double> discounted_returns(std::span<const double> rewards, double discount) {
  std::vector<double> r(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + discount * acc;
    r[i] = acc;
  }
  return r;
}

// Advantage actor-critic loss over a trajectory:
//   -mean(log pi(a) * (R - V)) + c_v * mean((R - V)^2) - c_e * mean(H(pi))
// with the advantage held constant.
inline A2cLoss a2c_loss(Tape& tape, Var logits, Var value, const std::vector<int>& actions,
                        const std::vector<double>& returns, const A2cConfig& cfg) {
  if (actions.empty()) throw std::invalid_argument("a2c_loss: empty trajectory");
  const std::size_t n = actions.size();
  if (returns.size() != n || tape.value(logits).rows() != n || tape.value(value).size() != n)
    throw DimensionError("a2c_loss: trajectory fields disagree in length");

  Var logp = tape.log_softmax_rows(logits);
  Var probs = tape.exp(logp);
  Var entropy = tape.scale(tape.sum_rows(tape.mul(probs, logp)), -1.0);
  Var chosen = tape.pick_rows(logp, actions);
  Var v = tape.flatten(value);

  Tensor advantage = Tensor::vector(n);
  Tensor target = Tensor::vector(n);
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = returns[i];
    advantage[i] = returns[i] - tape.value(v)[i];
  }
  Var policy = tape.scale(tape.mean(tape.mul(chosen, tape.constant(advantage))), -1.0);
  Var value_loss = tape.mean(tape.square(tape.sub(tape.constant(target), v)));
  Var mean_entropy = tape.mean(entropy);
  Var total = tape.add(tape.add(policy, tape.scale(value_loss, cfg.value_coef)),
                       tape.scale(mean_entropy, -cfg.entropy_coef));
  return {total, tape.value(policy).item(), tape.value(value_loss).item(), tape.value(mean_entropy).item()};
}

// 12 -> hidden -> hidden trunk (ReLU) with a 4-way action head and a scalar
// value head; `fast` augments every layer including both heads.
inline std::vector<LayerSpec> agent_layers(std::size_t hidden, bool fast) {
  return {
      {kEncodingDim, hidden, Activation::relu, fast},
      {hidden, hidden, Activation::relu, fast},
      {hidden, kActions, Activation::identity, fast},
      {hidden, 1, Activation::identity, fast},
  };
}

enum class AgentKind { sparse_metanet, online, offline_reset };

inline const char* agent_kind_name(AgentKind k) {
  switch (k) {
    case AgentKind::online: return "online";
    case AgentKind::offline_reset: return "offline";
    case AgentKind::sparse_metanet: break;
  }
  return "sparse-metanet";
}

struct RunConfig {
  AgentKind agent = AgentKind::sparse_metanet;
  std::size_t tasks = 60;
  std::size_t hidden = 256;
  std::size_t max_episodes_per_task = 1000;  // unsolved tasks are abandoned after this many
  TrainerConfig trainer;
  A2cConfig a2c;
  EnvOptions env;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct TaskRecord {
  std::size_t task_index = 0;  // 1-based
  int rule = 0;
  std::size_t updates_to_solve = 0;  // gradient + fast-weight updates until solved (or abandoned)
  std::size_t perseveration_errors = 0;
  std::size_t episodes = 0;
  bool solved = false;
  bool diverged = false;
};

struct RunResult {
  std::vector<TaskRecord> tasks;
  std::uint64_t gradient_updates = 0;
  std::uint64_t fast_updates = 0;
  std::uint64_t episodes = 0;
  std::uint64_t init_seed = 0;
  int restarts = 0;
  bool diverged = false;
};

// Softmax sample from one row of logits.
inline int sample_action(std::span<const double> logits, Rng& rng) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::array<double, kActions> p{};
  double s = 0.0;
  for (std::size_t j = 0; j < kActions; ++j) s += p[j] = std::exp(logits[j] - mx);
  double u = uniform01(rng) * s;
  for (std::size_t j = 0; j < kActions; ++j) {
    if (u < p[j]) return static_cast<int>(j);
    u -= p[j];
  }
  return static_cast<int>(kActions - 1);
}

// Initializes a model, restarting with the next seed while every hidden unit
// is silent on a probe batch of cards.
inline FastWeightModel make_agent(const RunConfig& cfg, std::uint64_t seed, int* restarts = nullptr) {
  const bool fast = cfg.agent == AgentKind::sparse_metanet;
  Rng probe_rng = make_rng(seed, "wcst-probe");
  Environment probe_env(seed);
  probe_env.next_task();
  Tensor probe = Tensor::matrix(16, kEncodingDim);
  for (std::size_t i = 0; i < 16; ++i) {
    const auto e = probe_env.next_card().card.encoding();
    std::copy(e.begin(), e.end(), probe.row(i).begin());
  }
  std::uint64_t s = seed;
  FastWeightModel model(agent_layers(cfg.hidden, fast), Topology::actor_critic, s);
  int n = 0;
  while (model.dead_on(probe) && n < 100) {
    model.initialize(++s);
    ++n;
  }
  if (restarts) *restarts = n;
  return model;
}

using TaskCallback = std::function<void(const TaskRecord&)>;

// Runs one agent through `cfg.tasks` rule switches. Sparse-MetaNet uses the
// BPTT schedule of cfg.trainer; baseline agents are plain networks updated
// every episode, the offline ones re-initialized at each switch.
inline RunResult run(const RunConfig& cfg, std::uint64_t seed, const TaskCallback& on_task = {}) {
  RunResult result;
  FastWeightModel model = make_agent(cfg, seed, &result.restarts);
  result.init_seed = model.seed();
  TrainerConfig tcfg = cfg.trainer;
  tcfg.seed = seed;
  if (cfg.agent != AgentKind::sparse_metanet) tcfg.k = 1;
  tcfg.eval_fast_only = false;
  Trainer trainer(model, tcfg);

  Environment env(seed, cfg.env);
  Rng action_rng = make_rng(seed, "wcst-actions");
  env.next_task();

  TaskRecord task;
  task.task_index = 1;
  task.rule = *env.current_rule();
  const auto episode_len = static_cast<std::size_t>(cfg.env.episode_length);

  auto finish_task = [&] {
    if (!task.solved) task.updates_to_solve = task.episodes;
    result.tasks.push_back(task);
    if (on_task) on_task(task);
    TaskRecord next;
    next.task_index = task.task_index + 1;
    task = next;
  };

  while (result.tasks.size() < cfg.tasks) {
    Tensor x = Tensor::matrix(episode_len, kEncodingDim);
    for (std::size_t i = 0; i < episode_len; ++i) {
      const auto e = env.next_card().card.encoding();
      std::copy(e.begin(), e.end(), x.row(i).begin());
    }
    bool solved_now = false;
    std::size_t persev = 0;
    LossFn loss_fn = [&](Tape& tape, FastWeightModel& m) {
      const std::vector<Var> out = m.forward(tape, x);
      const Tensor& logits = tape.value(out[0]);
      std::vector<int> actions(episode_len);
      std::vector<double> rewards(episode_len);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < episode_len; ++i) {
        actions[i] = sample_action(logits.row(i), action_rng);
        const StepOutcome o = env.step(actions[i]);
        rewards[i] = o.reward;
        correct += o.correct;
        persev += o.perseveration;
        solved_now = solved_now || o.solved_task;
      }
      const auto returns = discounted_returns(rewards, cfg.a2c.discount);
      const A2cLoss l = a2c_loss(tape, out[0], out[1], actions, returns, cfg.a2c);
      return StepLoss{l.total, correct, episode_len};
    };
    const StepRecord rec = trainer.online_step(loss_fn);
    ++result.episodes;
    ++task.episodes;
    task.perseveration_errors += persev;
    task.diverged = task.diverged || rec.diverged;
    if (solved_now) {
      task.solved = true;
      task.updates_to_solve = task.episodes;
    }

    bool switched = env.end_episode();
    if (!switched && !task.solved && task.episodes >= cfg.max_episodes_per_task) {
      env.next_task();
      switched = true;
    }
    if (switched) {
      const int new_rule = *env.current_rule();
      finish_task();
      task.rule = new_rule;
      if (cfg.agent == AgentKind::offline_reset && result.tasks.size() < cfg.tasks) {
        model.initialize(derive_seed(seed, "offline-task-" + std::to_string(task.task_index)));
        trainer.rebind(model);
        trainer.reset_optimizers();
      }
    }
  }
  result.gradient_updates = trainer.gradient_updates();
  result.fast_updates = trainer.fast_updates();
  result.diverged = trainer.diverged();
  return result;
}

}  // namespace smnet::wcst
