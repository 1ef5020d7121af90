#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "smnet/baselines.hpp"
#include "smnet/errors.hpp"
#include "smnet/metrics.hpp"
#include "smnet/stream_experiment.hpp"
#include "smnet/trainer.hpp"
#include "smnet/wcst.hpp"

namespace smnet::harness {

enum class Experiment { wcst, stream, pretrain, check };
enum class ModelKind { sparse_metanet, baseline };

inline const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::stream: return "stream";
    case Experiment::pretrain: return "pretrain";
    case Experiment::check: return "check";
    case Experiment::wcst: break;
  }
  return "wcst";
}

inline Experiment parse_experiment(const std::string& s) {
  if (s == "wcst") return Experiment::wcst;
  if (s == "stream") return Experiment::stream;
  if (s == "pretrain") return Experiment::pretrain;
  if (s == "check") return Experiment::check;
  throw ConfigError("unknown experiment '" + s + "' (expected wcst, stream, pretrain or check)");
}

inline const char* model_name(ModelKind m) { return m == ModelKind::baseline ? "baseline" : "sparse-metanet"; }

inline ModelKind parse_model(const std::string& s) {
  if (s == "sparse-metanet") return ModelKind::sparse_metanet;
  if (s == "baseline") return ModelKind::baseline;
  throw ConfigError("unknown model '" + s + "' (expected sparse-metanet or baseline)");
}

// Fast-weight settings used on evaluation streams; the mask rate is
// trainer.fast.p_eval.
struct EvalFast {
  double gamma = 0.9;
  double beta1 = 0.5;
  double beta2 = 0.5;

  friend bool operator==(const EvalFast&, const EvalFast&) = default;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::wcst;
  std::string preset;
  ModelKind model = ModelKind::sparse_metanet;
  baselines::BaselineSpec baseline;
  TrainerConfig trainer;  // seed is taken per run
  EvalFast eval;
  wcst::RunConfig wcst;             // its trainer is replaced by `trainer`
  stream::ExperimentConfig stream;  // likewise
  baselines::PretrainOptions pretrain;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir;  // relative paths resolve against the output root
  std::string check_suite = "all";
  std::size_t check_seeds = 100;
  std::size_t jobs = 1;

  TrainerConfig eval_trainer() const {
    TrainerConfig t = trainer;
    t.fast.gamma = eval.gamma;
    t.fast.beta1 = eval.beta1;
    t.fast.beta2 = eval.beta2;
    return t;
  }

  wcst::RunConfig wcst_run() const {
    wcst::RunConfig r = wcst;
    r.trainer = trainer;
    r.agent = model == ModelKind::sparse_metanet ? wcst::AgentKind::sparse_metanet
              : baseline.protocol == baselines::Protocol::offline_reset ? wcst::AgentKind::offline_reset
                                                                        : wcst::AgentKind::online;
    return r;
  }

  stream::ExperimentConfig stream_run() const {
    stream::ExperimentConfig s = stream;
    s.trainer = trainer;
    return s;
  }


 private:
  // Everything that is serialized; derived fields are left out.
  auto key() const {
    TrainerConfig t = trainer;
    t.seed = 0;
    wcst::RunConfig w = wcst;
    w.trainer = {};
    w.agent = {};
    stream::ExperimentConfig s = stream;
    s.trainer = {};
    s.stream.seed = 0;
    return std::make_tuple(experiment, preset, model, baseline, t, eval, w, s, pretrain, seeds, output_dir,
                           check_suite, check_seeds, jobs);
  }

 public:
  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return a.key() == b.key(); }
};

namespace detail {

inline std::string join_seeds(const std::vector<std::uint64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

inline std::string join_ranges(const std::vector<stream::LengthRange>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i].label();
  return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
T to_unsigned(const std::string& key, const std::string& s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

inline int to_int(const std::string& key, const std::string& s) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    throw ConfigError(key + ": expected an integer, got '" + s + "'");
  return v;
}

inline double to_double(const std::string& key, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

inline bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

inline stream::LengthRange to_range(const std::string& key, const std::string& s) {
  const auto parts = split(s, '-');
  if (parts.size() != 2) throw ConfigError(key + ": expected a range like 1-15, got '" + s + "'");
  return {to_unsigned<std::size_t>(key, parts[0]), to_unsigned<std::size_t>(key, parts[1])};
}

using boost::property_tree::ptree;

inline void put_optimizer(ptree& t, const std::string& section, const OptimizerSpec& o) {
  t.put(section + ".kind", optimizer_name(o.kind));
  t.put(section + ".learning_rate", format_double(o.learning_rate));
  t.put(section + ".beta1", format_double(o.beta1));
  t.put(section + ".beta2", format_double(o.beta2));
  t.put(section + ".rms_decay", format_double(o.rms_decay));
  t.put(section + ".epsilon", format_double(o.epsilon));
  t.put(section + ".max_grad_norm", format_double(o.max_grad_norm));
}

// Reads keys from a tree; every key read is recorded so leftovers can be
// reported as unknown.
class Reader {
 public:
  explicit Reader(const ptree& t) : t_(t) {}

  template <class F>
  void read(const std::string& key, F&& apply) {
    used_.insert(key);
    if (auto v = t_.get_optional<std::string>(ptree::path_type(key, '.'))) apply(key, *v);
  }

  void optimizer(const std::string& section, OptimizerSpec& o) {
    read(section + ".kind", [&](auto&, auto& v) { o.kind = parse_optimizer(v); });
    read(section + ".learning_rate", [&](auto& k, auto& v) { o.learning_rate = to_double(k, v); });
    read(section + ".beta1", [&](auto& k, auto& v) { o.beta1 = to_double(k, v); });
    read(section + ".beta2", [&](auto& k, auto& v) { o.beta2 = to_double(k, v); });
    read(section + ".rms_decay", [&](auto& k, auto& v) { o.rms_decay = to_double(k, v); });
    read(section + ".epsilon", [&](auto& k, auto& v) { o.epsilon = to_double(k, v); });
    read(section + ".max_grad_norm", [&](auto& k, auto& v) { o.max_grad_norm = to_double(k, v); });
  }

  void reject_unknown() const {
    for (const auto& [section, body] : t_) {
      if (body.empty()) throw ConfigError("key '" + section + "' must live inside a [section]");
      for (const auto& [key, value] : body) {
        const std::string full = section + "." + key;
        if (!used_.count(full)) throw ConfigError("unknown config key '" + full + "'");
      }
    }
  }

 private:
  const ptree& t_;
  std::set<std::string> used_;
};

}  // namespace detail

inline boost::property_tree::ptree to_ptree(const ExperimentConfig& c) {
  using detail::put_optimizer;
  boost::property_tree::ptree t;
  t.put("experiment.kind", experiment_name(c.experiment));
  t.put("experiment.preset", c.preset);
  t.put("experiment.model", model_name(c.model));
  t.put("experiment.seeds", detail::join_seeds(c.seeds));
  t.put("experiment.output_dir", c.output_dir);
  t.put("experiment.jobs", c.jobs);

  t.put("trainer.k", c.trainer.k);
  t.put("trainer.carry_mode", carry_mode_name(c.trainer.fast.carry_mode));
  t.put("fast.gamma", format_double(c.trainer.fast.gamma));
  t.put("fast.beta1", format_double(c.trainer.fast.beta1));
  t.put("fast.beta2", format_double(c.trainer.fast.beta2));
  t.put("fast.p_train", format_double(c.trainer.fast.p_train));
  t.put("fast.p_eval", format_double(c.trainer.fast.p_eval));
  t.put("eval.gamma", format_double(c.eval.gamma));
  t.put("eval.beta1", format_double(c.eval.beta1));
  t.put("eval.beta2", format_double(c.eval.beta2));
  put_optimizer(t, "slow_optimizer", c.trainer.slow_optimizer);
  put_optimizer(t, "meta_optimizer", c.trainer.meta_optimizer);

  t.put("baseline.protocol", baselines::protocol_name(c.baseline.protocol));
  put_optimizer(t, "baseline_optimizer", c.baseline.optimizer);

  t.put("wcst.tasks", c.wcst.tasks);
  t.put("wcst.hidden", c.wcst.hidden);
  t.put("wcst.max_episodes_per_task", c.wcst.max_episodes_per_task);
  t.put("wcst.allow_same_task", c.wcst.env.allow_same_task ? "true" : "false");
  t.put("wcst.switch_window", c.wcst.env.switch_window);
  t.put("wcst.episode_length", c.wcst.env.episode_length);
  t.put("wcst.solve_streak", c.wcst.env.solve_streak);
  t.put("a2c.discount", format_double(c.wcst.a2c.discount));
  t.put("a2c.value_coef", format_double(c.wcst.a2c.value_coef));
  t.put("a2c.entropy_coef", format_double(c.wcst.a2c.entropy_coef));

  const auto& s = c.stream;
  t.put("data.path", s.dataset_path);
  t.put("data.synth_classes", s.synth_classes);
  t.put("data.synth_per_class", s.synth_per_class);
  t.put("data.feature_dim", s.feature_dim);
  t.put("data.seed", s.data_seed);
  t.put("data.split_train", format_double(s.split_fractions[0]));
  t.put("data.split_valid", format_double(s.split_fractions[1]));
  t.put("data.split_test", format_double(s.split_fractions[2]));
  t.put("stream.nb_classes", s.stream.nb_classes);
  t.put("stream.nb_perv", s.stream.nb_perv);
  t.put("stream.nb_kept", s.stream.nb_kept);
  t.put("stream.min_length", s.stream.min_length);
  t.put("stream.max_length", s.stream.max_length);
  t.put("stream.total_tasks", s.stream.total_tasks);
  t.put("stream.batch_size", s.stream.batch_size);
  t.put("stream.holdout_fraction", format_double(s.stream.holdout_fraction));
  t.put("stream.hidden", detail::join_sizes(s.hidden));
  t.put("stream.eval_lengths", detail::join_ranges(s.eval_lengths));
  t.put("stream.eval_tasks", s.eval_tasks);
  t.put("stream.validate_every", s.validate_every);
  t.put("stream.validation_tasks", s.validation_tasks);
  t.put("stream.validation_lengths", s.validation_lengths.label());
  t.put("pretrain.max_epochs", c.pretrain.max_epochs);
  t.put("pretrain.patience", c.pretrain.patience);
  t.put("pretrain.batch_size", c.pretrain.batch_size);

  t.put("check.suite", c.check_suite);
  t.put("check.seeds", c.check_seeds);
  return t;
}

inline void validate(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  if (c.jobs < 1) throw ConfigError("experiment.jobs must be positive");
  c.trainer.validate();
  if (!(c.eval.gamma >= 0.0 && c.eval.gamma < 1.0)) throw ConfigError("eval.gamma must lie in [0, 1)");
  if (c.wcst.tasks < 1) throw ConfigError("wcst.tasks must be positive");
  if (c.wcst.hidden < 1) throw ConfigError("wcst.hidden must be positive");
  if (c.wcst.env.episode_length < 1 || c.wcst.env.switch_window < 1 || c.wcst.env.solve_streak < 1)
    throw ConfigError("wcst episode length, switch window and solve streak must be positive");
  c.stream.stream.validate();
  if (c.stream.eval_lengths.empty()) throw ConfigError("stream.eval_lengths must not be empty");
  for (const auto& r : c.stream.eval_lengths)
    if (r.min < 1 || r.max < r.min) throw ConfigError("stream.eval_lengths: invalid range " + r.label());
  if (c.stream.validation_lengths.min < 1 || c.stream.validation_lengths.max < c.stream.validation_lengths.min)
    throw ConfigError("stream.validation_lengths: invalid range");
  if (c.stream.hidden.empty()) throw ConfigError("stream.hidden must list at least one layer width");
  double total = 0.0;
  for (double f : c.stream.split_fractions) {
    if (!(f >= 0.0)) throw ConfigError("data split fractions must be non-negative");
    total += f;
  }
  if (total > 1.0 + 1e-12) throw ConfigError("data split fractions sum above 1");
  if (!c.stream.dataset_path.empty() && !std::filesystem::exists(c.stream.dataset_path))
    throw ConfigError("data.path does not exist: " + c.stream.dataset_path);
  if (c.check_suite != "all" && c.check_suite != "gradients" && c.check_suite != "invariants")
    throw ConfigError("check.suite must be all, gradients or invariants");
  if (c.experiment == Experiment::wcst && c.model == ModelKind::baseline &&
      c.baseline.protocol != baselines::Protocol::online && c.baseline.protocol != baselines::Protocol::offline_reset)
    throw ConfigError("wcst baselines support the online and offline-reset protocols only");
}

// Applies the keys of `t` on top of `base`. Unknown keys are errors.
inline ExperimentConfig apply_ptree(ExperimentConfig c, const boost::property_tree::ptree& t) {
  using namespace detail;
  Reader r(t);
  r.read("experiment.kind", [&](auto&, auto& v) { c.experiment = parse_experiment(v); });
  r.read("experiment.preset", [&](auto&, auto& v) { c.preset = v; });
  r.read("experiment.model", [&](auto&, auto& v) { c.model = parse_model(v); });
  r.read("experiment.seeds", [&](auto& k, auto& v) {
    c.seeds.clear();
    if (v.empty()) return;
    for (const auto& s : split(v, ',')) c.seeds.push_back(to_unsigned<std::uint64_t>(k, s));
  });
  r.read("experiment.output_dir", [&](auto&, auto& v) { c.output_dir = v; });
  r.read("experiment.jobs", [&](auto& k, auto& v) { c.jobs = to_unsigned<std::size_t>(k, v); });

  r.read("trainer.k", [&](auto& k, auto& v) { c.trainer.k = to_int(k, v); });
  r.read("trainer.carry_mode", [&](auto&, auto& v) { c.trainer.fast.carry_mode = parse_carry_mode(v); });
  r.read("fast.gamma", [&](auto& k, auto& v) { c.trainer.fast.gamma = to_double(k, v); });
  r.read("fast.beta1", [&](auto& k, auto& v) { c.trainer.fast.beta1 = to_double(k, v); });
  r.read("fast.beta2", [&](auto& k, auto& v) { c.trainer.fast.beta2 = to_double(k, v); });
  r.read("fast.p_train", [&](auto& k, auto& v) { c.trainer.fast.p_train = to_double(k, v); });
  r.read("fast.p_eval", [&](auto& k, auto& v) { c.trainer.fast.p_eval = to_double(k, v); });
  r.read("eval.gamma", [&](auto& k, auto& v) { c.eval.gamma = to_double(k, v); });
  r.read("eval.beta1", [&](auto& k, auto& v) { c.eval.beta1 = to_double(k, v); });
  r.read("eval.beta2", [&](auto& k, auto& v) { c.eval.beta2 = to_double(k, v); });
  r.optimizer("slow_optimizer", c.trainer.slow_optimizer);
  r.optimizer("meta_optimizer", c.trainer.meta_optimizer);

  r.read("baseline.protocol", [&](auto&, auto& v) { c.baseline.protocol = baselines::parse_protocol(v); });
  r.optimizer("baseline_optimizer", c.baseline.optimizer);

  r.read("wcst.tasks", [&](auto& k, auto& v) { c.wcst.tasks = to_unsigned<std::size_t>(k, v); });
  r.read("wcst.hidden", [&](auto& k, auto& v) { c.wcst.hidden = to_unsigned<std::size_t>(k, v); });
  r.read("wcst.max_episodes_per_task",
         [&](auto& k, auto& v) { c.wcst.max_episodes_per_task = to_unsigned<std::size_t>(k, v); });
  r.read("wcst.allow_same_task", [&](auto& k, auto& v) { c.wcst.env.allow_same_task = to_bool(k, v); });
  r.read("wcst.switch_window", [&](auto& k, auto& v) { c.wcst.env.switch_window = to_int(k, v); });
  r.read("wcst.episode_length", [&](auto& k, auto& v) { c.wcst.env.episode_length = to_int(k, v); });
  r.read("wcst.solve_streak", [&](auto& k, auto& v) { c.wcst.env.solve_streak = to_int(k, v); });
  r.read("a2c.discount", [&](auto& k, auto& v) { c.wcst.a2c.discount = to_double(k, v); });
  r.read("a2c.value_coef", [&](auto& k, auto& v) { c.wcst.a2c.value_coef = to_double(k, v); });
  r.read("a2c.entropy_coef", [&](auto& k, auto& v) { c.wcst.a2c.entropy_coef = to_double(k, v); });

  auto& s = c.stream;
  r.read("data.path", [&](auto&, auto& v) { s.dataset_path = v; });
  r.read("data.synth_classes", [&](auto& k, auto& v) { s.synth_classes = to_unsigned<std::size_t>(k, v); });
  r.read("data.synth_per_class", [&](auto& k, auto& v) { s.synth_per_class = to_unsigned<std::size_t>(k, v); });
  r.read("data.feature_dim", [&](auto& k, auto& v) { s.feature_dim = to_unsigned<std::size_t>(k, v); });
  r.read("data.seed", [&](auto& k, auto& v) { s.data_seed = to_unsigned<std::uint64_t>(k, v); });
  r.read("data.split_train", [&](auto& k, auto& v) { s.split_fractions[0] = to_double(k, v); });
  r.read("data.split_valid", [&](auto& k, auto& v) { s.split_fractions[1] = to_double(k, v); });
  r.read("data.split_test", [&](auto& k, auto& v) { s.split_fractions[2] = to_double(k, v); });
  r.read("stream.nb_classes", [&](auto& k, auto& v) { s.stream.nb_classes = to_int(k, v); });
  r.read("stream.nb_perv", [&](auto& k, auto& v) { s.stream.nb_perv = to_int(k, v); });
  r.read("stream.nb_kept", [&](auto& k, auto& v) { s.stream.nb_kept = to_int(k, v); });
  r.read("stream.min_length", [&](auto& k, auto& v) { s.stream.min_length = to_unsigned<std::size_t>(k, v); });
  r.read("stream.max_length", [&](auto& k, auto& v) { s.stream.max_length = to_unsigned<std::size_t>(k, v); });
  r.read("stream.total_tasks", [&](auto& k, auto& v) { s.stream.total_tasks = to_unsigned<std::size_t>(k, v); });
  r.read("stream.batch_size", [&](auto& k, auto& v) { s.stream.batch_size = to_unsigned<std::size_t>(k, v); });
  r.read("stream.holdout_fraction", [&](auto& k, auto& v) { s.stream.holdout_fraction = to_double(k, v); });
  r.read("stream.hidden", [&](auto& k, auto& v) {
    s.hidden.clear();
    for (const auto& w : split(v, ',')) s.hidden.push_back(to_unsigned<std::size_t>(k, w));
  });
  r.read("stream.eval_lengths", [&](auto& k, auto& v) {
    s.eval_lengths.clear();
    for (const auto& w : split(v, ',')) s.eval_lengths.push_back(to_range(k, w));
  });
  r.read("stream.eval_tasks", [&](auto& k, auto& v) { s.eval_tasks = to_unsigned<std::size_t>(k, v); });
  r.read("stream.validate_every", [&](auto& k, auto& v) { s.validate_every = to_unsigned<std::size_t>(k, v); });
  r.read("stream.validation_tasks",
         [&](auto& k, auto& v) { s.validation_tasks = to_unsigned<std::size_t>(k, v); });
  r.read("stream.validation_lengths", [&](auto& k, auto& v) { s.validation_lengths = to_range(k, v); });
  r.read("pretrain.max_epochs", [&](auto& k, auto& v) { c.pretrain.max_epochs = to_unsigned<std::size_t>(k, v); });
  r.read("pretrain.patience", [&](auto& k, auto& v) { c.pretrain.patience = to_unsigned<std::size_t>(k, v); });
  r.read("pretrain.batch_size", [&](auto& k, auto& v) { c.pretrain.batch_size = to_unsigned<std::size_t>(k, v); });

  r.read("check.suite", [&](auto&, auto& v) { c.check_suite = v; });
  r.read("check.seeds", [&](auto& k, auto& v) { c.check_seeds = to_unsigned<std::size_t>(k, v); });
  r.reject_unknown();
  return c;
}

inline std::string serialize(const ExperimentConfig& c) {
  std::ostringstream out;
  boost::property_tree::write_ini(out, to_ptree(c));
  return out.str();
}

inline ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base = {}) {
  std::istringstream in(text);
  boost::property_tree::ptree t;
  try {
    boost::property_tree::read_ini(in, t);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  return apply_ptree(base, t);
}

inline ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str(), base);
}

// "section.key=value" as given on the command line.
inline ExperimentConfig apply_override(const ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  if (key.find('.') == std::string::npos) throw ConfigError("override key '" + key + "' needs a section");
  boost::property_tree::ptree t;
  t.put(boost::property_tree::ptree::path_type(key, '.'), assignment.substr(eq + 1));
  return apply_ptree(c, t);
}

}  // namespace smnet::harness
