// Acceptance suite: `smnet-acceptance N` runs criterion N and prints one
// "criterion N: PASS|FAIL ..." line. Exit code 0 on pass, 3 on failure.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "smnet/checkpoint.hpp"
#include "smnet/harness/presets.hpp"
#include "smnet/harness/runner.hpp"

using namespace smnet;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("smnet_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Tensor noise(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = uniform(rng, -1.0, 1.0);
  return t;
}

const harness::SummaryRow* find_row(const std::vector<harness::SummaryRow>& rows, const std::string& metric,
                                    const std::string& bucket) {
  for (const auto& r : rows)
    if (r.metric == metric && r.bucket == bucket) return &r;
  return nullptr;
}

Verdict gradients() {
  const auto start = Clock::now();
  const harness::GradCheckResult g = harness::check_gradients(100);
  const double secs = seconds_since(start);
  return {g.passed() && secs < 60.0, std::to_string(g.seeds) + " seeds, " + std::to_string(g.coordinates) +
                                         " coordinates, max rel error " + fmt(g.max_rel_error, 3) + " at " + g.worst +
                                         ", " + fmt(secs, 3) + "s"};
}

Verdict accumulation() {
  const auto r = harness::check_accumulation(10000, 0);
  return {r.passed, r.detail};
}

Verdict sparsity() {
  Rng rng = make_rng(0, "acceptance-sparsity");
  std::string detail;
  bool pass = true;
  const std::vector<std::size_t> shape{320, 320};
  for (double p : {0.05, 0.3, 0.5}) {
    std::size_t n = 0, ones = 0;
    while (n < 200000) {
      const SparseMask m = SparseMask::sample(shape, p, rng);
      n += m.size();
      ones += m.nnz();
    }
    const double mean = p * static_cast<double>(n);
    const double sigma = std::sqrt(mean * (1.0 - p));
    const double z = (static_cast<double>(ones) - mean) / sigma;
    pass = pass && std::abs(z) <= 3.0;
    detail += "p=" + fmt(p) + " rate " + fmt(static_cast<double>(ones) / static_cast<double>(n), 5) + " (z " +
              fmt(z, 2) + "); ";
  }
  MetaLearner meta("meta", rng);
  const Tensor avg = noise({64, 64}, rng), grad = noise({64, 64}, rng);
  auto evaluations = [&](double p) {
    std::size_t e = 0;
    for (int i = 0; i < 20; ++i)
      e += generate_sparse_fast_weights(avg, grad, SparseMask::sample({64, 64}, p, rng), 0.5, meta).evaluations;
    return static_cast<double>(e);
  };
  for (auto [lo, hi] : {std::pair{0.05, 0.1}, std::pair{0.15, 0.3}, std::pair{0.25, 0.5}}) {
    const double ratio = evaluations(hi) / evaluations(lo);
    pass = pass && ratio >= 1.5;
    detail += "evals x" + fmt(ratio, 3) + " for p " + fmt(lo) + "->" + fmt(hi) + "; ";
  }
  return {pass, detail};
}

Verdict coordinatewise() {
  const auto r = harness::check_coordinatewise(200, 0);
  return {r.passed, r.detail};
}

Verdict reduction() {
  const std::vector<LayerSpec> fast{{8, 16, Activation::relu, true}, {16, 4, Activation::identity, true}};
  std::vector<LayerSpec> plain = fast;
  for (auto& s : plain) s.fast = false;
  FastWeightModel a(fast, Topology::sequential, 11);
  FastWeightModel b(plain, Topology::sequential, 11);
  TrainerConfig cfg;
  cfg.k = 3;
  cfg.fast.p_train = 0.0;
  cfg.fast.p_eval = 0.0;
  cfg.slow_optimizer.learning_rate = 1e-2;
  cfg.seed = 11;
  Trainer ta(a, cfg), tb(b, cfg);
  Rng rng = make_rng(11, "acceptance-reduction");
  for (std::size_t t = 1; t <= 1000; ++t) {
    const Tensor x = noise({5, 8}, rng);
    std::vector<int> y(5);
    for (int& v : y) v = static_cast<int>(uniform_int(rng, 0, 3));
    LossFn fn = [&](Tape& tape, FastWeightModel& m) {
      return StepLoss{tape.cross_entropy(m.forward(tape, x)[0], y), 0, 5};
    };
    const StepRecord ra = ta.online_step(fn), rb = tb.online_step(fn);
    if (std::bit_cast<std::uint64_t>(ra.loss) != std::bit_cast<std::uint64_t>(rb.loss))
      return {false, "loss differs at step " + std::to_string(t)};
    for (std::size_t i = 0; i < a.layers().size(); ++i)
      if (!bitwise_equal(a.layers()[i].w.value, b.layers()[i].w.value) ||
          !bitwise_equal(a.layers()[i].b.value, b.layers()[i].b.value) || !a.layers()[i].m.all_zero())
        return {false, "weights differ at step " + std::to_string(t) + ", layer " + std::to_string(i)};
  }
  return {true, "1000 steps bitwise identical, " + std::to_string(ta.gradient_updates()) + " gradient updates"};
}

Verdict schedule() {
  const auto s = harness::check_schedule(10000, 3, 0);
  if (!s.passed) return {false, s.detail};

  // Fast-weight-only pass over a whole evaluation stream.
  const auto data = stream::synth_dataset(30, 40, 8, 2);
  const FastWeightModel model(stream::classifier_layers(8, {16}, 5, true), Topology::sequential, 2);
  FastWeightModel m = model;
  TrainerConfig cfg;
  cfg.eval_fast_only = true;
  Trainer tr(m, cfg);
  stream::StreamConfig scfg;
  scfg.total_tasks = 50;
  stream::StreamGenerator gen(data, scfg);
  const auto run = stream::run_stream(tr, gen);
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    if (!bitwise_equal(m.layers()[i].w.value, model.layers()[i].w.value) ||
        !bitwise_equal(m.layers()[i].b.value, model.layers()[i].b.value))
      return {false, "slow weights moved in layer " + std::to_string(i)};
    const auto pa = m.metas()[i]->parameters();
    const auto pb = model.metas()[i]->parameters();
    for (std::size_t j = 0; j < pa.size(); ++j)
      if (!bitwise_equal(pa[j]->value, pb[j]->value)) return {false, pa[j]->name + " moved"};
  }
  if (m.layers()[0].m.all_zero()) return {false, "fast-weights never written"};
  return {true, s.detail + " in 10000 steps; fast-only stream of " + std::to_string(run.rounds) +
                    " rounds left slow and meta weights bitwise unchanged"};
}

Verdict wcst_oracle() {
  wcst::Environment env(0);
  Rng rng = make_rng(0, "acceptance-wcst");
  env.next_task();
  std::size_t cards = 0, switches = 0, persev = 0;
  while (cards < 10000) {
    if (uniform01(rng) < 0.01) {
      const int old = *env.current_rule();
      env.next_task();
      ++switches;
      if (*env.current_rule() == old) return {false, "rule repeated at switch " + std::to_string(switches)};
      if (env.old_rule() != old) return {false, "old rule not recorded"};
    }
    const wcst::CardDraw d = env.next_card();
    ++cards;
    const auto& c = d.card.code;
    if (c[0] == c[1] || c[0] == c[2] || c[1] == c[2]) return {false, "card codes not distinct"};
    if (d.target != c[static_cast<std::size_t>(*env.current_rule())]) return {false, "target mismatch"};
    const auto e = d.card.encoding();
    // Brute-force decode against the code table.
    for (std::size_t a = 0; a < 3; ++a) {
      int found = -1;
      for (int r = 0; r < 4; ++r) {
        bool eq = true;
        for (std::size_t j = 0; j < 4; ++j) eq = eq && e[a * 4 + j] == wcst::kCodeTable[static_cast<std::size_t>(r)][j];
        if (eq) found = r;
      }
      if (found != c[a]) return {false, "encoding does not decode"};
    }
    if (!(wcst::Card::decode(e) == d.card)) return {false, "decode mismatch"};
    const int action = static_cast<int>(uniform_int(rng, 0, 3));
    const wcst::StepOutcome o = env.step(action);
    const bool want = env.old_rule() && action == c[static_cast<std::size_t>(*env.old_rule())] && action != d.target;
    if (o.perseveration != want) return {false, "perseveration flag mismatch"};
    persev += o.perseveration;
  }
  return {true, std::to_string(cards) + " cards, " + std::to_string(switches) + " switches, " +
                    std::to_string(persev) + " perseverations"};
}

std::string boundary_violation(const stream::TaskSpec& prev, const stream::TaskSpec& cur,
                               const stream::StreamConfig& cfg) {
  std::set<std::uint32_t> labels, prev_labels;
  for (const auto& [id, l] : cur.task_map) labels.insert(l);
  for (const auto& [id, l] : prev.task_map) prev_labels.insert(l);
  if (cur.task_map.size() != static_cast<std::size_t>(cfg.nb_classes) || labels.size() != cur.task_map.size())
    return "task map";
  std::size_t kept = 0, perv = 0, novel = 0;
  for (const auto& [id, l] : cur.task_map) {
    if (cur.kept_ids.contains(id)) {
      if (prev.task_map.at(id) != l) return "kept label changed";
      ++kept;
    } else if (auto it = cur.new_old_map.find(id); it != cur.new_old_map.end()) {
      if (it->second == id || prev.task_map.at(it->second) != l || cur.kept_ids.contains(it->second))
        return "perseveration class";
      ++perv;
    } else {
      if (prev_labels.contains(l)) return "novel class reuses a label";
      ++novel;
    }
  }
  if (kept != static_cast<std::size_t>(cfg.nb_kept) || perv != static_cast<std::size_t>(cfg.nb_perv)) return "counts";
  return {};
}

Verdict stream_oracle() {
  const auto data = stream::split_classes(stream::synth_dataset(100, 20, 4, 0), std::array<double, 3>{0.4, 0.3, 0.3}, 0)[0];
  stream::StreamConfig cfg;
  cfg.seed = 3;
  auto generate = [&] {
    stream::StreamGenerator gen(data, cfg);
    std::vector<stream::TaskSpec> tasks;
    std::vector<std::uint32_t> first_batch_labels;
    for (std::size_t i = 0; i < cfg.total_tasks; ++i) {
      tasks.push_back(gen.next_task());
      const auto b = gen.next_batch();
      first_batch_labels.insert(first_batch_labels.end(), b.global_labels.begin(), b.global_labels.end());
    }
    return std::pair{tasks, first_batch_labels};
  };
  const auto [tasks, batches] = generate();
  std::size_t ok = 0;
  for (std::size_t i = 1; i < tasks.size(); ++i) {
    const std::string v = boundary_violation(tasks[i - 1], tasks[i], cfg);
    if (!v.empty()) return {false, "task " + std::to_string(i + 1) + ": " + v};
    ++ok;
  }
  const auto again = generate();
  if (again.first != tasks || again.second != batches) return {false, "same seed produced a different stream"};
  cfg.seed = 4;
  if (generate().first == tasks) return {false, "different seeds produced the same stream"};
  return {true, std::to_string(ok) + "/" + std::to_string(tasks.size() - 1) + " boundaries valid, deterministic"};
}

Verdict wcst_trend() {
  harness::ExperimentConfig c = harness::preset("wcst");
  c.output_dir = scratch("wcst").string();
  const auto start = Clock::now();
  const auto out = harness::run(c);
  const double secs = seconds_since(start);
  const auto* u1 = find_row(out.summary, "updates_to_solve", "tasks 1-10");
  const auto* u3 = find_row(out.summary, "updates_to_solve", "tasks 31-60");
  const auto* p1 = find_row(out.summary, "perseveration_errors", "tasks 1-10");
  const auto* p3 = find_row(out.summary, "perseveration_errors", "tasks 31-60");
  if (!u1 || !u3 || !p1 || !p3) return {false, "missing summary rows"};
  const double ratio = u3->mean / u1->mean;
  fs::remove_all(out.dir);
  return {ratio <= 0.7 && p3->mean < p1->mean,
          std::to_string(u1->seeds) + " seeds; updates-to-solve " + fmt(u1->mean) + " -> " + fmt(u3->mean) +
              " (ratio " + fmt(ratio, 3) + "); perseveration errors " + fmt(p1->mean) + " -> " + fmt(p3->mean) +
              "; " + fmt(secs, 3) + "s"};
}

Verdict stream_trend() {
  harness::ExperimentConfig c = harness::preset("online-stream");
  c.stream.eval_lengths = {{1, 15}, {20, 35}, {60, 75}};
  c.output_dir = scratch("stream-smn").string();
  const auto start = Clock::now();
  const auto smn = harness::run(c);
  c.model = harness::ModelKind::baseline;
  c.baseline.protocol = baselines::Protocol::online;
  c.output_dir = scratch("stream-online").string();
  const auto base = harness::run(c);
  const double secs = seconds_since(start);
  const auto* a_smn = find_row(smn.summary, "eval_1-15/accuracy", "run");
  const auto* a_base = find_row(base.summary, "eval_1-15/accuracy", "run");
  const auto* p20 = find_row(smn.summary, "eval_20-35/perseveration_rate", "run");
  const auto* p60 = find_row(smn.summary, "eval_60-75/perseveration_rate", "run");
  if (!a_smn || !a_base || !p20 || !p60) return {false, "missing summary rows"};
  fs::remove_all(smn.dir);
  fs::remove_all(base.dir);
  const double gap = a_smn->mean - a_base->mean;
  return {gap >= 0.02 && p60->mean <= p20->mean,
          std::to_string(a_smn->seeds) + " seeds; 1-15 accuracy " + fmt(a_smn->mean) + " vs online " +
              fmt(a_base->mean) + " (+" + fmt(gap, 3) + "); perseveration 20-35 " + fmt(p20->mean) + " -> 60-75 " +
              fmt(p60->mean) + "; " + fmt(secs, 3) + "s"};
}

Verdict bounded_memory() {
  const int k = 3;
  FastWeightModel m({{8, 16, Activation::relu, true}, {16, 4, Activation::identity, true}}, Topology::sequential, 5);
  TrainerConfig cfg;
  cfg.k = k;
  cfg.seed = 5;
  Trainer tr(m, cfg);
  Rng rng = make_rng(5, "acceptance-memory");
  const Tensor x = noise({4, 8}, rng);
  const std::vector<int> y{0, 1, 2, 3};
  LossFn fn = [&](Tape& tape, FastWeightModel& mm) {
    return StepLoss{tape.cross_entropy(mm.forward(tape, x)[0], y), 0, 4};
  };
  std::size_t first_window_peak = 0, max_retained = 0;
  const std::size_t steps = 100000;
  for (std::size_t t = 1; t <= steps; ++t) {
    const StepRecord r = tr.online_step(fn);
    if (t % static_cast<std::size_t>(k) == 0 && r.tape_nodes != 0)
      return {false, "history not released at t=" + std::to_string(t)};
    max_retained = std::max(max_retained, r.tape_nodes);
    if (t == static_cast<std::size_t>(k)) first_window_peak = tr.tape().peak_node_count();
  }
  const std::size_t peak = tr.tape().peak_node_count();
  return {peak <= first_window_peak, std::to_string(steps) + " steps, peak " + std::to_string(peak) +
                                          " nodes, single-window peak " + std::to_string(first_window_peak) +
                                          ", max retained between steps " + std::to_string(max_retained)};
}

Verdict round_trips() {
  // Checkpoint of a trained model with non-trivial fast state.
  FastWeightModel m({{6, 9, Activation::relu, true}, {9, 3, Activation::identity, true}}, Topology::sequential, 8);
  TrainerConfig cfg;
  cfg.seed = 8;
  Trainer tr(m, cfg);
  Rng rng = make_rng(8, "acceptance-roundtrip");
  const Tensor x = noise({4, 6}, rng);
  LossFn fn = [&](Tape& tape, FastWeightModel& mm) {
    return StepLoss{tape.cross_entropy(mm.forward(tape, x)[0], {0, 1, 2, 0}), 0, 4};
  };
  for (int i = 0; i < 100; ++i) tr.online_step(fn);
  tr.end_window();
  const fs::path dir = scratch("roundtrip");
  fs::create_directories(dir);
  save_checkpoint((dir / "m.smnet").string(), m, cfg);
  const Checkpoint ck = load_checkpoint((dir / "m.smnet").string());
  if (!same_state(ck.model, m)) return {false, "checkpoint changed values"};

  const auto ds = stream::synth_dataset(12, 9, 7, 8);
  stream::save_dataset((dir / "d.smds").string(), ds);
  if (!(stream::load_dataset((dir / "d.smds").string()) == ds)) return {false, "dataset changed values"};

  // Same-seed reruns: a short WCST run and a short stream run.
  std::vector<harness::ExperimentConfig> configs;
  harness::ExperimentConfig w = harness::preset("wcst");
  w.seeds = {0, 1};
  w.wcst.tasks = 3;
  w.wcst.hidden = 16;
  w.wcst.max_episodes_per_task = 20;
  configs.push_back(w);
  harness::ExperimentConfig s = harness::preset("online-stream");
  s.seeds = {0};
  s.stream.synth_classes = 40;
  s.stream.synth_per_class = 30;
  s.stream.feature_dim = 8;
  s.stream.hidden = {16};
  s.stream.stream.total_tasks = 10;
  s.stream.eval_tasks = 5;
  s.stream.eval_lengths = {{1, 5}};
  s.stream.validate_every = 5;
  s.stream.validation_tasks = 3;
  configs.push_back(s);
  std::size_t files = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto c = configs[i];
    c.output_dir = (dir / ("a" + std::to_string(i))).string();
    harness::run(c);
    c.output_dir = (dir / ("b" + std::to_string(i))).string();
    harness::run(c);
    for (std::uint64_t seed : c.seeds) {
      const std::string a = slurp(harness::metric_path(dir / ("a" + std::to_string(i)), seed));
      const std::string b = slurp(harness::metric_path(dir / ("b" + std::to_string(i)), seed));
      if (a.empty() || a != b) return {false, "rerun metric file differs (config " + std::to_string(i) + ")"};
      ++files;
    }
  }
  fs::remove_all(dir);
  return {true, "checkpoint and dataset bit-exact; " + std::to_string(files) + " metric files identical on rerun"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Verdict()>> criteria{
      {1, gradients},       {2, accumulation}, {3, sparsity},      {4, coordinatewise},
      {5, reduction},       {6, schedule},     {7, wcst_oracle},   {8, stream_oracle},
      {9, wcst_trend},      {10, stream_trend}, {11, bounded_memory}, {12, round_trips},
  };
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty())
    for (const auto& [n, _] : criteria) which.push_back(n);
  bool all = true;
  for (int n : which) {
    const auto it = criteria.find(n);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", n);
      return 1;
    }
    Verdict v;
    try {
      v = it->second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s %s\n", n, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 3;
}
