// smnet: experiment runner for sparse meta networks.
//
//   smnet run wcst --seeds 10
//   smnet run stream --model baseline --protocol online
//   smnet run check gradients
//   smnet export runs/wcst
//   smnet gen-data --out data.smds
//   smnet inspect runs/stream/model-s0.smnet

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "smnet/checkpoint.hpp"
#include "smnet/harness/config.hpp"
#include "smnet/harness/gradcheck.hpp"
#include "smnet/harness/invariants.hpp"
#include "smnet/harness/presets.hpp"
#include "smnet/harness/report.hpp"
#include "smnet/harness/runner.hpp"
#include "smnet/task_stream.hpp"

using namespace smnet;
using namespace smnet::harness;

namespace {

struct RunFlags {
  std::string experiment;
  std::string suite;
  std::string config_path;
  std::string preset;
  std::string model;
  std::string protocol;
  std::size_t seed_count = 0;
  std::string seed_list;
  std::string output;
  std::size_t jobs = 0;
  std::vector<std::string> overrides;
};

ExperimentConfig resolve(const RunFlags& f) {
  const Experiment e = parse_experiment(f.experiment);
  ExperimentConfig c;
  if (!f.preset.empty()) c = preset(f.preset);
  else if (e == Experiment::wcst) c = preset("wcst");
  else if (e != Experiment::check) c = preset("online-stream");
  if (!f.config_path.empty()) c = load_config(f.config_path, c);
  c.experiment = e;
  if (!f.suite.empty()) c.check_suite = f.suite;
  if (!f.model.empty()) c.model = parse_model(f.model);
  if (!f.protocol.empty()) {
    c.baseline.protocol = baselines::parse_protocol(f.protocol);
    c.model = ModelKind::baseline;
  }
  if (f.seed_count > 0) {
    c.seeds.clear();
    for (std::size_t i = 0; i < f.seed_count; ++i) c.seeds.push_back(i);
  }
  if (!f.seed_list.empty()) c = apply_override(c, "experiment.seeds=" + f.seed_list);
  if (!f.output.empty()) c.output_dir = f.output;
  if (f.jobs > 0) c.jobs = f.jobs;
  for (const auto& o : f.overrides) c = apply_override(c, o);
  return c;
}

int cmd_run(const RunFlags& f) {
  const ExperimentConfig c = resolve(f);
  validate(c);
  std::cerr << "output: " << resolve_output_dir(c).string() << '\n';
  const RunOutcome out = run(c, &std::cerr);
  print_summary(std::cout, out.summary);
  if (!out.checks_passed) {
    std::cerr << "check suite failed\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_check(const std::string& suite, std::size_t seeds) {
  bool ok = true;
  if (suite == "all" || suite == "gradients") {
    const GradCheckResult g = check_gradients(seeds);
    std::printf("gradients   %s  %zu seeds, %zu coordinates, max rel error %.3g at %s (%zu redraws)\n",
                g.passed() ? "PASS" : "FAIL", g.seeds, g.coordinates, g.max_rel_error, g.worst.c_str(), g.redraws);
    ok = ok && g.passed();
  }
  if (suite == "all" || suite == "invariants") {
    for (const auto& r : check_invariants()) {
      std::printf("%-18s %s  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.detail.c_str());
      ok = ok && r.passed;
    }
  }
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_inspect(const std::string& path, bool values) {
  const Checkpoint ck = load_checkpoint(path);
  const auto& m = ck.model;
  std::printf("topology %s, seed %llu, %zu layers\n",
              m.topology() == Topology::actor_critic ? "actor_critic" : "sequential",
              static_cast<unsigned long long>(m.seed()), m.specs().size());
  for (std::size_t i = 0; i < m.specs().size(); ++i) {
    const auto& s = m.specs()[i];
    std::printf("  layer %zu: %zu -> %zu %s%s\n", i, s.in, s.out, activation_name(s.activation),
                s.fast ? " fast" : "");
  }
  const auto& t = ck.trainer;
  std::printf("trainer: k=%d gamma=%g beta1=%g beta2=%g p_train=%g p_eval=%g %s\n", t.k, t.fast.gamma,
              t.fast.beta1, t.fast.beta2, t.fast.p_train, t.fast.p_eval, carry_mode_name(t.fast.carry_mode));
  FastWeightModel copy = m;
  std::printf("%-14s %-10s %12s %12s %12s %8s\n", "tensor", "shape", "min", "max", "l2", "nonzero");
  for (const auto& [name, tensor] : checkpoint_tensors(copy)) {
    double lo = 0.0, hi = 0.0, ss = 0.0;
    std::size_t nz = 0;
    for (std::size_t i = 0; i < tensor->size(); ++i) {
      const double v = (*tensor)[i];
      lo = i ? std::min(lo, v) : v;
      hi = i ? std::max(hi, v) : v;
      ss += v * v;
      nz += v != 0.0;
    }
    std::printf("%-14s %-10s %12.5g %12.5g %12.5g %8zu\n", name.c_str(), shape_string(tensor->shape()).c_str(), lo,
                hi, std::sqrt(ss), nz);
    if (values) {
      for (std::size_t i = 0; i < tensor->size(); ++i) std::printf("%s%.17g", i ? " " : "  ", (*tensor)[i]);
      std::printf("\n");
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Large short-lived tensors: keep freed memory in the heap instead of
  // returning it to the kernel on every step.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  CLI::App app{"Sparse meta network experiments"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run_cmd = app.add_subcommand("run", "run an experiment for every seed and print a summary");
  run_cmd->add_option("experiment", rf.experiment, "wcst, stream, pretrain or check")->required();
  run_cmd->add_option("suite", rf.suite, "check suite: gradients, invariants or all");
  run_cmd->add_option("--config", rf.config_path, "INI config file applied on top of the preset");
  run_cmd->add_option("--preset", rf.preset, "wcst, online-stream, enwik8 or wt103");
  run_cmd->add_option("--model", rf.model, "sparse-metanet or baseline");
  run_cmd->add_option("--protocol", rf.protocol, "baseline protocol (implies --model baseline)");
  run_cmd->add_option("--seeds", rf.seed_count, "run seeds 0..N-1");
  run_cmd->add_option("--seed-list", rf.seed_list, "comma-separated seeds");
  run_cmd->add_option("--output", rf.output, "output directory (relative to $SMNET_OUTPUT_ROOT or ./runs)");
  run_cmd->add_option("--jobs", rf.jobs, "seeds run in parallel");
  run_cmd->add_option("--set", rf.overrides, "override a config key: section.key=value");

  std::string export_dir, export_format = "all";
  auto* export_cmd = app.add_subcommand("export", "write export.csv and summary.json for a run directory");
  export_cmd->add_option("run_dir", export_dir)->required();
  export_cmd->add_option("--format", export_format, "csv, json or all");

  std::string check_suite = "all";
  std::size_t check_seeds = 100;
  auto* check_cmd = app.add_subcommand("check", "gradient and invariant suites");
  check_cmd->add_option("suite", check_suite, "gradients, invariants or all");
  check_cmd->add_option("--seeds", check_seeds, "random problems for the gradient suite");

  std::string data_out;
  std::size_t classes = 100, per_class = 500, dim = 32;
  std::uint64_t data_seed = 0;
  double sigma = 0.3;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic labelled dataset");
  gen_cmd->add_option("--out", data_out, "output file")->required();
  gen_cmd->add_option("--classes", classes);
  gen_cmd->add_option("--per-class", per_class);
  gen_cmd->add_option("--dim", dim);
  gen_cmd->add_option("--seed", data_seed);
  gen_cmd->add_option("--sigma", sigma, "within-class noise");

  std::string ck_path;
  bool ck_values = false;
  auto* inspect_cmd = app.add_subcommand("inspect", "describe a checkpoint");
  inspect_cmd->add_option("checkpoint", ck_path)->required();
  inspect_cmd->add_flag("--values", ck_values, "print every value");

  std::string show_preset;
  auto* config_cmd = app.add_subcommand("config", "print a preset as an INI file");
  config_cmd->add_option("preset", show_preset, "wcst, online-stream, enwik8 or wt103")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(rf);
    if (*export_cmd) {
      const ExportResult r = export_run(export_dir, export_format);
      if (!r.csv.empty()) std::cout << r.csv.string() << " (" << r.rows << " rows)\n";
      if (!r.summary.empty()) std::cout << r.summary.string() << '\n';
      return kExitOk;
    }
    if (*check_cmd) {
      if (check_suite != "all" && check_suite != "gradients" && check_suite != "invariants")
        throw ConfigError("check suite must be gradients, invariants or all");
      return cmd_check(check_suite, check_seeds);
    }
    if (*gen_cmd) {
      if (classes == 0 || per_class == 0 || dim == 0) throw ConfigError("gen-data sizes must be positive");
      stream::save_dataset(data_out, stream::synth_dataset(classes, per_class, dim, data_seed, sigma));
      std::cout << data_out << '\n';
      return kExitOk;
    }
    if (*inspect_cmd) return cmd_inspect(ck_path, ck_values);
    if (*config_cmd) {
      std::cout << serialize(preset(show_preset));
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
