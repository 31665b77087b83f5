// Command-line harness: run experiments, sweeps, the validation suite,
// environment generation, and kernel benchmarks.
//
// Exit codes: 0 success, 1 validation failure, 2 config error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <omp.h>

#include "polsbe/harness.hpp"
#include "polsbe/reference.hpp"
#include "polsbe/validation.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::filesystem::path resolve_out_dir(const std::string& flag_out,
                                      const std::string& config_out) {
  if (!flag_out.empty()) return flag_out;
  if (!config_out.empty()) return config_out;
  if (const char* env = std::getenv("POLSBE_OUT_DIR")) return env;
  return ".";
}

int cmd_run(const std::string& config_path, const std::string& out_flag, long seed_override,
            int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
  polsbe::ExperimentConfig config;
  try {
    config = polsbe::parse_experiment_config(read_file(config_path));
    if (seed_override >= 0) config.seeds = {static_cast<std::uint64_t>(seed_override)};
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  const auto out_dir = resolve_out_dir(out_flag, config.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = polsbe::run_experiment(config, out_dir);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "wrote results to " << out_dir.string() << " (" << secs << " s)\n";
  return rc;
}

int cmd_sweep(const std::string& config_path, const std::string& out_flag, int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
  polsbe::ExperimentConfig base;
  polsbe::SweepSpec spec;
  try {
    spec = polsbe::parse_sweep_spec(read_file(config_path), base);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  const auto out_dir = resolve_out_dir(out_flag, base.out_dir);
  const int rc = polsbe::run_sweep(base, spec, out_dir);
  std::cout << "wrote " << (out_dir / "sweep.csv").string() << "\n";
  return rc;
}

int cmd_validate(std::uint64_t seed, const std::string& out_flag, bool quick, int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
  const auto results = polsbe::run_validation_suite(seed, quick);
  int failures = 0;
  std::printf("%-36s %-11s %14s %14s  %s\n", "check", "kind", "observed", "bound", "result");
  for (const auto& r : results) {
    std::printf("%-36s %-11s %14.6g %14.6g  %s", r.name.c_str(),
                r.kind == polsbe::CheckResult::Kind::exact ? "exact" : "statistical",
                r.observed, r.bound, r.pass ? "pass" : "FAIL");
    if (r.ci_halfwidth) std::printf("  (ci=%.3g)", *r.ci_halfwidth);
    if (!r.note.empty()) std::printf("  [%s]", r.note.c_str());
    std::printf("\n");
    if (!r.pass) ++failures;
  }
  if (!out_flag.empty()) {
    std::filesystem::create_directories(out_flag);
    std::ofstream out(std::filesystem::path(out_flag) / "validation.json");
    out << polsbe::check_results_to_json(results) << "\n";
  }
  std::printf("%d/%zu checks passed\n", static_cast<int>(results.size()) - failures,
              results.size());
  return failures == 0 ? 0 : 1;
}

int cmd_gen_env(const std::string& config_path, const std::string& out_path) {
  try {
    const auto config = polsbe::parse_experiment_config(read_file(config_path));
    const auto model = polsbe::build_environment(config);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write " + out_path);
    out << polsbe::serialize_model(model) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

template <typename F>
double time_secs(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_bench(int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
  using namespace polsbe;
  std::printf("threads: %d\n", omp_get_max_threads());

  {  // MGR: parallel kernel vs serial reference
    const int d = 24;
    MgrParams p;
    p.outer_count = 512;
    p.series_depth = 64;
    p.gamma = 0.1;
    RngStream rng(7);
    std::vector<Eigen::VectorXd> samples(static_cast<long>(p.outer_count) * p.series_depth);
    for (auto& phi : samples) {
      phi.resize(d);
      for (int c = 0; c < d; ++c) phi(c) = 2.0 * rng.next_double() - 1.0;
      if (phi.norm() > 1.0) phi /= phi.norm() * 1.0000001;
    }
    Eigen::MatrixXd a, b;
    const double t_par = time_secs([&] { a = mgr(samples, p).sigma_plus; });
    const double t_ser = time_secs([&] { b = ref::mgr(samples, p).sigma_plus; });
    std::printf("mgr     d=%d M=%d N=%d   omp %.4fs   serial %.4fs   max|diff| %.3g\n", d,
                p.outer_count, p.series_depth, t_par, t_ser,
                (a - b).cwiseAbs().maxCoeff());
  }

  {  // OLSPE: parallel kernel vs serial reference on a large tabular model
    const int S = 192, A = 4, H = 6;
    RngStream rng(11);
    auto tables = random_tabular_dynamics(S, A, H, rng);
    const LinearMdpModel model = tabular_embed(tables, S, A);
    const DiscretePolicy policy = DiscretePolicy::uniform(H, S, A);
    TransitionDataset dataset(H);
    const std::vector<Eigen::VectorXd> zero(H, Eigen::VectorXd::Zero(model.feature_dim));
    for (int i = 0; i < 64; ++i) {
      RngStream rs = rng.substream(i);
      dataset.add_trajectory(rollout(model, policy, zero, rs), i);
    }
    std::vector<Eigen::MatrixXd> bonus(H, Eigen::MatrixXd::Constant(S, A, 0.1));
    BonusValueFn f1, f2;
    const double t_par = time_secs(
        [&] { f1 = olspe(model, dataset, bonus, 0.5, 1.0, 0.2, policy).first; });
    const double t_ser = time_secs(
        [&] { f2 = ref::olspe(model, dataset, bonus, 0.5, 1.0, 0.2, policy).first; });
    double diff = 0.0;
    for (int h = 0; h < H; ++h)
      diff = std::max(diff, (f1.b_to_go[h] - f2.b_to_go[h]).cwiseAbs().maxCoeff());
    std::printf("olspe   S=%d A=%d H=%d     omp %.4fs   serial %.4fs   max|diff| %.3g\n", S,
                A, H, t_par, t_ser, diff);
  }

  {  // value_dp: parallel kernel vs serial reference
    const int S = 256, A = 4, H = 8;
    RngStream rng(13);
    GeneratorSpec gs;
    gs.num_states = S;
    gs.num_actions = A;
    gs.horizon = H;
    gs.feature_dim = 32;
    const LinearMdpModel model = random_linmdp(gs, rng);
    const DiscretePolicy policy = DiscretePolicy::uniform(H, S, A);
    std::vector<Eigen::MatrixXd> losses(H, Eigen::MatrixXd::Constant(S, A, 0.25));
    ValueTables v1, v2;
    const double t_par = time_secs([&] { v1 = value_dp(model, policy, losses); });
    const double t_ser = time_secs([&] { v2 = ref::value_dp(model, policy, losses); });
    std::printf("value_dp S=%d A=%d H=%d    omp %.4fs   serial %.4fs   max|diff| %.3g\n", S,
                A, H, t_par, t_ser, (v1.v - v2.v).cwiseAbs().maxCoeff());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PO-LSBE: policy optimization with least-squares bonus exploration"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  long seed_override = -1;
  int jobs = 0;
  std::uint64_t validate_seed = 20240901;
  bool quick = false;

  auto* run = app.add_subcommand("run", "run the configured agent and baselines");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--seed", seed_override, "override the config's seed list");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--jobs", jobs, "worker threads");

  auto* sweep = app.add_subcommand("sweep", "grid sweep with replications");
  sweep->add_option("--config", config_path, "sweep spec (JSON)")->required();
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--jobs", jobs, "worker threads");

  auto* validate = app.add_subcommand("validate", "run the lemma/property suite");
  validate->add_option("--seed", validate_seed, "suite seed");
  validate->add_option("--out", out_dir, "directory for the JSON report");
  validate->add_option("--jobs", jobs, "worker threads");
  validate->add_flag("--quick", quick, "reduced replicate counts");

  auto* gen = app.add_subcommand("gen-env", "emit a serialized environment");
  gen->add_option("--config", config_path, "experiment config (JSON)")->required();
  std::string gen_out = "env.json";
  gen->add_option("--out", gen_out, "output file");

  auto* bench = app.add_subcommand("bench", "time MGR/OLSPE kernels vs serial reference");
  bench->add_option("--jobs", jobs, "worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, seed_override, jobs);
    if (sweep->parsed()) return cmd_sweep(config_path, out_dir, jobs);
    if (validate->parsed()) return cmd_validate(validate_seed, out_dir, quick, jobs);
    if (gen->parsed()) return cmd_gen_env(config_path, gen_out);
    if (bench->parsed()) return cmd_bench(jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
