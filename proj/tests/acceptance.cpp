// Acceptance suite: runs every release criterion at its pinned tolerance and
// prints one pass/fail line per criterion. Exit code 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include "polsbe/agent.hpp"
#include "polsbe/envgen.hpp"
#include "polsbe/harness.hpp"
#include "polsbe/mgr.hpp"
#include "polsbe/validation.hpp"

using namespace polsbe;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s  (%s)\n", pass ? "PASS" : "FAIL", criterion,
              what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double elapsed(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Exact identities on 500 randomized instances each, zero failures.
void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_identity_checks(977201, 500);
  bool all = true;
  std::string detail;
  for (const auto& r : results) {
    all = all && r.pass;
    detail += r.name + (r.pass ? " ok; " : " FAILED; ");
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1fs", elapsed(t0));
  report(1, "exact identities, 500 randomized instances each", all, detail + buf);
}

// ---------------------------------------------------------------------------
// 2. MGR guarantees: norm bound on 1e4 draws; bias at d=2, gamma=0.25,
//    eps=0.01, N=48, 2000 replicates; second moment at d=1, gamma=0.3,
//    sigma=0.25 with theory (M, N), 200 replicates.
void criterion2() {
  const auto t0 = std::chrono::steady_clock::now();

  bool norm_ok = true;
  double worst_scaled = 0.0;
  {
    RngStream rng(525600);
    for (int i = 0; i < 10000; ++i) {
      MgrParams p;
      p.gamma = 0.05 + 0.4 * rng.next_double();
      p.outer_count = 1 + rng.next_index(4);
      p.series_depth = 1 + rng.next_index(24);
      const int d = 1 + rng.next_index(3);
      std::vector<Eigen::VectorXd> samples(static_cast<long>(p.outer_count) *
                                           p.series_depth);
      for (auto& phi : samples) {
        phi.resize(d);
        for (int c = 0; c < d; ++c) phi(c) = 2.0 * rng.next_double() - 1.0;
        const double n = phi.norm();
        if (n > 1.0) phi *= rng.next_double() / n;
      }
      const auto est = mgr(samples, p);  // throws if the norm bound fails
      const double scaled =
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(est.sigma_plus,
                                                         Eigen::EigenvaluesOnly)
              .eigenvalues()
              .maxCoeff() *
          p.gamma;
      worst_scaled = std::max(worst_scaled, scaled);
      norm_ok = norm_ok && scaled <= 1.0 + 1e-12;
    }
  }

  FeatureDistribution d2;
  Eigen::VectorXd a1(2), a2(2);
  a1 << 0.9, 0.0;
  a2 << 0.3, 0.5;
  d2.atoms = {a1, a2};
  d2.probs = {0.5, 0.5};
  const MgrParams p_bias = mgr_theory_params(2, 0.25, 0.25, 0.01);
  RngStream bias_rng(171717);
  const auto bias =
      mgr_bias_check(d2, 0.25, p_bias.series_depth, 0.01, 2000, bias_rng);

  FeatureDistribution d1;
  d1.atoms = {Eigen::VectorXd::Constant(1, 0.2), Eigen::VectorXd::Constant(1, 0.9)};
  d1.probs = {0.5, 0.5};
  const MgrParams p_mom = mgr_theory_params(1, 0.3, 0.25, 0.25 / 6.0);
  RngStream mom_rng(292929);
  const auto moment = mgr_second_moment_check(d1, p_mom, 0.25, 200, mom_rng);

  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "norm worst gamma*lmax=%.4f; bias N=%d dev=%.4f<=0.01+%.4f; "
                "second-moment M=%d N=%d lmax=%.4f<=%.4f; %.1fs",
                worst_scaled, p_bias.series_depth, bias.observed, bias.ci_halfwidth,
                p_mom.outer_count, p_mom.series_depth, moment.observed,
                moment.ci_halfwidth, elapsed(t0));
  report(2, "MGR norm/bias/second-moment guarantees", norm_ok && bias.pass && moment.pass,
         detail);
}

// ---------------------------------------------------------------------------
// 3. OLSPE backup confidence on a tabular instance S=4, A=2, H=3, delta=0.05,
//    50 seeded trials, plus the beta_p = 0 negative control.
void criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  RngStream mrng(434343);
  const LinearMdpModel model = tabular_embed(random_tabular_dynamics(4, 2, 3, mrng), 4, 2);
  const auto pos = check_backup_confidence(model, 50, 0.05, 0.25, 1.0, 64, 616161, false);
  const auto neg = check_backup_confidence(model, 50, 0.05, 0.25, 1.0, 64, 616161, true);
  const bool neg_ok = neg.violating_trials >= 45;  // >= 90% of 50 trials
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "violation rate %.3f <= 0.05+%.3f; negative control %d/50 trials violate; "
                "%.1fs",
                pos.check.observed, *pos.check.ci_halfwidth, neg.violating_trials,
                elapsed(t0));
  report(3, "OLSPE backup confidence coverage and negative control",
         pos.check.pass && neg_ok, detail);
}

// ---------------------------------------------------------------------------
// Criteria 4 and 5 share the regret benchmark: S=4, A=3, H=3, d=12 one-hot,
// oscillating costs, practical parameters.
struct Benchmark {
  LinearMdpModel model;
  AdversarySpec adversary;
  AgentConfig blocking;
  AgentConfig simulator;
};

Benchmark make_benchmark() {
  Benchmark b;
  RngStream mrng(1);
  b.model = tabular_embed(random_tabular_dynamics(4, 3, 3, mrng), 4, 3);
  b.adversary.kind = AdversarySpec::Kind::sinusoid;
  b.adversary.period = 512;
  b.adversary.seed = 2;

  AgentConfig c;
  c.mode = AgentConfig::Mode::practical;
  c.variant = AgentConfig::Variant::blocking;
  c.gamma = 0.15;
  c.learning_rate = c.gamma / 6.0;                              // gamma/(2H)
  c.q_bonus_factor = 0.1 * 2.0 * 3.0 * std::sqrt(12.0 * 0.15);  // 0.1 * 2H sqrt(d gamma)
  c.dynamics_bonus_factor = c.q_bonus_factor;
  c.mgr_bias = 0.01;
  c.mgr_outer = 8;
  c.mgr_depth = 16;
  c.block_half = 32;
  b.blocking = c;
  b.simulator = c;
  b.simulator.variant = AgentConfig::Variant::simulator;
  b.simulator.block_half = 256;
  return b;
}

void criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  const Benchmark bench = make_benchmark();
  const Adversary adv(bench.adversary, bench.model);
  const int seeds = 10;

  double mean_2048 = 0.0, mean_8192 = 0.0;
  int omd_wins = 0;
  for (int s = 0; s < seeds; ++s) {
    mean_2048 += run_polsbe(bench.model, adv, 2048, bench.blocking, 100 + s).total_regret();
    const double agent_8192 =
        run_polsbe(bench.model, adv, 8192, bench.blocking, 100 + s).total_regret();
    mean_8192 += agent_8192;
    const double omd =
        known_dynamics_omd_baseline(bench.model, adv, 8192, bench.blocking.learning_rate)
            .total_regret();
    if (omd <= agent_8192) ++omd_wins;
  }
  mean_2048 /= seeds;
  mean_8192 /= seeds;
  const double uniform_8192 = uniform_baseline(bench.model, adv, 8192).total_regret();

  const bool margin_ok = mean_8192 <= 0.8 * uniform_8192;
  const bool sublinear_ok = mean_8192 / 8192.0 < mean_2048 / 2048.0;
  const bool ordering_ok = omd_wins >= 8;
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "mean regret K=8192: polsbe %.0f vs uniform %.0f (%.0f%% better); "
                "Reg/K %.3f -> %.3f; omd wins %d/10; %.1fs",
                mean_8192, uniform_8192, 100.0 * (1.0 - mean_8192 / uniform_8192),
                mean_2048 / 2048.0, mean_8192 / 8192.0, omd_wins, elapsed(t0));
  report(4, "regret vs uniform baseline, sublinearity, baseline ordering",
         margin_ok && sublinear_ok && ordering_ok, detail);
}

void criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  const Benchmark bench = make_benchmark();
  const Adversary adv(bench.adversary, bench.model);
  const int seeds = 10;
  int sim_wins = 0;
  for (int s = 0; s < seeds; ++s) {
    const double blocking =
        run_polsbe(bench.model, adv, 2048, bench.blocking, 100 + s).total_regret();
    // the freshness assertion inside the run throws on any dataset reuse
    const double simulator =
        run_polsbe_simulator(bench.model, adv, 2048, bench.simulator, 100 + s)
            .total_regret();
    if (simulator <= blocking) ++sim_wins;
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "simulator beats blocking on %d/10 matched seeds; per-episode dataset "
                "freshness asserted structurally; %.1fs",
                sim_wins, elapsed(t0));
  report(5, "simulator variant at matched seeds with fresh datasets", sim_wins >= 8,
         detail);
}

// ---------------------------------------------------------------------------
// 6. Determinism: a full experiment run is byte-identical across 1 and N
//    worker threads (and across reruns).
std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  const char* config_json = R"({
    "environment": {"generator": {"kind": "tabular_onehot", "S": 4, "A": 3, "H": 3, "seed": 1}},
    "adversary": {"kind": "sinusoid", "period": 512, "seed": 2},
    "agent": {"variant": "blocking", "mode": "practical",
              "gamma": 0.15, "beta": 0.805, "M": 8, "N": 16, "tau": 32},
    "K": 256,
    "seeds": [100, 101],
    "baselines": ["uniform", "known_dynamics_omd"],
    "diagnostics": true
  })";
  const ExperimentConfig cfg = parse_experiment_config(config_json);
  const auto base = std::filesystem::temp_directory_path();
  const auto dir1 = base / "polsbe_accept_t1";
  const auto dir4 = base / "polsbe_accept_t4";
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir4);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  run_experiment(cfg, dir1);
  omp_set_num_threads(4);
  run_experiment(cfg, dir4);
  omp_set_num_threads(saved);

  bool identical = true;
  int files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir1)) {
    ++files;
    identical = identical &&
                slurp(entry.path()) == slurp(dir4 / entry.path().filename());
  }
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir4);
  char detail[128];
  std::snprintf(detail, sizeof(detail), "%d output files byte-identical across 1 and 4 threads; %.1fs",
                files, elapsed(t0));
  report(6, "byte-identical outputs across worker thread counts",
         identical && files == 8, detail);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  std::printf("acceptance: %s (%.1fs total)\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
              elapsed(t0));
  return g_failures == 0 ? 0 : 1;
}
