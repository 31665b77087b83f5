#pragma once

#include <optional>
#include <string>
#include <vector>

#include "polsbe/envgen.hpp"
#include "polsbe/linmdp.hpp"
#include "polsbe/mgr.hpp"
#include "polsbe/olspe.hpp"

namespace polsbe {

/// PO-LSBE parameters. Theory mode pins everything to the analyzed settings
/// (and enforces their preconditions); practical mode takes explicit
/// (M, N, tau) overrides and voids the guarantees, which the run records.
struct AgentConfig {
  enum class Mode { theory, practical };
  enum class Variant { blocking, simulator };

  Mode mode = Mode::practical;
  Variant variant = Variant::blocking;
  double learning_rate = 0.0;          // eta
  double gamma = 0.0;                  // covariance regularizer
  double q_bonus_factor = 0.0;         // beta
  double dynamics_bonus_factor = 0.0;  // beta_p
  double mgr_bias = 0.0;               // eps
  double mgr_variance = 0.25;          // sigma
  int mgr_outer = 1;                   // M
  int mgr_depth = 1;                   // N
  long block_half = 1;                 // tau (theory-mode values can be huge)
  double c1 = 1.0;

  void validate(int horizon) const;  // throws naming the violated constraint
  MgrParams mgr_params() const;
};

/// Tuned parameters of the blocking variant:
/// sigma = 1/4, eps = 1/K, gamma = K^{-2/7}, eta = gamma/(2H),
/// beta = 2 H sqrt(d gamma), beta_p = 10 c1 H^2 d^{3/2} log(28 c1 d beta K H),
/// (M, N) in theory mode and tau = M N. Errors when gamma >= 1/2 (small K).
AgentConfig theorem1_config(int K, int d, int H, double c1 = 1.0);

/// Tuned parameters of the simulator variant: gamma = 2/(dK)^{2/3} and
/// tau = d^2 M N; the remaining forms match theorem1_config.
AgentConfig theorem2_config(int K, int d, int H, double c1 = 1.0);

/// Two-way partitioned blocking: consecutive disjoint blocks of 2*tau
/// episodes, each split into halves; a trailing partial block splits as
/// evenly as possible (ceil/floor) and is flagged.
struct BlockSchedule {
  struct Block {
    int begin;  // first half: [begin, mid)
    int mid;    // second half: [mid, end)
    int end;
    bool partial;
  };
  int episodes = 0;
  long half_len = 0;
  std::vector<Block> blocks;

  static BlockSchedule make(int episodes, long half_len);
};

/// Per-episode diagnostic series of the regret decomposition.
struct DecompositionSeries {
  std::vector<double> bias1, bias2, omd, exploration;
};

/// Exact per-episode run outcome.
struct RegretReport {
  std::vector<double> value_agent;  // V_1^{k,pi^k}(s1)
  std::vector<double> value_star;   // V_1^{k,pi*}(s1)
  std::vector<double> cum_regret;
  std::optional<DecompositionSeries> decomposition;
  double wall_seconds = 0.0;
  long env_rollouts = 0;
  long sim_rollouts = 0;
  std::vector<std::string> flags;

  double total_regret() const { return cum_regret.empty() ? 0.0 : cum_regret.back(); }
};

/// Stored per-episode estimates for the diagnostic decomposition.
struct EpisodeArtifacts {
  std::vector<Eigen::MatrixXd> q_hat;    // per h: S x A
  std::vector<Eigen::MatrixXd> b_to_go;  // per h: S x A
  DiscretePolicy policy;
};

/// q.hat_h = Sigma+ phi(s_h, a_h) * (realized loss from h onward); the table
/// is its feature expansion. Uses only bandit feedback from the trajectory.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> q_hat(const LinearMdpModel& model,
                                                  const Eigen::MatrixXd& sigma_plus,
                                                  const Trajectory& traj, int h);

/// Immediate Q-bonus b(s,a) = beta (||phi(s,a)||_{Sigma+} +
/// <pi_h(.|s), ||phi(s,.)||_{Sigma+}>); every entry <= 2 beta / sqrt(gamma).
Eigen::MatrixXd q_bonus(const LinearMdpModel& model, const Eigen::MatrixXd& sigma_plus,
                        const DiscretePolicy& policy, int h, double beta);

/// Exponential-weights step: logits accumulate the block-averaged loss table.
SoftmaxPolicy policy_update_blocking(const SoftmaxPolicy& previous,
                                     const std::vector<Eigen::MatrixXd>& block_loss);

/// Blocking variant (two-way partitioned blocking; each episode's estimates
/// come from the opposite half's rollouts).
RegretReport run_polsbe(const LinearMdpModel& model, const Adversary& adversary, int K,
                        const AgentConfig& config, std::uint64_t seed,
                        bool diagnostics = false,
                        std::vector<EpisodeArtifacts>* artifacts_out = nullptr,
                        CostSchedule* realized_out = nullptr);

/// Simulator variant: per episode, tau fresh policy rollouts feed the
/// estimation dataset and the policy updates every episode.
RegretReport run_polsbe_simulator(const LinearMdpModel& model, const Adversary& adversary,
                                  int K, const AgentConfig& config, std::uint64_t seed,
                                  bool diagnostics = false,
                                  std::vector<EpisodeArtifacts>* artifacts_out = nullptr,
                                  CostSchedule* realized_out = nullptr);

/// Exact four-term decomposition (Bias1, Bias2, OMD, Exploration) of each
/// episode's regret, evaluated under the best-in-hindsight occupancy. The
/// terms sum to the per-episode regret identically.
DecompositionSeries regret_decomposition_diagnostic(
    const LinearMdpModel& model, const CostSchedule& realized,
    const std::vector<EpisodeArtifacts>& artifacts, const HindsightResult& hindsight);

}  // namespace polsbe
