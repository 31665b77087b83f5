#pragma once

#include <optional>
#include <string>
#include <vector>

#include "polsbe/agent.hpp"
#include "polsbe/linmdp.hpp"
#include "polsbe/mgr.hpp"
#include "polsbe/olspe.hpp"

namespace polsbe {

/// Outcome of one executable identity or bound check.
struct CheckResult {
  std::string name;
  enum class Kind { exact, statistical } kind = Kind::exact;
  double observed = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::optional<double> ci_halfwidth;  // statistical checks only
  std::string note;
};

/// Extended value difference: for tables Qhat with Vhat_h(s) = <pi_h, Qhat_h>,
///   Vhat_1(s1) - V_1^{pi'}(s1) = sum_h E_{d^{pi'}}[<Qhat_h, pi_h - pi'_h>]
///                              + sum_h E_{d^{pi'}}[Qhat_h - loss_h - P_h Vhat_{h+1}].
/// Exact identity; residual bound 1e-8.
CheckResult check_extended_value_difference(const LinearMdpModel& model,
                                            const DiscretePolicy& pi,
                                            const DiscretePolicy& pi_prime,
                                            const std::vector<Eigen::MatrixXd>& q_hat_tables,
                                            const std::vector<Eigen::MatrixXd>& loss_tables);

/// Elliptical potential: sum_i ||phi_i||^2_{Lambda_i^{-1}} <= 2d log(1 + N/(d lambda))
/// for Lambda_i = lambda I + sum_{t<i} phi_t phi_t', lambda >= 1, ||phi_i|| <= 1.
CheckResult check_elliptical_potential(std::span<const Eigen::VectorXd> phis, double lambda);

/// Entropy-regularized OMD: realized regret of the exponential-weights update
/// against the best single action is <= log(n)/eta + eta sum_k sum_i x_k(i) g_k(i)^2.
/// Requires eta g_k(a) >= -1 for all k, a.
CheckResult check_omd(std::span<const Eigen::VectorXd> losses, double eta);

/// Blocked variant: the iterate is updated once per size-tau block with the
/// block-averaged loss; bound tau log(n)/eta + tau max_k ||g_k||_inf
/// + eta sum_k sum_i x_k(i) g_k(i)^2.
CheckResult check_blocking_omd(std::span<const Eigen::VectorXd> losses, double eta, int tau);

/// Clipping invariant of a bonus-to-go table: 0 <= B_h <= cap_h everywhere.
CheckResult check_clip_bounds(const BonusValueFn& fn);

/// MGR guarantee suite: exact norm assertions on every draw plus bias and
/// second-moment checks with theory parameters at small d.
std::vector<CheckResult> check_mgr_suite(std::uint64_t seed, int norm_draws,
                                         int bias_replicates, int moment_replicates);

/// Bonus expectation checks (statistical):
///  - Q-bonus:   E[E_{d_h}[b]]   <= 2 beta (sqrt(d) + sqrt(eps)),
///  - dynamics:  E[E_{d_h}[b^P]] <= 20 beta_p sqrt(d) log(tau) / sqrt(tau).
/// Expectations over occupancy are exact; the outer mean is Monte-Carlo.
std::pair<CheckResult, CheckResult> check_bonus_expectations(
    const LinearMdpModel& model, const DiscretePolicy& policy, double beta, double beta_p,
    double gamma, double eps, int tau, int replicates, std::uint64_t seed);

/// Backup confidence (statistical): over seeded trials on a tabular-embedded
/// instance, the fraction of trials with any (h,s,a) violating
///   b + P_h W_{h+1} <= B_h <= b + P_h W_{h+1} + 2 b^P
/// is <= delta + pre-registered binomial slack. P_h W is exact. Set beta_p_scale
/// to zero for the negative control (violations become expected).
struct BackupConfidenceResult {
  CheckResult check;
  int violating_trials = 0;
  int trials = 0;
  double tuple_violation_fraction = 0.0;
  double beta_p_used = 0.0;
};
BackupConfidenceResult check_backup_confidence(const LinearMdpModel& model, int trials,
                                               double delta, double gamma, double c1,
                                               int dataset_rollouts, std::uint64_t seed,
                                               bool negative_control = false);

/// Exploration-term bound on an instrumented run: conditional on the backup
/// confidence event holding every episode,
///   Exploration <= 2 sum_{k,h} E_{d^k}[b^P + b] - sum_{k,h} E_{d^*}[b].
/// All expectations are exact via occupancies.
CheckResult check_exploration_bound(const LinearMdpModel& model, int episodes, double gamma,
                                    double c1, int rollouts_per_episode, std::uint64_t seed);

/// The six exact-identity batteries (Bellman, extended value difference,
/// duality, decomposition sum, elliptical potential, OMD + blocking OMD) over
/// randomized instances; every instance must pass at its stated tolerance.
std::vector<CheckResult> run_identity_checks(std::uint64_t seed, int instances);

/// The full pinned suite behind `validate` (exact identities at reduced counts
/// plus the statistical checks with fixed seeds).
std::vector<CheckResult> run_validation_suite(std::uint64_t seed, bool quick = false);

/// JSON lines for the report consumed by the CLI.
std::string check_results_to_json(const std::vector<CheckResult>& results);

}  // namespace polsbe
