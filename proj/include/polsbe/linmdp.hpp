#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polsbe/rng.hpp"

namespace polsbe {

/// Finite-state episodic MDP with linearly factored dynamics:
///   P_h(s'|s,a) = phi(s,a)' psi_h(s'),   loss_h(s,a) = phi(s,a)' c_h.
///
/// Feature rows are indexed by sa_index(s,a) = s*A + a. Steps are 0-based
/// internally: h in {0..H-1}, transition factors exist for h in {0..H-2}
/// (the episode ends after the action at the last step).
struct LinearMdpModel {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  int feature_dim = 0;
  int initial_state = 0;
  Eigen::MatrixXd features;                        // (S*A) x d
  std::vector<Eigen::MatrixXd> transition_factors;  // H-1 entries, each S x d

  int sa_index(int s, int a) const { return s * num_actions + a; }
  auto phi(int s, int a) const { return features.row(sa_index(s, a)); }
};

/// Adversarial per-episode cost vectors c[k][h], each of length d.
struct CostSchedule {
  int episodes = 0;
  int horizon = 0;
  std::vector<std::vector<Eigen::VectorXd>> costs;  // [K][H]

  /// Loss table of episode k: per h an S x A matrix of phi' c.
  std::vector<Eigen::MatrixXd> loss_tables(const LinearMdpModel& model, int k) const;
};

/// Per-(h,s) action distributions as plain probability tables. This is the
/// form consumed by the DP engine; it can hold exactly deterministic policies
/// (one-hot rows), unlike the softmax parameterization.
struct DiscretePolicy {
  std::vector<Eigen::MatrixXd> probs;  // per h: S x A, rows sum to 1

  static DiscretePolicy uniform(int horizon, int num_states, int num_actions);
  /// Exact one-hot policy; actions indexed [h][s].
  static DiscretePolicy deterministic(const std::vector<std::vector<int>>& actions,
                                      int num_actions);
  int horizon() const { return static_cast<int>(probs.size()); }
};

/// Exponential-weights policy state: accumulated loss-estimate logits L and a
/// learning rate, with pi_h(a|s) proportional to exp(-eta * L_h(s,a)).
class SoftmaxPolicy {
 public:
  SoftmaxPolicy(int horizon, int num_states, int num_actions, double learning_rate);

  /// All-zero logits: uniform policy.
  static SoftmaxPolicy uniform(int horizon, int num_states, int num_actions,
                               double learning_rate) {
    return SoftmaxPolicy(horizon, num_states, num_actions, learning_rate);
  }

  /// Probabilities at (h,s), computed with max-subtraction.
  Eigen::VectorXd action_probabilities(int h, int s) const;

  /// Full probability tables for the DP engine.
  DiscretePolicy table() const;

  /// New policy with logits accumulated by the given per-h S x A loss tables.
  SoftmaxPolicy accumulated(const std::vector<Eigen::MatrixXd>& loss_tables) const;

  const std::vector<Eigen::MatrixXd>& logits() const { return logits_; }
  double learning_rate() const { return learning_rate_; }

 private:
  double learning_rate_;
  std::vector<Eigen::MatrixXd> logits_;  // per h: S x A
};

/// One episode rollout: H records of (state, action, scalar loss).
struct Trajectory {
  struct Step {
    int state;
    int action;
    double loss;
  };
  std::vector<Step> steps;
};

/// d_h(s,a) = Pr(s_h = s, a_h = a) under a policy, from the initial state.
struct OccupancyTable {
  std::vector<Eigen::MatrixXd> d;  // per h: S x A
};

/// V_h(s) and Q_h(s,a) tables; v has H+1 rows with the terminal row zero.
struct ValueTables {
  Eigen::MatrixXd v;                // (H+1) x S
  std::vector<Eigen::MatrixXd> q;   // per h: S x A
};

/// One violated model constraint, with where and by how much.
struct ModelViolation {
  std::string constraint;
  std::string location;
  double magnitude;
};

/// Checks the linear-MDP normalization constraints:
///   - ||phi(s,a)|| <= 1,
///   - each P_h(.|s,a) nonnegative and summing to 1 (within tol),
///   - ||sum_s' psi_h(s') f(s')|| <= sqrt(d) for f == 1 and for sampled sign
///     vectors f in {-1,+1}^S (exhaustive verification is 2^S; this is a
///     documented sampled invariant).
/// Returns one entry per violated constraint; empty means valid.
std::vector<ModelViolation> validate_model(const LinearMdpModel& model,
                                           double tol = 1e-9,
                                           int sign_samples = 64);

/// P_h(.|s,a) as a length-S probability vector. Throws if h has no successor
/// step (h must be in {0..H-2}).
Eigen::VectorXd transition_distribution(const LinearMdpModel& model, int h, int s, int a);

/// Samples one episode under the policy and the episode's cost vectors.
Trajectory rollout(const LinearMdpModel& model, const DiscretePolicy& policy,
                   std::span<const Eigen::VectorXd> episode_costs, RngStream& rng);

/// Exact backward induction for an arbitrary real loss table. The same
/// recursion evaluates bonus MDPs (callers pass the bonus table as the loss).
ValueTables value_dp(const LinearMdpModel& model, const DiscretePolicy& policy,
                     const std::vector<Eigen::MatrixXd>& loss_tables);

/// Exact forward recursion for the state-action occupancy measure.
OccupancyTable occupancy(const LinearMdpModel& model, const DiscretePolicy& policy);

/// The low-dimensional Q-vector q_h = c_h + sum_s' psi_h(s') V_{h+1}(s'),
/// satisfying phi(s,a)' q_h = Q_h(s,a) and ||q_h|| <= H sqrt(d).
Eigen::VectorXd q_vector(const LinearMdpModel& model, const DiscretePolicy& policy,
                         std::span<const Eigen::VectorXd> episode_costs, int h);

struct HindsightResult {
  DiscretePolicy policy;                  // exact one-hot rows
  std::vector<std::vector<int>> actions;  // [h][s]
  double total_value;                     // sum_k V_1^{k,pi*}(s1)
};

/// Deterministic policy minimizing the total value over the realized cost
/// schedule, by backward induction on the aggregated losses (dynamics are
/// shared across episodes). Ties break toward the lowest action index.
HindsightResult best_in_hindsight(const LinearMdpModel& model, const CostSchedule& schedule);

/// JSON environment document {S, A, H, d, s1, phi, psi}; the loader re-runs
/// validate_model and throws on a non-empty report.
std::string serialize_model(const LinearMdpModel& model);
LinearMdpModel deserialize_model(const std::string& json_text);

}  // namespace polsbe
