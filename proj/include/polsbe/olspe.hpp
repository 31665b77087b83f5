#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "polsbe/linmdp.hpp"

namespace polsbe {

/// Transition tuples grouped by step, with provenance. The step-H list has no
/// successor (next_state = -1); it is used only for Gram matrices.
struct TransitionDataset {
  struct Sample {
    int state;
    int action;
    int next_state;      // -1 at the last step
    int source_episode;  // provenance for independence assertions
    bool from_simulator = false;
  };
  std::vector<std::vector<Sample>> steps;  // size H

  explicit TransitionDataset(int horizon = 0) : steps(horizon) {}
  void add_trajectory(const Trajectory& traj, int source_episode,
                      bool from_simulator = false);
  long total_samples() const;
  /// True iff no tuple originates from the given episode's own rollout.
  bool independent_of(int episode) const;
  /// True iff every tuple is a simulator rollout drawn for this episode.
  bool fresh_for(int episode) const;
};

/// Regularized Gram matrix lambda I + sum phi phi' over one step's samples.
Eigen::MatrixXd build_gram(const LinearMdpModel& model,
                           const std::vector<TransitionDataset::Sample>& step_samples,
                           double lambda = 1.0);

/// beta_p * ||phi(s,a)||_{Lambda^{-1}}, via the Cholesky factor (never an
/// explicit inverse). Always <= beta_p / sqrt(lambda).
double dynamics_bonus(const Eigen::LLT<Eigen::MatrixXd>& gram_llt, double beta_p,
                      const Eigen::VectorXd& phi);

/// Per-step backup artifacts of the backward pass.
struct BackupArtifacts {
  std::vector<Eigen::MatrixXd> gram;     // per h: Lambda_h
  std::vector<Eigen::VectorXd> weights;  // per h: w_h
  double beta_p = 0.0;
  double lambda = 1.0;
};

/// Clipped bonus-to-go tables.
struct BonusValueFn {
  std::vector<Eigen::MatrixXd> b_to_go;  // per h: S x A   (clipped action-values)
  Eigen::MatrixXd w_to_go;               // (H+1) x S      (policy averages, last row 0)
  std::vector<double> caps;              // per h: 2 beta (H-h) / sqrt(gamma), 0-based h
};

/// Backward least-squares policy evaluation in the bonus MDP:
/// for h = H..1,
///   Lambda_h = I + sum phi phi',
///   w_h      = Lambda_h^{-1} sum phi_i W_{h+1}(s'_i),
///   B_h(s,a) = clip[ b_h(s,a) + phi' w_h + beta_p ||phi||_{Lambda_h^{-1}} ]
///              to [0, 2 beta (H-h+1)/sqrt(gamma)],
///   W_h(s)   = <pi(.|s), B_h(s,.)>.
/// The immediate bonus must be finite and nonnegative. lambda is fixed to 1.
std::pair<BonusValueFn, BackupArtifacts> olspe(const LinearMdpModel& model,
                                               const TransitionDataset& dataset,
                                               const std::vector<Eigen::MatrixXd>& immediate_bonus,
                                               double beta_p, double beta, double gamma,
                                               const DiscretePolicy& policy);

/// Regularization of the least-squares backups; exposed read-only for tests.
inline constexpr double kOlspeLambda = 1.0;

}  // namespace polsbe
