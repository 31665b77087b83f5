#pragma once

#include "polsbe/linmdp.hpp"
#include "polsbe/mgr.hpp"
#include "polsbe/olspe.hpp"

namespace polsbe::ref {

// Serial, deliberately naive formulations of the hot kernels. Tests compare
// the OpenMP kernels against these, and the bench tool times both. They favor
// transparency over speed: explicit matrix products, explicit inverses,
// per-element sums.

/// MGR with explicit (I - c A) matrix products, single thread.
RegInvCovEstimate mgr(std::span<const Eigen::VectorXd> samples, const MgrParams& params);

/// Backward induction with explicit sums over next states.
ValueTables value_dp(const LinearMdpModel& model, const DiscretePolicy& policy,
                     const std::vector<Eigen::MatrixXd>& loss_tables);

/// Forward recursion with explicit sums over (s,a).
OccupancyTable occupancy(const LinearMdpModel& model, const DiscretePolicy& policy);

/// OLSPE backward pass with explicit Gram inverses, single thread.
std::pair<BonusValueFn, BackupArtifacts> olspe(const LinearMdpModel& model,
                                               const TransitionDataset& dataset,
                                               const std::vector<Eigen::MatrixXd>& immediate_bonus,
                                               double beta_p, double beta, double gamma,
                                               const DiscretePolicy& policy);

}  // namespace polsbe::ref
