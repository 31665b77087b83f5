#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "polsbe/rng.hpp"

namespace polsbe {

/// Step constant of the resampling recursion; fixed by the procedure.
inline constexpr double kMgrStep = 0.5;

/// Matrix Geometric Resampling parameters.
///
/// guarantee_mode marks parameter sets inside the analyzed regime
/// (gamma < 1/2 and (M, N) from mgr_theory_params); explicit practical
/// overrides must clear the flag.
struct MgrParams {
  int outer_count = 1;   // M: independent estimators averaged
  int series_depth = 1;  // N: truncation depth of the geometric series
  double gamma = 0.25;   // regularizer
  bool guarantee_mode = false;
};

/// Theory-mode parameters:
///   M = ceil(48 d / (gamma sigma) * log(72 d / (gamma^2 sigma))),
///   N = ceil(2 / gamma * log(1 / (gamma eps))).
/// Requires sigma <= 1/4, eps <= sigma/6, 0 < gamma < 1/2; a violation throws
/// naming the failed inequality.
MgrParams mgr_theory_params(int d, double gamma, double sigma, double eps);

/// The estimate of the gamma-regularized inverse feature covariance.
struct RegInvCovEstimate {
  Eigen::MatrixXd sigma_plus;  // d x d, symmetric, ||.|| <= 1/gamma, lmin >= 1/2
  MgrParams params;
  long samples_consumed = 0;  // M*N
};

/// Runs the resampling recursion on the first M*N samples (enumerated
/// m-major: phi_{m,n} = samples[m*N + n], products accumulated left to
/// right in sample order):
///   A_{m,n}   = gamma I + phi phi',
///   S^(n)_m   = prod_{i<=n} (I - c A_{m,i}),
///   S+_m      = c I + c sum_{n=1..N} S^(n)_m,
///   Sigma+    = (1/M) sum_m S+_m, symmetrized via (X + X')/2.
/// The M estimators are independent and computed in parallel; the reduction
/// sums in index order so output is identical for any thread count.
/// Throws on insufficient samples or non-finite input; the norm bound
/// ||Sigma+|| <= 1/gamma is asserted on every call.
RegInvCovEstimate mgr(std::span<const Eigen::VectorXd> samples, const MgrParams& params);

/// Finite-support feature distribution, for validators that need the exact
/// regularized covariance.
struct FeatureDistribution {
  std::vector<Eigen::VectorXd> atoms;
  std::vector<double> probs;

  int dim() const { return atoms.empty() ? 0 : static_cast<int>(atoms.front().size()); }
  Eigen::MatrixXd regularized_covariance(double gamma) const;
  Eigen::VectorXd draw(RngStream& rng) const;
};

struct MomentCheckResult {
  double observed = 0.0;       // deviation norm / max eigenvalue
  double std_error = 0.0;      // Frobenius norm of entrywise SEs of the mean
  double ci_halfwidth = 0.0;   // 3 * std_error
  int replicates = 0;
  bool pass = false;
};

/// Empirical check of the estimator bias ||E[Sigma+] - Sigma_gamma^{-1}||_op:
/// averages independent M=1 outputs (the mean depends only on N) against the
/// directly inverted exact Sigma_gamma. pass iff deviation <= eps + ci.
MomentCheckResult mgr_bias_check(const FeatureDistribution& dist, double gamma,
                                 int series_depth, double eps, int replicates,
                                 RngStream& rng);

/// Empirical check of the second-moment bound: reports the maximum eigenvalue
/// of mean(Sigma+ Sigma_gamma Sigma+) - 2 mean(Sigma+) - sigma I; pass iff
/// <= ci slack.
MomentCheckResult mgr_second_moment_check(const FeatureDistribution& dist,
                                          const MgrParams& params, double sigma,
                                          int replicates, RngStream& rng);

}  // namespace polsbe
