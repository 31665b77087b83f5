#include "polsbe/mgr.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

namespace polsbe {

MgrParams mgr_theory_params(int d, double gamma, double sigma, double eps) {
  if (!(sigma <= 0.25))
    throw std::invalid_argument("mgr_theory_params: requires sigma <= 1/4 (got sigma=" +
                                std::to_string(sigma) + ")");
  if (!(eps <= sigma / 6.0))
    throw std::invalid_argument("mgr_theory_params: requires eps <= sigma/6 (got eps=" +
                                std::to_string(eps) + ")");
  if (!(gamma > 0.0 && gamma < 0.5))
    throw std::invalid_argument("mgr_theory_params: requires 0 < gamma < 1/2 (got gamma=" +
                                std::to_string(gamma) + ")");
  MgrParams p;
  p.gamma = gamma;
  p.outer_count = static_cast<int>(
      std::ceil(48.0 * d / (gamma * sigma) * std::log(72.0 * d / (gamma * gamma * sigma))));
  p.series_depth =
      static_cast<int>(std::ceil(2.0 / gamma * std::log(1.0 / (gamma * eps))));
  p.guarantee_mode = true;
  return p;
}

RegInvCovEstimate mgr(std::span<const Eigen::VectorXd> samples, const MgrParams& params) {
  const int M = params.outer_count, N = params.series_depth;
  const double gamma = params.gamma, c = kMgrStep;
  if (M < 1 || N < 1) throw std::invalid_argument("mgr: M >= 1 and N >= 1 required");
  if (!(gamma > 0.0)) throw std::invalid_argument("mgr: gamma > 0 required");
  if (params.guarantee_mode && gamma >= 0.5)
    throw std::invalid_argument("mgr: gamma >= 1/2 outside the guarantee regime; "
                                "set guarantee_mode = false to proceed");
  const long need = static_cast<long>(M) * N;
  if (static_cast<long>(samples.size()) < need)
    throw std::invalid_argument("mgr: needs M*N = " + std::to_string(need) +
                                " samples, got " + std::to_string(samples.size()));
  const int d = static_cast<int>(samples.front().size());
  for (long i = 0; i < need; ++i)
    if (!samples[i].allFinite()) throw std::invalid_argument("mgr: non-finite sample");

  std::vector<Eigen::MatrixXd> per_m(M);
#pragma omp parallel for schedule(static) if (M > 1)
  for (int m = 0; m < M; ++m) {
    // prod <- prod * ((1-c*gamma) I - c phi phi') as a rank-1 update
    Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd acc = c * Eigen::MatrixXd::Identity(d, d);
    const double diag = 1.0 - c * gamma;
    for (int n = 0; n < N; ++n) {
      const Eigen::VectorXd& phi = samples[static_cast<long>(m) * N + n];
      const Eigen::VectorXd pv = prod * phi;
      prod = diag * prod - c * pv * phi.transpose();
      acc += c * prod;
    }
    per_m[m] = std::move(acc);
  }

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d);
  for (int m = 0; m < M; ++m) sum += per_m[m];  // index order: bit-stable
  Eigen::MatrixXd sym = (sum + sum.transpose()) / (2.0 * M);

  RegInvCovEstimate out{std::move(sym), params, need};
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.sigma_plus,
                                                           Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  if (lmax > 1.0 / gamma + 1e-9 * (1.0 / gamma))
    throw std::logic_error("mgr: norm bound ||Sigma+|| <= 1/gamma violated");
  assert(eig.eigenvalues().minCoeff() >= 0.5 - 1e-9);
  return out;
}

Eigen::MatrixXd FeatureDistribution::regularized_covariance(double gamma) const {
  const int d = dim();
  Eigen::MatrixXd sigma = gamma * Eigen::MatrixXd::Identity(d, d);
  for (std::size_t i = 0; i < atoms.size(); ++i)
    sigma += probs[i] * atoms[i] * atoms[i].transpose();
  return sigma;
}

Eigen::VectorXd FeatureDistribution::draw(RngStream& rng) const {
  return atoms[rng.sample(std::span<const double>(probs.data(), probs.size()))];
}

namespace {

// Frobenius norm of the entrywise standard errors of the mean of {X_r}.
double mean_frobenius_se(const std::vector<Eigen::MatrixXd>& xs, const Eigen::MatrixXd& mean) {
  const auto r = static_cast<double>(xs.size());
  if (xs.size() < 2) return 0.0;
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(mean.rows(), mean.cols());
  for (const auto& x : xs) var += (x - mean).cwiseProduct(x - mean);
  var /= (r - 1.0);
  return std::sqrt(var.sum() / r);
}

}  // namespace

MomentCheckResult mgr_bias_check(const FeatureDistribution& dist, double gamma,
                                 int series_depth, double eps, int replicates,
                                 RngStream& rng) {
  MgrParams p;
  p.outer_count = 1;
  p.series_depth = series_depth;
  p.gamma = gamma;
  const int d = dist.dim();
  std::vector<Eigen::MatrixXd> outputs;
  outputs.reserve(replicates);
  std::vector<Eigen::VectorXd> samples(series_depth);
  for (int r = 0; r < replicates; ++r) {
    RngStream sub = rng.substream({stream_name("mgr_bias_check"), static_cast<std::uint64_t>(r)});
    for (int n = 0; n < series_depth; ++n) samples[n] = dist.draw(sub);
    outputs.push_back(mgr(samples, p).sigma_plus);
  }
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : outputs) mean += x;
  mean /= replicates;
  const Eigen::MatrixXd exact_inv = dist.regularized_covariance(gamma).inverse();

  MomentCheckResult res;
  res.replicates = replicates;
  res.observed = (mean - exact_inv).operatorNorm();
  res.std_error = mean_frobenius_se(outputs, mean);
  res.ci_halfwidth = 3.0 * res.std_error;
  res.pass = res.observed <= eps + res.ci_halfwidth;
  return res;
}

MomentCheckResult mgr_second_moment_check(const FeatureDistribution& dist,
                                          const MgrParams& params, double sigma,
                                          int replicates, RngStream& rng) {
  const int d = dist.dim();
  const Eigen::MatrixXd sigma_gamma = dist.regularized_covariance(params.gamma);
  const long need = static_cast<long>(params.outer_count) * params.series_depth;
  std::vector<Eigen::MatrixXd> zs;  // Z_r = X Sigma_gamma X - 2 X
  zs.reserve(replicates);
  std::vector<Eigen::VectorXd> samples(need);
  for (int r = 0; r < replicates; ++r) {
    RngStream sub =
        rng.substream({stream_name("mgr_second_moment"), static_cast<std::uint64_t>(r)});
    for (long n = 0; n < need; ++n) samples[n] = dist.draw(sub);
    const Eigen::MatrixXd x = mgr(samples, params).sigma_plus;
    zs.push_back(x * sigma_gamma * x - 2.0 * x);
  }
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(d, d);
  for (const auto& z : zs) mean += z;
  mean /= replicates;
  const Eigen::MatrixXd lhs =
      0.5 * (mean + mean.transpose()) - sigma * Eigen::MatrixXd::Identity(d, d);

  MomentCheckResult res;
  res.replicates = replicates;
  res.observed =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(lhs, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .maxCoeff();
  res.std_error = mean_frobenius_se(zs, mean);
  res.ci_halfwidth = 3.0 * res.std_error;
  res.pass = res.observed <= res.ci_halfwidth;
  return res;
}

}  // namespace polsbe
