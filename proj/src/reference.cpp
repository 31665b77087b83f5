#include "polsbe/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polsbe::ref {

RegInvCovEstimate mgr(std::span<const Eigen::VectorXd> samples, const MgrParams& params) {
  const int M = params.outer_count, N = params.series_depth;
  const double c = kMgrStep;
  const long need = static_cast<long>(M) * N;
  if (static_cast<long>(samples.size()) < need)
    throw std::invalid_argument("ref::mgr: insufficient samples");
  const int d = static_cast<int>(samples.front().size());
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(d, d);

  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(d, d);
  for (int m = 0; m < M; ++m) {
    Eigen::MatrixXd prod = identity;
    Eigen::MatrixXd acc = c * identity;
    for (int n = 0; n < N; ++n) {
      const Eigen::VectorXd& phi = samples[static_cast<long>(m) * N + n];
      const Eigen::MatrixXd a = params.gamma * identity + phi * phi.transpose();
      prod = prod * (identity - c * a);
      acc += c * prod;
    }
    total += acc;
  }
  Eigen::MatrixXd mean = total / M;
  return {(mean + mean.transpose()) / 2.0, params, need};
}

ValueTables value_dp(const LinearMdpModel& model, const DiscretePolicy& policy,
                     const std::vector<Eigen::MatrixXd>& loss_tables) {
  const int S = model.num_states, A = model.num_actions, H = model.horizon;
  ValueTables out;
  out.v = Eigen::MatrixXd::Zero(H + 1, S);
  out.q.assign(H, Eigen::MatrixXd::Zero(S, A));
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double q = loss_tables[h](s, a);
        if (h + 1 < H) {
          for (int sn = 0; sn < S; ++sn)
            q += model.phi(s, a).dot(model.transition_factors[h].row(sn)) *
                 out.v(h + 1, sn);
        }
        out.q[h](s, a) = q;
      }
      double v = 0.0;
      for (int a = 0; a < A; ++a) v += policy.probs[h](s, a) * out.q[h](s, a);
      out.v(h, s) = v;
    }
  }
  return out;
}

OccupancyTable occupancy(const LinearMdpModel& model, const DiscretePolicy& policy) {
  const int S = model.num_states, A = model.num_actions, H = model.horizon;
  OccupancyTable out;
  out.d.assign(H, Eigen::MatrixXd::Zero(S, A));
  Eigen::VectorXd state_occ = Eigen::VectorXd::Zero(S);
  state_occ(model.initial_state) = 1.0;
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) out.d[h](s, a) = state_occ(s) * policy.probs[h](s, a);
    if (h + 1 < H) {
      Eigen::VectorXd next = Eigen::VectorXd::Zero(S);
      for (int sn = 0; sn < S; ++sn)
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < A; ++a)
            next(sn) += out.d[h](s, a) *
                        model.phi(s, a).dot(model.transition_factors[h].row(sn));
      state_occ = next;
    }
  }
  return out;
}

std::pair<BonusValueFn, BackupArtifacts> olspe(const LinearMdpModel& model,
                                               const TransitionDataset& dataset,
                                               const std::vector<Eigen::MatrixXd>& immediate_bonus,
                                               double beta_p, double beta, double gamma,
                                               const DiscretePolicy& policy) {
  const int S = model.num_states, A = model.num_actions, H = model.horizon;
  BonusValueFn fn;
  fn.b_to_go.assign(H, Eigen::MatrixXd::Zero(S, A));
  fn.w_to_go = Eigen::MatrixXd::Zero(H + 1, S);
  fn.caps.resize(H);
  BackupArtifacts art;
  art.gram.resize(H);
  art.weights.resize(H);
  art.beta_p = beta_p;
  art.lambda = kOlspeLambda;

  for (int h = H - 1; h >= 0; --h) {
    Eigen::MatrixXd gram =
        kOlspeLambda * Eigen::MatrixXd::Identity(model.feature_dim, model.feature_dim);
    Eigen::VectorXd target = Eigen::VectorXd::Zero(model.feature_dim);
    for (const auto& sample : dataset.steps[h]) {
      const Eigen::VectorXd phi = model.phi(sample.state, sample.action).transpose();
      gram += phi * phi.transpose();
      if (sample.next_state >= 0) target += phi * fn.w_to_go(h + 1, sample.next_state);
    }
    const Eigen::MatrixXd inv = gram.inverse();
    art.gram[h] = gram;
    art.weights[h] = inv * target;
    fn.caps[h] = 2.0 * beta * (H - h) / std::sqrt(gamma);
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const Eigen::VectorXd phi = model.phi(s, a).transpose();
        const double value = immediate_bonus[h](s, a) + phi.dot(art.weights[h]) +
                             beta_p * std::sqrt(phi.dot(inv * phi));
        fn.b_to_go[h](s, a) = std::clamp(value, 0.0, fn.caps[h]);
      }
      fn.w_to_go(h, s) = policy.probs[h].row(s).dot(fn.b_to_go[h].row(s));
    }
  }
  return {std::move(fn), std::move(art)};
}

}  // namespace polsbe::ref
