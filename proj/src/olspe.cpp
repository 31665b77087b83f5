#include "polsbe/olspe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polsbe {

void TransitionDataset::add_trajectory(const Trajectory& traj, int source_episode,
                                       bool from_simulator) {
  const int H = static_cast<int>(steps.size());
  if (static_cast<int>(traj.steps.size()) != H)
    throw std::invalid_argument("dataset: trajectory horizon mismatch");
  for (int h = 0; h < H; ++h) {
    const int next = h + 1 < H ? traj.steps[h + 1].state : -1;
    steps[h].push_back({traj.steps[h].state, traj.steps[h].action, next, source_episode,
                        from_simulator});
  }
}

long TransitionDataset::total_samples() const {
  long n = 0;
  for (const auto& v : steps) n += static_cast<long>(v.size());
  return n;
}

bool TransitionDataset::independent_of(int episode) const {
  for (const auto& v : steps)
    for (const auto& s : v)
      if (s.source_episode == episode && !s.from_simulator) return false;
  return true;
}

bool TransitionDataset::fresh_for(int episode) const {
  for (const auto& v : steps)
    for (const auto& s : v)
      if (s.source_episode != episode || !s.from_simulator) return false;
  return true;
}

Eigen::MatrixXd build_gram(const LinearMdpModel& model,
                           const std::vector<TransitionDataset::Sample>& step_samples,
                           double lambda) {
  if (lambda < 1.0) throw std::invalid_argument("build_gram: lambda >= 1 required");
  Eigen::MatrixXd gram =
      lambda * Eigen::MatrixXd::Identity(model.feature_dim, model.feature_dim);
  for (const auto& sample : step_samples) {
    const auto phi = model.phi(sample.state, sample.action);
    gram.noalias() += phi.transpose() * phi;
  }
  return gram;
}

double dynamics_bonus(const Eigen::LLT<Eigen::MatrixXd>& gram_llt, double beta_p,
                      const Eigen::VectorXd& phi) {
  return beta_p * std::sqrt(phi.dot(gram_llt.solve(phi)));
}

std::pair<BonusValueFn, BackupArtifacts> olspe(const LinearMdpModel& model,
                                               const TransitionDataset& dataset,
                                               const std::vector<Eigen::MatrixXd>& immediate_bonus,
                                               double beta_p, double beta, double gamma,
                                               const DiscretePolicy& policy) {
  const int S = model.num_states, A = model.num_actions, H = model.horizon;
  if (static_cast<int>(dataset.steps.size()) != H)
    throw std::invalid_argument("olspe: dataset horizon mismatch");
  for (const auto& b : immediate_bonus)
    if (!b.allFinite() || b.minCoeff() < 0.0)
      throw std::invalid_argument("olspe: immediate bonus must be finite and nonnegative");

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
    // TODO: switch to incremental rank-1 Cholesky updates if Gram rebuilds
    // dominate profiles at large dataset sizes.
    art.gram[h] = build_gram(model, dataset.steps[h], kOlspeLambda);
    const Eigen::LLT<Eigen::MatrixXd> llt(art.gram[h]);

    Eigen::VectorXd target = Eigen::VectorXd::Zero(model.feature_dim);
    for (const auto& sample : dataset.steps[h]) {
      if (sample.next_state < 0) continue;  // step-H tuples feed the Gram only
      target += model.phi(sample.state, sample.action).transpose() *
                fn.w_to_go(h + 1, sample.next_state);
    }
    art.weights[h] = llt.solve(target);

    fn.caps[h] = 2.0 * beta * (H - h) / std::sqrt(gamma);
#pragma omp parallel for schedule(static) if (S >= 64)
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const Eigen::VectorXd phi = model.phi(s, a).transpose();
        const double backed_up =
            phi.dot(art.weights[h]) + dynamics_bonus(llt, beta_p, phi);
        fn.b_to_go[h](s, a) =
            std::clamp(immediate_bonus[h](s, a) + backed_up, 0.0, fn.caps[h]);
      }
      fn.w_to_go(h, s) = policy.probs[h].row(s).dot(fn.b_to_go[h].row(s));
    }
  }
  return {std::move(fn), std::move(art)};
}

}  // namespace polsbe
