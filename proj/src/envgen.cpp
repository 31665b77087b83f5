#include "polsbe/envgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polsbe {

namespace {

Eigen::VectorXd simplex_draw(int n, RngStream& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.next_exponential();
  return v / v.sum();
}

// Tiny headroom so normalized vectors satisfy the constraints strictly even
// after floating-point division.
constexpr double kHeadroom = 1.0 + 1e-12;

}  // namespace

LinearMdpModel tabular_embed(const std::vector<Eigen::MatrixXd>& transition_tables,
                             int num_states, int num_actions, int initial_state) {
  const int S = num_states, A = num_actions;
  for (const auto& t : transition_tables) {
    if (t.rows() != S * A || t.cols() != S)
      throw std::invalid_argument("tabular_embed: table must be (S*A) x S");
    for (int i = 0; i < t.rows(); ++i) {
      if (t.row(i).minCoeff() < 0.0 || std::abs(t.row(i).sum() - 1.0) > 1e-12)
        throw std::invalid_argument("tabular_embed: table rows must be stochastic");
    }
  }
  LinearMdpModel m;
  m.num_states = S;
  m.num_actions = A;
  m.horizon = static_cast<int>(transition_tables.size()) + 1;
  m.feature_dim = S * A;
  m.initial_state = initial_state;
  m.features = Eigen::MatrixXd::Identity(S * A, S * A);
  for (const auto& t : transition_tables)
    m.transition_factors.push_back(t.transpose());  // psi_h(s')_{(s,a)} = P_h(s'|s,a)
  return m;
}

std::vector<Eigen::MatrixXd> random_tabular_dynamics(int num_states, int num_actions,
                                                     int horizon, RngStream& rng) {
  std::vector<Eigen::MatrixXd> tables;
  for (int h = 0; h + 1 < horizon; ++h) {
    Eigen::MatrixXd t(num_states * num_actions, num_states);
    for (int i = 0; i < t.rows(); ++i) t.row(i) = simplex_draw(num_states, rng).transpose();
    tables.push_back(std::move(t));
  }
  return tables;
}

LinearMdpModel random_linmdp(const GeneratorSpec& spec, RngStream& rng) {
  if (spec.kind == GeneratorSpec::Kind::tabular_onehot) {
    auto tables =
        random_tabular_dynamics(spec.num_states, spec.num_actions, spec.horizon, rng);
    return tabular_embed(tables, spec.num_states, spec.num_actions);
  }
  if (spec.feature_dim < 1) throw std::invalid_argument("random_linmdp: d >= 1 required");
  LinearMdpModel m;
  m.num_states = spec.num_states;
  m.num_actions = spec.num_actions;
  m.horizon = spec.horizon;
  m.feature_dim = spec.feature_dim;
  m.initial_state = 0;
  m.features.resize(spec.num_states * spec.num_actions, spec.feature_dim);
  for (int i = 0; i < m.features.rows(); ++i)
    m.features.row(i) = simplex_draw(spec.feature_dim, rng).transpose();
  for (int h = 0; h + 1 < spec.horizon; ++h) {
    Eigen::MatrixXd psi(spec.num_states, spec.feature_dim);
    for (int i = 0; i < spec.feature_dim; ++i)
      psi.col(i) = simplex_draw(spec.num_states, rng);  // mu_{h,i} in Delta_S
    m.transition_factors.push_back(std::move(psi));
  }
  return m;
}

Adversary::Adversary(AdversarySpec spec, const LinearMdpModel& model)
    : spec_(std::move(spec)), model_(&model) {
  if (!std::is_sorted(spec_.switch_episodes.begin(), spec_.switch_episodes.end()))
    throw std::invalid_argument("adversary: switch episodes must be sorted");
}

Eigen::VectorXd Adversary::normalized(Eigen::VectorXd c) const {
  const double grid_max = (model_->features * c).cwiseAbs().maxCoeff();
  const double norm = c.norm();
  const double sqrt_d = std::sqrt(static_cast<double>(model_->feature_dim));
  double scale = 1.0;
  if (spec_.normalization == AdversarySpec::Normalization::saturate) {
    if (grid_max > 0.0) scale = 1.0 / (grid_max * kHeadroom);
  } else if (grid_max > 1.0) {
    scale = 1.0 / (grid_max * kHeadroom);
  }
  if (norm * scale > sqrt_d) scale = sqrt_d / (norm * kHeadroom);
  return c * scale;
}

std::vector<Eigen::VectorXd> Adversary::profile(std::uint64_t id) const {
  RngStream rng = RngStream(spec_.seed).substream({stream_name("adversary.profile"), id});
  std::vector<Eigen::VectorXd> vecs(model_->horizon);
  for (auto& v : vecs) {
    v.resize(model_->feature_dim);
    for (int i = 0; i < v.size(); ++i) v(i) = 2.0 * rng.next_double() - 1.0;
  }
  return vecs;
}

std::vector<Eigen::VectorXd> Adversary::next_costs(
    int k, std::span<const DiscretePolicy> policy_history) const {
  if (static_cast<int>(policy_history.size()) != k + 1)
    throw std::invalid_argument("adversary: history must hold policies up to episode k");
  const int H = model_->horizon;
  std::vector<Eigen::VectorXd> costs(H);

  switch (spec_.kind) {
    case AdversarySpec::Kind::fixed_schedule: {
      for (int h = 0; h < H; ++h) {
        if (spec_.fixed_costs.empty()) {
          costs[h] = Eigen::VectorXd::Zero(model_->feature_dim);
        } else {
          const auto& row =
              spec_.fixed_costs[std::min<std::size_t>(k, spec_.fixed_costs.size() - 1)];
          costs[h] = normalized(row[h]);
        }
      }
      break;
    }
    case AdversarySpec::Kind::sinusoid: {
      const auto u = profile(0), v = profile(1);
      const double alpha =
          0.5 * (1.0 + std::sin(2.0 * M_PI * k / spec_.period + spec_.phase));
      for (int h = 0; h < H; ++h) costs[h] = normalized(alpha * u[h] + (1.0 - alpha) * v[h]);
      break;
    }
    case AdversarySpec::Kind::switching: {
      const auto it = std::upper_bound(spec_.switch_episodes.begin(),
                                       spec_.switch_episodes.end(), k);
      const auto seg =
          static_cast<std::uint64_t>(it - spec_.switch_episodes.begin());
      const auto u = profile(seg);
      for (int h = 0; h < H; ++h) costs[h] = normalized(u[h]);
      break;
    }
    case AdversarySpec::Kind::adaptive_occupancy: {
      const auto base = profile(0);
      const OccupancyTable occ = occupancy(*model_, policy_history.back());
      for (int h = 0; h < H; ++h) {
        // direction maximizing the agent's expected loss at step h
        Eigen::VectorXd dir = Eigen::VectorXd::Zero(model_->feature_dim);
        for (int s = 0; s < model_->num_states; ++s)
          for (int a = 0; a < model_->num_actions; ++a)
            dir += occ.d[h](s, a) * model_->phi(s, a).transpose();
        costs[h] = normalized((1.0 - spec_.adaptivity) * base[h] + spec_.adaptivity * dir);
      }
      break;
    }
  }
  return costs;
}

}  // namespace polsbe
