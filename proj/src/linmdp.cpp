#include "polsbe/linmdp.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace polsbe {

namespace {

std::string loc(int h, int s, int a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "h=%d s=%d a=%d", h, s, a);
  return buf;
}

}  // namespace

std::vector<Eigen::MatrixXd> CostSchedule::loss_tables(const LinearMdpModel& model,
                                                       int k) const {
  std::vector<Eigen::MatrixXd> tables(horizon);
  for (int h = 0; h < horizon; ++h) {
    Eigen::VectorXd flat = model.features * costs[k][h];  // (S*A)
    tables[h] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                               Eigen::RowMajor>>(
        flat.data(), model.num_states, model.num_actions);
  }
  return tables;
}

DiscretePolicy DiscretePolicy::uniform(int horizon, int num_states, int num_actions) {
  DiscretePolicy p;
  p.probs.assign(horizon,
                 Eigen::MatrixXd::Constant(num_states, num_actions, 1.0 / num_actions));
  return p;
}

DiscretePolicy DiscretePolicy::deterministic(const std::vector<std::vector<int>>& actions,
                                             int num_actions) {
  DiscretePolicy p;
  p.probs.reserve(actions.size());
  for (const auto& row : actions) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<int>(row.size()), num_actions);
    for (int s = 0; s < static_cast<int>(row.size()); ++s) m(s, row[s]) = 1.0;
    p.probs.push_back(std::move(m));
  }
  return p;
}

SoftmaxPolicy::SoftmaxPolicy(int horizon, int num_states, int num_actions,
                             double learning_rate)
    : learning_rate_(learning_rate),
      logits_(horizon, Eigen::MatrixXd::Zero(num_states, num_actions)) {}

Eigen::VectorXd SoftmaxPolicy::action_probabilities(int h, int s) const {
  Eigen::VectorXd scaled = -learning_rate_ * logits_[h].row(s).transpose();
  Eigen::VectorXd w = (scaled.array() - scaled.maxCoeff()).exp();
  return w / w.sum();
}

DiscretePolicy SoftmaxPolicy::table() const {
  DiscretePolicy p;
  p.probs.reserve(logits_.size());
  for (int h = 0; h < static_cast<int>(logits_.size()); ++h) {
    Eigen::MatrixXd m(logits_[h].rows(), logits_[h].cols());
    for (int s = 0; s < logits_[h].rows(); ++s)
      m.row(s) = action_probabilities(h, s).transpose();
    p.probs.push_back(std::move(m));
  }
  return p;
}

SoftmaxPolicy SoftmaxPolicy::accumulated(const std::vector<Eigen::MatrixXd>& loss_tables) const {
  if (loss_tables.size() != logits_.size())
    throw std::invalid_argument("accumulated: horizon mismatch");
  SoftmaxPolicy next = *this;
  for (std::size_t h = 0; h < logits_.size(); ++h) {
    if (!loss_tables[h].allFinite())
      throw std::invalid_argument("accumulated: non-finite loss table");
    next.logits_[h] += loss_tables[h];
  }
  return next;
}

std::vector<ModelViolation> validate_model(const LinearMdpModel& model, double tol,
                                           int sign_samples) {
  std::vector<ModelViolation> report;
  const int S = model.num_states, A = model.num_actions, H = model.horizon;
  const double sqrt_d = std::sqrt(static_cast<double>(model.feature_dim));

  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double n = model.phi(s, a).norm();
      if (n > 1.0 + tol)
        report.push_back({"feature-norm ||phi|| <= 1", loc(-1, s, a), n - 1.0});
    }

  for (int h = 0; h + 1 < H; ++h) {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        Eigen::VectorXd p = model.transition_factors[h] * model.phi(s, a).transpose();
        const double row_sum = p.sum();
        if (std::abs(row_sum - 1.0) > tol)
          report.push_back({"transition row-sum = 1", loc(h, s, a), std::abs(row_sum - 1.0)});
        const double min_p = p.minCoeff();
        if (min_p < -tol)
          report.push_back({"transition nonnegative", loc(h, s, a), -min_p});
      }

    // ||sum_s' psi_h(s') f(s')|| <= sqrt(d), spot-checked on sign vectors.
    auto check_f = [&](const Eigen::VectorXd& f, const char* what) {
      const double n = (model.transition_factors[h].transpose() * f).norm();
      if (n > sqrt_d + tol)
        report.push_back({what, loc(h, -1, -1), n - sqrt_d});
    };
    check_f(Eigen::VectorXd::Ones(S), "psi-norm bound (f == 1)");
    RngStream rng(stream_name("validate_model.signs") ^ static_cast<std::uint64_t>(h));
    for (int i = 0; i < sign_samples; ++i) {
      Eigen::VectorXd f(S);
      for (int s = 0; s < S; ++s) f(s) = rng.next_u64() & 1 ? 1.0 : -1.0;
      check_f(f, "psi-norm bound (sampled sign vector)");
    }
  }
  return report;
}

Eigen::VectorXd transition_distribution(const LinearMdpModel& model, int h, int s, int a) {
  if (h < 0 || h + 1 >= model.horizon)
    throw std::out_of_range("transition_distribution: step has no successor");
  return model.transition_factors[h] * model.phi(s, a).transpose();
}

Trajectory rollout(const LinearMdpModel& model, const DiscretePolicy& policy,
                   std::span<const Eigen::VectorXd> episode_costs, RngStream& rng) {
  Trajectory traj;
  traj.steps.reserve(model.horizon);
  int s = model.initial_state;
  for (int h = 0; h < model.horizon; ++h) {
    Eigen::VectorXd pi = policy.probs[h].row(s).transpose();
    const int a = rng.sample(std::span<const double>(pi.data(), pi.size()));
    const double loss = model.phi(s, a).dot(episode_costs[h]);
    traj.steps.push_back({s, a, loss});
    if (h + 1 < model.horizon) {
      Eigen::VectorXd p = transition_distribution(model, h, s, a);
      s = rng.sample(std::span<const double>(p.data(), p.size()));
    }
  }
  return traj;
}

ValueTables value_dp(const LinearMdpModel& model, const DiscretePolicy& policy,
                     const std::vector<Eigen::MatrixXd>& loss_tables) {
  const int S = model.num_states, A = model.num_actions, H = model.horizon;
  ValueTables out;
  out.v = Eigen::MatrixXd::Zero(H + 1, S);
  out.q.assign(H, Eigen::MatrixXd::Zero(S, A));
  for (int h = H - 1; h >= 0; --h) {
    Eigen::VectorXd v_next = out.v.row(h + 1).transpose();
    // expected continuation per (s,a): phi' (psi' v_next)
    Eigen::VectorXd cont = Eigen::VectorXd::Zero(S * A);
    if (h + 1 < H) cont = model.features * (model.transition_factors[h].transpose() * v_next);
#pragma omp parallel for schedule(static) if (S >= 64)
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a)
        out.q[h](s, a) = loss_tables[h](s, a) + cont(model.sa_index(s, a));
      out.v(h, s) = policy.probs[h].row(s).dot(out.q[h].row(s));
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
      out.d[h].row(s) = state_occ(s) * policy.probs[h].row(s);
    if (h + 1 < H) {
      Eigen::VectorXd next = Eigen::VectorXd::Zero(S);
      // d_{h+1}(s') = sum_{s,a} d_h(s,a) P_h(s'|s,a); flatten d_h row-major over (s,a)
      Eigen::VectorXd flat(S * A);
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) flat(model.sa_index(s, a)) = out.d[h](s, a);
      next = model.transition_factors[h] * (model.features.transpose() * flat);
      state_occ = next;
    }
  }
  return out;
}

Eigen::VectorXd q_vector(const LinearMdpModel& model, const DiscretePolicy& policy,
                         std::span<const Eigen::VectorXd> episode_costs, int h) {
  CostSchedule one;
  one.episodes = 1;
  one.horizon = model.horizon;
  one.costs.assign(1, std::vector<Eigen::VectorXd>(episode_costs.begin(), episode_costs.end()));
  const ValueTables vt = value_dp(model, policy, one.loss_tables(model, 0));
  Eigen::VectorXd q = episode_costs[h];
  if (h + 1 < model.horizon)
    q += model.transition_factors[h].transpose() * vt.v.row(h + 1).transpose();
  return q;
}

HindsightResult best_in_hindsight(const LinearMdpModel& model, const CostSchedule& schedule) {
  const int S = model.num_states, A = model.num_actions, H = model.horizon;
  // Aggregated loss over episodes; a policy's aggregated value equals the sum
  // of its per-episode values because dynamics are shared.
  std::vector<Eigen::MatrixXd> agg(H, Eigen::MatrixXd::Zero(S, A));
  for (int k = 0; k < schedule.episodes; ++k) {
    auto tables = schedule.loss_tables(model, k);
    for (int h = 0; h < H; ++h) agg[h] += tables[h];
  }
  HindsightResult res;
  res.actions.assign(H, std::vector<int>(S, 0));
  Eigen::VectorXd v_next = Eigen::VectorXd::Zero(S);
  for (int h = H - 1; h >= 0; --h) {
    Eigen::VectorXd cont = Eigen::VectorXd::Zero(S * A);
    if (h + 1 < H) cont = model.features * (model.transition_factors[h].transpose() * v_next);
    Eigen::VectorXd v_here(S);
    for (int s = 0; s < S; ++s) {
      double best = std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < A; ++a) {
        const double q = agg[h](s, a) + cont(model.sa_index(s, a));
        if (q < best) {  // strict: ties stay at the lowest action index
          best = q;
          best_a = a;
        }
      }
      res.actions[h][s] = best_a;
      v_here(s) = best;
    }
    v_next = v_here;
  }
  res.policy = DiscretePolicy::deterministic(res.actions, A);
  res.total_value = v_next(model.initial_state);
  return res;
}

std::string serialize_model(const LinearMdpModel& model) {
  nlohmann::json j;
  j["S"] = model.num_states;
  j["A"] = model.num_actions;
  j["H"] = model.horizon;
  j["d"] = model.feature_dim;
  j["s1"] = model.initial_state;
  auto& phi = j["phi"] = nlohmann::json::array();
  for (int i = 0; i < model.features.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < model.features.cols(); ++c) row.push_back(model.features(i, c));
    phi.push_back(std::move(row));
  }
  auto& psi = j["psi"] = nlohmann::json::array();
  for (const auto& m : model.transition_factors) {
    nlohmann::json layer = nlohmann::json::array();
    for (int s = 0; s < m.rows(); ++s) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < m.cols(); ++c) row.push_back(m(s, c));
      layer.push_back(std::move(row));
    }
    psi.push_back(std::move(layer));
  }
  return j.dump(2);
}

LinearMdpModel deserialize_model(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  LinearMdpModel model;
  model.num_states = j.at("S").get<int>();
  model.num_actions = j.at("A").get<int>();
  model.horizon = j.at("H").get<int>();
  model.feature_dim = j.at("d").get<int>();
  model.initial_state = j.at("s1").get<int>();
  const auto& phi = j.at("phi");
  if (static_cast<int>(phi.size()) != model.num_states * model.num_actions)
    throw std::invalid_argument("model: phi must have S*A rows");
  model.features.resize(model.num_states * model.num_actions, model.feature_dim);
  for (int i = 0; i < model.features.rows(); ++i)
    for (int c = 0; c < model.feature_dim; ++c)
      model.features(i, c) = phi.at(i).at(c).get<double>();
  const auto& psi = j.at("psi");
  if (static_cast<int>(psi.size()) != model.horizon - 1)
    throw std::invalid_argument("model: psi must have H-1 layers");
  for (const auto& layer : psi) {
    Eigen::MatrixXd m(model.num_states, model.feature_dim);
    for (int s = 0; s < model.num_states; ++s)
      for (int c = 0; c < model.feature_dim; ++c) m(s, c) = layer.at(s).at(c).get<double>();
    model.transition_factors.push_back(std::move(m));
  }
  auto report = validate_model(model);
  if (!report.empty())
    throw std::invalid_argument("model: failed validation: " + report.front().constraint +
                                " at " + report.front().location);
  return model;
}

}  // namespace polsbe
