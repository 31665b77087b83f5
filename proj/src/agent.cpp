#include "polsbe/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace polsbe {

namespace {

constexpr std::uint64_t kRolloutStream = stream_name("agent.rollout");
constexpr std::uint64_t kSimStream = stream_name("agent.simulator");
constexpr std::uint64_t kResampleStream = stream_name("agent.mgr_resample");

struct EpisodeEstimates {
  std::vector<Eigen::MatrixXd> q_hat_tables;  // per h
  std::vector<Eigen::MatrixXd> b_to_go;       // per h
  bool resampled = false;
  bool empty_dataset = false;
};

/// Shared estimation pipeline: MGR per step, Q-hat, Q-bonus, then OLSPE.
EpisodeEstimates estimate_episode(const LinearMdpModel& model, const AgentConfig& config,
                                  const TransitionDataset& dataset, const Trajectory& traj,
                                  const DiscretePolicy& policy, const RngStream& root,
                                  int k) {
  const int H = model.horizon;
  EpisodeEstimates out;
  out.q_hat_tables.assign(H, Eigen::MatrixXd::Zero(model.num_states, model.num_actions));
  std::vector<Eigen::MatrixXd> bonus(H);

  if (dataset.total_samples() == 0) {
    // Can only happen in a degenerate partial block; the episode contributes
    // no loss estimate.
    out.empty_dataset = true;
    out.b_to_go.assign(H, Eigen::MatrixXd::Zero(model.num_states, model.num_actions));
    return out;
  }

  const long need = static_cast<long>(config.mgr_outer) * config.mgr_depth;
  for (int h = 0; h < H; ++h) {
    std::vector<Eigen::VectorXd> samples;
    samples.reserve(std::max<long>(need, dataset.steps[h].size()));
    for (const auto& s : dataset.steps[h])
      samples.push_back(model.phi(s.state, s.action).transpose());
    if (static_cast<long>(samples.size()) < need) {
      // Practical-mode datasets are smaller than M*N; bootstrap the full M*N
      // from the empirical distribution (guarantees are void).
      out.resampled = true;
      RngStream rng = root.substream({kResampleStream, static_cast<std::uint64_t>(k),
                                      static_cast<std::uint64_t>(h)});
      const int base = static_cast<int>(samples.size());
      std::vector<Eigen::VectorXd> augmented;
      augmented.reserve(need);
      for (long i = 0; i < need; ++i) augmented.push_back(samples[rng.next_index(base)]);
      samples = std::move(augmented);
    }
    const RegInvCovEstimate est = mgr(samples, config.mgr_params());
    auto [q_vec, q_table] = q_hat(model, est.sigma_plus, traj, h);
    (void)q_vec;
    out.q_hat_tables[h] = std::move(q_table);
    bonus[h] = q_bonus(model, est.sigma_plus, policy, h, config.q_bonus_factor);
  }

  auto [fn, art] = olspe(model, dataset, bonus, config.dynamics_bonus_factor,
                         config.q_bonus_factor, config.gamma, policy);
  (void)art;
  out.b_to_go = std::move(fn.b_to_go);
  return out;
}

void add_flag(std::vector<std::string>& flags, const std::string& f) {
  if (std::find(flags.begin(), flags.end(), f) == flags.end()) flags.push_back(f);
}

void finalize_report(const LinearMdpModel& model, const CostSchedule& realized,
                     const std::vector<DiscretePolicy>& played, RegretReport& report) {
  const int K = realized.episodes;
  const HindsightResult star = best_in_hindsight(model, realized);
  report.value_agent.resize(K);
  report.value_star.resize(K);
  report.cum_regret.resize(K);
  double cum = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto tables = realized.loss_tables(model, k);
    report.value_agent[k] = value_dp(model, played[k], tables).v(0, model.initial_state);
    report.value_star[k] =
        value_dp(model, star.policy, tables).v(0, model.initial_state);
    cum += report.value_agent[k] - report.value_star[k];
    report.cum_regret[k] = cum;
  }
}

}  // namespace

void AgentConfig::validate(int horizon) const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("agent config: ") + what);
  };
  require(learning_rate > 0.0, "eta > 0 required");
  require(gamma > 0.0, "gamma > 0 required");
  require(q_bonus_factor > 0.0, "beta > 0 required");
  require(dynamics_bonus_factor > 0.0, "beta_p > 0 required");
  require(block_half >= 1, "tau >= 1 required");
  require(mgr_outer >= 1 && mgr_depth >= 1, "M >= 1 and N >= 1 required");
  if (mode == Mode::theory) {
    require(learning_rate <= gamma / (2.0 * horizon) + 1e-12,
            "theory mode: eta <= gamma/(2H) required");
    require(mgr_variance <= 0.25, "theory mode: sigma <= 1/4 required");
    require(mgr_bias <= mgr_variance / 6.0, "theory mode: eps <= sigma/6 required");
    require(gamma < 0.5, "theory mode: gamma < 1/2 required");
  }
}

MgrParams AgentConfig::mgr_params() const {
  MgrParams p;
  p.outer_count = mgr_outer;
  p.series_depth = mgr_depth;
  p.gamma = gamma;
  p.guarantee_mode = (mode == Mode::theory);
  return p;
}

namespace {

AgentConfig tuned_config(int K, int d, int H, double c1, bool simulator) {
  if (K < 1) throw std::invalid_argument("tuned config: K >= 1 required");
  AgentConfig c;
  c.mode = AgentConfig::Mode::theory;
  c.variant = simulator ? AgentConfig::Variant::simulator : AgentConfig::Variant::blocking;
  c.gamma = simulator ? 2.0 / std::pow(static_cast<double>(d) * K, 2.0 / 3.0)
                      : std::pow(static_cast<double>(K), -2.0 / 7.0);
  if (c.gamma >= 0.5)
    throw std::invalid_argument("tuned config: gamma >= 1/2 at this K; "
                                "theory mode needs more episodes");
  c.mgr_variance = 0.25;
  c.mgr_bias = 1.0 / K;
  c.learning_rate = c.gamma / (2.0 * H);
  c.q_bonus_factor = 2.0 * H * std::sqrt(d * c.gamma);
  c.c1 = c1;
  c.dynamics_bonus_factor =
      10.0 * c1 * H * H * std::pow(static_cast<double>(d), 1.5) *
      std::log(28.0 * c1 * d * c.q_bonus_factor * K * H);
  const MgrParams mp = mgr_theory_params(d, c.gamma, c.mgr_variance, c.mgr_bias);
  c.mgr_outer = mp.outer_count;
  c.mgr_depth = mp.series_depth;
  c.block_half = static_cast<long>(mp.outer_count) * mp.series_depth *
                 (simulator ? static_cast<long>(d) * d : 1L);
  c.validate(H);
  return c;
}

}  // namespace

AgentConfig theorem1_config(int K, int d, int H, double c1) {
  return tuned_config(K, d, H, c1, /*simulator=*/false);
}

AgentConfig theorem2_config(int K, int d, int H, double c1) {
  return tuned_config(K, d, H, c1, /*simulator=*/true);
}

BlockSchedule BlockSchedule::make(int episodes, long half_len) {
  if (half_len < 1) throw std::invalid_argument("blocks: tau >= 1 required");
  BlockSchedule sched;
  sched.episodes = episodes;
  sched.half_len = half_len;
  int k = 0;
  while (k < episodes) {
    const long remaining = episodes - k;
    if (remaining >= 2 * half_len) {
      const int step = static_cast<int>(half_len);
      sched.blocks.push_back({k, k + step, k + 2 * step, false});
      k += 2 * step;
    } else {
      // ceil/floor halves of the trailing partial block
      const int first = static_cast<int>((remaining + 1) / 2);
      sched.blocks.push_back({k, k + first, episodes, true});
      k = episodes;
    }
  }
  return sched;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> q_hat(const LinearMdpModel& model,
                                                  const Eigen::MatrixXd& sigma_plus,
                                                  const Trajectory& traj, int h) {
  double suffix = 0.0;
  for (int t = h; t < static_cast<int>(traj.steps.size()); ++t) suffix += traj.steps[t].loss;
  const auto& step = traj.steps[h];
  Eigen::VectorXd q =
      sigma_plus * model.phi(step.state, step.action).transpose() * suffix;
  Eigen::VectorXd flat = model.features * q;
  Eigen::MatrixXd table =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>(flat.data(), model.num_states,
                                                       model.num_actions);
  return {std::move(q), std::move(table)};
}

Eigen::MatrixXd q_bonus(const LinearMdpModel& model, const Eigen::MatrixXd& sigma_plus,
                        const DiscretePolicy& policy, int h, double beta) {
  const int S = model.num_states, A = model.num_actions;
  Eigen::MatrixXd norms(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const Eigen::VectorXd phi = model.phi(s, a).transpose();
      norms(s, a) = std::sqrt(phi.dot(sigma_plus * phi));
    }
  Eigen::MatrixXd b(S, A);
  for (int s = 0; s < S; ++s) {
    const double averaged = policy.probs[h].row(s).dot(norms.row(s));
    for (int a = 0; a < A; ++a) b(s, a) = beta * (norms(s, a) + averaged);
  }
  return b;
}

SoftmaxPolicy policy_update_blocking(const SoftmaxPolicy& previous,
                                     const std::vector<Eigen::MatrixXd>& block_loss) {
  return previous.accumulated(block_loss);
}

RegretReport run_polsbe(const LinearMdpModel& model, const Adversary& adversary, int K,
                        const AgentConfig& config, std::uint64_t seed, bool diagnostics,
                        std::vector<EpisodeArtifacts>* artifacts_out,
                        CostSchedule* realized_out) {
  const auto t0 = std::chrono::steady_clock::now();
  if (config.variant != AgentConfig::Variant::blocking)
    throw std::invalid_argument("run_polsbe: blocking variant config required");
  config.validate(model.horizon);
  const int H = model.horizon, S = model.num_states, A = model.num_actions;
  const RngStream root{seed};

  RegretReport report;
  if (config.mode == AgentConfig::Mode::theory) {
    const double dlogd = model.feature_dim * std::max(1.0, std::log(model.feature_dim));
    if (K < dlogd * dlogd) add_flag(report.flags, "below-theorem-scale");
  } else {
    add_flag(report.flags, "guarantee-void:practical-params");
  }

  SoftmaxPolicy policy = SoftmaxPolicy::uniform(H, S, A, config.learning_rate);
  std::vector<DiscretePolicy> history;
  history.reserve(K);
  CostSchedule realized;
  realized.episodes = K;
  realized.horizon = H;
  realized.costs.resize(K);
  std::vector<Trajectory> trajectories(K);
  if (artifacts_out) artifacts_out->assign(diagnostics ? K : 0, EpisodeArtifacts{});

  const BlockSchedule sched = BlockSchedule::make(K, config.block_half);
  for (const auto& block : sched.blocks) {
    if (block.partial) add_flag(report.flags, "partial-final-block");
    const DiscretePolicy table = policy.table();
    for (int k = block.begin; k < block.end; ++k) {
      history.push_back(table);
      realized.costs[k] = adversary.next_costs(k, history);
      RngStream rng = root.substream({kRolloutStream, static_cast<std::uint64_t>(k)});
      trajectories[k] = rollout(model, table, realized.costs[k], rng);
      ++report.env_rollouts;
    }

    // Estimation: every episode uses the opposite half's rollouts. The
    // per-episode pipelines are independent; the block loss reduces in k
    // order afterwards, so the result is thread-count invariant.
    const int block_len = block.end - block.begin;
    std::vector<EpisodeEstimates> estimates(block_len);
    std::string error;
#pragma omp parallel for schedule(dynamic) if (block_len > 1)
    for (int idx = 0; idx < block_len; ++idx) {
      try {
        const int k = block.begin + idx;
        const bool first_half = k < block.mid;
        const int src_begin = first_half ? block.mid : block.begin;
        const int src_end = first_half ? block.end : block.mid;
        TransitionDataset dataset(H);
        if (src_begin == src_end) {
          // Opposite half empty (size-1 partial block): reuse the same
          // half's other episodes; with none available the dataset stays
          // empty and the episode contributes no estimate.
          for (int i = block.begin; i < block.end; ++i)
            if (i != k) dataset.add_trajectory(trajectories[i], i);
        } else {
          for (int i = src_begin; i < src_end; ++i)
            dataset.add_trajectory(trajectories[i], i);
        }
        if (!dataset.independent_of(k))
          throw std::logic_error("blocking: dataset touches its own episode");
        estimates[idx] =
            estimate_episode(model, config, dataset, trajectories[k], table, root, k);
      } catch (const std::exception& e) {
#pragma omp critical
        if (error.empty()) error = e.what();
      }
    }
    if (!error.empty()) throw std::runtime_error("run_polsbe: " + error);

    std::vector<Eigen::MatrixXd> block_loss(H, Eigen::MatrixXd::Zero(S, A));
    for (int idx = 0; idx < block_len; ++idx) {
      const int k = block.begin + idx;
      auto& est = estimates[idx];
      if (est.resampled) add_flag(report.flags, "mgr-resampled");
      if (est.empty_dataset) add_flag(report.flags, "empty-estimation-dataset");
      if (block.partial && (block.end - block.mid == 0 || block.mid - block.begin == 0))
        add_flag(report.flags, "bias-unsafe-half-reuse");
      for (int h = 0; h < H; ++h)
        block_loss[h] += (est.q_hat_tables[h] - est.b_to_go[h]) / config.block_half;
      if (diagnostics && artifacts_out)
        (*artifacts_out)[k] = {std::move(est.q_hat_tables), std::move(est.b_to_go), table};
    }
    policy = policy_update_blocking(policy, block_loss);
  }

  finalize_report(model, realized, history, report);
  if (realized_out) *realized_out = std::move(realized);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

RegretReport run_polsbe_simulator(const LinearMdpModel& model, const Adversary& adversary,
                                  int K, const AgentConfig& config, std::uint64_t seed,
                                  bool diagnostics,
                                  std::vector<EpisodeArtifacts>* artifacts_out,
                                  CostSchedule* realized_out) {
  const auto t0 = std::chrono::steady_clock::now();
  if (config.variant != AgentConfig::Variant::simulator)
    throw std::invalid_argument("run_polsbe_simulator: simulator variant config required");
  config.validate(model.horizon);
  const int H = model.horizon, S = model.num_states, A = model.num_actions;
  const RngStream root{seed};

  RegretReport report;
  if (config.mode == AgentConfig::Mode::practical)
    add_flag(report.flags, "guarantee-void:practical-params");

  SoftmaxPolicy policy = SoftmaxPolicy::uniform(H, S, A, config.learning_rate);
  std::vector<DiscretePolicy> history;
  history.reserve(K);
  CostSchedule realized;
  realized.episodes = K;
  realized.horizon = H;
  realized.costs.resize(K);
  if (artifacts_out) artifacts_out->assign(diagnostics ? K : 0, EpisodeArtifacts{});

  const std::vector<Eigen::VectorXd> zero_costs(H, Eigen::VectorXd::Zero(model.feature_dim));
  for (int k = 0; k < K; ++k) {
    const DiscretePolicy table = policy.table();
    history.push_back(table);
    realized.costs[k] = adversary.next_costs(k, history);
    RngStream rng = root.substream({kRolloutStream, static_cast<std::uint64_t>(k)});
    const Trajectory traj = rollout(model, table, realized.costs[k], rng);
    ++report.env_rollouts;

    // tau fresh simulator rollouts of pi^k; the simulator takes a policy and
    // returns a trajectory from s1 (never arbitrary (s,a) resets).
    TransitionDataset dataset(H);
    for (long r = 0; r < config.block_half; ++r) {
      RngStream sim = root.substream({kSimStream, static_cast<std::uint64_t>(k),
                                      static_cast<std::uint64_t>(r)});
      dataset.add_trajectory(rollout(model, table, zero_costs, sim), k,
                             /*from_simulator=*/true);
      ++report.sim_rollouts;
    }
    if (!dataset.fresh_for(k))
      throw std::logic_error("simulator: dataset must be fresh per episode");

    EpisodeEstimates est = estimate_episode(model, config, dataset, traj, table, root, k);
    if (est.resampled) add_flag(report.flags, "mgr-resampled");
    std::vector<Eigen::MatrixXd> loss(H);
    for (int h = 0; h < H; ++h) loss[h] = est.q_hat_tables[h] - est.b_to_go[h];
    if (diagnostics && artifacts_out)
      (*artifacts_out)[k] = {std::move(est.q_hat_tables), std::move(est.b_to_go), table};
    policy = policy.accumulated(loss);
  }

  finalize_report(model, realized, history, report);
  if (realized_out) *realized_out = std::move(realized);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

DecompositionSeries regret_decomposition_diagnostic(
    const LinearMdpModel& model, const CostSchedule& realized,
    const std::vector<EpisodeArtifacts>& artifacts, const HindsightResult& hindsight) {
  const int K = realized.episodes, H = model.horizon, S = model.num_states;
  if (static_cast<int>(artifacts.size()) != K)
    throw std::invalid_argument("decomposition: artifacts missing for some episodes");
  const OccupancyTable occ_star = occupancy(model, hindsight.policy);

  DecompositionSeries series;
  series.bias1.assign(K, 0.0);
  series.bias2.assign(K, 0.0);
  series.omd.assign(K, 0.0);
  series.exploration.assign(K, 0.0);
  for (int k = 0; k < K; ++k) {
    const auto loss = realized.loss_tables(model, k);
    const ValueTables truth = value_dp(model, artifacts[k].policy, loss);
    for (int h = 0; h < H; ++h) {
      for (int s = 0; s < S; ++s) {
        const double weight = occ_star.d[h].row(s).sum();  // d_h^*(s)
        if (weight == 0.0) continue;
        const auto pi_k = artifacts[k].policy.probs[h].row(s);
        const auto pi_star = hindsight.policy.probs[h].row(s);
        const auto q_true = truth.q[h].row(s);
        const auto q_est = artifacts[k].q_hat[h].row(s);
        const auto b_togo = artifacts[k].b_to_go[h].row(s);
        series.bias1[k] += weight * (q_true - q_est).dot(pi_k);
        series.bias2[k] += weight * (q_est - q_true).dot(pi_star);
        series.omd[k] += weight * (q_est - b_togo).dot(pi_k - pi_star);
        series.exploration[k] += weight * b_togo.dot(pi_k - pi_star);
      }
    }
  }
  return series;
}

}  // namespace polsbe
