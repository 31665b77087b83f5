#include <doctest.h>

#include <cmath>

#include "polsbe/envgen.hpp"
#include "polsbe/linmdp.hpp"
#include "polsbe/reference.hpp"

using namespace polsbe;

namespace {

LinearMdpModel two_state_chain() {
  // tabular: P(s2|s1,a) = 0.7, P(s1|s1,a) = 0.3; from s2 stay put
  Eigen::MatrixXd t(2 * 2, 2);
  t << 0.3, 0.7, 0.3, 0.7, 0.0, 1.0, 0.0, 1.0;
  return tabular_embed({t, t}, 2, 2);
}

LinearMdpModel random_model(int S, int A, int H, int d, std::uint64_t seed) {
  GeneratorSpec gs;
  gs.num_states = S;
  gs.num_actions = A;
  gs.horizon = H;
  gs.feature_dim = d;
  RngStream rng(seed);
  return random_linmdp(gs, rng);
}

DiscretePolicy random_policy(const LinearMdpModel& m, std::uint64_t seed) {
  RngStream rng(seed);
  DiscretePolicy p;
  p.probs.assign(m.horizon, Eigen::MatrixXd::Zero(m.num_states, m.num_actions));
  for (auto& mat : p.probs)
    for (int s = 0; s < m.num_states; ++s) {
      Eigen::VectorXd w(m.num_actions);
      for (int a = 0; a < m.num_actions; ++a) w(a) = rng.next_exponential();
      mat.row(s) = (w / w.sum()).transpose();
    }
  return p;
}

std::vector<Eigen::MatrixXd> random_losses(const LinearMdpModel& m, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<Eigen::MatrixXd> t(m.horizon, Eigen::MatrixXd::Zero(m.num_states, m.num_actions));
  for (auto& mat : t)
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a) mat(s, a) = 2.0 * rng.next_double() - 1.0;
  return t;
}

/// Brute-force expected loss: enumerate every (s,a) trajectory with its
/// probability. Independent of the DP recursion.
double enumerate_expected_loss(const LinearMdpModel& m, const DiscretePolicy& pi,
                               const std::vector<Eigen::MatrixXd>& losses) {
  struct Node {
    int state;
    double prob;
    double loss;
  };
  std::vector<Node> frontier{{m.initial_state, 1.0, 0.0}};
  for (int h = 0; h < m.horizon; ++h) {
    std::vector<Node> next;
    for (const auto& node : frontier)
      for (int a = 0; a < m.num_actions; ++a) {
        const double pa = pi.probs[h](node.state, a);
        if (pa == 0.0) continue;
        const double step_loss = node.loss + losses[h](node.state, a);
        if (h + 1 == m.horizon) {
          next.push_back({node.state, node.prob * pa, step_loss});
        } else {
          const Eigen::VectorXd p = transition_distribution(m, h, node.state, a);
          for (int sn = 0; sn < m.num_states; ++sn)
            if (p(sn) > 0.0) next.push_back({sn, node.prob * pa * p(sn), step_loss});
        }
      }
    frontier = std::move(next);
  }
  double total = 0.0;
  for (const auto& node : frontier) total += node.prob * node.loss;
  return total;
}

}  // namespace

TEST_CASE("validate_model: one-hot embedding of a stochastic matrix is valid") {
  CHECK(validate_model(two_state_chain()).empty());
}

TEST_CASE("validate_model: flags scaled psi row and oversized feature") {
  LinearMdpModel m = two_state_chain();
  m.transition_factors[0](1, 0) *= 1.1;
  auto report = validate_model(m);
  REQUIRE(!report.empty());
  bool found = false;
  for (const auto& v : report) found = found || v.constraint == "transition row-sum = 1";
  CHECK(found);

  LinearMdpModel m2 = two_state_chain();
  m2.features(0, 0) = 1.2;
  report = validate_model(m2);
  bool nrm = false;
  for (const auto& v : report) nrm = nrm || v.constraint.find("feature-norm") == 0;
  CHECK(nrm);
}

TEST_CASE("transition_distribution: tabular identity and mixture") {
  const LinearMdpModel m = two_state_chain();
  const Eigen::VectorXd p = transition_distribution(m, 0, 0, 0);
  CHECK(p(0) == doctest::Approx(0.3));
  CHECK(p(1) == doctest::Approx(0.7));
  CHECK_THROWS_AS(transition_distribution(m, 2, 0, 0), std::out_of_range);

  // d=2 mixture: phi = (0.5, 0.5), mu_1 = e_1, mu_2 = e_2
  LinearMdpModel mix;
  mix.num_states = 2;
  mix.num_actions = 1;
  mix.horizon = 2;
  mix.feature_dim = 2;
  mix.features.resize(2, 2);
  mix.features << 0.5, 0.5, 0.5, 0.5;
  Eigen::MatrixXd psi(2, 2);
  psi << 1.0, 0.0, 0.0, 1.0;
  mix.transition_factors = {psi};
  const Eigen::VectorXd q = transition_distribution(mix, 0, 0, 0);
  CHECK(q(0) == doctest::Approx(0.5));
  CHECK(q(1) == doctest::Approx(0.5));
}

TEST_CASE("transition_distribution: matches brute-force dot products") {
  const LinearMdpModel m = random_model(4, 3, 3, 3, 11);
  for (int h = 0; h + 1 < m.horizon; ++h)
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a) {
        const Eigen::VectorXd p = transition_distribution(m, h, s, a);
        for (int sn = 0; sn < m.num_states; ++sn) {
          double dot = 0.0;
          for (int c = 0; c < m.feature_dim; ++c)
            dot += m.features(m.sa_index(s, a), c) * m.transition_factors[h](sn, c);
          CHECK(p(sn) == doctest::Approx(dot).epsilon(1e-12));
        }
      }
}

TEST_CASE("value_dp: H=1 averages the loss row; zero losses give zero tables") {
  const LinearMdpModel m = random_model(3, 2, 1, 2, 3);
  const DiscretePolicy pi = random_policy(m, 4);
  auto losses = random_losses(m, 5);
  const ValueTables vt = value_dp(m, pi, losses);
  for (int s = 0; s < m.num_states; ++s)
    CHECK(vt.v(0, s) == doctest::Approx(pi.probs[0].row(s).dot(losses[0].row(s))));

  std::vector<Eigen::MatrixXd> zeros(m.horizon,
                                     Eigen::MatrixXd::Zero(m.num_states, m.num_actions));
  const ValueTables zt = value_dp(m, pi, zeros);
  CHECK(zt.v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("value_dp: matches trajectory enumeration on a 3-state H=3 instance") {
  const LinearMdpModel m = random_model(3, 2, 3, 3, 17);
  const DiscretePolicy pi = random_policy(m, 18);
  const auto losses = random_losses(m, 19);
  const ValueTables vt = value_dp(m, pi, losses);
  const double oracle = enumerate_expected_loss(m, pi, losses);
  CHECK(vt.v(0, m.initial_state) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("value_dp: parallel kernel equals serial reference") {
  const LinearMdpModel m = random_model(5, 3, 4, 4, 23);
  const DiscretePolicy pi = random_policy(m, 24);
  const auto losses = random_losses(m, 25);
  const ValueTables a = value_dp(m, pi, losses);
  const ValueTables b = ref::value_dp(m, pi, losses);
  CHECK((a.v - b.v).cwiseAbs().maxCoeff() < 1e-12);
  for (int h = 0; h < m.horizon; ++h)
    CHECK((a.q[h] - b.q[h]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("occupancy: deterministic chain gives point masses; duality holds") {
  // deterministic cycle: action 0 moves 0->1->2->0
  const int S = 3, A = 2;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(S * A, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) t(s * A + a, a == 0 ? (s + 1) % S : s) = 1.0;
  const LinearMdpModel m = tabular_embed({t, t}, S, A);
  const DiscretePolicy det = DiscretePolicy::deterministic(
      {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}, A);
  const OccupancyTable occ = occupancy(m, det);
  CHECK(occ.d[0](0, 0) == doctest::Approx(1.0));
  CHECK(occ.d[1](1, 0) == doctest::Approx(1.0));
  CHECK(occ.d[2](2, 0) == doctest::Approx(1.0));

  const LinearMdpModel rm = random_model(4, 3, 4, 3, 31);
  const DiscretePolicy pi = random_policy(rm, 32);
  const auto losses = random_losses(rm, 33);
  const OccupancyTable ro = occupancy(rm, pi);
  for (int h = 0; h < rm.horizon; ++h) CHECK(ro.d[h].sum() == doctest::Approx(1.0));
  double dual = 0.0;
  for (int h = 0; h < rm.horizon; ++h) dual += ro.d[h].cwiseProduct(losses[h]).sum();
  CHECK(dual == doctest::Approx(value_dp(rm, pi, losses).v(0, rm.initial_state))
                    .epsilon(1e-12));

  const OccupancyTable rr = ref::occupancy(rm, pi);
  for (int h = 0; h < rm.horizon; ++h)
    CHECK((ro.d[h] - rr.d[h]).cwiseAbs().maxCoeff() < 1e-12);

  // forward consistency: state mass at h+1 equals the pushforward of d_h
  for (int h = 0; h + 1 < rm.horizon; ++h)
    for (int sn = 0; sn < rm.num_states; ++sn) {
      double push = 0.0;
      for (int s = 0; s < rm.num_states; ++s)
        for (int a = 0; a < rm.num_actions; ++a)
          push += ro.d[h](s, a) * transition_distribution(rm, h, s, a)(sn);
      CHECK(ro.d[h + 1].row(sn).sum() == doctest::Approx(push).epsilon(1e-12));
    }

  // d_1 is supported on the initial state
  for (int s = 0; s < rm.num_states; ++s)
    if (s != rm.initial_state) CHECK(ro.d[0].row(s).sum() == 0.0);
}

TEST_CASE("occupancy: uniform policy on a symmetric 2-state model stays uniform") {
  // both actions map either state to uniform next-state
  Eigen::MatrixXd t(2 * 2, 2);
  t << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  const LinearMdpModel m = tabular_embed({t, t}, 2, 2);
  const OccupancyTable occ = occupancy(m, DiscretePolicy::uniform(3, 2, 2));
  for (int h = 1; h < 3; ++h)
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) CHECK(occ.d[h](s, a) == doctest::Approx(0.25));
}

TEST_CASE("rollout: deterministic instances and empirical frequencies") {
  const int S = 3, A = 2, H = 3;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(S * A, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) t(s * A + a, a == 0 ? (s + 1) % S : s) = 1.0;
  const LinearMdpModel m = tabular_embed({t, t}, S, A);
  const DiscretePolicy det =
      DiscretePolicy::deterministic({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}, A);
  const std::vector<Eigen::VectorXd> costs(H, Eigen::VectorXd::Zero(m.feature_dim));
  for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
    RngStream rng(seed);
    const Trajectory traj = rollout(m, det, costs, rng);
    REQUIRE(traj.steps.size() == H);
    CHECK(traj.steps[0].state == 0);
    CHECK(traj.steps[1].state == 1);
    CHECK(traj.steps[2].state == 2);
  }

  // H=1: single record
  const LinearMdpModel m1 = random_model(3, 2, 1, 2, 41);
  RngStream rng1(5);
  const std::vector<Eigen::VectorXd> c1(1, Eigen::VectorXd::Zero(2));
  CHECK(rollout(m1, random_policy(m1, 42), c1, rng1).steps.size() == 1);

  // empirical state-visit frequencies vs occupancy within 3 sigma
  const LinearMdpModel rm = random_model(3, 2, 3, 3, 51);
  const DiscretePolicy pi = random_policy(rm, 52);
  const OccupancyTable occ = occupancy(rm, pi);
  const int trials = 100000;
  std::vector<Eigen::MatrixXd> counts(rm.horizon,
                                      Eigen::MatrixXd::Zero(rm.num_states, rm.num_actions));
  const std::vector<Eigen::VectorXd> costs2(rm.horizon, Eigen::VectorXd::Zero(3));
  RngStream root(53);
  for (int i = 0; i < trials; ++i) {
    RngStream rng = root.substream(i);
    const Trajectory traj = rollout(rm, pi, costs2, rng);
    for (int h = 0; h < rm.horizon; ++h) counts[h](traj.steps[h].state, traj.steps[h].action) += 1.0;
  }
  for (int h = 0; h < rm.horizon; ++h)
    for (int s = 0; s < rm.num_states; ++s)
      for (int a = 0; a < rm.num_actions; ++a) {
        const double p = occ.d[h](s, a);
        const double sigma = std::sqrt(std::max(p * (1 - p) / trials, 1e-12));
        CHECK(std::abs(counts[h](s, a) / trials - p) <= 3.5 * sigma + 1e-9);
      }
}

TEST_CASE("rollout: losses equal phi' c along the trajectory") {
  const LinearMdpModel m = random_model(3, 2, 3, 3, 61);
  const DiscretePolicy pi = random_policy(m, 62);
  RngStream rng(63);
  std::vector<Eigen::VectorXd> costs(m.horizon);
  for (auto& c : costs) {
    c.resize(m.feature_dim);
    for (int i = 0; i < c.size(); ++i) c(i) = 2.0 * rng.next_double() - 1.0;
  }
  RngStream rr(64);
  const Trajectory traj = rollout(m, pi, costs, rr);
  for (int h = 0; h < m.horizon; ++h)
    CHECK(traj.steps[h].loss ==
          doctest::Approx(m.phi(traj.steps[h].state, traj.steps[h].action).dot(costs[h])));
}

TEST_CASE("q_vector: terminal step returns the cost vector; reproduces Q tables") {
  const LinearMdpModel m = random_model(4, 2, 3, 3, 71);
  const DiscretePolicy pi = random_policy(m, 72);
  RngStream rng(73);
  std::vector<Eigen::VectorXd> costs(m.horizon);
  for (auto& c : costs) {
    c.resize(m.feature_dim);
    for (int i = 0; i < c.size(); ++i) c(i) = 2.0 * rng.next_double() - 1.0;
  }
  const Eigen::VectorXd q_last = q_vector(m, pi, costs, m.horizon - 1);
  CHECK((q_last - costs[m.horizon - 1]).cwiseAbs().maxCoeff() < 1e-15);

  CostSchedule sched;
  sched.episodes = 1;
  sched.horizon = m.horizon;
  sched.costs = {costs};
  const ValueTables vt = value_dp(m, pi, sched.loss_tables(m, 0));
  const double hsqrtd = m.horizon * std::sqrt(static_cast<double>(m.feature_dim));
  for (int h = 0; h < m.horizon; ++h) {
    const Eigen::VectorXd q = q_vector(m, pi, costs, h);
    CHECK(q.norm() <= hsqrtd + 1e-9);
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a)
        CHECK(m.phi(s, a).dot(q) == doctest::Approx(vt.q[h](s, a)).epsilon(1e-9));
  }
}

TEST_CASE("q_vector: one-hot embedding coordinates are loss plus expected value") {
  const LinearMdpModel m = two_state_chain();
  const DiscretePolicy pi = random_policy(m, 81);
  RngStream rng(82);
  std::vector<Eigen::VectorXd> costs(m.horizon);
  for (auto& c : costs) {
    c.resize(m.feature_dim);
    for (int i = 0; i < c.size(); ++i) c(i) = 2.0 * rng.next_double() - 1.0;
  }
  CostSchedule sched;
  sched.episodes = 1;
  sched.horizon = m.horizon;
  sched.costs = {costs};
  const auto tables = sched.loss_tables(m, 0);
  const ValueTables vt = value_dp(m, pi, tables);
  const Eigen::VectorXd q0 = q_vector(m, pi, costs, 0);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      const double expect = tables[0](s, a) +
                            transition_distribution(m, 0, s, a).dot(vt.v.row(1).transpose());
      CHECK(q0(m.sa_index(s, a)) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("best_in_hindsight: K=1 equals value iteration; cancellation gives zero") {
  const LinearMdpModel m = random_model(3, 2, 2, 3, 91);
  RngStream rng(92);
  CostSchedule sched;
  sched.episodes = 1;
  sched.horizon = m.horizon;
  sched.costs.resize(1);
  sched.costs[0].resize(m.horizon);
  for (auto& c : sched.costs[0]) {
    c.resize(m.feature_dim);
    for (int i = 0; i < c.size(); ++i) c(i) = 2.0 * rng.next_double() - 1.0;
  }
  const HindsightResult res = best_in_hindsight(m, sched);
  // exhaustive check: no deterministic policy does better
  const int S = m.num_states, A = m.num_actions, H = m.horizon;
  const auto tables = sched.loss_tables(m, 0);
  const int total = static_cast<int>(std::pow(A, S * H));
  double best = 1e300;
  for (int code = 0; code < total; ++code) {
    int c = code;
    std::vector<std::vector<int>> actions(H, std::vector<int>(S));
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s) {
        actions[h][s] = c % A;
        c /= A;
      }
    best = std::min(best, value_dp(m, DiscretePolicy::deterministic(actions, A), tables)
                              .v(0, m.initial_state));
  }
  CHECK(res.total_value == doctest::Approx(best).epsilon(1e-12));

  CostSchedule cancel;
  cancel.episodes = 2;
  cancel.horizon = m.horizon;
  cancel.costs = {sched.costs[0], sched.costs[0]};
  for (auto& c : cancel.costs[1]) c = -c;
  CHECK(best_in_hindsight(m, cancel).total_value == doctest::Approx(0.0));
}

TEST_CASE("best_in_hindsight: beats exhaustive search over deterministic policies") {
  const LinearMdpModel m = random_model(3, 2, 2, 2, 101);
  RngStream rng(102);
  CostSchedule sched;
  sched.episodes = 3;
  sched.horizon = m.horizon;
  sched.costs.resize(3);
  for (auto& ep : sched.costs) {
    ep.resize(m.horizon);
    for (auto& c : ep) {
      c.resize(m.feature_dim);
      for (int i = 0; i < c.size(); ++i) c(i) = 2.0 * rng.next_double() - 1.0;
    }
  }
  const HindsightResult res = best_in_hindsight(m, sched);
  // oracle: enumerate all A^(S*H) deterministic policies, sum per-episode DP values
  const int S = m.num_states, A = m.num_actions, H = m.horizon;
  double best = 1e300;
  const int total = static_cast<int>(std::pow(A, S * H));
  for (int code = 0; code < total; ++code) {
    int c = code;
    std::vector<std::vector<int>> actions(H, std::vector<int>(S));
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s) {
        actions[h][s] = c % A;
        c /= A;
      }
    const DiscretePolicy pol = DiscretePolicy::deterministic(actions, A);
    double sum = 0.0;
    for (int k = 0; k < 3; ++k)
      sum += value_dp(m, pol, sched.loss_tables(m, k)).v(0, m.initial_state);
    best = std::min(best, sum);
  }
  CHECK(res.total_value == doctest::Approx(best).epsilon(1e-10));
  // returned policy achieves its reported value
  double achieved = 0.0;
  for (int k = 0; k < 3; ++k)
    achieved += value_dp(m, res.policy, sched.loss_tables(m, k)).v(0, m.initial_state);
  CHECK(achieved == doctest::Approx(res.total_value).epsilon(1e-10));
}

TEST_CASE("softmax policy: uniform start, normalization, shift invariance") {
  SoftmaxPolicy pol(2, 3, 4, 0.7);
  for (int a = 0; a < 4; ++a)
    CHECK(pol.action_probabilities(0, 0)(a) == doctest::Approx(0.25));

  std::vector<Eigen::MatrixXd> losses(2, Eigen::MatrixXd::Zero(3, 4));
  losses[0](0, 0) = 0.0;
  losses[0](0, 1) = 1.0;
  losses[0](0, 2) = 2.0;
  losses[0](0, 3) = -1.0;
  const SoftmaxPolicy upd = pol.accumulated(losses);
  const Eigen::VectorXd p = upd.action_probabilities(0, 0);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));

  // two actions, losses (0, 1): pi(a1) = 1/(1+e^-eta)
  SoftmaxPolicy two(1, 1, 2, 0.7);
  std::vector<Eigen::MatrixXd> l2(1, Eigen::MatrixXd::Zero(1, 2));
  l2[0](0, 1) = 1.0;
  const Eigen::VectorXd q = two.accumulated(l2).action_probabilities(0, 0);
  CHECK(q(0) == doctest::Approx(1.0 / (1.0 + std::exp(-0.7))).epsilon(1e-12));

  // shift invariance
  std::vector<Eigen::MatrixXd> shifted = l2;
  shifted[0].array() += 17.5;
  const Eigen::VectorXd qs = two.accumulated(shifted).action_probabilities(0, 0);
  CHECK((q - qs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("model serialization round-trips and the loader re-validates") {
  const LinearMdpModel m = random_model(3, 2, 3, 3, 111);
  const std::string doc = serialize_model(m);
  const LinearMdpModel back = deserialize_model(doc);
  CHECK((back.features - m.features).cwiseAbs().maxCoeff() < 1e-15);
  for (int h = 0; h + 1 < m.horizon; ++h)
    CHECK((back.transition_factors[h] - m.transition_factors[h]).cwiseAbs().maxCoeff() <
          1e-15);

  LinearMdpModel bad = m;
  bad.features *= 3.0;  // breaks feature norms and row sums
  CHECK_THROWS_AS(deserialize_model(serialize_model(bad)), std::invalid_argument);
}
