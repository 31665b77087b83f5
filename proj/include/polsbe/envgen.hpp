#pragma once

#include <span>
#include <vector>

#include "polsbe/linmdp.hpp"

namespace polsbe {

/// Model generator parameters.
struct GeneratorSpec {
  enum class Kind { tabular_onehot, simplex_mixture };
  Kind kind = Kind::simplex_mixture;
  int num_states = 2;
  int num_actions = 2;
  int horizon = 2;
  int feature_dim = 2;  // ignored for tabular_onehot (d = S*A)
  std::uint64_t seed = 0;
};

/// One-hot realization of tabular dynamics: d = S*A, phi(s,a) = e_{(s,a)},
/// psi_h(s')_{(s,a)} = P_h(s'|s,a). Transition tables are indexed
/// tables[h](sa_index, s') and must be row-stochastic; rejects otherwise.
LinearMdpModel tabular_embed(const std::vector<Eigen::MatrixXd>& transition_tables,
                             int num_states, int num_actions, int initial_state = 0);

/// Random row-stochastic tabular dynamics (uniform simplex rows).
std::vector<Eigen::MatrixXd> random_tabular_dynamics(int num_states, int num_actions,
                                                     int horizon, RngStream& rng);

/// Random valid linear MDP: phi(s,a) uniform on the simplex Delta_d (hence
/// ||phi|| <= 1) and psi columns built from next-state distributions
/// mu_{h,i} uniform on Delta_S, so every P_h(.|s,a) is a convex mixture of
/// distributions. Simplex draws use normalized exponentials.
LinearMdpModel random_linmdp(const GeneratorSpec& spec, RngStream& rng);

/// Cost process parameters. All families are deterministic functions of
/// (episode, policy history, seed); oblivious kinds ignore the history.
struct AdversarySpec {
  enum class Kind { fixed_schedule, sinusoid, switching, adaptive_occupancy };
  /// saturate: rescale so the grid max of |phi' c| lands on the constraint
  /// boundary (maximally aggressive); clip: rescale only when violated.
  enum class Normalization { saturate, clip };

  Kind kind = Kind::sinusoid;
  Normalization normalization = Normalization::saturate;
  std::uint64_t seed = 0;
  // sinusoid
  double period = 64.0;
  double phase = 0.0;
  // switching
  std::vector<int> switch_episodes;
  // adaptive_occupancy
  double adaptivity = 1.0;  // blend weight of the occupancy direction
  // fixed_schedule: explicit vectors [k][h]; episodes past the end reuse the
  // last entry (empty means all-zero costs)
  std::vector<std::vector<Eigen::VectorXd>> fixed_costs;
};

/// Emits the H cost vectors of each episode. The interface deliberately has
/// no trajectory parameter: the adversary sees policies only.
class Adversary {
 public:
  Adversary(AdversarySpec spec, const LinearMdpModel& model);

  /// Cost vectors of episode k (0-based). policy_history must contain the
  /// submitted policies pi^0..pi^k, i.e. k+1 entries.
  std::vector<Eigen::VectorXd> next_costs(int k,
                                          std::span<const DiscretePolicy> policy_history) const;

  const AdversarySpec& spec() const { return spec_; }
  bool oblivious() const { return spec_.kind != AdversarySpec::Kind::adaptive_occupancy; }

 private:
  Eigen::VectorXd normalized(Eigen::VectorXd c) const;
  std::vector<Eigen::VectorXd> profile(std::uint64_t id) const;  // seeded raw profile

  AdversarySpec spec_;
  const LinearMdpModel* model_;
};

}  // namespace polsbe
