#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "polsbe/agent.hpp"
#include "polsbe/envgen.hpp"
#include "polsbe/linmdp.hpp"

namespace polsbe {

/// Parsed experiment configuration. The JSON schema is strict: unknown keys
/// are rejected at every level.
struct ExperimentConfig {
  // exactly one of env_path / generator is set
  std::string env_path;
  bool has_generator = false;
  GeneratorSpec generator;

  AdversarySpec adversary;
  AgentConfig agent;
  int theorem = 0;  // 0 = explicit agent params, 1 or 2 = tuned settings
  int episodes = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> baselines;  // uniform | known_dynamics_omd | best_in_hindsight_oracle
  std::string out_dir;
  bool diagnostics = false;
  double omd_baseline_eta = 0.0;  // 0 = reuse the agent's eta
  std::string source_json;        // normalized config echo for manifests
};

/// Parses and validates a config document; throws std::invalid_argument with
/// the JSON path of the offending key.
ExperimentConfig parse_experiment_config(const std::string& json_text);

/// Builds (or loads and re-validates) the environment of a config.
LinearMdpModel build_environment(const ExperimentConfig& config);

/// Uniform-policy comparator: plays the uniform policy every episode.
RegretReport uniform_baseline(const LinearMdpModel& model, const Adversary& adversary, int K);

/// Full-information comparator with known dynamics: exponential weights on
/// the exact Q tables from the true q-vectors, no estimation, no bonuses.
RegretReport known_dynamics_omd_baseline(const LinearMdpModel& model,
                                         const Adversary& adversary, int K, double eta);

/// Replays the best-in-hindsight policy (zero-regret oracle rows).
RegretReport best_in_hindsight_oracle(const LinearMdpModel& model, const Adversary& adversary,
                                      int K);

/// CSV serialization of a report; columns
///   k,value_pik,value_pistar,cum_regret[,bias1,bias2,omd,exploration]
/// with k 1-based and doubles printed as %.17g (byte-stable).
std::string report_to_csv(const RegretReport& report);

/// Executes the configured agent plus baselines on every seed, writing one
/// CSV per (agent, seed) and a JSON manifest per seed. Returns 0 on success.
int run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Grid sweep over K and/or gamma with replications; writes an aggregated CSV
///   K,gamma,replications,mean_cum_regret,std_cum_regret
struct SweepSpec {
  std::vector<int> k_values;
  std::vector<double> gamma_values;  // empty = keep the config's gamma
  int replications = 1;
};
SweepSpec parse_sweep_spec(const std::string& json_text, ExperimentConfig& base_config);
int run_sweep(const ExperimentConfig& base, const SweepSpec& sweep,
              const std::filesystem::path& out_dir);

}  // namespace polsbe
