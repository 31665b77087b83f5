#include "polsbe/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace polsbe {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& path) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key '" + path + key + "'");
}

GeneratorSpec parse_generator(const json& j, const std::string& path) {
  reject_unknown_keys(j, {"kind", "S", "A", "H", "d", "seed"}, path);
  GeneratorSpec g;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "tabular_onehot") {
    g.kind = GeneratorSpec::Kind::tabular_onehot;
  } else if (kind == "simplex_mixture") {
    g.kind = GeneratorSpec::Kind::simplex_mixture;
  } else {
    throw std::invalid_argument("config: " + path + "kind must be tabular_onehot or "
                                "simplex_mixture");
  }
  g.num_states = j.at("S").get<int>();
  g.num_actions = j.at("A").get<int>();
  g.horizon = j.at("H").get<int>();
  if (j.contains("d")) g.feature_dim = j.at("d").get<int>();
  if (j.contains("seed")) g.seed = j.at("seed").get<std::uint64_t>();
  if (g.kind == GeneratorSpec::Kind::tabular_onehot)
    g.feature_dim = g.num_states * g.num_actions;
  return g;
}

AdversarySpec parse_adversary(const json& j, const std::string& path) {
  reject_unknown_keys(j,
                      {"kind", "normalization", "seed", "period", "phase",
                       "switch_episodes", "adaptivity", "fixed_costs"},
                      path);
  AdversarySpec a;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "fixed_schedule") a.kind = AdversarySpec::Kind::fixed_schedule;
  else if (kind == "sinusoid") a.kind = AdversarySpec::Kind::sinusoid;
  else if (kind == "switching") a.kind = AdversarySpec::Kind::switching;
  else if (kind == "adaptive_occupancy") a.kind = AdversarySpec::Kind::adaptive_occupancy;
  else throw std::invalid_argument("config: " + path + "kind unknown adversary kind");
  if (j.contains("normalization")) {
    const std::string n = j.at("normalization").get<std::string>();
    if (n == "saturate") a.normalization = AdversarySpec::Normalization::saturate;
    else if (n == "clip") a.normalization = AdversarySpec::Normalization::clip;
    else throw std::invalid_argument("config: " + path + "normalization must be saturate or clip");
  } else if (a.kind == AdversarySpec::Kind::fixed_schedule) {
    a.normalization = AdversarySpec::Normalization::clip;
  }
  if (j.contains("seed")) a.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("period")) a.period = j.at("period").get<double>();
  if (j.contains("phase")) a.phase = j.at("phase").get<double>();
  if (j.contains("switch_episodes"))
    a.switch_episodes = j.at("switch_episodes").get<std::vector<int>>();
  if (j.contains("adaptivity")) a.adaptivity = j.at("adaptivity").get<double>();
  if (j.contains("fixed_costs")) {
    for (const auto& episode : j.at("fixed_costs")) {
      std::vector<Eigen::VectorXd> row;
      for (const auto& vec : episode) {
        Eigen::VectorXd v(vec.size());
        for (std::size_t i = 0; i < vec.size(); ++i) v(i) = vec.at(i).get<double>();
        row.push_back(std::move(v));
      }
      a.fixed_costs.push_back(std::move(row));
    }
  }
  return a;
}

AgentConfig parse_agent(const json& j, const std::string& path, int K, int d, int H,
                        int* theorem_out) {
  reject_unknown_keys(j,
                      {"variant", "theorem", "mode", "eta", "gamma", "beta", "beta_p",
                       "sigma", "eps", "M", "N", "tau", "c1"},
                      path);
  if (j.contains("theorem")) {
    const int t = j.at("theorem").get<int>();
    *theorem_out = t;
    for (const char* key : {"mode", "eta", "gamma", "beta", "beta_p", "sigma", "eps",
                            "M", "N", "tau"})
      if (j.contains(key))
        throw std::invalid_argument("config: " + path + std::string(key) +
                                    " cannot be combined with a theorem selector");
    const double c1 = j.value("c1", 1.0);
    AgentConfig c = t == 1 ? theorem1_config(K, d, H, c1)
                  : t == 2 ? theorem2_config(K, d, H, c1)
                  : throw std::invalid_argument("config: " + path + "theorem must be 1 or 2");
    if (j.contains("variant") &&
        (t == 1) != (j.at("variant").get<std::string>() == "blocking"))
      throw std::invalid_argument("config: " + path +
                                  "theorem/variant mismatch (1=blocking, 2=simulator)");
    return c;
  }
  const std::string variant = j.value("variant", "blocking");
  if (variant != "blocking" && variant != "simulator")
    throw std::invalid_argument("config: " + path + "variant must be blocking or simulator");
  AgentConfig c;
  c.variant = variant == "blocking" ? AgentConfig::Variant::blocking
                                    : AgentConfig::Variant::simulator;
  const std::string mode = j.value("mode", "practical");
  if (mode != "practical" && mode != "theory")
    throw std::invalid_argument("config: " + path + "mode must be practical or theory");
  c.mode = mode == "practical" ? AgentConfig::Mode::practical : AgentConfig::Mode::theory;
  c.gamma = j.at("gamma").get<double>();
  c.learning_rate = j.contains("eta") ? j.at("eta").get<double>() : c.gamma / (2.0 * H);
  c.q_bonus_factor = j.contains("beta") ? j.at("beta").get<double>()
                                        : 2.0 * H * std::sqrt(d * c.gamma);
  // Practical default: scale the dynamics bonus like the Q-bonus rather than
  // the (enormous) analyzed constant.
  c.dynamics_bonus_factor =
      j.contains("beta_p") ? j.at("beta_p").get<double>() : c.q_bonus_factor;
  c.mgr_variance = j.value("sigma", 0.25);
  c.mgr_bias = j.value("eps", 1.0 / K);
  c.mgr_outer = j.at("M").get<int>();
  c.mgr_depth = j.at("N").get<int>();
  c.block_half = j.at("tau").get<int>();
  c.c1 = j.value("c1", 1.0);
  c.validate(H);
  return c;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

LinearMdpModel build_env_impl(const ExperimentConfig& config) {
  if (config.has_generator) {
    RngStream rng(config.generator.seed);
    LinearMdpModel model = random_linmdp(config.generator, rng);
    auto report = validate_model(model);
    if (!report.empty())
      throw std::runtime_error("generated environment failed validation: " +
                               report.front().constraint);
    return model;
  }
  std::ifstream in(config.env_path, std::ios::binary);
  if (!in) throw std::invalid_argument("config: cannot open environment file " + config.env_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_model(buffer.str());
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  reject_unknown_keys(j,
                      {"environment", "adversary", "agent", "K", "seeds", "baselines",
                       "out_dir", "diagnostics", "omd_baseline_eta"},
                      "");
  ExperimentConfig cfg;
  const auto& env = j.at("environment");
  reject_unknown_keys(env, {"path", "generator"}, "environment.");
  if (env.contains("path") == env.contains("generator"))
    throw std::invalid_argument("config: environment needs exactly one of path/generator");
  if (env.contains("path")) {
    cfg.env_path = env.at("path").get<std::string>();
  } else {
    cfg.has_generator = true;
    cfg.generator = parse_generator(env.at("generator"), "environment.generator.");
  }
  cfg.episodes = j.at("K").get<int>();
  if (cfg.episodes < 1) throw std::invalid_argument("config: K >= 1 required");
  cfg.adversary = parse_adversary(j.at("adversary"), "adversary.");
  cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (cfg.seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
  if (j.contains("baselines")) {
    cfg.baselines = j.at("baselines").get<std::vector<std::string>>();
    for (const auto& b : cfg.baselines)
      if (b != "uniform" && b != "known_dynamics_omd" && b != "best_in_hindsight_oracle")
        throw std::invalid_argument("config: unknown baseline '" + b + "'");
  }
  cfg.out_dir = j.value("out_dir", "");
  cfg.diagnostics = j.value("diagnostics", false);
  cfg.omd_baseline_eta = j.value("omd_baseline_eta", 0.0);

  // Environment dimensions are needed to resolve the agent parameters.
  const LinearMdpModel model = build_env_impl(cfg);
  cfg.agent = parse_agent(j.at("agent"), "agent.", cfg.episodes, model.feature_dim,
                          model.horizon, &cfg.theorem);
  cfg.source_json = j.dump();
  return cfg;
}

LinearMdpModel build_environment(const ExperimentConfig& config) {
  return build_env_impl(config);
}

RegretReport uniform_baseline(const LinearMdpModel& model, const Adversary& adversary, int K) {
  const DiscretePolicy uniform =
      DiscretePolicy::uniform(model.horizon, model.num_states, model.num_actions);
  std::vector<DiscretePolicy> history;
  history.reserve(K);
  CostSchedule realized;
  realized.episodes = K;
  realized.horizon = model.horizon;
  realized.costs.resize(K);
  for (int k = 0; k < K; ++k) {
    history.push_back(uniform);
    realized.costs[k] = adversary.next_costs(k, history);
  }
  RegretReport report;
  const HindsightResult star = best_in_hindsight(model, realized);
  report.value_agent.resize(K);
  report.value_star.resize(K);
  report.cum_regret.resize(K);
  double cum = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto tables = realized.loss_tables(model, k);
    report.value_agent[k] = value_dp(model, uniform, tables).v(0, model.initial_state);
    report.value_star[k] = value_dp(model, star.policy, tables).v(0, model.initial_state);
    cum += report.value_agent[k] - report.value_star[k];
    report.cum_regret[k] = cum;
  }
  return report;
}

RegretReport known_dynamics_omd_baseline(const LinearMdpModel& model,
                                         const Adversary& adversary, int K, double eta) {
  const int H = model.horizon, S = model.num_states, A = model.num_actions;
  SoftmaxPolicy policy = SoftmaxPolicy::uniform(H, S, A, eta);
  std::vector<DiscretePolicy> history;
  history.reserve(K);
  CostSchedule realized;
  realized.episodes = K;
  realized.horizon = H;
  realized.costs.resize(K);
  std::vector<DiscretePolicy> played;
  played.reserve(K);
  for (int k = 0; k < K; ++k) {
    const DiscretePolicy table = policy.table();
    history.push_back(table);
    played.push_back(table);
    realized.costs[k] = adversary.next_costs(k, history);
    // full information: the exact Q tables via the true q-vectors
    std::vector<Eigen::MatrixXd> q_tables(H);
    for (int h = 0; h < H; ++h) {
      const Eigen::VectorXd q = q_vector(model, table, realized.costs[k], h);
      Eigen::VectorXd flat = model.features * q;
      q_tables[h] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                   Eigen::RowMajor>>(flat.data(), S, A);
    }
    policy = policy.accumulated(q_tables);
  }
  RegretReport report;
  const HindsightResult star = best_in_hindsight(model, realized);
  report.value_agent.resize(K);
  report.value_star.resize(K);
  report.cum_regret.resize(K);
  double cum = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto tables = realized.loss_tables(model, k);
    report.value_agent[k] = value_dp(model, played[k], tables).v(0, model.initial_state);
    report.value_star[k] = value_dp(model, star.policy, tables).v(0, model.initial_state);
    cum += report.value_agent[k] - report.value_star[k];
    report.cum_regret[k] = cum;
  }
  return report;
}

RegretReport best_in_hindsight_oracle(const LinearMdpModel& model, const Adversary& adversary,
                                      int K) {
  // The oracle replays pi*; with an oblivious adversary its rows are exactly
  // zero regret. (Against an adaptive adversary pi* is recomputed on the
  // schedule the oracle itself induced.)
  const DiscretePolicy uniform =
      DiscretePolicy::uniform(model.horizon, model.num_states, model.num_actions);
  std::vector<DiscretePolicy> history;
  CostSchedule realized;
  realized.episodes = K;
  realized.horizon = model.horizon;
  realized.costs.resize(K);
  for (int k = 0; k < K; ++k) {
    history.push_back(uniform);
    realized.costs[k] = adversary.next_costs(k, history);
  }
  const HindsightResult star = best_in_hindsight(model, realized);
  RegretReport report;
  report.value_agent.resize(K);
  report.value_star.resize(K);
  report.cum_regret.assign(K, 0.0);
  for (int k = 0; k < K; ++k) {
    const auto tables = realized.loss_tables(model, k);
    report.value_agent[k] = value_dp(model, star.policy, tables).v(0, model.initial_state);
    report.value_star[k] = report.value_agent[k];
  }
  return report;
}

std::string report_to_csv(const RegretReport& report) {
  std::string out = report.decomposition
                        ? "k,value_pik,value_pistar,cum_regret,bias1,bias2,omd,exploration\n"
                        : "k,value_pik,value_pistar,cum_regret\n";
  for (std::size_t k = 0; k < report.value_agent.size(); ++k) {
    out += std::to_string(k + 1);
    out += ',' + format_double(report.value_agent[k]);
    out += ',' + format_double(report.value_star[k]);
    out += ',' + format_double(report.cum_regret[k]);
    if (report.decomposition) {
      out += ',' + format_double(report.decomposition->bias1[k]);
      out += ',' + format_double(report.decomposition->bias2[k]);
      out += ',' + format_double(report.decomposition->omd[k]);
      out += ',' + format_double(report.decomposition->exploration[k]);
    }
    out += '\n';
  }
  return out;
}

namespace {

void run_one_seed(const ExperimentConfig& config, const LinearMdpModel& model,
                  std::uint64_t seed, const std::filesystem::path& out_dir) {
  const Adversary adversary(config.adversary, model);
  std::vector<EpisodeArtifacts> artifacts;
  CostSchedule realized;
  RegretReport agent_report;
  if (config.agent.variant == AgentConfig::Variant::blocking) {
    agent_report = run_polsbe(model, adversary, config.episodes, config.agent, seed,
                              config.diagnostics, &artifacts, &realized);
  } else {
    agent_report = run_polsbe_simulator(model, adversary, config.episodes, config.agent,
                                        seed, config.diagnostics, &artifacts, &realized);
  }
  if (config.diagnostics) {
    const HindsightResult star = best_in_hindsight(model, realized);
    agent_report.decomposition =
        regret_decomposition_diagnostic(model, realized, artifacts, star);
  }
  const std::string agent_name = config.agent.variant == AgentConfig::Variant::blocking
                                     ? "polsbe_blocking"
                                     : "polsbe_simulator";
  static const char* kAdversaryNames[] = {"fixed_schedule", "sinusoid", "switching",
                                          "adaptive_occupancy"};
  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["config"] =
      nlohmann::json::parse(config.source_json.empty() ? "null" : config.source_json);
  manifest["adversary_kind"] = kAdversaryNames[static_cast<int>(config.adversary.kind)];
  manifest["agent"] = agent_name;
  manifest["K"] = config.episodes;
  manifest["flags"] = agent_report.flags;
  manifest["env_rollouts"] = agent_report.env_rollouts;
  manifest["sim_rollouts"] = agent_report.sim_rollouts;
  std::vector<std::string> outputs;

  auto emit = [&](const std::string& name, const RegretReport& r) {
    const std::string file = name + "_seed" + std::to_string(seed) + ".csv";
    write_file(out_dir / file, report_to_csv(r));
    outputs.push_back(file);
  };
  emit(agent_name, agent_report);
  for (const auto& baseline : config.baselines) {
    const Adversary fresh(config.adversary, model);
    if (baseline == "uniform") {
      emit("uniform", uniform_baseline(model, fresh, config.episodes));
    } else if (baseline == "known_dynamics_omd") {
      const double eta = config.omd_baseline_eta > 0.0 ? config.omd_baseline_eta
                                                       : config.agent.learning_rate;
      emit("known_dynamics_omd",
           known_dynamics_omd_baseline(model, fresh, config.episodes, eta));
    } else {
      emit("best_in_hindsight_oracle",
           best_in_hindsight_oracle(model, fresh, config.episodes));
    }
  }
  manifest["outputs"] = outputs;
  write_file(out_dir / ("manifest_seed" + std::to_string(seed) + ".json"),
             manifest.dump(2) + "\n");
}

}  // namespace

int run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const LinearMdpModel model = build_environment(config);
  std::filesystem::create_directories(out_dir);
  const int n_seeds = static_cast<int>(config.seeds.size());
  std::string error;
  // Seeds are independent runs writing disjoint files.
#pragma omp parallel for schedule(dynamic) if (n_seeds > 1)
  for (int seed_idx = 0; seed_idx < n_seeds; ++seed_idx) {
    try {
      run_one_seed(config, model, config.seeds[seed_idx], out_dir);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error("run_experiment: " + error);
  return 0;
}

SweepSpec parse_sweep_spec(const std::string& json_text, ExperimentConfig& base_config) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("sweep: ") + e.what());
  }
  reject_unknown_keys(j, {"K_values", "gamma_values", "replications", "config"}, "sweep.");
  SweepSpec spec;
  base_config = parse_experiment_config(j.at("config").dump());
  if (j.contains("K_values")) spec.k_values = j.at("K_values").get<std::vector<int>>();
  if (spec.k_values.empty()) spec.k_values = {base_config.episodes};
  if (j.contains("gamma_values"))
    spec.gamma_values = j.at("gamma_values").get<std::vector<double>>();
  spec.replications = j.value("replications", 1);
  if (spec.replications < 1) throw std::invalid_argument("sweep: replications >= 1 required");
  return spec;
}

int run_sweep(const ExperimentConfig& base, const SweepSpec& sweep,
              const std::filesystem::path& out_dir) {
  const LinearMdpModel model = build_environment(base);
  std::filesystem::create_directories(out_dir);
  std::vector<double> gammas = sweep.gamma_values;
  if (gammas.empty()) gammas = {base.agent.gamma};

  struct Cell {
    int K;
    double gamma;
    double mean = 0.0, stdev = 0.0;
  };
  std::vector<Cell> cells;
  for (int K : sweep.k_values)
    for (double g : gammas) cells.push_back({K, g});

  const int n_cells = static_cast<int>(cells.size());
#pragma omp parallel for schedule(dynamic) if (n_cells > 1)
  for (int c = 0; c < n_cells; ++c) {
    Cell& cell = cells[c];
    AgentConfig agent = base.agent;
    agent.gamma = cell.gamma;
    agent.learning_rate = cell.gamma / (2.0 * model.horizon);
    std::vector<double> totals(sweep.replications);
    for (int r = 0; r < sweep.replications; ++r) {
      const std::uint64_t seed =
          RngStream(base.seeds.front())
              .substream({stream_name("sweep"), static_cast<std::uint64_t>(c),
                          static_cast<std::uint64_t>(r)})
              .next_u64();
      const Adversary adversary(base.adversary, model);
      const RegretReport report =
          agent.variant == AgentConfig::Variant::blocking
              ? run_polsbe(model, adversary, cell.K, agent, seed)
              : run_polsbe_simulator(model, adversary, cell.K, agent, seed);
      totals[r] = report.total_regret();
    }
    double mean = 0.0;
    for (double t : totals) mean += t;
    mean /= sweep.replications;
    double var = 0.0;
    for (double t : totals) var += (t - mean) * (t - mean);
    cell.mean = mean;
    cell.stdev = sweep.replications > 1 ? std::sqrt(var / (sweep.replications - 1)) : 0.0;
  }

  std::string csv = "K,gamma,replications,mean_cum_regret,std_cum_regret\n";
  for (const auto& cell : cells) {
    csv += std::to_string(cell.K) + ',' + format_double(cell.gamma) + ',' +
           std::to_string(sweep.replications) + ',' + format_double(cell.mean) + ',' +
           format_double(cell.stdev) + '\n';
  }
  write_file(out_dir / "sweep.csv", csv);
  return 0;
}

}  // namespace polsbe
