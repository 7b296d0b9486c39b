#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "marg/dataset.hpp"
#include "marg/dp.hpp"
#include "marg/harness.hpp"
#include "marg/learners.hpp"

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out << text;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot move file into place: " + path);
  }
}

marg::ExperimentConfig load_config(const std::string& path) {
  auto config = marg::parse_experiment_config(read_file(path));
  marg::validate_config(config);
  return config;
}

json policy_to_json(const marg::LearnerOutput& out,
                    const marg::LinearMarkovGame& game) {
  json j;
  j["is_correlated"] = out.is_correlated;
  if (out.is_correlated) {
    json tables = json::array();
    for (int h = 0; h < out.correlated_policy.horizon(); ++h) {
      const auto& t = out.correlated_policy.table(h);
      json rows = json::array();
      for (int s = 0; s < t.rows(); ++s) {
        json row = json::array();
        for (int a = 0; a < t.cols(); ++a) row.push_back(t(s, a));
        rows.push_back(row);
      }
      tables.push_back(rows);
    }
    j["stage_tables"] = tables;
  } else {
    json agents = json::array();
    for (int i = 0; i < out.product_policy.num_agents(); ++i) {
      json per_h = json::array();
      for (int h = 0; h < out.product_policy.horizon(); ++h) {
        const auto& t = out.product_policy.table(i, h);
        json rows = json::array();
        for (int s = 0; s < t.rows(); ++s) {
          json row = json::array();
          for (int a = 0; a < t.cols(); ++a) row.push_back(t(s, a));
          rows.push_back(row);
        }
        per_h.push_back(rows);
      }
      agents.push_back(per_h);
    }
    j["agent_tables"] = agents;
  }
  json thetas = json::array();
  for (const auto& th : out.reward_model.theta_hat) {
    json v = json::array();
    for (int k = 0; k < th.size(); ++k) v.push_back(th[k]);
    thetas.push_back(v);
  }
  j["theta_hat"] = thetas;
  j["estimated_gap"] = out.estimated_gap;
  j["game_hash"] = marg::game_hash(game);
  return j;
}

marg::LearnerOutput policy_from_json(const json& j) {
  marg::LearnerOutput out;
  out.is_correlated = j.at("is_correlated").get<bool>();
  if (out.is_correlated) {
    std::vector<Eigen::MatrixXd> tables;
    for (const auto& rows : j.at("stage_tables")) {
      Eigen::MatrixXd t(rows.size(), rows[0].size());
      for (size_t s = 0; s < rows.size(); ++s) {
        for (size_t a = 0; a < rows[s].size(); ++a) t(s, a) = rows[s][a];
      }
      tables.push_back(std::move(t));
    }
    out.correlated_policy = marg::StageCorrelatedPolicy(std::move(tables));
  } else {
    std::vector<std::vector<Eigen::MatrixXd>> agents;
    for (const auto& per_h : j.at("agent_tables")) {
      std::vector<Eigen::MatrixXd> tables;
      for (const auto& rows : per_h) {
        Eigen::MatrixXd t(rows.size(), rows[0].size());
        for (size_t s = 0; s < rows.size(); ++s) {
          for (size_t a = 0; a < rows[s].size(); ++a) t(s, a) = rows[s][a];
        }
        tables.push_back(std::move(t));
      }
      agents.push_back(std::move(tables));
    }
    out.product_policy = marg::ProductMarkovPolicy(std::move(agents));
  }
  out.estimated_gap = j.value("estimated_gap", 0.0);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"marg: corruption-robust offline multi-agent preference RL"};
  app.require_subcommand(1);

  std::string config_path, out_path, in_path, name, model_path;
  std::uint64_t seed = 0;
  bool seed_set = false, random_game = false;
  double epsilon = 0.0;
  bool epsilon_set = false;
  marg::GameSpec gen_spec;

  auto* gen_game = app.add_subcommand("gen-game", "Write a game as JSON");
  gen_game->add_option("--name", name, "Reference game name");
  gen_game->add_flag("--random", random_game, "Generate a random instance");
  gen_game->add_option("--agents", gen_spec.num_agents, "Number of agents");
  gen_game->add_option("--horizon", gen_spec.horizon, "Horizon");
  gen_game->add_option("--states", gen_spec.num_states, "Number of states");
  gen_game->add_option("--latent-dim", gen_spec.latent_dim, "Feature dim");
  gen_game->add_option("--actions", gen_spec.num_actions,
                       "Per-agent action counts");
  gen_game->add_option("--noise", gen_spec.noise_scale, "Reward noise scale");
  gen_game->add_option("--seed", gen_spec.seed, "Generator seed");
  gen_game->add_option("--out", out_path, "Output path")->required();

  auto* gen_data = app.add_subcommand("gen-data", "Sample a clean dataset");
  gen_data->add_option("--config", config_path, "Experiment config")
      ->required();
  gen_data->add_option("--seed", seed, "Seed override")
      ->each([&](const std::string&) { seed_set = true; });
  gen_data->add_option("--out", out_path, "Output path")->required();

  auto* corrupt = app.add_subcommand("corrupt", "Apply an attacker");
  corrupt->add_option("--config", config_path, "Experiment config")
      ->required();
  corrupt->add_option("--in", in_path, "Clean dataset path")->required();
  corrupt->add_option("--epsilon", epsilon, "Corruption fraction")
      ->required()
      ->each([&](const std::string&) { epsilon_set = true; });
  corrupt->add_option("--seed", seed, "Seed override")
      ->each([&](const std::string&) { seed_set = true; });
  corrupt->add_option("--out", out_path, "Output path")->required();

  auto* train = app.add_subcommand("train", "Train a learner on a dataset");
  train->add_option("--config", config_path, "Experiment config")->required();
  train->add_option("--data", in_path, "Dataset path")->required();
  train->add_option("--epsilon", epsilon, "Learner epsilon")
      ->each([&](const std::string&) { epsilon_set = true; });
  train->add_option("--seed", seed, "Seed override")
      ->each([&](const std::string&) { seed_set = true; });
  train->add_option("--out", out_path, "Model output path")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Oracle-evaluate a model");
  evaluate->add_option("--config", config_path, "Experiment config")
      ->required();
  evaluate->add_option("--model", model_path, "Model JSON path")->required();

  auto* sweep = app.add_subcommand("sweep", "Run the full experiment grid");
  sweep->add_option("--config", config_path, "Experiment config")->required();
  sweep->add_option("--out", out_path, "Output CSV override");

  auto* verify = app.add_subcommand(
      "verify-coverage", "Print coverage certificates for mu, mu_ref, pi_star");
  verify->add_option("--config", config_path, "Experiment config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen_game->parsed()) {
      gen_spec.name = name;
      gen_spec.random = random_game;
      const marg::LinearMarkovGame game = marg::resolve_game(gen_spec);
      write_file(out_path, game.to_json());
      std::cout << "wrote " << out_path << "\n";
      return 0;
    }
    const marg::ExperimentConfig base = load_config(config_path);

    if (gen_data->parsed()) {
      const auto game = marg::resolve_game(base.game);
      const auto mu = marg::resolve_policy(game, base.mu);
      const auto mu_ref = marg::resolve_policy(game, base.mu_ref);
      const std::uint64_t s = seed_set ? seed : base.seeds[0];
      const auto data =
          marg::generate_clean_dataset(game, mu, mu_ref, base.m, s);
      marg::save_dataset(data, out_path);
      std::cout << "wrote " << out_path << " (m=" << data.size() << ")\n";
      return 0;
    }
    if (corrupt->parsed()) {
      if (epsilon < 0.0 || epsilon >= 0.5) {
        throw std::invalid_argument("epsilon must be in [0, 1/2)");
      }
      const auto game = marg::resolve_game(base.game);
      auto data = marg::load_dataset(game, in_path);
      marg::load_truth_sidecar(game, &data, in_path + ".truth");
      const std::uint64_t s = seed_set ? seed : base.seeds[0];
      const auto corrupted = marg::corrupt_dataset(
          data, game, epsilon, marg::attacker_from_string(base.attacker),
          base.target_agents, s);
      marg::save_dataset(corrupted, out_path);
      std::cout << "wrote " << out_path << "\n";
      return 0;
    }
    if (train->parsed()) {
      const auto game = marg::resolve_game(base.game);
      const auto data = marg::load_dataset(game, in_path);
      marg::LearnerConfig lc = base.learner_config;
      if (epsilon_set) lc.epsilon = epsilon;
      if (seed_set) lc.seed = seed;
      const auto skeleton = marg::skeleton_of(game);
      const auto candidates = marg::candidate_policies(
          game, lc.candidate_policy_budget, lc.seed);
      marg::LearnerOutput out;
      if (base.learner == "uniform") {
        out = marg::uniform_learner(data, skeleton, lc, candidates);
      } else if (base.learner == "naive_baseline") {
        out = marg::naive_baseline_learner(data, skeleton, lc, candidates);
      } else if (base.learner == "unilateral") {
        out = marg::unilateral_learner(data, skeleton, lc, candidates);
      } else {
        out = marg::cce_learner(data, skeleton, lc);
      }
      write_file(out_path, policy_to_json(out, game).dump(2) + "\n");
      std::cout << "estimated_gap=" << out.estimated_gap << "\n";
      return 0;
    }
    if (evaluate->parsed()) {
      const auto game = marg::resolve_game(base.game);
      const auto out = policy_from_json(json::parse(read_file(model_path)));
      std::cout << "true_gap=" << marg::true_gap_of(game, out) << "\n";
      return 0;
    }
    if (sweep->parsed()) {
      marg::ExperimentConfig config = base;
      if (!out_path.empty()) config.output = out_path;
      const auto rows = marg::run_experiment(config);
      std::cout << "wrote " << config.output << " (" << rows.size()
                << " rows)\n";
      return 0;
    }
    if (verify->parsed()) {
      const auto game = marg::resolve_game(base.game);
      const auto mu = marg::resolve_policy(game, base.mu);
      const auto mu_ref = marg::resolve_policy(game, base.mu_ref);
      const auto pi_star = marg::resolve_policy(game, base.pi_star);
      const auto report = marg::verify_coverage(game, mu, mu_ref, pi_star);
      std::cout << "xi_R=" << report.xi_r << "\n"
                << "xi_P=" << report.xi_p << "\n"
                << "C_R=" << report.c_r << "\n"
                << "C_P=" << report.c_p << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
