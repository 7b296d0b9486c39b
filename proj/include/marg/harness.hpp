#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "marg/dataset.hpp"
#include "marg/game.hpp"
#include "marg/learners.hpp"
#include "marg/policy.hpp"

namespace marg {

// Behavior / candidate policy description as it appears in config files.
struct PolicySpec {
  std::string type = "uniform";  // uniform | biased | deterministic
  std::vector<int> preferred;    // biased: per-agent preferred action
  double bias = 0.7;
  std::vector<std::vector<std::vector<int>>> choice;  // deterministic
};

struct GameSpec {
  std::string name;          // reference game name, or
  std::string path;          // JSON file, or
  bool random = false;       // generated instance:
  int num_agents = 2, horizon = 2, num_states = 2, latent_dim = 3;
  std::vector<int> num_actions = {2, 2};
  double noise_scale = 0.0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  GameSpec game;
  PolicySpec mu, mu_ref, pi_star;
  int m = 1000;
  std::vector<double> epsilons = {0.0};
  std::string attacker = "label_flip_targeted";
  std::vector<int> target_agents;
  std::string learner = "uniform";  // uniform|unilateral|cce|naive_baseline
  LearnerConfig learner_config;
  std::vector<std::uint64_t> seeds = {0};
  std::string output = "results.csv";
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
void validate_config(const ExperimentConfig& config);

LinearMarkovGame resolve_game(const GameSpec& spec);
ProductMarkovPolicy resolve_policy(const LinearMarkovGame& game,
                                   const PolicySpec& spec);

// The three fixed reference instances.
LinearMarkovGame make_identical_interest_game();
LinearMarkovGame make_matching_pennies_game();
LinearMarkovGame make_two_state_game();
LinearMarkovGame reference_game(const std::string& name);

struct ResultRow {
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  int m = 0;
  std::string learner;
  double true_gap = 0.0;
  double estimated_gap = 0.0;
  std::vector<double> reward_param_error;  // per agent
  double wall_time_ms = 0.0;
  std::string status = "ok";  // or "error"
  std::string message;
  std::map<std::string, double> diagnostics;
};

// Fixed column set; see README. RFC-4180 quoting. wall_time_ms is written
// as 0 unless MARG_TIMING=1 so identical runs stay byte-identical.
std::string csv_header();
std::string csv_line(const ResultRow& row);
ResultRow parse_csv_line(const std::string& line);

// Learner argmin domain: deterministic Markov product policies (up to
// budget) plus the uniform policy.
std::vector<ProductMarkovPolicy> candidate_policies(
    const LinearMarkovGame& game, std::int64_t budget, std::uint64_t seed);

// One (seed, epsilon) cell: generate, corrupt, split+train, oracle-evaluate.
ResultRow run_cell(const LinearMarkovGame& game, const ProductMarkovPolicy& mu,
                   const ProductMarkovPolicy& mu_ref,
                   const ExperimentConfig& config,
                   const std::vector<ProductMarkovPolicy>& candidates,
                   std::uint64_t seed, double epsilon);

// All seed x epsilon cells, in parallel up to MARG_THREADS, rows written to
// config.output atomically (temp file + rename) in deterministic order.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

// Coverage certificates: xi_R = lambda_min(Sigma^-)/H, xi_P = min_h
// lambda_min(Sigma_mu(h)); C_R, C_P are the largest constants of the
// relative-coverage inequalities over all deterministic unilateral
// deviations from pi_star.
struct CoverageReport {
  double xi_r = 0.0, xi_p = 0.0;
  double c_r = 0.0, c_p = 0.0;
};
CoverageReport verify_coverage(const LinearMarkovGame& game,
                               const ProductMarkovPolicy& mu,
                               const ProductMarkovPolicy& mu_ref,
                               const ProductMarkovPolicy& pi_star);

// Oracle evaluation of a learner output against the game's true parameters.
double true_gap_of(const LinearMarkovGame& game, const LearnerOutput& out);

}  // namespace marg
