#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "marg/dataset.hpp"
#include "marg/dp.hpp"
#include "marg/harness.hpp"
#include "marg/learners.hpp"
#include "marg/policy.hpp"

using namespace marg;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string temp_path(const std::string& stem) {
  return "/tmp/marg-harness-" + stem;
}

// CLI path injected by CMake; subprocess tests skip silently without it so
// the binary still runs standalone.
const char* cli_path() { return std::getenv("MARG_CLI"); }

int run_cli(const std::string& args, std::string* out_text = nullptr) {
  const std::string out_file = temp_path("cli-out.txt");
  const std::string cmd = std::string(cli_path()) + " " + args + " > " +
                          out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (out_text != nullptr) *out_text = read_file(out_file);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config json parses every section") {
  const std::string text = R"({
    "game": {"name": "two_state"},
    "mu": {"type": "biased", "preferred": [0, 1], "bias": 0.8},
    "mu_ref": {"type": "uniform"},
    "m": 1234,
    "epsilons": [0.0, 0.1],
    "attacker": "label_flip_random",
    "target_agents": [1],
    "learner": "unilateral",
    "learner_config": {"t1": 7, "t2": 99, "c1": 0.5, "lambda": 0.02},
    "seeds": [3, 4],
    "output": "out.csv"
  })";
  const ExperimentConfig config = parse_experiment_config(text);
  CHECK(config.game.name == "two_state");
  CHECK(config.mu.type == "biased");
  CHECK(config.mu.preferred == std::vector<int>{0, 1});
  CHECK(config.mu.bias == 0.8);
  CHECK(config.m == 1234);
  CHECK(config.epsilons == std::vector<double>{0.0, 0.1});
  CHECK(config.attacker == "label_flip_random");
  CHECK(config.target_agents == std::vector<int>{1});
  CHECK(config.learner == "unilateral");
  CHECK(config.learner_config.t1 == 7);
  CHECK(config.learner_config.t2 == 99);
  CHECK(config.learner_config.c1 == 0.5);
  CHECK(config.learner_config.lambda == 0.02);
  CHECK(config.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(config.output == "out.csv");
}

TEST_CASE("validate_config rejects malformed configs") {
  ExperimentConfig config;
  config.game.name = "two_state";
  CHECK_NOTHROW(validate_config(config));

  ExperimentConfig bad = config;
  bad.seeds.clear();
  CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);

  bad = config;
  bad.epsilons = {0.6};
  CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);

  bad = config;
  bad.learner = "mystery";
  CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);

  bad = config;
  bad.m = 0;
  CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);

  bad = config;
  bad.attacker = "not_an_attacker";
  CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);

  // A game spec with no name, path, or generator cannot resolve.
  bad = config;
  bad.game = GameSpec{};
  CHECK_THROWS_AS(resolve_game(bad.game), std::invalid_argument);
}

TEST_CASE("reference games resolve, validate, and round-trip") {
  for (const std::string name :
       {"identical_interest", "matching_pennies", "two_state"}) {
    const LinearMarkovGame game = reference_game(name);
    CHECK(game.num_agents() == 2);
    const std::string once = game.to_json();
    CHECK(LinearMarkovGame::from_json(once).to_json() == once);
  }
  CHECK_THROWS(reference_game("no_such_game"));
}

TEST_CASE("resolve_policy covers the three spec types") {
  const auto game = reference_game("two_state");
  PolicySpec spec;
  spec.type = "uniform";
  const auto uniform = resolve_policy(game, spec);
  CHECK(uniform.table(0, 0)(0, 0) == doctest::Approx(0.5));

  spec.type = "biased";
  spec.preferred = {1, 0};
  spec.bias = 0.9;
  const auto biased = resolve_policy(game, spec);
  CHECK(biased.table(0, 0)(0, 1) == doctest::Approx(0.9));

  spec.type = "deterministic";
  spec.choice = {{{0, 1}, {1, 0}}, {{0, 0}, {1, 1}}};
  const auto det = resolve_policy(game, spec);
  CHECK(det.table(0, 0)(0, 0) == doctest::Approx(1.0));

  spec.type = "nonsense";
  CHECK_THROWS(resolve_policy(game, spec));
}

TEST_CASE("run_experiment: clean naive run solves the easy game") {
  ExperimentConfig config;
  config.game.name = "identical_interest";
  config.learner = "naive_baseline";
  config.m = 4000;
  config.seeds = {5};
  config.output = "";
  const auto rows = run_experiment(config);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].status == "ok");
  CHECK(rows[0].true_gap <= 0.1 * 2);
  CHECK(rows[0].m == 4000);
  CHECK(rows[0].learner == "naive_baseline");
  CHECK(rows[0].reward_param_error.size() == 2);
}

TEST_CASE("run_experiment reruns are byte-identical") {
  ExperimentConfig config;
  config.game.name = "two_state";
  config.learner = "uniform";
  config.m = 400;
  config.epsilons = {0.0, 0.1};
  config.seeds = {1, 2, 3};
  config.output = temp_path("rerun-a.csv");
  run_experiment(config);
  const std::string first = read_file(config.output);
  config.output = temp_path("rerun-b.csv");
  run_experiment(config);
  CHECK(first == read_file(config.output));
  // 2 epsilons x 3 seeds plus a header line.
  CHECK(std::count(first.begin(), first.end(), '\n') == 7);
}

TEST_CASE("run_experiment records per-cell errors instead of aborting") {
  ExperimentConfig config;
  config.game.name = "two_state";
  config.m = 1;  // split leaves an empty half; the learner must throw
  config.seeds = {1};
  config.output = "";
  const auto rows = run_experiment(config);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].status == "error");
  CHECK(!rows[0].message.empty());
}

TEST_CASE("csv round-trips rows including quoted fields") {
  ResultRow row;
  row.seed = 9;
  row.epsilon = 0.125;
  row.m = 777;
  row.learner = "uniform";
  row.true_gap = 0.25;
  row.estimated_gap = 0.5;
  row.reward_param_error = {1.5, 2.5};
  row.status = "error";
  row.message = "bad \"input\", with commas\nand a newline";
  const ResultRow back = parse_csv_line(csv_line(row));
  CHECK(back.seed == row.seed);
  CHECK(back.epsilon == row.epsilon);
  CHECK(back.m == row.m);
  CHECK(back.learner == row.learner);
  CHECK(back.true_gap == row.true_gap);
  CHECK(back.estimated_gap == row.estimated_gap);
  CHECK(back.reward_param_error == row.reward_param_error);
  CHECK(back.status == row.status);
  CHECK(back.message == row.message);

  CHECK(csv_header().substr(0, 4) == "seed");
}

TEST_CASE("verify_coverage xi values match a direct eigensolve") {
  const auto game = reference_game("two_state");
  const auto mu = make_uniform_policy(game);
  const auto mu_ref = make_biased_policy(game, {1, 1}, 0.7);
  const auto pi_star = make_uniform_policy(game);
  const CoverageReport report = verify_coverage(game, mu, mu_ref, pi_star);

  const CoverageMatrices cov = coverage_matrices(game, mu, mu_ref);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ed(cov.sigma_diff);
  CHECK(report.xi_r ==
        doctest::Approx(ed.eigenvalues().minCoeff() / game.horizon())
            .epsilon(1e-8));
  double xi_p = std::numeric_limits<double>::infinity();
  for (const auto& sigma : cov.sigma_mu) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    xi_p = std::min(xi_p, es.eigenvalues().minCoeff());
  }
  CHECK(report.xi_p == doctest::Approx(xi_p).epsilon(1e-8));
  CHECK(report.c_r >= 0.0);
  CHECK(report.c_p >= 0.0);
}

TEST_CASE("training works when the truth sidecar is deleted") {
  const auto game = reference_game("two_state");
  const auto mu = make_uniform_policy(game);
  const auto clean = generate_clean_dataset(game, mu, mu, 400, 11);
  const auto corrupted = corrupt_dataset(clean, game, 0.1,
                                         Attacker::kLabelFlipTargeted, {}, 11);
  const std::string path = temp_path("nosidecar.jsonl");
  save_dataset(corrupted, path);
  std::remove((path + ".truth").c_str());

  const auto loaded = load_dataset(game, path);
  CHECK(loaded.size() == 400);
  for (const auto& sample : loaded.samples) CHECK(!sample.corrupted);
  LearnerConfig lc;
  lc.epsilon = 0.1;
  const auto skeleton = skeleton_of(game);
  const auto candidates = candidate_policies(game, 8, 0);
  CHECK_NOTHROW(uniform_learner(loaded, skeleton, lc, candidates));
}

TEST_CASE("cli: help, coverage output, and error codes") {
  if (cli_path() == nullptr) return;  // standalone run without the binary

  CHECK(run_cli("train --help") == 0);
  CHECK(run_cli("definitely-not-a-subcommand") == 2);
  CHECK(run_cli("train --config /nonexistent.json --data x --out y") != 0);

  const std::string config_path = temp_path("cli-config.json");
  {
    std::ofstream out(config_path);
    out << R"({"game":{"name":"two_state"},"m":200,"seeds":[1],)"
        << R"("mu_ref":{"type":"biased","preferred":[1,1],"bias":0.7},)"
        << R"("learner":"uniform","output":")" << temp_path("cli-sweep.csv")
        << R"("})";
  }
  std::string text;
  CHECK(run_cli("verify-coverage --config " + config_path, &text) == 0);
  // Cross-check the printed xi_P against the library value.
  const auto game = reference_game("two_state");
  const CoverageReport report = verify_coverage(
      game, make_uniform_policy(game), make_biased_policy(game, {1, 1}, 0.7),
      make_uniform_policy(game));
  std::ostringstream expect;
  expect << "xi_P=" << report.xi_p;
  CHECK(text.find(expect.str()) != std::string::npos);
  CHECK(text.find("xi_R=") != std::string::npos);

  // Corrupt must reject an out-of-range epsilon with the validation code.
  const std::string data_path = temp_path("cli-data.jsonl");
  CHECK(run_cli("gen-data --config " + config_path + " --out " + data_path) ==
        0);
  CHECK(run_cli("corrupt --config " + config_path + " --in " + data_path +
                " --epsilon 0.7 --out " + temp_path("cli-bad.jsonl")) == 2);
}
