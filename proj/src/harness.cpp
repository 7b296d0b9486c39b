#include "marg/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "marg/dp.hpp"

namespace marg {

namespace {

using nlohmann::json;

PolicySpec parse_policy_spec(const json& j) {
  PolicySpec spec;
  if (j.is_null()) return spec;
  spec.type = j.value("type", "uniform");
  if (j.contains("preferred")) {
    spec.preferred = j["preferred"].get<std::vector<int>>();
  }
  spec.bias = j.value("bias", 0.7);
  if (j.contains("choice")) {
    spec.choice =
        j["choice"].get<std::vector<std::vector<std::vector<int>>>>();
  }
  return spec;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

bool timing_enabled() {
  const char* v = std::getenv("MARG_TIMING");
  return v != nullptr && std::string(v) == "1";
}

int thread_cap() {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap <= 0) cap = 1;
  if (const char* v = std::getenv("MARG_THREADS")) {
    const int req = std::atoi(v);
    if (req > 0) cap = std::min(cap, req);
  }
  return cap;
}

// Largest c with a >= c * b in the PSD order, via the generalized
// eigenproblem on b's range; +inf (here: 1e18) when b is negligible.
double psd_domination_constant(const Eigen::MatrixXd& a,
                               const Eigen::MatrixXd& b) {
  constexpr double kTiny = 1e-12;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(b);
  double c_best = 1e18;
  for (int k = 0; k < b.rows(); ++k) {
    if (eb.eigenvalues()[k] <= kTiny) continue;
    const Eigen::VectorXd x = eb.eigenvectors().col(k);
    c_best = std::min(c_best, x.dot(a * x) / x.dot(b * x));
  }
  // Cross terms of b's range can still matter; refine with the pencil
  // solver when b is nonsingular enough.
  if (eb.eigenvalues().minCoeff() > kTiny) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> pencil(a, b);
    c_best = std::min(c_best, pencil.eigenvalues().minCoeff());
  }
  return std::max(0.0, c_best);
}

// All deterministic Markov policies of one agent, as choice[h][s] tables.
std::vector<std::vector<std::vector<int>>> agent_deterministic_choices(
    const LinearMarkovGame& game, int agent) {
  const int H = game.horizon();
  const int S = game.num_states();
  const int Ai = game.num_actions()[agent];
  const int cells = H * S;
  std::int64_t total = 1;
  for (int k = 0; k < cells; ++k) total *= Ai;
  std::vector<std::vector<std::vector<int>>> out;
  for (std::int64_t idx = 0; idx < total; ++idx) {
    std::int64_t rem = idx;
    std::vector<std::vector<int>> choice(H, std::vector<int>(S));
    for (int h = 0; h < H; ++h) {
      for (int s = 0; s < S; ++s) {
        choice[h][s] = static_cast<int>(rem % Ai);
        rem /= Ai;
      }
    }
    out.push_back(std::move(choice));
  }
  return out;
}

ProductMarkovPolicy with_agent_replaced(
    const LinearMarkovGame& game, const ProductMarkovPolicy& base, int agent,
    const std::vector<std::vector<int>>& choice) {
  std::vector<std::vector<Eigen::MatrixXd>> tables(game.num_agents());
  for (int i = 0; i < game.num_agents(); ++i) {
    for (int h = 0; h < game.horizon(); ++h) {
      if (i != agent) {
        tables[i].push_back(base.table(i, h));
        continue;
      }
      Eigen::MatrixXd t = Eigen::MatrixXd::Zero(game.num_states(),
                                                game.num_actions()[i]);
      for (int s = 0; s < game.num_states(); ++s) t(s, choice[h][s]) = 1.0;
      tables[i].push_back(std::move(t));
    }
  }
  return ProductMarkovPolicy(std::move(tables));
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j = json::parse(json_text);
  ExperimentConfig config;
  if (j.contains("game")) {
    const json& g = j["game"];
    config.game.name = g.value("name", "");
    config.game.path = g.value("path", "");
    if (g.contains("random")) {
      const json& r = g["random"];
      config.game.random = true;
      config.game.num_agents = r.value("num_agents", 2);
      config.game.horizon = r.value("horizon", 2);
      config.game.num_states = r.value("num_states", 2);
      config.game.latent_dim = r.value("latent_dim", 3);
      if (r.contains("num_actions")) {
        config.game.num_actions = r["num_actions"].get<std::vector<int>>();
      }
      config.game.noise_scale = r.value("noise_scale", 0.0);
      config.game.seed = r.value("seed", 0ULL);
    }
  }
  config.mu = parse_policy_spec(j.value("mu", json()));
  config.mu_ref = parse_policy_spec(j.value("mu_ref", json()));
  config.pi_star = parse_policy_spec(j.value("pi_star", json()));
  config.m = j.value("m", 1000);
  if (j.contains("epsilons")) {
    config.epsilons = j["epsilons"].get<std::vector<double>>();
  }
  config.attacker = j.value("attacker", "label_flip_targeted");
  if (j.contains("target_agents")) {
    config.target_agents = j["target_agents"].get<std::vector<int>>();
  }
  config.learner = j.value("learner", "uniform");
  if (j.contains("learner_config")) {
    const json& l = j["learner_config"];
    LearnerConfig& lc = config.learner_config;
    lc.epsilon = l.value("epsilon", lc.epsilon);
    lc.delta = l.value("delta", lc.delta);
    lc.lambda = l.value("lambda", lc.lambda);
    lc.eta1 = l.value("eta1", lc.eta1);
    lc.eta2 = l.value("eta2", lc.eta2);
    lc.nu = l.value("nu", lc.nu);
    lc.t1 = l.value("t1", lc.t1);
    lc.t2 = l.value("t2", lc.t2);
    lc.hedge_variant = l.value("hedge_variant", lc.hedge_variant);
    lc.radius_cap = l.value("radius_cap", lc.radius_cap);
    lc.c1 = l.value("c1", lc.c1);
    lc.c2 = l.value("c2", lc.c2);
    lc.candidate_policy_budget =
        l.value("candidate_policy_budget", lc.candidate_policy_budget);
    lc.seed = l.value("seed", lc.seed);
  }
  if (j.contains("seeds")) {
    config.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  }
  config.output = j.value("output", "results.csv");
  return config;
}

void validate_config(const ExperimentConfig& config) {
  if (config.seeds.empty()) {
    throw std::invalid_argument("config: seeds must be non-empty");
  }
  for (double eps : config.epsilons) {
    if (eps < 0.0 || eps >= 0.5) {
      throw std::invalid_argument("config: every epsilon must be in [0, 1/2)");
    }
  }
  if (config.learner != "uniform" && config.learner != "unilateral" &&
      config.learner != "cce" && config.learner != "naive_baseline") {
    throw std::invalid_argument("config: unknown learner '" + config.learner +
                                "'");
  }
  if (config.m <= 0) throw std::invalid_argument("config: m must be positive");
  attacker_from_string(config.attacker);  // throws on unknown name
}

LinearMarkovGame resolve_game(const GameSpec& spec) {
  if (!spec.name.empty()) return reference_game(spec.name);
  if (!spec.path.empty()) {
    std::ifstream in(spec.path);
    if (!in) throw std::runtime_error("cannot open game file: " + spec.path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return LinearMarkovGame::from_json(buf.str());
  }
  if (spec.random) {
    return make_random_feature_game(spec.num_agents, spec.horizon,
                                    spec.num_states, spec.num_actions,
                                    spec.latent_dim, spec.noise_scale,
                                    spec.seed);
  }
  throw std::invalid_argument("config: game needs a name, path, or generator");
}

ProductMarkovPolicy resolve_policy(const LinearMarkovGame& game,
                                   const PolicySpec& spec) {
  if (spec.type == "uniform") return make_uniform_policy(game);
  if (spec.type == "biased") {
    return make_biased_policy(game, spec.preferred, spec.bias);
  }
  if (spec.type == "deterministic") {
    return make_deterministic_policy(game, spec.choice);
  }
  throw std::invalid_argument("unknown policy spec type '" + spec.type + "'");
}

LinearMarkovGame make_identical_interest_game() {
  const int S = 1, H = 2;
  Eigen::MatrixXd trans(4, 1);
  trans.setOnes();
  Eigen::VectorXd r(4);
  r << 1.0, 0.2, 0.2, 0.7;
  std::vector<std::vector<Eigen::VectorXd>> rewards = {{r, r}, {r, r}};
  return make_tabular_game(2, H, S, {2, 2}, {trans, trans}, rewards, 0.0, 0);
}

LinearMarkovGame make_matching_pennies_game() {
  const int S = 1, H = 2;
  Eigen::MatrixXd trans(4, 1);
  trans.setOnes();
  Eigen::VectorXd r0(4), r1(4);
  r0 << 0.5, -0.5, -0.5, 0.5;
  r1 = -r0;
  std::vector<std::vector<Eigen::VectorXd>> rewards = {{r0, r0}, {r1, r1}};
  return make_tabular_game(2, H, S, {2, 2}, {trans, trans}, rewards, 0.0, 0);
}

LinearMarkovGame make_two_state_game() {
  const int S = 2, H = 2, A = 4;
  Eigen::MatrixXd trans(S * A, S);
  Eigen::VectorXd p0(S * A);
  p0 << 0.9, 0.7, 0.5, 0.3, 0.6, 0.4, 0.8, 0.2;
  for (int k = 0; k < S * A; ++k) {
    trans(k, 0) = p0[k];
    trans(k, 1) = 1.0 - p0[k];
  }
  Eigen::VectorXd r0(S * A), r1(S * A);
  r0 << 0.8, 0.1, 0.3, 0.5, 0.2, 0.6, 0.4, 0.1;
  r1 << 0.7, 0.4, 0.1, 0.6, 0.3, 0.2, 0.8, 0.2;
  std::vector<std::vector<Eigen::VectorXd>> rewards = {{r0, r0}, {r1, r1}};
  return make_tabular_game(2, H, S, {2, 2}, {trans, trans}, rewards, 0.0, 0);
}

LinearMarkovGame reference_game(const std::string& name) {
  if (name == "identical_interest") return make_identical_interest_game();
  if (name == "matching_pennies") return make_matching_pennies_game();
  if (name == "two_state") return make_two_state_game();
  throw std::invalid_argument("unknown reference game '" + name + "'");
}

std::string csv_header() {
  return "seed,epsilon,m,learner,true_gap,estimated_gap,reward_param_error,"
         "wall_time_ms,status,message,diagnostics";
}

std::string csv_line(const ResultRow& row) {
  std::string err;
  for (size_t i = 0; i < row.reward_param_error.size(); ++i) {
    if (i > 0) err += ';';
    err += format_double(row.reward_param_error[i]);
  }
  std::string diag;
  for (const auto& [key, value] : row.diagnostics) {
    if (!diag.empty()) diag += ';';
    diag += key + "=" + format_double(value);
  }
  std::string line;
  line += std::to_string(row.seed) + ",";
  line += format_double(row.epsilon) + ",";
  line += std::to_string(row.m) + ",";
  line += csv_quote(row.learner) + ",";
  line += format_double(row.true_gap) + ",";
  line += format_double(row.estimated_gap) + ",";
  line += csv_quote(err) + ",";
  line += format_double(row.wall_time_ms) + ",";
  line += csv_quote(row.status) + ",";
  line += csv_quote(row.message) + ",";
  line += csv_quote(diag);
  return line;
}

ResultRow parse_csv_line(const std::string& line) {
  const auto fields = csv_split(line);
  if (fields.size() != 11) {
    throw std::runtime_error("CSV row has wrong arity: " + line);
  }
  ResultRow row;
  row.seed = std::stoull(fields[0]);
  row.epsilon = std::stod(fields[1]);
  row.m = std::stoi(fields[2]);
  row.learner = fields[3];
  row.true_gap = std::stod(fields[4]);
  row.estimated_gap = std::stod(fields[5]);
  if (!fields[6].empty()) {
    std::istringstream err(fields[6]);
    std::string tok;
    while (std::getline(err, tok, ';')) {
      row.reward_param_error.push_back(std::stod(tok));
    }
  }
  row.wall_time_ms = std::stod(fields[7]);
  row.status = fields[8];
  row.message = fields[9];
  if (!fields[10].empty()) {
    std::istringstream diag(fields[10]);
    std::string tok;
    while (std::getline(diag, tok, ';')) {
      const size_t eq = tok.find('=');
      if (eq != std::string::npos) {
        row.diagnostics[tok.substr(0, eq)] = std::stod(tok.substr(eq + 1));
      }
    }
  }
  return row;
}

std::vector<ProductMarkovPolicy> candidate_policies(
    const LinearMarkovGame& game, std::int64_t budget, std::uint64_t seed) {
  auto candidates = enumerate_deterministic_policies(game, budget, seed);
  candidates.push_back(make_uniform_policy(game));
  return candidates;
}

double true_gap_of(const LinearMarkovGame& game, const LearnerOutput& out) {
  if (out.is_correlated) {
    return cce_gap(game, out.correlated_policy, game.theta_star()).total_gap;
  }
  return nash_gap(game, out.product_policy, game.theta_star()).total_gap;
}

ResultRow run_cell(const LinearMarkovGame& game, const ProductMarkovPolicy& mu,
                   const ProductMarkovPolicy& mu_ref,
                   const ExperimentConfig& config,
                   const std::vector<ProductMarkovPolicy>& candidates,
                   std::uint64_t seed, double epsilon) {
  ResultRow row;
  row.seed = seed;
  row.epsilon = epsilon;
  row.m = config.m;
  row.learner = config.learner;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    PreferenceDataset data =
        generate_clean_dataset(game, mu, mu_ref, config.m, seed);
    if (epsilon > 0.0) {
      data = corrupt_dataset(data, game, epsilon,
                             attacker_from_string(config.attacker),
                             config.target_agents, seed);
    }
    LearnerConfig lc = config.learner_config;
    lc.epsilon = epsilon;
    lc.seed = seed;
    const GameSkeleton skeleton = skeleton_of(game);
    LearnerOutput out;
    if (config.learner == "uniform") {
      out = uniform_learner(data, skeleton, lc, candidates);
    } else if (config.learner == "naive_baseline") {
      out = naive_baseline_learner(data, skeleton, lc, candidates);
    } else if (config.learner == "unilateral") {
      out = unilateral_learner(data, skeleton, lc, candidates);
    } else if (config.learner == "cce") {
      out = cce_learner(data, skeleton, lc);
    } else {
      throw std::invalid_argument("unknown learner '" + config.learner + "'");
    }
    row.true_gap = true_gap_of(game, out);
    row.estimated_gap = out.estimated_gap;
    for (int i = 0; i < game.num_agents(); ++i) {
      row.reward_param_error.push_back(
          (out.reward_model.theta_hat[i] - concat_theta(game.theta_star()[i]))
              .norm());
    }
    row.diagnostics = out.diagnostics;
  } catch (const std::exception& e) {
    row.status = "error";
    row.message = e.what();
  }
  if (timing_enabled()) {
    row.wall_time_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
  }
  return row;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const LinearMarkovGame game = resolve_game(config.game);
  const ProductMarkovPolicy mu = resolve_policy(game, config.mu);
  const ProductMarkovPolicy mu_ref = resolve_policy(game, config.mu_ref);
  const auto candidates = candidate_policies(
      game, config.learner_config.candidate_policy_budget,
      config.learner_config.seed);

  struct Cell {
    std::uint64_t seed;
    double epsilon;
  };
  std::vector<Cell> cells;
  for (std::uint64_t seed : config.seeds) {
    for (double eps : config.epsilons) cells.push_back({seed, eps});
  }
  std::vector<ResultRow> rows(cells.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t k = next.fetch_add(1);
      if (k >= cells.size()) break;
      rows[k] = run_cell(game, mu, mu_ref, config, candidates, cells[k].seed,
                         cells[k].epsilon);
    }
  };
  const int threads =
      std::min<int>(thread_cap(), static_cast<int>(cells.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (!config.output.empty()) {
    const std::string tmp = config.output + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) {
        throw std::runtime_error("cannot write results file: " + tmp);
      }
      out << csv_header() << "\n";
      for (const auto& row : rows) out << csv_line(row) << "\n";
    }
    if (std::rename(tmp.c_str(), config.output.c_str()) != 0) {
      throw std::runtime_error("cannot move results into place: " +
                               config.output);
    }
  }
  return rows;
}

CoverageReport verify_coverage(const LinearMarkovGame& game,
                               const ProductMarkovPolicy& mu,
                               const ProductMarkovPolicy& mu_ref,
                               const ProductMarkovPolicy& pi_star) {
  CoverageReport report;
  const CoverageMatrices base = coverage_matrices(game, mu, mu_ref);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ed(base.sigma_diff);
  report.xi_r = ed.eigenvalues().minCoeff() / game.horizon();
  report.xi_p = std::numeric_limits<double>::infinity();
  for (const auto& sigma : base.sigma_mu) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    report.xi_p = std::min(report.xi_p, es.eigenvalues().minCoeff());
  }

  report.c_r = 1e18;
  report.c_p = 1e18;
  const std::vector<const ProductMarkovPolicy*> rhos = {&mu, &mu_ref};
  for (int i = 0; i < game.num_agents(); ++i) {
    for (const auto& choice : agent_deterministic_choices(game, i)) {
      const ProductMarkovPolicy deviated =
          with_agent_replaced(game, pi_star, i, choice);
      for (const auto* rho_prime : rhos) {
        const Eigen::MatrixXd rhs_diff =
            coverage_matrices(game, deviated, *rho_prime).sigma_diff;
        for (const auto* rho : rhos) {
          const Eigen::MatrixXd lhs_diff =
              coverage_matrices(game, *rho, *rho_prime).sigma_diff;
          report.c_r =
              std::min(report.c_r, psd_domination_constant(lhs_diff, rhs_diff));
        }
      }
      const CoverageMatrices dev_cov =
          coverage_matrices(game, deviated, deviated);
      for (int h = 0; h < game.horizon(); ++h) {
        report.c_p = std::min(
            report.c_p,
            psd_domination_constant(base.sigma_mu[h], dev_cov.sigma_mu[h]));
      }
    }
  }
  return report;
}

}  // namespace marg
