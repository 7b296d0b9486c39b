#include "marg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace marg {

double bt_preference_prob(const Trajectory& tau, const Trajectory& tau_prime,
                          const Eigen::VectorXd& theta_i) {
  const int H = static_cast<int>(tau.states.size());
  const int d = static_cast<int>(tau.step_features.cols());
  if (theta_i.size() != H * d) {
    throw std::invalid_argument("theta must be the H*d concatenation");
  }
  double margin = 0.0;
  for (int h = 0; h < H; ++h) {
    margin += theta_i.segment(h * d, d).dot(
        (tau.step_features.row(h) - tau_prime.step_features.row(h))
            .transpose());
  }
  return 1.0 / (1.0 + std::exp(-margin));
}

Eigen::VectorXd delta_feature(const PreferenceSample& sample) {
  const int H = static_cast<int>(sample.tau.states.size());
  const int d = static_cast<int>(sample.tau.step_features.cols());
  Eigen::VectorXd delta(H * d);
  for (int h = 0; h < H; ++h) {
    delta.segment(h * d, d) =
        (sample.tau.step_features.row(h) -
         sample.tau_prime.step_features.row(h)).transpose();
  }
  return delta;
}

Eigen::VectorXd concat_theta(const std::vector<Eigen::VectorXd>& theta_i) {
  const int H = static_cast<int>(theta_i.size());
  const int d = H > 0 ? static_cast<int>(theta_i[0].size()) : 0;
  Eigen::VectorXd out(H * d);
  for (int h = 0; h < H; ++h) out.segment(h * d, d) = theta_i[h];
  return out;
}

PreferenceDataset generate_clean_dataset(const LinearMarkovGame& game,
                                         const ProductMarkovPolicy& mu,
                                         const ProductMarkovPolicy& mu_ref,
                                         int m, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("dataset size must be positive");
  PreferenceDataset dataset;
  dataset.seed = seed;
  dataset.game_hash = game_hash(game);
  dataset.samples.reserve(m);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Eigen::VectorXd> theta(game.num_agents());
  for (int i = 0; i < game.num_agents(); ++i) {
    theta[i] = concat_theta(game.theta_star()[i]);
  }
  for (int j = 0; j < m; ++j) {
    PreferenceSample sample;
    sample.tau = sample_trajectory(game, mu, rng());
    sample.tau_prime = sample_trajectory(game, mu_ref, rng());
    sample.labels.resize(game.num_agents());
    for (int i = 0; i < game.num_agents(); ++i) {
      const double p = bt_preference_prob(sample.tau, sample.tau_prime,
                                          theta[i]);
      sample.labels[i] = unif(rng) < p ? +1 : -1;
    }
    dataset.samples.push_back(std::move(sample));
  }
  return dataset;
}

Attacker attacker_from_string(const std::string& name) {
  if (name == "label_flip_random") return Attacker::kLabelFlipRandom;
  if (name == "label_flip_targeted") return Attacker::kLabelFlipTargeted;
  if (name == "trajectory_substitution") {
    return Attacker::kTrajectorySubstitution;
  }
  if (name == "feature_outlier") return Attacker::kFeatureOutlier;
  throw std::invalid_argument("unknown attacker: " + name);
}

std::string attacker_name(Attacker a) {
  switch (a) {
    case Attacker::kLabelFlipRandom: return "label_flip_random";
    case Attacker::kLabelFlipTargeted: return "label_flip_targeted";
    case Attacker::kTrajectorySubstitution: return "trajectory_substitution";
    case Attacker::kFeatureOutlier: return "feature_outlier";
  }
  return "?";
}

namespace {

// Joint action at s0 extremizing the summed mean reward across agents and
// steps; used by the substitution attack to fabricate a fake optimum.
std::pair<int, int> best_and_worst_joint_action(const LinearMarkovGame& game) {
  const int s0 = game.initial_state();
  int best = 0, worst = 0;
  double best_v = -1e300, worst_v = 1e300;
  for (int a = 0; a < game.num_joint_actions(); ++a) {
    double v = 0.0;
    for (int i = 0; i < game.num_agents(); ++i) {
      for (int h = 0; h < game.horizon(); ++h) {
        v += game.feature_row(s0, a).dot(game.theta_star()[i][h]);
      }
    }
    if (v > best_v) { best_v = v; best = a; }
    if (v < worst_v) { worst_v = v; worst = a; }
  }
  return {best, worst};
}

}  // namespace

PreferenceDataset corrupt_dataset(const PreferenceDataset& dataset,
                                  const LinearMarkovGame& game,
                                  double epsilon, Attacker attacker,
                                  const std::vector<int>& target_agents,
                                  std::uint64_t seed) {
  if (epsilon < 0.0 || epsilon >= 0.5) {
    throw std::invalid_argument("epsilon must lie in [0, 1/2)");
  }
  const int m = dataset.size();
  const int budget = static_cast<int>(std::floor(epsilon * m));
  PreferenceDataset out = dataset;
  out.epsilon_budget = epsilon;
  if (budget == 0) return out;

  std::vector<Eigen::VectorXd> theta(game.num_agents());
  for (int i = 0; i < game.num_agents(); ++i) {
    theta[i] = concat_theta(game.theta_star()[i]);
  }
  std::vector<int> agents = target_agents;
  if (agents.empty()) {
    agents.resize(game.num_agents());
    std::iota(agents.begin(), agents.end(), 0);
  }

  auto mark = [&](int idx) {
    if (!out.samples[idx].corrupted) {
      out.clean_originals[idx] = dataset.samples[idx];
      out.samples[idx].corrupted = true;
    }
  };

  switch (attacker) {
    case Attacker::kLabelFlipRandom: {
      std::vector<int> idx(m);
      std::iota(idx.begin(), idx.end(), 0);
      std::mt19937_64 rng(seed);
      std::shuffle(idx.begin(), idx.end(), rng);
      for (int k = 0; k < budget; ++k) {
        mark(idx[k]);
        for (int& o : out.samples[idx[k]].labels) o = -o;
      }
      break;
    }
    case Attacker::kLabelFlipTargeted: {
      // Mislabel the highest-margin samples for the targeted agents; the
      // severity ordering makes corruption sets nested in epsilon.
      std::vector<std::pair<double, int>> ranked(m);
      for (int j = 0; j < m; ++j) {
        double margin = 0.0;
        const Eigen::VectorXd delta = delta_feature(dataset.samples[j]);
        for (int i : agents) {
          margin = std::max(margin, std::abs(theta[i].dot(delta)));
        }
        ranked[j] = {-margin, j};
      }
      std::stable_sort(ranked.begin(), ranked.end());
      for (int k = 0; k < budget; ++k) {
        const int j = ranked[k].second;
        mark(j);
        const Eigen::VectorXd delta = delta_feature(dataset.samples[j]);
        for (int i : agents) {
          const double score = theta[i].dot(delta);
          out.samples[j].labels[i] = score > 0.0 ? -1 : +1;
        }
      }
      break;
    }
    case Attacker::kTrajectorySubstitution: {
      // Fabricate evidence that the worst joint action is preferred to the
      // best one, biasing naive reward estimation toward a fake optimum.
      const auto [best, worst] = best_and_worst_joint_action(game);
      const int s0 = game.initial_state();
      const Trajectory fake_good = make_trajectory(
          game, std::vector<int>(game.horizon(), s0),
          std::vector<int>(game.horizon(), worst));
      const Trajectory fake_bad = make_trajectory(
          game, std::vector<int>(game.horizon(), s0),
          std::vector<int>(game.horizon(), best));
      for (int k = 0; k < budget; ++k) {
        mark(k);
        out.samples[k].tau = fake_good;
        out.samples[k].tau_prime = fake_bad;
        for (int i : agents) out.samples[k].labels[i] = +1;
      }
      break;
    }
    case Attacker::kFeatureOutlier: {
      // Plant a single repeated extreme feature-difference direction to
      // distort covariance and whitening estimates.
      int row_a = 0, row_b = 0;
      double best_dist = -1.0;
      const int rows = static_cast<int>(game.features().rows());
      for (int r1 = 0; r1 < rows; ++r1) {
        for (int r2 = 0; r2 < rows; ++r2) {
          const double dist =
              (game.features().row(r1) - game.features().row(r2)).norm();
          if (dist > best_dist) { best_dist = dist; row_a = r1; row_b = r2; }
        }
      }
      const int A = game.num_joint_actions();
      const Trajectory ta = make_trajectory(
          game, std::vector<int>(game.horizon(), row_a / A),
          std::vector<int>(game.horizon(), row_a % A));
      const Trajectory tb = make_trajectory(
          game, std::vector<int>(game.horizon(), row_b / A),
          std::vector<int>(game.horizon(), row_b % A));
      for (int k = 0; k < budget; ++k) {
        mark(k);
        out.samples[k].tau = ta;
        out.samples[k].tau_prime = tb;
        for (int i : agents) out.samples[k].labels[i] = +1;
      }
      break;
    }
  }
  return out;
}

std::pair<PreferenceDataset, PreferenceDataset> split_dataset(
    const PreferenceDataset& dataset, std::uint64_t seed) {
  const int m = dataset.size();
  if (m < 2) throw std::invalid_argument("need at least 2 samples to split");
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  PreferenceDataset d1, d2;
  d1.epsilon_budget = d2.epsilon_budget = dataset.epsilon_budget;
  d1.seed = d2.seed = dataset.seed;
  d1.game_hash = d2.game_hash = dataset.game_hash;
  const int half = m / 2;
  for (int k = 0; k < m; ++k) {
    auto& dst = k < half ? d1 : d2;
    dst.samples.push_back(dataset.samples[idx[k]]);
    auto it = dataset.clean_originals.find(idx[k]);
    if (it != dataset.clean_originals.end()) {
      dst.clean_originals[static_cast<int>(dst.samples.size()) - 1] =
          it->second;
    }
  }
  return {std::move(d1), std::move(d2)};
}

PerStepFeatureViews per_step_feature_views(const PreferenceDataset& dataset) {
  PerStepFeatureViews views;
  if (dataset.samples.empty()) return views;
  const int H = static_cast<int>(dataset.samples[0].tau.states.size());
  views.mu_side.resize(H);
  views.mu_ref_side.resize(H);
  for (const auto& sample : dataset.samples) {
    for (int h = 0; h < H; ++h) {
      views.mu_side[h].push_back(sample.tau.step_features.row(h).transpose());
      views.mu_ref_side[h].push_back(
          sample.tau_prime.step_features.row(h).transpose());
    }
  }
  return views;
}

namespace {

void write_record(std::ostream& os, const PreferenceSample& sample) {
  const int H = static_cast<int>(sample.tau.states.size());
  bool first = true;
  auto emit = [&](int v) {
    if (!first) os << ',';
    os << v;
    first = false;
  };
  for (int h = 0; h < H; ++h) { emit(sample.tau.states[h]); emit(sample.tau.actions[h]); }
  for (int h = 0; h < H; ++h) { emit(sample.tau_prime.states[h]); emit(sample.tau_prime.actions[h]); }
  for (int o : sample.labels) emit(o);
}

PreferenceSample parse_record(const LinearMarkovGame& game,
                              const std::string& line) {
  std::vector<int> fields;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) fields.push_back(std::stoi(tok));
  const int H = game.horizon();
  const int n = game.num_agents();
  if (static_cast<int>(fields.size()) != 4 * H + n) {
    throw std::runtime_error("malformed dataset record");
  }
  PreferenceSample sample;
  std::vector<int> s1(H), a1(H), s2(H), a2(H);
  for (int h = 0; h < H; ++h) { s1[h] = fields[2 * h]; a1[h] = fields[2 * h + 1]; }
  for (int h = 0; h < H; ++h) {
    s2[h] = fields[2 * H + 2 * h];
    a2[h] = fields[2 * H + 2 * h + 1];
  }
  sample.tau = make_trajectory(game, s1, a1);
  sample.tau_prime = make_trajectory(game, s2, a2);
  sample.labels.assign(fields.begin() + 4 * H, fields.end());
  return sample;
}

}  // namespace

void save_dataset(const PreferenceDataset& dataset, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  const int m = dataset.size();
  const int n = m > 0 ? static_cast<int>(dataset.samples[0].labels.size()) : 0;
  const int H = m > 0 ? static_cast<int>(dataset.samples[0].tau.states.size()) : 0;
  const int d = m > 0 ? static_cast<int>(dataset.samples[0].tau.step_features.cols()) : 0;
  os << m << ',' << n << ',' << H << ',' << d << ',' << dataset.game_hash
     << '\n';
  for (const auto& sample : dataset.samples) {
    write_record(os, sample);
    os << '\n';
  }
  std::ofstream truth(path + ".truth");
  if (!truth) throw std::runtime_error("cannot open " + path + ".truth");
  truth << dataset.epsilon_budget << ',' << dataset.seed << '\n';
  for (int j = 0; j < m; ++j) {
    truth << (dataset.samples[j].corrupted ? 1 : 0);
    auto it = dataset.clean_originals.find(j);
    if (it != dataset.clean_originals.end()) {
      truth << ';';
      write_record(truth, it->second);
    }
    truth << '\n';
  }
}

PreferenceDataset load_dataset(const LinearMarkovGame& game,
                               const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string header;
  std::getline(is, header);
  std::stringstream hs(header);
  std::string tok;
  std::vector<std::string> fields;
  while (std::getline(hs, tok, ',')) fields.push_back(tok);
  if (fields.size() != 5) throw std::runtime_error("malformed dataset header");
  PreferenceDataset dataset;
  dataset.game_hash = fields[4];
  if (dataset.game_hash != game_hash(game)) {
    throw std::runtime_error("dataset does not match the supplied game");
  }
  const int m = std::stoi(fields[0]);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    dataset.samples.push_back(parse_record(game, line));
  }
  if (dataset.size() != m) throw std::runtime_error("record count mismatch");
  return dataset;
}

void load_truth_sidecar(const LinearMarkovGame& game,
                        PreferenceDataset* dataset, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(is, line);  // epsilon, seed
  {
    std::stringstream hs(line);
    std::string eps, seed;
    std::getline(hs, eps, ',');
    std::getline(hs, seed, ',');
    dataset->epsilon_budget = std::stod(eps);
    dataset->seed = std::stoull(seed);
  }
  int j = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto semi = line.find(';');
    dataset->samples[j].corrupted = line[0] == '1';
    if (semi != std::string::npos) {
      dataset->clean_originals[j] = parse_record(game, line.substr(semi + 1));
    }
    ++j;
  }
}

std::string game_hash(const LinearMarkovGame& game) {
  const std::string text = game.to_json();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace marg
