#include "marg/game.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace marg {

namespace {
constexpr double kSimplexTol = 1e-9;
}

LinearMarkovGame::LinearMarkovGame(
    int num_agents, int horizon, int num_states, std::vector<int> num_actions,
    int feature_dim, Eigen::MatrixXd features, std::vector<Eigen::MatrixXd> xi,
    std::vector<std::vector<Eigen::VectorXd>> theta_star, double noise_scale,
    int initial_state)
    : num_agents_(num_agents),
      horizon_(horizon),
      num_states_(num_states),
      num_actions_(std::move(num_actions)),
      feature_dim_(feature_dim),
      features_(std::move(features)),
      xi_(std::move(xi)),
      theta_star_(std::move(theta_star)),
      noise_scale_(noise_scale),
      initial_state_(initial_state) {
  num_joint_actions_ = 1;
  for (int a : num_actions_) num_joint_actions_ *= a;
  validate();
  transitions_.resize(horizon_);
  for (int h = 0; h < horizon_; ++h) {
    transitions_[h] = features_ * xi_[h].transpose();
  }
  // Transition rows must be exact probability distributions.
  for (int h = 0; h < horizon_; ++h) {
    for (int row = 0; row < transitions_[h].rows(); ++row) {
      double sum = 0.0;
      for (int sp = 0; sp < num_states_; ++sp) {
        double p = transitions_[h](row, sp);
        if (p < -kSimplexTol || p > 1.0 + kSimplexTol) {
          throw std::invalid_argument("transition entry outside [0,1]");
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > kSimplexTol) {
        throw std::invalid_argument("transition row does not sum to 1");
      }
    }
  }
}

void LinearMarkovGame::validate() const {
  if (num_agents_ < 1 || horizon_ < 1 || num_states_ < 1 || feature_dim_ < 1) {
    throw std::invalid_argument("game dimensions must be positive");
  }
  if (static_cast<int>(num_actions_.size()) != num_agents_) {
    throw std::invalid_argument("num_actions size mismatch");
  }
  for (int a : num_actions_) {
    if (a < 1) throw std::invalid_argument("empty action set");
  }
  if (initial_state_ < 0 || initial_state_ >= num_states_) {
    throw std::invalid_argument("initial state out of range");
  }
  if (features_.rows() != num_states_ * num_joint_actions_ ||
      features_.cols() != feature_dim_) {
    throw std::invalid_argument("feature matrix shape mismatch");
  }
  for (int r = 0; r < features_.rows(); ++r) {
    if (features_.row(r).norm() > 1.0 + kSimplexTol) {
      throw std::invalid_argument("feature norm exceeds 1");
    }
  }
  if (static_cast<int>(xi_.size()) != horizon_) {
    throw std::invalid_argument("xi horizon mismatch");
  }
  const double sqrt_d = std::sqrt(static_cast<double>(feature_dim_));
  for (const auto& x : xi_) {
    if (x.rows() != num_states_ || x.cols() != feature_dim_) {
      throw std::invalid_argument("xi shape mismatch");
    }
    for (int sp = 0; sp < num_states_; ++sp) {
      if (x.row(sp).norm() > sqrt_d + kSimplexTol) {
        throw std::invalid_argument("xi norm exceeds sqrt(d)");
      }
    }
  }
  if (static_cast<int>(theta_star_.size()) != num_agents_) {
    throw std::invalid_argument("theta_star agent mismatch");
  }
  for (const auto& per_agent : theta_star_) {
    if (static_cast<int>(per_agent.size()) != horizon_) {
      throw std::invalid_argument("theta_star horizon mismatch");
    }
    for (const auto& th : per_agent) {
      if (th.size() != feature_dim_) {
        throw std::invalid_argument("theta_star dimension mismatch");
      }
      if (th.norm() > sqrt_d + kSimplexTol) {
        throw std::invalid_argument("theta_star norm exceeds sqrt(d)");
      }
    }
  }
  if (noise_scale_ < 0.0) {
    throw std::invalid_argument("noise scale must be nonnegative");
  }
}

int LinearMarkovGame::encode_joint(const std::vector<int>& actions) const {
  int a = 0;
  for (int i = 0; i < num_agents_; ++i) {
    a = a * num_actions_[i] + actions[i];
  }
  return a;
}

std::vector<int> LinearMarkovGame::decode_joint(int a) const {
  std::vector<int> actions(num_agents_);
  for (int i = num_agents_ - 1; i >= 0; --i) {
    actions[i] = a % num_actions_[i];
    a /= num_actions_[i];
  }
  return actions;
}

std::string LinearMarkovGame::to_json() const {
  nlohmann::json j;
  j["num_agents"] = num_agents_;
  j["horizon"] = horizon_;
  j["num_states"] = num_states_;
  j["num_actions"] = num_actions_;
  j["feature_dim"] = feature_dim_;
  j["noise_scale"] = noise_scale_;
  j["initial_state"] = initial_state_;
  auto matrix_to_json = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows(m.rows());
    for (int r = 0; r < m.rows(); ++r) {
      rows[r].assign(m.row(r).begin(), m.row(r).end());
    }
    return rows;
  };
  j["features"] = matrix_to_json(features_);
  for (const auto& x : xi_) j["xi"].push_back(matrix_to_json(x));
  for (const auto& per_agent : theta_star_) {
    nlohmann::json agent = nlohmann::json::array();
    for (const auto& th : per_agent) {
      agent.push_back(std::vector<double>(th.begin(), th.end()));
    }
    j["theta_star"].push_back(agent);
  }
  return j.dump(2);
}

LinearMarkovGame LinearMarkovGame::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  auto matrix_from_json = [](const nlohmann::json& rows) {
    Eigen::MatrixXd m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
  };
  std::vector<Eigen::MatrixXd> xi;
  for (const auto& x : j.at("xi")) xi.push_back(matrix_from_json(x));
  std::vector<std::vector<Eigen::VectorXd>> theta;
  for (const auto& agent : j.at("theta_star")) {
    std::vector<Eigen::VectorXd> per_agent;
    for (const auto& th : agent) {
      Eigen::VectorXd v(th.size());
      for (int k = 0; k < v.size(); ++k) v[k] = th[k].get<double>();
      per_agent.push_back(std::move(v));
    }
    theta.push_back(std::move(per_agent));
  }
  return LinearMarkovGame(
      j.at("num_agents").get<int>(), j.at("horizon").get<int>(),
      j.at("num_states").get<int>(), j.at("num_actions").get<std::vector<int>>(),
      j.at("feature_dim").get<int>(), matrix_from_json(j.at("features")),
      std::move(xi), std::move(theta), j.at("noise_scale").get<double>(),
      j.at("initial_state").get<int>());
}

LinearMarkovGame make_tabular_game(
    int num_agents, int horizon, int num_states, std::vector<int> num_actions,
    const std::vector<Eigen::MatrixXd>& transition_rows,
    const std::vector<std::vector<Eigen::VectorXd>>& rewards,
    double noise_scale, int initial_state) {
  int joint = 1;
  for (int a : num_actions) joint *= a;
  const int d = num_states * joint;
  Eigen::MatrixXd features = Eigen::MatrixXd::Identity(d, d);
  std::vector<Eigen::MatrixXd> xi(horizon);
  for (int h = 0; h < horizon; ++h) {
    if (transition_rows[h].rows() != d || transition_rows[h].cols() != num_states) {
      throw std::invalid_argument("tabular transition shape mismatch");
    }
    xi[h] = transition_rows[h].transpose();  // row s' = column of P
  }
  std::vector<std::vector<Eigen::VectorXd>> theta(num_agents);
  for (int i = 0; i < num_agents; ++i) {
    theta[i].resize(horizon);
    for (int h = 0; h < horizon; ++h) {
      if (rewards[i][h].size() != d) {
        throw std::invalid_argument("tabular reward shape mismatch");
      }
      theta[i][h] = rewards[i][h];
    }
  }
  return LinearMarkovGame(num_agents, horizon, num_states,
                          std::move(num_actions), d, std::move(features),
                          std::move(xi), std::move(theta), noise_scale,
                          initial_state);
}

LinearMarkovGame make_random_feature_game(int num_agents, int horizon,
                                          int num_states,
                                          std::vector<int> num_actions,
                                          int latent_dim, double noise_scale,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  int joint = 1;
  for (int a : num_actions) joint *= a;
  // Features on the latent simplex, so <phi, xi(.)> mixes the per-latent
  // next-state distributions and stays a distribution.
  Eigen::MatrixXd features(num_states * joint, latent_dim);
  for (int r = 0; r < features.rows(); ++r) {
    double sum = 0.0;
    for (int c = 0; c < latent_dim; ++c) {
      features(r, c) = unif(rng);
      sum += features(r, c);
    }
    features.row(r) /= sum;
  }
  std::vector<Eigen::MatrixXd> xi(horizon);
  for (int h = 0; h < horizon; ++h) {
    Eigen::MatrixXd q(latent_dim, num_states);  // row k: distribution over s'
    for (int k = 0; k < latent_dim; ++k) {
      double sum = 0.0;
      for (int sp = 0; sp < num_states; ++sp) {
        q(k, sp) = unif(rng);
        sum += q(k, sp);
      }
      q.row(k) /= sum;
    }
    xi[h] = q.transpose();  // S' x d
  }
  const double bound = std::sqrt(static_cast<double>(latent_dim));
  std::uniform_real_distribution<double> rew(-1.0, 1.0);
  std::vector<std::vector<Eigen::VectorXd>> theta(num_agents);
  for (int i = 0; i < num_agents; ++i) {
    theta[i].resize(horizon);
    for (int h = 0; h < horizon; ++h) {
      Eigen::VectorXd th(latent_dim);
      for (int k = 0; k < latent_dim; ++k) th[k] = rew(rng);
      if (th.norm() > bound) th *= bound / th.norm();
      theta[i][h] = th;
    }
  }
  return LinearMarkovGame(num_agents, horizon, num_states,
                          std::move(num_actions), latent_dim,
                          std::move(features), std::move(xi), std::move(theta),
                          noise_scale, 0);
}

}  // namespace marg
