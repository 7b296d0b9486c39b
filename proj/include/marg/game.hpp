#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace marg {

// Finite-horizon linear Markov game. Transitions and mean rewards are linear
// in a shared feature map phi(s, a), where a is a joint action:
//   P_h(s' | s, a)   = <phi(s, a), xi_h(s')>
//   R_{i,h}(s, a)    = <phi(s, a), theta_{i,h}>  (+ gamma-subGaussian noise
//                                                 in sampled regression data)
// Joint actions are flat indices in mixed radix over the per-agent action
// sets, agent 0 most significant.
class LinearMarkovGame {
 public:
  LinearMarkovGame(int num_agents, int horizon, int num_states,
                   std::vector<int> num_actions, int feature_dim,
                   Eigen::MatrixXd features,              // (S*A) x d
                   std::vector<Eigen::MatrixXd> xi,       // per h: S' x d
                   std::vector<std::vector<Eigen::VectorXd>> theta_star,
                   double noise_scale, int initial_state);

  int num_agents() const { return num_agents_; }
  int horizon() const { return horizon_; }
  int num_states() const { return num_states_; }
  int num_joint_actions() const { return num_joint_actions_; }
  int feature_dim() const { return feature_dim_; }
  int initial_state() const { return initial_state_; }
  double noise_scale() const { return noise_scale_; }
  const std::vector<int>& num_actions() const { return num_actions_; }

  const Eigen::MatrixXd& features() const { return features_; }
  Eigen::RowVectorXd feature_row(int s, int a) const {
    return features_.row(sa_index(s, a));
  }
  int sa_index(int s, int a) const { return s * num_joint_actions_ + a; }

  // Transition row P_h(. | s, a) over next states, precomputed from xi.
  const Eigen::MatrixXd& transition_matrix(int h) const {
    return transitions_[h];
  }
  const std::vector<Eigen::MatrixXd>& xi() const { return xi_; }
  const std::vector<std::vector<Eigen::VectorXd>>& theta_star() const {
    return theta_star_;
  }

  // Mean reward <phi(s,a), theta_{i,h}> under supplied parameters.
  static double mean_reward(const Eigen::RowVectorXd& phi,
                            const Eigen::VectorXd& theta) {
    return phi.dot(theta);
  }

  // Joint action index <-> per-agent action tuple.
  int encode_joint(const std::vector<int>& actions) const;
  std::vector<int> decode_joint(int a) const;

  std::string to_json() const;
  static LinearMarkovGame from_json(const std::string& text);

 private:
  void validate() const;

  int num_agents_;
  int horizon_;
  int num_states_;
  std::vector<int> num_actions_;
  int num_joint_actions_;
  int feature_dim_;
  Eigen::MatrixXd features_;
  std::vector<Eigen::MatrixXd> xi_;
  std::vector<std::vector<Eigen::VectorXd>> theta_star_;
  double noise_scale_;
  int initial_state_;
  std::vector<Eigen::MatrixXd> transitions_;  // per h: (S*A) x S'
};

// Tabular construction: one-hot features of dimension |S|*|A|. Transition
// rows and per-(s,a) rewards are passed explicitly; xi_h(s') is then just
// the column of the transition table and theta_{i,h} the reward table.
LinearMarkovGame make_tabular_game(
    int num_agents, int horizon, int num_states, std::vector<int> num_actions,
    const std::vector<Eigen::MatrixXd>& transition_rows,  // per h: (S*A) x S'
    const std::vector<std::vector<Eigen::VectorXd>>& rewards,  // [i][h] (S*A)
    double noise_scale, int initial_state);

// Random instance with simplex features of dimension latent_dim < |S|*|A|:
// each phi(s,a) lies on the latent simplex and each latent coordinate owns a
// next-state distribution, so transitions are valid by construction.
LinearMarkovGame make_random_feature_game(int num_agents, int horizon,
                                          int num_states,
                                          std::vector<int> num_actions,
                                          int latent_dim, double noise_scale,
                                          std::uint64_t seed);

}  // namespace marg
