#include "marg/trajectory.hpp"

#include <random>
#include <stdexcept>

namespace marg {

Trajectory make_trajectory(const LinearMarkovGame& game,
                           std::vector<int> states, std::vector<int> actions) {
  if (static_cast<int>(states.size()) != game.horizon() ||
      static_cast<int>(actions.size()) != game.horizon()) {
    throw std::invalid_argument("trajectory length must equal horizon");
  }
  Trajectory traj;
  traj.states = std::move(states);
  traj.actions = std::move(actions);
  traj.step_features.resize(game.horizon(), game.feature_dim());
  for (int h = 0; h < game.horizon(); ++h) {
    traj.step_features.row(h) = game.feature_row(traj.states[h],
                                                 traj.actions[h]);
  }
  traj.feature_sum = traj.step_features.colwise().sum().transpose();
  return traj;
}

namespace {

int sample_index(const Eigen::VectorXd& dist, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  double acc = 0.0;
  for (int k = 0; k < dist.size(); ++k) {
    acc += dist[k];
    if (u <= acc) return k;
  }
  return static_cast<int>(dist.size()) - 1;
}

}  // namespace

Trajectory sample_trajectory(const LinearMarkovGame& game,
                             const JointPolicyView& policy,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> states(game.horizon());
  std::vector<int> actions(game.horizon());
  int s = game.initial_state();
  for (int h = 0; h < game.horizon(); ++h) {
    states[h] = s;
    actions[h] = sample_index(policy(h, s), rng);
    if (h + 1 < game.horizon()) {
      const Eigen::VectorXd row =
          game.transition_matrix(h).row(game.sa_index(s, actions[h]));
      s = sample_index(row, rng);
    }
  }
  return make_trajectory(game, std::move(states), std::move(actions));
}

Trajectory sample_trajectory(const LinearMarkovGame& game,
                             const ProductMarkovPolicy& policy,
                             std::uint64_t seed) {
  return sample_trajectory(game, view_of(game, policy), seed);
}

}  // namespace marg
