#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "marg/dp.hpp"
#include "marg/game.hpp"
#include "marg/policy.hpp"

namespace marg {

// One rollout of length H: per step a (state, joint action) pair, with the
// step features and their sum cached.
struct Trajectory {
  std::vector<int> states;        // H
  std::vector<int> actions;       // H joint action indices
  Eigen::MatrixXd step_features;  // H x d
  Eigen::VectorXd feature_sum;    // d

  bool operator==(const Trajectory& other) const {
    return states == other.states && actions == other.actions;
  }
};

Trajectory make_trajectory(const LinearMarkovGame& game,
                           std::vector<int> states, std::vector<int> actions);

// Seeded rollout from s0 under the policy and the linear transition kernel.
Trajectory sample_trajectory(const LinearMarkovGame& game,
                             const JointPolicyView& policy,
                             std::uint64_t seed);
Trajectory sample_trajectory(const LinearMarkovGame& game,
                             const ProductMarkovPolicy& policy,
                             std::uint64_t seed);

}  // namespace marg
