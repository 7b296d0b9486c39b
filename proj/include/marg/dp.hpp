#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "marg/game.hpp"
#include "marg/policy.hpp"

namespace marg {

// Exact backward-induction values for one policy under supplied mean-reward
// parameters. Indexing: V[i][h][s], Q[i][h](s, joint_action); V[i][H] == 0.
struct ValueTable {
  std::vector<std::vector<Eigen::VectorXd>> V;
  std::vector<std::vector<Eigen::MatrixXd>> Q;
};

struct GapReport {
  std::vector<double> best_response_value;  // per agent, at s0
  std::vector<double> policy_value;         // per agent, at s0
  double total_gap = 0.0;
};

// Reward parameters theta[i][h], each a d-vector. theta_star() of the game is
// the usual choice but any matching-shape parameters are accepted.
using RewardParams = std::vector<std::vector<Eigen::VectorXd>>;

// Joint action distribution as a function of (h, s); adapts both policy types.
using JointPolicyView = std::function<Eigen::VectorXd(int h, int s)>;

JointPolicyView view_of(const LinearMarkovGame& game,
                        const ProductMarkovPolicy& policy);
JointPolicyView view_of(const StageCorrelatedPolicy& policy);

ValueTable evaluate_policy(const LinearMarkovGame& game,
                           const JointPolicyView& policy,
                           const RewardParams& theta);
ValueTable evaluate_policy(const LinearMarkovGame& game,
                           const ProductMarkovPolicy& policy,
                           const RewardParams& theta);
ValueTable evaluate_policy(const LinearMarkovGame& game,
                           const StageCorrelatedPolicy& policy,
                           const RewardParams& theta);

// Value at s0 of agent i's exact Markov best response, holding the other
// agents to the behavior induced by `policy` (marginals over a_{-i}).
double best_response_value(const LinearMarkovGame& game,
                           const JointPolicyView& policy, int agent,
                           const std::vector<Eigen::VectorXd>& theta_i);

GapReport nash_gap(const LinearMarkovGame& game,
                   const ProductMarkovPolicy& policy,
                   const RewardParams& theta);
GapReport cce_gap(const LinearMarkovGame& game,
                  const StageCorrelatedPolicy& policy,
                  const RewardParams& theta);

// Occupancy over states (occ_states[h][s]) and state-joint-actions
// (occ_sa[h](s, a)) induced from s0.
struct OccupancyMeasures {
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::MatrixXd> state_actions;
};
OccupancyMeasures occupancy_measures(const LinearMarkovGame& game,
                                     const JointPolicyView& policy);

// Expectation-form coverage matrices: Sigma_mu(h) = E[phi phi^T] under mu's
// step-h occupancy, and the difference covariance
// Sigma^- = E[(phi(tau) - phi(tau'))(...)^T] for independent tau ~ mu,
// tau' ~ mu_ref, with phi(tau) the trajectory feature sum.
struct CoverageMatrices {
  std::vector<Eigen::MatrixXd> sigma_mu;  // per h, d x d
  Eigen::MatrixXd sigma_diff;             // d x d
};
CoverageMatrices coverage_matrices(const LinearMarkovGame& game,
                                   const ProductMarkovPolicy& mu,
                                   const ProductMarkovPolicy& mu_ref);

// Expected step-h feature under a policy's occupancy (DP oracle for tests
// and the PGA gradient check).
Eigen::VectorXd expected_step_feature(const LinearMarkovGame& game,
                                      const JointPolicyView& policy, int h);

}  // namespace marg
