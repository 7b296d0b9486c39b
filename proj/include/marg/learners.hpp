#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "marg/dataset.hpp"
#include "marg/game.hpp"
#include "marg/policy.hpp"
#include "marg/robust.hpp"

namespace marg {

// The part of a game a learner is allowed to see: dimensions, the feature
// map, the initial state, and the noise scale. Transitions and true rewards
// stay hidden; they are only reachable through the dataset.
struct GameSkeleton {
  int num_agents = 0;
  int horizon = 0;
  int num_states = 0;
  int feature_dim = 0;
  int initial_state = 0;
  int num_joint_actions = 0;
  std::vector<int> num_actions;
  Eigen::MatrixXd features;  // (S*A) x d
  double noise_scale = 0.0;

  int sa_index(int s, int a) const { return s * num_joint_actions + a; }
  Eigen::RowVectorXd feature_row(int s, int a) const {
    return features.row(sa_index(s, a));
  }
  int encode_joint(const std::vector<int>& actions) const;
  std::vector<int> decode_joint(int a) const;
};

GameSkeleton skeleton_of(const LinearMarkovGame& game);

// Config keys mirror the harness config file one-to-one.
struct LearnerConfig {
  double epsilon = 0.0;
  double delta = 0.05;
  double lambda = 0.05;   // Lambda_h / least-squares regularizer
  double eta1 = -1.0;     // PGA step; <= 0 means 1/sqrt(t1)
  double eta2 = 0.5;      // hedge step
  double nu = 1e-6;       // trimmed-MLE slackness
  int t1 = 50;            // PGA steps
  int t2 = 1000;          // hedge steps
  std::string hedge_variant = "optimistic";  // or "vanilla"
  double radius_cap = 10.0;  // replaces the exp(H + ...) factor of the bound
  double c1 = 1.0;           // uniform-radius constant
  double c2 = 1.0;           // bonus-scale constant
  std::int64_t candidate_policy_budget = 100000;
  std::uint64_t seed = 0;
};

enum class RewardModelMode { kUniform, kUnilateral };

struct RobustRewardModel {
  RewardModelMode mode = RewardModelMode::kUniform;
  std::vector<Eigen::VectorXd> theta_hat;    // per agent, H*d
  std::vector<Eigen::VectorXd> theta_tilde;  // trimmed-MLE anchors, H*d
  double uniform_radius = 0.0;
  double kappa = 0.0;
};

// Closed-form boundary rewards over the confidence ball of radius r around
// theta_tilde: theta^T phi +- r ||phi||, clipped so the implied per-step
// parameter respects the sqrt(d) norm bound. Output: per step h, S x A
// matrices (upper, lower).
struct RewardBounds {
  std::vector<Eigen::MatrixXd> upper;
  std::vector<Eigen::MatrixXd> lower;
};
RewardBounds uniform_reward_bounds(const GameSkeleton& skeleton,
                                   const Eigen::VectorXd& theta_tilde_i,
                                   double radius);

// Step-h transition tuples (s_h, a_h, s_{h+1}) of the mu-side trajectories;
// s_next is -1 at the last step.
struct StepData {
  std::vector<int> s, a, s_next;
  std::vector<Eigen::VectorXd> x;  // phi(s_h, a_h)
};
std::vector<StepData> build_step_data(const GameSkeleton& skeleton,
                                      const PreferenceDataset& dataset);

// Bonus Gamma(s,a) = E * ||phi(s,a)||_{Lambda_h^{-1}} with
// Lambda_h = (3/5)((1/m) sum phi phi^T + (eps + lambda) I).
struct BonusModel {
  std::vector<Eigen::MatrixXd> lambda_h;      // d x d per step
  std::vector<Eigen::MatrixXd> lambda_h_inv;  // cached inverses
  double scale_e = 0.0;
  double lambda = 0.0;
  double epsilon = 0.0;

  double value(const GameSkeleton& skeleton, int h, int s, int a) const;
};
BonusModel build_bonus_model(const GameSkeleton& skeleton,
                             const std::vector<StepData>& data,
                             const LearnerConfig& config);

// Robust pessimistic/optimistic Q-estimates at one step (Rob-Q): two trimmed
// least-squares fits on the step's transitions, then clipping to
// [-(H-h) sqrt(d), (H-h) sqrt(d)] with the bonus subtracted/added.
struct QEstimatePair {
  Eigen::MatrixXd q_lo, q_hi;  // S x A
  Eigen::VectorXd omega_lo, omega_hi;
};
QEstimatePair rob_q(const GameSkeleton& skeleton, const StepData& step_data,
                    int h, double epsilon, double lambda,
                    const Eigen::MatrixXd& reward_lo,
                    const Eigen::MatrixXd& reward_hi,
                    const Eigen::VectorXd& v_lo_next,
                    const Eigen::VectorXd& v_hi_next,
                    const Eigen::MatrixXd& bonus);

// Full backward pass (robust value estimation) for one (policy, agent).
struct RobustValueTables {
  std::vector<Eigen::MatrixXd> q_lo, q_hi;  // per h, S x A
  std::vector<Eigen::VectorXd> v_lo, v_hi;  // per h (v_hi is the max branch)
};
RobustValueTables robust_value_tables(
    const GameSkeleton& skeleton, const std::vector<StepData>& data,
    const ProductMarkovPolicy& policy, int agent,
    const std::vector<Eigen::MatrixXd>& reward_lo,
    const std::vector<Eigen::MatrixXd>& reward_hi,
    const BonusModel* bonus, double epsilon, double lambda);

struct LearnerOutput {
  bool is_correlated = false;
  ProductMarkovPolicy product_policy;
  StageCorrelatedPolicy correlated_policy;
  double estimated_gap = 0.0;
  RobustRewardModel reward_model;
  std::map<std::string, double> diagnostics;
};

// Alg. "uniform coverage": trimmed MLE per agent on D1, closed-form reward
// bounds, zero-bonus robust value estimation on D2, argmin estimated gap
// over the candidate set.
LearnerOutput uniform_learner(const PreferenceDataset& dataset,
                              const GameSkeleton& skeleton,
                              const LearnerConfig& config,
                              const std::vector<ProductMarkovPolicy>& candidates);

// Same pipeline with every robust subroutine replaced by its naive
// counterpart (plain MLE, plain ridge regression, zero radius, zero bonus).
LearnerOutput naive_baseline_learner(
    const PreferenceDataset& dataset, const GameSkeleton& skeleton,
    const LearnerConfig& config,
    const std::vector<ProductMarkovPolicy>& candidates);

// Robust-mean gradient surrogate: concatenation over h of
// RobMean(D^mu_h) - RobMean(D^mu_ref_h); independent of theta by linearity.
Eigen::VectorXd pga_gradient_estimate(const PerStepFeatureViews& views,
                                      double epsilon);

// Radial feasibility projection onto the kappa log-likelihood ball around
// the anchor (not the Euclidean projection), then per-step norm clamping.
Eigen::VectorXd project_confidence_set(
    const Eigen::VectorXd& theta, const Eigen::VectorXd& anchor,
    const std::vector<std::pair<Eigen::VectorXd, int>>& data, double kappa,
    const GameSkeleton& skeleton);

double confidence_ratio(const std::vector<std::pair<Eigen::VectorXd, int>>& data,
                        const Eigen::VectorXd& anchor,
                        const Eigen::VectorXd& theta);

double kappa_budget(const GameSkeleton& skeleton, int m, double epsilon,
                    double delta);

struct RewardEstimate {
  std::vector<Eigen::VectorXd> theta_hat;    // per agent, H*d
  std::vector<Eigen::VectorXd> theta_tilde;  // anchors
  double kappa = 0.0;
};
// RewardEst: trimmed-MLE anchor plus T1 steps of projected gradient ascent
// along the robust-mean gradient surrogate, averaged and re-projected.
RewardEstimate reward_est_pga(const PreferenceDataset& d1,
                              const GameSkeleton& skeleton,
                              const LearnerConfig& config);

// Alg. "unilateral coverage": PGA rewards, Lambda_h bonus, Rob-Q backward
// pass per candidate, argmin estimated gap.
LearnerOutput unilateral_learner(
    const PreferenceDataset& dataset, const GameSkeleton& skeleton,
    const LearnerConfig& config,
    const std::vector<ProductMarkovPolicy>& candidates);

// Optimistic Hedge on per-agent stage losses L_i(a_dagger, a_prime).
struct HedgeResult {
  std::vector<Eigen::VectorXd> min_policy;  // round-averaged, per agent
  std::vector<Eigen::VectorXd> max_policy;
  std::vector<double> min_regret;  // average per-round regret at T2
  std::vector<double> max_regret;
};
HedgeResult optimistic_hedge(const std::vector<Eigen::MatrixXd>& losses,
                             double eta2, int t2,
                             const std::string& variant = "optimistic");

// Alg. "CCE": PGA rewards, backward stage games solved by Optimistic Hedge,
// output a stage-correlated policy (product of per-agent min policies).
LearnerOutput cce_learner(const PreferenceDataset& dataset,
                          const GameSkeleton& skeleton,
                          const LearnerConfig& config);

}  // namespace marg
