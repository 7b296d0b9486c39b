#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "marg/game.hpp"

namespace marg {

// Product Markov policy: per agent, per step, a row-stochastic S x A_i table.
class ProductMarkovPolicy {
 public:
  ProductMarkovPolicy() = default;
  ProductMarkovPolicy(std::vector<std::vector<Eigen::MatrixXd>> tables);

  const Eigen::MatrixXd& table(int agent, int h) const {
    return tables_[agent][h];
  }
  int num_agents() const { return static_cast<int>(tables_.size()); }
  int horizon() const {
    return tables_.empty() ? 0 : static_cast<int>(tables_[0].size());
  }

  // Joint distribution over flat joint actions at (h, s).
  Eigen::VectorXd joint_distribution(const LinearMarkovGame& game, int h,
                                     int s) const;

 private:
  std::vector<std::vector<Eigen::MatrixXd>> tables_;  // [agent][h]: S x A_i
};

// Stage-correlated policy: per step, a row-stochastic S x |A_joint| table.
class StageCorrelatedPolicy {
 public:
  StageCorrelatedPolicy() = default;
  explicit StageCorrelatedPolicy(std::vector<Eigen::MatrixXd> tables);

  const Eigen::MatrixXd& table(int h) const { return tables_[h]; }
  int horizon() const { return static_cast<int>(tables_.size()); }

  Eigen::VectorXd joint_distribution(int h, int s) const {
    return tables_[h].row(s).transpose();
  }

  // Marginal of agent i's actions at (h, s).
  Eigen::VectorXd marginal(const LinearMarkovGame& game, int agent, int h,
                           int s) const;

 private:
  std::vector<Eigen::MatrixXd> tables_;
};

ProductMarkovPolicy make_uniform_policy(const LinearMarkovGame& game);

// Deterministic Markov policy from an action table: choice[agent][h][s].
ProductMarkovPolicy make_deterministic_policy(
    const LinearMarkovGame& game,
    const std::vector<std::vector<std::vector<int>>>& choice);

// Product policy where agent i plays action a_i with probability `bias` and
// spreads the rest uniformly.
ProductMarkovPolicy make_biased_policy(const LinearMarkovGame& game,
                                       const std::vector<int>& preferred,
                                       double bias);

// Wrap a product policy as a stage-correlated policy (exact embedding).
StageCorrelatedPolicy to_correlated(const LinearMarkovGame& game,
                                    const ProductMarkovPolicy& policy);

// All deterministic Markov product policies when their count is at most
// `budget`; otherwise a seeded uniform sample of `budget` of them.
std::vector<ProductMarkovPolicy> enumerate_deterministic_policies(
    const LinearMarkovGame& game, std::int64_t budget, std::uint64_t seed);

}  // namespace marg
