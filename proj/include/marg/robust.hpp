#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

namespace marg {

// Strong-contamination robust primitives. All of these are pure functions of
// (input, config, seed); with epsilon = 0 they reduce to their classical
// counterparts (arithmetic mean, sample covariance, ridge regression,
// constrained MLE).

// Indices surviving top-eigenvector spectral filtering; removes at most
// 2*epsilon*m points in total.
std::vector<int> spectral_filter(const std::vector<Eigen::VectorXd>& points,
                                 double epsilon);

Eigen::VectorXd robust_mean(const std::vector<Eigen::VectorXd>& points,
                            double epsilon);

// Covariance (1/k) sum (x - mean)(x - mean)^T of the surviving set.
Eigen::MatrixXd robust_covariance(const std::vector<Eigen::VectorXd>& points,
                                  double epsilon);

struct RobustRegressionResult {
  Eigen::VectorXd omega;
  std::vector<bool> inlier_mask;
  int iterations = 0;
};

// Iteratively trimmed ridge regression: fit, drop the floor(epsilon*m)
// largest squared residuals, refit; `norm_bound` rescales omega if exceeded.
RobustRegressionResult robust_least_squares(
    const std::vector<Eigen::VectorXd>& x, const std::vector<double>& y,
    double epsilon, double lambda = 1e-6,
    double norm_bound = std::numeric_limits<double>::infinity(),
    int rounds = 5);

struct TrimmedMleConfig {
  double epsilon = 0.0;
  double nu = 1e-6;            // slackness for the alternating loop
  int max_outer_iters = 50;
  double norm_bound = 1.0;     // sqrt(H*d) in the intended use
  bool whitening_enabled = true;
  double epsilon_eff = -1.0;   // trimming fraction override; < 0 uses epsilon
  std::uint64_t seed = 0;      // drives the internal data split
};

struct TrimmedMleResult {
  Eigen::VectorXd theta;
  int outer_iterations = 0;
  bool converged = false;
  int trimmed_set_size = 0;
};

// Alternating minimization for epsilon-corrupted logistic preference data:
// optionally whiten by a robust covariance of half the data and spectrally
// filter the other half, then alternate between selecting the (1-eps)m
// best-explained samples and refitting the norm-constrained MLE on them.
// `data` holds (delta_phi, label in {-1,+1}) pairs.
TrimmedMleResult trimmed_mle(
    const std::vector<std::pair<Eigen::VectorXd, int>>& data,
    const TrimmedMleConfig& config);

// Norm-constrained logistic MLE via monotone projected gradient ascent on
// the subset `subset` of `data` (all samples if empty). Exposed for the
// trimmed-MLE inner step and as a naive (non-robust) baseline.
Eigen::VectorXd constrained_logistic_mle(
    const std::vector<std::pair<Eigen::VectorXd, int>>& data,
    const std::vector<int>& subset, double norm_bound,
    const Eigen::VectorXd& init, int max_iters = 2000, double tol = 1e-10);

// Average per-sample log-likelihood sum_j log sigma(o_j theta^T dphi_j) over
// a subset (all samples if empty).
double logistic_log_likelihood(
    const std::vector<std::pair<Eigen::VectorXd, int>>& data,
    const std::vector<int>& subset, const Eigen::VectorXd& theta);

}  // namespace marg
