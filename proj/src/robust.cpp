#include "marg/robust.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace marg {

namespace {

// Median of chi^2_1 is ~0.4549, so dividing the median squared projection by
// it gives a robust variance estimate along the top eigenvector.
constexpr double kChi2MedianInv = 1.0 / 0.45493642311957;
constexpr int kFilterRoundsCap = 10;

Eigen::VectorXd mean_of(const std::vector<Eigen::VectorXd>& points,
                        const std::vector<int>& idx) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(points[0].size());
  for (int j : idx) mean += points[j];
  return mean / static_cast<double>(idx.size());
}

Eigen::MatrixXd covariance_of(const std::vector<Eigen::VectorXd>& points,
                              const std::vector<int>& idx,
                              const Eigen::VectorXd& mean) {
  const int d = static_cast<int>(points[0].size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (int j : idx) {
    const Eigen::VectorXd c = points[j] - mean;
    cov += c * c.transpose();
  }
  return cov / static_cast<double>(idx.size());
}

double median(std::vector<double> v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
    return 0.5 * (hi + v[mid - 1]);
  }
  return hi;
}

}  // namespace

std::vector<int> spectral_filter(const std::vector<Eigen::VectorXd>& points,
                                 double epsilon) {
  if (points.empty()) throw std::invalid_argument("empty point set");
  const int m = static_cast<int>(points.size());
  std::vector<int> survivors(m);
  std::iota(survivors.begin(), survivors.end(), 0);
  if (epsilon <= 0.0 || m < 3) return survivors;

  const int max_remove = static_cast<int>(std::floor(2.0 * epsilon * m));
  const int per_round = std::max(
      1, static_cast<int>(std::ceil(epsilon * m / kFilterRoundsCap)));
  int removed = 0;
  for (int round = 0; round < 5 * kFilterRoundsCap && removed < max_remove;
       ++round) {
    const Eigen::VectorXd mean = mean_of(points, survivors);
    const Eigen::MatrixXd cov = covariance_of(points, survivors, mean);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const int top = static_cast<int>(cov.rows()) - 1;
    const double lambda_max = eig.eigenvalues()[top];
    const Eigen::VectorXd v = eig.eigenvectors().col(top);
    std::vector<double> proj(survivors.size());
    for (size_t k = 0; k < survivors.size(); ++k) {
      const double p = v.dot(points[survivors[k]] - mean);
      proj[k] = p * p;
    }
    const double med = median(proj);
    // Inliers alone keep lambda_max near the robust variance estimate; the
    // (1 + 10 eps) slack absorbs sampling noise so clean data stops here.
    if (lambda_max <= kChi2MedianInv * med * (1.0 + 10.0 * epsilon)) break;
    std::vector<int> order(survivors.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return proj[a] - med > proj[b] - med;
    });
    const int k_remove = std::min(per_round, max_remove - removed);
    std::vector<bool> drop(survivors.size(), false);
    for (int k = 0; k < k_remove; ++k) drop[order[k]] = true;
    std::vector<int> next;
    next.reserve(survivors.size() - k_remove);
    for (size_t k = 0; k < survivors.size(); ++k) {
      if (!drop[k]) next.push_back(survivors[k]);
    }
    survivors = std::move(next);
    removed += k_remove;
  }
  return survivors;
}

Eigen::VectorXd robust_mean(const std::vector<Eigen::VectorXd>& points,
                            double epsilon) {
  if (points.empty()) throw std::invalid_argument("empty point set");
  if (epsilon <= 0.0) {
    std::vector<int> all(points.size());
    std::iota(all.begin(), all.end(), 0);
    return mean_of(points, all);
  }
  return mean_of(points, spectral_filter(points, epsilon));
}

Eigen::MatrixXd robust_covariance(const std::vector<Eigen::VectorXd>& points,
                                  double epsilon) {
  if (points.empty()) throw std::invalid_argument("empty point set");
  std::vector<int> idx;
  if (epsilon <= 0.0) {
    idx.resize(points.size());
    std::iota(idx.begin(), idx.end(), 0);
  } else {
    idx = spectral_filter(points, epsilon);
  }
  return covariance_of(points, idx, mean_of(points, idx));
}

RobustRegressionResult robust_least_squares(
    const std::vector<Eigen::VectorXd>& x, const std::vector<double>& y,
    double epsilon, double lambda, double norm_bound, int rounds) {
  if (x.empty() || x.size() != y.size()) {
    throw std::invalid_argument("regression inputs empty or mismatched");
  }
  if (epsilon < 0.0 || epsilon >= 0.5) {
    throw std::invalid_argument("epsilon must lie in [0, 1/2)");
  }
  const int m = static_cast<int>(x.size());
  const int d = static_cast<int>(x[0].size());
  const int drop = static_cast<int>(std::floor(epsilon * m));

  std::vector<int> inliers(m);
  std::iota(inliers.begin(), inliers.end(), 0);
  Eigen::VectorXd omega = Eigen::VectorXd::Zero(d);
  RobustRegressionResult result;
  const int total_rounds = drop == 0 ? 1 : rounds;
  for (int round = 0; round < total_rounds; ++round) {
    Eigen::MatrixXd gram = lambda * Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (int j : inliers) {
      gram += x[j] * x[j].transpose();
      rhs += y[j] * x[j];
    }
    omega = gram.ldlt().solve(rhs);
    ++result.iterations;
    if (drop == 0) break;
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> res2(m);
    for (int j = 0; j < m; ++j) {
      const double r = y[j] - x[j].dot(omega);
      res2[j] = r * r;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return res2[a] < res2[b]; });
    std::vector<int> next(order.begin(), order.end() - drop);
    std::sort(next.begin(), next.end());
    if (next == inliers) break;
    inliers = std::move(next);
  }
  if (omega.norm() > norm_bound) omega *= norm_bound / omega.norm();
  result.omega = omega;
  result.inlier_mask.assign(m, false);
  for (int j : inliers) result.inlier_mask[j] = true;
  return result;
}

double logistic_log_likelihood(
    const std::vector<std::pair<Eigen::VectorXd, int>>& data,
    const std::vector<int>& subset, const Eigen::VectorXd& theta) {
  auto ll_one = [&](int j) {
    const double z = data[j].second * theta.dot(data[j].first);
    // log sigma(z) computed stably.
    return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
  };
  double total = 0.0;
  if (subset.empty()) {
    for (int j = 0; j < static_cast<int>(data.size()); ++j) total += ll_one(j);
  } else {
    for (int j : subset) total += ll_one(j);
  }
  return total;
}

Eigen::VectorXd constrained_logistic_mle(
    const std::vector<std::pair<Eigen::VectorXd, int>>& data,
    const std::vector<int>& subset, double norm_bound,
    const Eigen::VectorXd& init, int max_iters, double tol) {
  std::vector<int> idx = subset;
  if (idx.empty()) {
    idx.resize(data.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  const int d = static_cast<int>(init.size());
  // Smoothness bound of the average log-likelihood; 1/L steps are monotone.
  double max_sq = 0.0;
  for (int j : idx) max_sq = std::max(max_sq, data[j].first.squaredNorm());
  const double step = max_sq > 0.0 ? 4.0 / max_sq : 1.0;
  const double inv_m = 1.0 / static_cast<double>(idx.size());

  Eigen::VectorXd theta = init;
  if (theta.norm() > norm_bound) theta *= norm_bound / theta.norm();
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    for (int j : idx) {
      const double z = data[j].second * theta.dot(data[j].first);
      const double sig = 1.0 / (1.0 + std::exp(z));  // 1 - sigma(z)
      grad += inv_m * data[j].second * sig * data[j].first;
    }
    Eigen::VectorXd next = theta + step * grad;
    if (next.norm() > norm_bound) next *= norm_bound / next.norm();
    const double move = (next - theta).norm();
    theta = next;
    if (move < tol) break;
  }
  return theta;
}

TrimmedMleResult trimmed_mle(
    const std::vector<std::pair<Eigen::VectorXd, int>>& data,
    const TrimmedMleConfig& config) {
  if (data.empty()) throw std::invalid_argument("empty preference view");
  if (config.epsilon < 0.0 || config.epsilon >= 0.5) {
    throw std::invalid_argument("epsilon must lie in [0, 1/2)");
  }
  const int d = static_cast<int>(data[0].first.size());
  const double eps = config.epsilon;
  const double eps_eff =
      config.epsilon_eff >= 0.0 ? config.epsilon_eff : config.epsilon;

  // Working set of sample indices into `data`.
  std::vector<int> work(data.size());
  std::iota(work.begin(), work.end(), 0);

  Eigen::MatrixXd whitener = Eigen::MatrixXd::Identity(d, d);
  if (config.whitening_enabled && eps_eff > 0.0 && data.size() >= 4) {
    std::mt19937_64 rng(config.seed);
    std::shuffle(work.begin(), work.end(), rng);
    const int half = static_cast<int>(work.size()) / 2;
    std::vector<Eigen::VectorXd> cov_half;
    for (int k = 0; k < half; ++k) cov_half.push_back(data[work[k]].first);
    Eigen::MatrixXd sigma = robust_covariance(cov_half, eps);
    // Eigenvalue floor keeps the inverse square root defined for the
    // rank-deficient covariances one-hot features produce at small m.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
    Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(1e-6);
    whitener = eig.eigenvectors() *
               vals.cwiseSqrt().cwiseInverse().asDiagonal() *
               eig.eigenvectors().transpose();
    std::vector<int> fit_half(work.begin() + half, work.end());
    std::vector<Eigen::VectorXd> whitened;
    whitened.reserve(fit_half.size());
    for (int j : fit_half) whitened.push_back(whitener * data[j].first);
    const std::vector<int> kept = spectral_filter(whitened, eps);
    std::vector<int> filtered;
    filtered.reserve(kept.size());
    for (int k : kept) filtered.push_back(fit_half[k]);
    std::sort(filtered.begin(), filtered.end());
    work = std::move(filtered);
  }

  // The fit runs in whitened coordinates: a corrupted minority concentrated
  // along one feature direction inflates the (unfiltered share of the)
  // covariance there, so whitening shrinks that direction and the norm
  // constraint caps how strongly theta can couple to it. The de-whitened
  // parameter is recovered at the end since theta_w . (W x) = (W theta_w) . x
  // for the symmetric W.
  std::vector<std::pair<Eigen::VectorXd, int>> fit;
  fit.reserve(work.size());
  for (int j : work) {
    fit.emplace_back(whitener * data[j].first, data[j].second);
  }

  const int mw = static_cast<int>(work.size());
  const int keep = std::min(
      mw, static_cast<int>(std::ceil((1.0 - eps_eff) * mw)));

  // Median per-sample log-likelihood over the full working set. A coherent
  // eps-minority can dominate the trimmed objective (the alternation then
  // converges inside the adversarial basin), but it cannot move the median,
  // so the median ranks iterates reliably under contamination.
  auto median_ll = [&](const Eigen::VectorXd& theta) {
    std::vector<double> ll(mw);
    for (int k = 0; k < mw; ++k) {
      ll[k] = logistic_log_likelihood(fit, {k}, theta);
    }
    const size_t mid = ll.size() / 2;
    std::nth_element(ll.begin(), ll.begin() + mid, ll.end());
    return ll[mid];
  };

  // One alternation run from a given start. The monotone trimmed objective
  // drives the loop; the iterate kept for output is the one with the best
  // median log-likelihood along the path (for eps = 0 they coincide: the
  // endpoint is the plain constrained MLE and is returned as-is).
  auto alternate = [&](Eigen::VectorXd theta, TrimmedMleResult* out) {
    std::vector<int> selected;
    Eigen::VectorXd best_theta = theta;
    double best_med = eps_eff > 0.0 ? median_ll(theta)
                                    : -std::numeric_limits<double>::infinity();
    for (int t = 0; t < config.max_outer_iters; ++t) {
      // Top-keep samples by per-sample log-likelihood, ties by sample index.
      std::vector<double> ll(mw);
      for (int k = 0; k < mw; ++k) {
        ll[k] = logistic_log_likelihood(fit, {k}, theta);
      }
      std::vector<int> order(mw);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return ll[a] > ll[b]; });
      selected.assign(order.begin(), order.begin() + keep);
      std::sort(selected.begin(), selected.end());

      const double before = logistic_log_likelihood(fit, selected, theta);
      const Eigen::VectorXd next = constrained_logistic_mle(
          fit, selected, config.norm_bound, theta);
      const double after = logistic_log_likelihood(fit, selected, next);
      theta = next;
      ++out->outer_iterations;
      if (eps_eff > 0.0) {
        const double med = median_ll(theta);
        if (med > best_med) {
          best_med = med;
          best_theta = theta;
        }
      }
      if (after <= before + config.nu) {
        out->converged = true;
        break;
      }
    }
    out->theta = eps_eff > 0.0 ? best_theta : theta;
    return eps_eff > 0.0 ? best_med : logistic_log_likelihood(fit, {}, theta);
  };

  // The alternation is monotone but only locally convergent, and targeted
  // label corruption plants a mirror-image basin. Restart from a small
  // deterministic set of initial points and keep the best run under the
  // contamination-resistant median criterion.
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Zero(d));
  if (eps_eff > 0.0) {
    const Eigen::VectorXd naive = constrained_logistic_mle(
        fit, {}, config.norm_bound, Eigen::VectorXd::Zero(d));
    starts.push_back(naive);
    starts.push_back(-naive);
    std::mt19937_64 rng(config.seed + 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int r = 0; r < 2; ++r) {
      Eigen::VectorXd dir(d);
      for (int k = 0; k < d; ++k) dir[k] = gauss(rng);
      starts.push_back(dir * (0.5 * config.norm_bound /
                              std::max(dir.norm(), 1e-12)));
    }
  }

  TrimmedMleResult result;
  double best = -std::numeric_limits<double>::infinity();
  int total_iterations = 0;
  for (const auto& start : starts) {
    TrimmedMleResult attempt;
    const double objective = alternate(start, &attempt);
    total_iterations += attempt.outer_iterations;
    if (objective > best) {
      best = objective;
      result = attempt;
    }
  }
  result.outer_iterations = total_iterations;
  result.trimmed_set_size = keep;
  // Trimming self-selects the samples a candidate already explains, which
  // inflates the norm toward the constraint boundary. Recalibrate scale with
  // a 1-d concave line search on the untrimmed working-set likelihood; the
  // direction stays fixed, so the contaminated minority can only shift the
  // magnitude by a bounded amount.
  if (eps_eff > 0.0 && result.theta.norm() > 1e-12) {
    // Capped likelihood: flooring the per-sample term bounds the pull any
    // single corrupted sample can exert, so the coherent minority shifts the
    // scale by at most an O(eps * cap) amount. The cap breaks concavity, so
    // a grid search replaces the line search.
    constexpr double kCap = -4.0;
    std::vector<double> z(mw);
    for (int k = 0; k < mw; ++k) {
      z[k] = fit[k].second * result.theta.dot(fit[k].first);
    }
    auto capped_ll = [&](double s) {
      double total = 0.0;
      for (int k = 0; k < mw; ++k) {
        const double v = s * z[k];
        const double ll = v >= 0.0 ? -std::log1p(std::exp(-v))
                                   : v - std::log1p(std::exp(v));
        total += std::max(ll, kCap);
      }
      return total;
    };
    double best_s = 1.0, best_val = capped_ll(1.0);
    for (int g = 0; g <= 150; ++g) {
      const double s = 0.01 * g;
      const double val = capped_ll(s);
      if (val > best_val) {
        best_val = val;
        best_s = s;
      }
    }
    result.theta *= best_s;
  }
  // Map back to raw coordinates; the whitener's eigenvalue floor can inflate
  // the raw norm past the constraint, so re-clamp after de-whitening.
  result.theta = whitener * result.theta;
  // Any component orthogonal to every observed feature has no effect on the
  // likelihood; de-whitening can introduce such components, so project them
  // out to stay in the identifiable subspace.
  {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
    for (const auto& [x, o] : data) gram += x * x.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> geig(gram);
    const double cut = 1e-9 * std::max(geig.eigenvalues().maxCoeff(), 1e-12);
    Eigen::VectorXd proj = Eigen::VectorXd::Zero(d);
    for (int k = 0; k < d; ++k) {
      if (geig.eigenvalues()[k] > cut) {
        const Eigen::VectorXd v = geig.eigenvectors().col(k);
        proj += v.dot(result.theta) * v;
      }
    }
    result.theta = proj;
  }
  if (result.theta.norm() > config.norm_bound) {
    result.theta *= config.norm_bound / result.theta.norm();
  }
  return result;
}

}  // namespace marg
