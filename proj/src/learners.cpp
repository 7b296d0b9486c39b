#include "marg/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace marg {

int GameSkeleton::encode_joint(const std::vector<int>& actions) const {
  int a = 0;
  for (int i = 0; i < num_agents; ++i) a = a * num_actions[i] + actions[i];
  return a;
}

std::vector<int> GameSkeleton::decode_joint(int a) const {
  std::vector<int> actions(num_agents);
  for (int i = num_agents - 1; i >= 0; --i) {
    actions[i] = a % num_actions[i];
    a /= num_actions[i];
  }
  return actions;
}

GameSkeleton skeleton_of(const LinearMarkovGame& game) {
  GameSkeleton sk;
  sk.num_agents = game.num_agents();
  sk.horizon = game.horizon();
  sk.num_states = game.num_states();
  sk.feature_dim = game.feature_dim();
  sk.initial_state = game.initial_state();
  sk.num_joint_actions = game.num_joint_actions();
  sk.num_actions = game.num_actions();
  sk.features = game.features();
  sk.noise_scale = game.noise_scale();
  return sk;
}

namespace {

Eigen::VectorXd product_joint_dist(const GameSkeleton& sk,
                                   const ProductMarkovPolicy& policy, int h,
                                   int s) {
  Eigen::VectorXd dist = Eigen::VectorXd::Ones(sk.num_joint_actions);
  for (int a = 0; a < sk.num_joint_actions; ++a) {
    const auto actions = sk.decode_joint(a);
    for (int i = 0; i < sk.num_agents; ++i) {
      dist[a] *= policy.table(i, h)(s, actions[i]);
    }
  }
  return dist;
}

// E_{a_{-i} ~ dist_{-i}}[table(s, a_dagger o a_{-i})] for every own action;
// the deviator's action is independent of the stage distribution.
Eigen::VectorXd own_action_expectation(const GameSkeleton& sk,
                                       const Eigen::VectorXd& joint_dist,
                                       const Eigen::RowVectorXd& q_row,
                                       int agent) {
  const int Ai = sk.num_actions[agent];
  Eigen::VectorXd out = Eigen::VectorXd::Zero(Ai);
  for (int a = 0; a < sk.num_joint_actions; ++a) {
    if (joint_dist[a] == 0.0) continue;
    auto actions = sk.decode_joint(a);
    for (int b = 0; b < Ai; ++b) {
      actions[agent] = b;
      out[b] += joint_dist[a] * q_row[sk.encode_joint(actions)];
    }
  }
  return out;
}

std::vector<std::pair<Eigen::VectorXd, int>> agent_view(
    const PreferenceDataset& dataset, int agent) {
  std::vector<std::pair<Eigen::VectorXd, int>> view;
  view.reserve(dataset.samples.size());
  for (const auto& sample : dataset.samples) {
    view.emplace_back(delta_feature(sample), sample.labels[agent]);
  }
  return view;
}

std::vector<Eigen::MatrixXd> reward_matrices(const GameSkeleton& sk,
                                             const Eigen::VectorXd& theta_i) {
  const int d = sk.feature_dim;
  std::vector<Eigen::MatrixXd> out(sk.horizon);
  for (int h = 0; h < sk.horizon; ++h) {
    const Eigen::VectorXd th = theta_i.segment(h * d, d);
    Eigen::MatrixXd r(sk.num_states, sk.num_joint_actions);
    for (int s = 0; s < sk.num_states; ++s) {
      for (int a = 0; a < sk.num_joint_actions; ++a) {
        r(s, a) = sk.feature_row(s, a).dot(th);
      }
    }
    out[h] = r;
  }
  return out;
}

}  // namespace

RewardBounds uniform_reward_bounds(const GameSkeleton& skeleton,
                                   const Eigen::VectorXd& theta_tilde_i,
                                   double radius) {
  const int d = skeleton.feature_dim;
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  RewardBounds bounds;
  for (int h = 0; h < skeleton.horizon; ++h) {
    const Eigen::VectorXd th = theta_tilde_i.segment(h * d, d);
    Eigen::MatrixXd up(skeleton.num_states, skeleton.num_joint_actions);
    Eigen::MatrixXd lo(skeleton.num_states, skeleton.num_joint_actions);
    for (int s = 0; s < skeleton.num_states; ++s) {
      for (int a = 0; a < skeleton.num_joint_actions; ++a) {
        const Eigen::RowVectorXd phi = skeleton.feature_row(s, a);
        const double base = phi.dot(th);
        const double span = radius * phi.norm();
        const double cap = sqrt_d * phi.norm();
        up(s, a) = std::clamp(base + span, -cap, cap);
        lo(s, a) = std::clamp(base - span, -cap, cap);
      }
    }
    bounds.upper.push_back(std::move(up));
    bounds.lower.push_back(std::move(lo));
  }
  return bounds;
}

std::vector<StepData> build_step_data(const GameSkeleton& skeleton,
                                      const PreferenceDataset& dataset) {
  std::vector<StepData> data(skeleton.horizon);
  for (const auto& sample : dataset.samples) {
    for (int h = 0; h < skeleton.horizon; ++h) {
      StepData& step = data[h];
      step.s.push_back(sample.tau.states[h]);
      step.a.push_back(sample.tau.actions[h]);
      step.s_next.push_back(h + 1 < skeleton.horizon
                                ? sample.tau.states[h + 1]
                                : -1);
      step.x.push_back(sample.tau.step_features.row(h).transpose());
    }
  }
  return data;
}

double BonusModel::value(const GameSkeleton& skeleton, int h, int s,
                         int a) const {
  const Eigen::VectorXd phi = skeleton.feature_row(s, a).transpose();
  return scale_e * std::sqrt(phi.dot(lambda_h_inv[h] * phi));
}

BonusModel build_bonus_model(const GameSkeleton& skeleton,
                             const std::vector<StepData>& data,
                             const LearnerConfig& config) {
  BonusModel model;
  model.lambda = config.lambda;
  model.epsilon = config.epsilon;
  const int d = skeleton.feature_dim;
  for (int h = 0; h < skeleton.horizon; ++h) {
    const auto& step = data[h];
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
    for (const auto& x : step.x) gram += x * x.transpose();
    const double m = std::max<size_t>(1, step.x.size());
    Eigen::MatrixXd lam =
        0.6 * (gram / m +
               (config.epsilon + config.lambda) * Eigen::MatrixXd::Identity(d, d));
    model.lambda_h_inv.push_back(lam.inverse());
    model.lambda_h.push_back(std::move(lam));
  }
  const double hsd = skeleton.horizon * std::sqrt(static_cast<double>(d)) +
                     skeleton.noise_scale;
  const double m = data.empty() ? 1.0
                                : std::max<size_t>(1, data[0].x.size());
  model.scale_e = std::sqrt(
      config.c2 * (hsd * hsd * d / m + hsd * hsd * config.epsilon +
                   (2.0 * config.epsilon + config.lambda) * skeleton.horizon *
                       std::sqrt(static_cast<double>(d))));
  return model;
}

QEstimatePair rob_q(const GameSkeleton& skeleton, const StepData& step_data,
                    int h, double epsilon, double lambda,
                    const Eigen::MatrixXd& reward_lo,
                    const Eigen::MatrixXd& reward_hi,
                    const Eigen::VectorXd& v_lo_next,
                    const Eigen::VectorXd& v_hi_next,
                    const Eigen::MatrixXd& bonus) {
  const int m = static_cast<int>(step_data.x.size());
  if (m == 0) throw std::runtime_error("empty step data in rob_q");
  const double sqrt_d = std::sqrt(static_cast<double>(skeleton.feature_dim));
  const double clip = (skeleton.horizon - h) * sqrt_d;
  const double omega_bound = skeleton.horizon * sqrt_d;

  std::vector<double> y_lo(m), y_hi(m);
  for (int j = 0; j < m; ++j) {
    const int s = step_data.s[j], a = step_data.a[j], sn = step_data.s_next[j];
    y_lo[j] = reward_lo(s, a) + (sn >= 0 ? v_lo_next[sn] : 0.0);
    y_hi[j] = reward_hi(s, a) + (sn >= 0 ? v_hi_next[sn] : 0.0);
  }
  const auto fit_lo =
      robust_least_squares(step_data.x, y_lo, epsilon, lambda, omega_bound);
  const auto fit_hi =
      robust_least_squares(step_data.x, y_hi, epsilon, lambda, omega_bound);

  QEstimatePair pair;
  pair.omega_lo = fit_lo.omega;
  pair.omega_hi = fit_hi.omega;
  pair.q_lo.resize(skeleton.num_states, skeleton.num_joint_actions);
  pair.q_hi.resize(skeleton.num_states, skeleton.num_joint_actions);
  for (int s = 0; s < skeleton.num_states; ++s) {
    for (int a = 0; a < skeleton.num_joint_actions; ++a) {
      const Eigen::RowVectorXd phi = skeleton.feature_row(s, a);
      pair.q_lo(s, a) =
          std::clamp(phi.dot(fit_lo.omega) - bonus(s, a), -clip, clip);
      pair.q_hi(s, a) =
          std::clamp(phi.dot(fit_hi.omega) + bonus(s, a), -clip, clip);
    }
  }
  return pair;
}

RobustValueTables robust_value_tables(
    const GameSkeleton& skeleton, const std::vector<StepData>& data,
    const ProductMarkovPolicy& policy, int agent,
    const std::vector<Eigen::MatrixXd>& reward_lo,
    const std::vector<Eigen::MatrixXd>& reward_hi,
    const BonusModel* bonus, double epsilon, double lambda) {
  const int H = skeleton.horizon;
  const int S = skeleton.num_states;
  const int A = skeleton.num_joint_actions;
  RobustValueTables tables;
  tables.q_lo.resize(H);
  tables.q_hi.resize(H);
  tables.v_lo.assign(H + 1, Eigen::VectorXd::Zero(S));
  tables.v_hi.assign(H + 1, Eigen::VectorXd::Zero(S));
  for (int h = H - 1; h >= 0; --h) {
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(S, A);
    if (bonus != nullptr) {
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) gamma(s, a) = bonus->value(skeleton, h, s, a);
      }
    }
    const QEstimatePair pair =
        rob_q(skeleton, data[h], h, epsilon, lambda, reward_lo[h],
              reward_hi[h], tables.v_lo[h + 1], tables.v_hi[h + 1], gamma);
    for (int s = 0; s < S; ++s) {
      const Eigen::VectorXd dist = product_joint_dist(skeleton, policy, h, s);
      tables.v_lo[h][s] = pair.q_lo.row(s).dot(dist);
      tables.v_hi[h][s] =
          own_action_expectation(skeleton, dist, pair.q_hi.row(s), agent)
              .maxCoeff();
    }
    tables.q_lo[h] = pair.q_lo;
    tables.q_hi[h] = pair.q_hi;
  }
  return tables;
}

namespace {

LearnerOutput gap_minimizing_learner(
    const PreferenceDataset& dataset, const GameSkeleton& skeleton,
    const LearnerConfig& config,
    const std::vector<ProductMarkovPolicy>& candidates, bool robust) {
  if (candidates.empty()) {
    throw std::invalid_argument("empty candidate policy set");
  }
  auto [d1, d2] = split_dataset(dataset, config.seed);

  const int d = skeleton.feature_dim;
  const double norm_bound = std::sqrt(static_cast<double>(skeleton.horizon * d));
  RobustRewardModel model;
  model.mode = RewardModelMode::kUniform;
  model.uniform_radius =
      robust ? config.c1 * config.radius_cap * config.epsilon : 0.0;
  std::vector<RewardBounds> bounds(skeleton.num_agents);
  double mle_iters = 0.0;
  for (int i = 0; i < skeleton.num_agents; ++i) {
    const auto view = agent_view(d1, i);
    TrimmedMleConfig mle;
    mle.epsilon = robust ? config.epsilon : 0.0;
    mle.nu = config.nu;
    mle.norm_bound = norm_bound;
    mle.whitening_enabled = robust;
    mle.seed = config.seed + 17 * i;
    const TrimmedMleResult fit = trimmed_mle(view, mle);
    model.theta_tilde.push_back(fit.theta);
    model.theta_hat.push_back(fit.theta);
    mle_iters += fit.outer_iterations;
    bounds[i] = uniform_reward_bounds(skeleton, fit.theta,
                                      model.uniform_radius);
  }

  const auto step_data = build_step_data(skeleton, d2);
  const double rls_eps = robust ? config.epsilon : 0.0;
  LearnerOutput out;
  out.estimated_gap = std::numeric_limits<double>::infinity();
  for (const auto& candidate : candidates) {
    double gap = 0.0;
    for (int i = 0; i < skeleton.num_agents; ++i) {
      const auto tables = robust_value_tables(
          skeleton, step_data, candidate, i, bounds[i].lower,
          bounds[i].upper, nullptr, rls_eps, config.lambda);
      gap += tables.v_hi[0][skeleton.initial_state] -
             tables.v_lo[0][skeleton.initial_state];
    }
    if (gap < out.estimated_gap) {
      out.estimated_gap = gap;
      out.product_policy = candidate;
    }
  }
  out.reward_model = std::move(model);
  out.diagnostics["mle_outer_iterations"] = mle_iters;
  out.diagnostics["num_candidates"] = static_cast<double>(candidates.size());
  return out;
}

}  // namespace

LearnerOutput uniform_learner(
    const PreferenceDataset& dataset, const GameSkeleton& skeleton,
    const LearnerConfig& config,
    const std::vector<ProductMarkovPolicy>& candidates) {
  return gap_minimizing_learner(dataset, skeleton, config, candidates, true);
}

LearnerOutput naive_baseline_learner(
    const PreferenceDataset& dataset, const GameSkeleton& skeleton,
    const LearnerConfig& config,
    const std::vector<ProductMarkovPolicy>& candidates) {
  return gap_minimizing_learner(dataset, skeleton, config, candidates, false);
}

Eigen::VectorXd pga_gradient_estimate(const PerStepFeatureViews& views,
                                      double epsilon) {
  const int H = static_cast<int>(views.mu_side.size());
  if (H == 0) throw std::invalid_argument("empty feature views");
  const int d = static_cast<int>(views.mu_side[0][0].size());
  Eigen::VectorXd grad(H * d);
  for (int h = 0; h < H; ++h) {
    grad.segment(h * d, d) = robust_mean(views.mu_side[h], epsilon) -
                             robust_mean(views.mu_ref_side[h], epsilon);
  }
  return grad;
}

double confidence_ratio(
    const std::vector<std::pair<Eigen::VectorXd, int>>& data,
    const Eigen::VectorXd& anchor, const Eigen::VectorXd& theta) {
  const double m = static_cast<double>(data.size());
  return 2.0 / m * (logistic_log_likelihood(data, {}, anchor) -
                    logistic_log_likelihood(data, {}, theta));
}

double kappa_budget(const GameSkeleton& skeleton, int m, double epsilon,
                    double delta) {
  const double d = skeleton.feature_dim;
  const double H = skeleton.horizon;
  return 6.0 * epsilon * H * std::sqrt(d) +
         2.0 * d / m * std::log(H * m / delta);
}

namespace {

void clamp_per_step(Eigen::VectorXd* theta, int horizon, int d) {
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  for (int h = 0; h < horizon; ++h) {
    auto seg = theta->segment(h * d, d);
    const double norm = seg.norm();
    if (norm > sqrt_d) seg *= sqrt_d / norm;
  }
}

}  // namespace

Eigen::VectorXd project_confidence_set(
    const Eigen::VectorXd& theta, const Eigen::VectorXd& anchor,
    const std::vector<std::pair<Eigen::VectorXd, int>>& data, double kappa,
    const GameSkeleton& skeleton) {
  const int H = skeleton.horizon;
  const int d = skeleton.feature_dim;
  const double norm_bound = std::sqrt(static_cast<double>(H * d));
  constexpr double kTol = 1e-12;
  auto feasible = [&](const Eigen::VectorXd& th) {
    return th.norm() <= norm_bound + kTol &&
           confidence_ratio(data, anchor, th) <= kappa + kTol;
  };
  if (!feasible(anchor)) {
    throw std::runtime_error("infeasible confidence-set anchor");
  }
  Eigen::VectorXd result;
  if (feasible(theta)) {
    result = theta;
  } else {
    // Radial feasibility search toward the strictly feasible anchor; the set
    // is convex so the feasible segment is an interval containing t = 0.
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(anchor + mid * (theta - anchor))) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    result = anchor + lo * (theta - anchor);
  }
  clamp_per_step(&result, H, d);
  return result;
}

RewardEstimate reward_est_pga(const PreferenceDataset& d1,
                              const GameSkeleton& skeleton,
                              const LearnerConfig& config) {
  const int d = skeleton.feature_dim;
  const int H = skeleton.horizon;
  const double norm_bound = std::sqrt(static_cast<double>(H * d));
  RewardEstimate est;
  est.kappa = kappa_budget(skeleton, d1.size(), config.epsilon, config.delta);

  const auto views = per_step_feature_views(d1);
  const Eigen::VectorXd grad = pga_gradient_estimate(views, config.epsilon);
  const double eta =
      config.eta1 > 0.0 ? config.eta1
                        : 1.0 / std::sqrt(std::max(1, config.t1));

  for (int i = 0; i < skeleton.num_agents; ++i) {
    const auto view = agent_view(d1, i);
    TrimmedMleConfig mle;
    mle.epsilon = config.epsilon;
    mle.nu = config.nu;
    mle.norm_bound = norm_bound;
    mle.seed = config.seed + 17 * i;
    const Eigen::VectorXd anchor = trimmed_mle(view, mle).theta;
    est.theta_tilde.push_back(anchor);

    if (config.t1 == 0) {
      est.theta_hat.push_back(anchor);
      continue;
    }
    std::mt19937_64 rng(config.seed + 101 * i + 7);
    std::normal_distribution<double> gauss(0.0, 0.1);
    Eigen::VectorXd theta(H * d);
    for (int k = 0; k < H * d; ++k) theta[k] = anchor[k] + gauss(rng);
    theta = project_confidence_set(theta, anchor, view, est.kappa, skeleton);

    Eigen::VectorXd avg = Eigen::VectorXd::Zero(H * d);
    for (int t = 0; t < config.t1; ++t) {
      theta = project_confidence_set(theta + eta * grad, anchor, view,
                                     est.kappa, skeleton);
      avg += theta;
    }
    avg /= static_cast<double>(config.t1);
    est.theta_hat.push_back(
        project_confidence_set(avg, anchor, view, est.kappa, skeleton));
  }
  return est;
}

LearnerOutput unilateral_learner(
    const PreferenceDataset& dataset, const GameSkeleton& skeleton,
    const LearnerConfig& config,
    const std::vector<ProductMarkovPolicy>& candidates) {
  if (candidates.empty()) {
    throw std::invalid_argument("empty candidate policy set");
  }
  auto [d1, d2] = split_dataset(dataset, config.seed);
  const RewardEstimate est = reward_est_pga(d1, skeleton, config);
  const auto step_data = build_step_data(skeleton, d2);
  const BonusModel bonus = build_bonus_model(skeleton, step_data, config);

  std::vector<std::vector<Eigen::MatrixXd>> rewards(skeleton.num_agents);
  for (int i = 0; i < skeleton.num_agents; ++i) {
    rewards[i] = reward_matrices(skeleton, est.theta_hat[i]);
  }

  LearnerOutput out;
  out.estimated_gap = std::numeric_limits<double>::infinity();
  for (const auto& candidate : candidates) {
    double gap = 0.0;
    for (int i = 0; i < skeleton.num_agents; ++i) {
      const auto tables = robust_value_tables(
          skeleton, step_data, candidate, i, rewards[i], rewards[i], &bonus,
          config.epsilon, config.lambda);
      gap += tables.v_hi[0][skeleton.initial_state] -
             tables.v_lo[0][skeleton.initial_state];
    }
    if (gap < out.estimated_gap) {
      out.estimated_gap = gap;
      out.product_policy = candidate;
    }
  }
  out.reward_model.mode = RewardModelMode::kUnilateral;
  out.reward_model.theta_hat = est.theta_hat;
  out.reward_model.theta_tilde = est.theta_tilde;
  out.reward_model.kappa = est.kappa;
  out.diagnostics["bonus_scale"] = bonus.scale_e;
  out.diagnostics["num_candidates"] = static_cast<double>(candidates.size());
  return out;
}

HedgeResult optimistic_hedge(const std::vector<Eigen::MatrixXd>& losses,
                             double eta2, int t2, const std::string& variant) {
  const int n = static_cast<int>(losses.size());
  const bool optimistic = variant != "vanilla";
  HedgeResult result;
  std::vector<Eigen::VectorXd> min_pol(n), max_pol(n);
  std::vector<Eigen::VectorXd> prev_u(n), prev_l(n);
  std::vector<Eigen::VectorXd> min_avg(n), max_avg(n);
  std::vector<Eigen::VectorXd> cum_u(n), cum_l(n);
  std::vector<double> realized_u(n, 0.0), realized_l(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const int Ai = static_cast<int>(losses[i].rows());
    min_pol[i] = Eigen::VectorXd::Constant(Ai, 1.0 / Ai);
    max_pol[i] = min_pol[i];
    prev_u[i] = Eigen::VectorXd::Zero(Ai);
    prev_l[i] = Eigen::VectorXd::Zero(Ai);
    min_avg[i] = Eigen::VectorXd::Zero(Ai);
    max_avg[i] = Eigen::VectorXd::Zero(Ai);
    cum_u[i] = Eigen::VectorXd::Zero(Ai);
    cum_l[i] = Eigen::VectorXd::Zero(Ai);
  }
  auto mw_update = [&](Eigen::VectorXd& pol, const Eigen::VectorXd& payoff,
                       double sign) {
    Eigen::VectorXd logits = pol.array().log().matrix() + sign * eta2 * payoff;
    logits.array() -= logits.maxCoeff();
    Eigen::VectorXd next = logits.array().exp();
    pol = next / next.sum();
  };
  for (int t = 0; t < t2; ++t) {
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd u = losses[i] * min_pol[i];            // gains
      const Eigen::VectorXd l = losses[i].transpose() * max_pol[i];  // losses
      cum_u[i] += u;
      cum_l[i] += l;
      realized_u[i] += u.dot(max_pol[i]);
      realized_l[i] += l.dot(min_pol[i]);
      const Eigen::VectorXd gu = optimistic ? (2.0 * u - prev_u[i]).eval() : u;
      const Eigen::VectorXd gl = optimistic ? (2.0 * l - prev_l[i]).eval() : l;
      mw_update(max_pol[i], gu, +1.0);
      mw_update(min_pol[i], gl, -1.0);
      prev_u[i] = u;
      prev_l[i] = l;
      max_avg[i] += max_pol[i];
      min_avg[i] += min_pol[i];
    }
  }
  for (int i = 0; i < n; ++i) {
    const int Ai = static_cast<int>(losses[i].rows());
    if (t2 == 0) {
      result.min_policy.push_back(Eigen::VectorXd::Constant(Ai, 1.0 / Ai));
      result.max_policy.push_back(Eigen::VectorXd::Constant(Ai, 1.0 / Ai));
      result.min_regret.push_back(0.0);
      result.max_regret.push_back(0.0);
      continue;
    }
    result.min_policy.push_back(min_avg[i] / t2);
    result.max_policy.push_back(max_avg[i] / t2);
    result.max_regret.push_back((cum_u[i].maxCoeff() - realized_u[i]) / t2);
    result.min_regret.push_back((realized_l[i] - cum_l[i].minCoeff()) / t2);
  }
  return result;
}

LearnerOutput cce_learner(const PreferenceDataset& dataset,
                          const GameSkeleton& skeleton,
                          const LearnerConfig& config) {
  auto [d1, d2] = split_dataset(dataset, config.seed);
  const RewardEstimate est = reward_est_pga(d1, skeleton, config);
  const auto step_data = build_step_data(skeleton, d2);
  const BonusModel bonus = build_bonus_model(skeleton, step_data, config);

  const int n = skeleton.num_agents;
  const int H = skeleton.horizon;
  const int S = skeleton.num_states;
  const int A = skeleton.num_joint_actions;

  std::vector<std::vector<Eigen::MatrixXd>> rewards(n);
  for (int i = 0; i < n; ++i) {
    rewards[i] = reward_matrices(skeleton, est.theta_hat[i]);
  }

  std::vector<Eigen::MatrixXd> stage(H,
                                     Eigen::MatrixXd::Constant(S, A, 1.0 / A));
  std::vector<Eigen::VectorXd> v_lo(n, Eigen::VectorXd::Zero(S));
  std::vector<Eigen::VectorXd> v_hi(n, Eigen::VectorXd::Zero(S));
  double regret_accum = 0.0;
  int regret_cells = 0;

  for (int h = H - 1; h >= 0; --h) {
    Eigen::MatrixXd gamma(S, A);
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) gamma(s, a) = bonus.value(skeleton, h, s, a);
    }
    std::vector<QEstimatePair> q(n);
    for (int i = 0; i < n; ++i) {
      q[i] = rob_q(skeleton, step_data[h], h, config.epsilon, config.lambda,
                   rewards[i][h], rewards[i][h], v_lo[i], v_hi[i], gamma);
    }
    for (int s = 0; s < S; ++s) {
      // Coupled hedge: the loss of agent i depends on the other agents'
      // current min-policies through the expectation over a_{-i}, so the
      // losses are rebuilt every round instead of being fixed up front.
      const bool optimistic = config.hedge_variant != "vanilla";
      std::vector<Eigen::VectorXd> min_pol(n), max_pol(n), min_avg(n);
      std::vector<Eigen::VectorXd> prev_u(n), prev_l(n), cum_l(n);
      std::vector<double> realized_l(n, 0.0);
      for (int i = 0; i < n; ++i) {
        const int Ai = skeleton.num_actions[i];
        min_pol[i] = Eigen::VectorXd::Constant(Ai, 1.0 / Ai);
        max_pol[i] = min_pol[i];
        min_avg[i] = Eigen::VectorXd::Zero(Ai);
        prev_u[i] = prev_l[i] = cum_l[i] = Eigen::VectorXd::Zero(Ai);
      }
      auto mw_update = [&](Eigen::VectorXd& pol, const Eigen::VectorXd& payoff,
                           double sign) {
        Eigen::VectorXd logits =
            pol.array().log().matrix() + sign * config.eta2 * payoff;
        logits.array() -= logits.maxCoeff();
        Eigen::VectorXd next = logits.array().exp();
        pol = next / next.sum();
      };
      for (int t = 0; t < config.t2; ++t) {
        Eigen::VectorXd joint(A);
        for (int a = 0; a < A; ++a) {
          const auto actions = skeleton.decode_joint(a);
          double p = 1.0;
          for (int i = 0; i < n; ++i) p *= min_pol[i][actions[i]];
          joint[a] = p;
        }
        for (int i = 0; i < n; ++i) {
          const Eigen::VectorXd hi_exp = own_action_expectation(
              skeleton, joint, q[i].q_hi.row(s), i);
          const Eigen::VectorXd lo_exp = own_action_expectation(
              skeleton, joint, q[i].q_lo.row(s), i);
          // L_i(ad, ap) = hi_exp[ad] - lo_exp[ap]; u and l are its products
          // with the current min/max policies.
          const Eigen::VectorXd u =
              hi_exp.array() - lo_exp.dot(min_pol[i]);
          const Eigen::VectorXd l =
              hi_exp.dot(max_pol[i]) - lo_exp.array();
          cum_l[i] += l;
          realized_l[i] += l.dot(min_pol[i]);
          const Eigen::VectorXd gu =
              optimistic ? (2.0 * u - prev_u[i]).eval() : u;
          const Eigen::VectorXd gl =
              optimistic ? (2.0 * l - prev_l[i]).eval() : l;
          mw_update(max_pol[i], gu, +1.0);
          mw_update(min_pol[i], gl, -1.0);
          prev_u[i] = u;
          prev_l[i] = l;
          min_avg[i] += min_pol[i];
        }
      }
      for (int i = 0; i < n; ++i) {
        if (config.t2 > 0) {
          min_avg[i] /= static_cast<double>(config.t2);
          regret_accum +=
              (realized_l[i] - cum_l[i].minCoeff()) / config.t2;
        } else {
          min_avg[i] = min_pol[i];
        }
        ++regret_cells;
      }
      // Stage joint policy: product of the per-agent averaged min policies.
      for (int a = 0; a < A; ++a) {
        const auto actions = skeleton.decode_joint(a);
        double p = 1.0;
        for (int i = 0; i < n; ++i) p *= min_avg[i][actions[i]];
        stage[h](s, a) = p;
      }
      stage[h].row(s) /= stage[h].row(s).sum();
    }
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd nlo(S), nhi(S);
      for (int s = 0; s < S; ++s) {
        const Eigen::VectorXd dist = stage[h].row(s).transpose();
        nlo[s] = q[i].q_lo.row(s).dot(dist);
        nhi[s] = own_action_expectation(skeleton, dist, q[i].q_hi.row(s), i)
                     .maxCoeff();
      }
      v_lo[i] = std::move(nlo);
      v_hi[i] = std::move(nhi);
    }
  }

  LearnerOutput out;
  out.is_correlated = true;
  out.correlated_policy = StageCorrelatedPolicy(stage);
  out.estimated_gap = 0.0;
  for (int i = 0; i < n; ++i) {
    out.estimated_gap +=
        v_hi[i][skeleton.initial_state] - v_lo[i][skeleton.initial_state];
  }
  out.reward_model.mode = RewardModelMode::kUnilateral;
  out.reward_model.theta_hat = est.theta_hat;
  out.reward_model.theta_tilde = est.theta_tilde;
  out.reward_model.kappa = est.kappa;
  out.diagnostics["bonus_scale"] = bonus.scale_e;
  out.diagnostics["mean_stage_regret"] =
      regret_cells > 0 ? regret_accum / regret_cells : 0.0;
  return out;
}

}  // namespace marg
