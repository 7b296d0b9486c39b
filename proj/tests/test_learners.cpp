#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "marg/dataset.hpp"
#include "marg/dp.hpp"
#include "marg/game.hpp"
#include "marg/harness.hpp"
#include "marg/learners.hpp"
#include "marg/policy.hpp"

using namespace marg;

namespace {

// Single-agent deterministic-transition game: action a moves to state a, so
// regression targets R + V(s') are noiseless and backups are exact.
LinearMarkovGame deterministic_chain_game() {
  const int S = 2, A = 2, H = 2;
  std::vector<Eigen::MatrixXd> rows(H, Eigen::MatrixXd::Zero(S * A, S));
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) rows[h](s * A + a, a) = 1.0;
    }
  }
  Eigen::VectorXd r(S * A);
  r << 0.6, -0.1, 0.2, 0.4;
  std::vector<std::vector<Eigen::VectorXd>> rewards = {{r, r}};
  return make_tabular_game(1, H, S, {A}, rows, rewards, 0.0, 0);
}

// Step data enumerating every (s, a) `copies` times, with the game's exact
// deterministic successor.
StepData exhaustive_step_data(const LinearMarkovGame& game, int h, int copies,
                              bool last_step) {
  const GameSkeleton skel = skeleton_of(game);
  StepData data;
  for (int c = 0; c < copies; ++c) {
    for (int s = 0; s < game.num_states(); ++s) {
      for (int a = 0; a < game.num_joint_actions(); ++a) {
        data.s.push_back(s);
        data.a.push_back(a);
        int nxt = -1;
        if (!last_step) {
          const auto& row = game.transition_matrix(h).row(game.sa_index(s, a));
          row.maxCoeff(&nxt);
        }
        data.s_next.push_back(nxt);
        data.x.push_back(skel.feature_row(s, a).transpose());
      }
    }
  }
  return data;
}

// Exact one-step backup R(s,a) + E[V_next] from the game's transitions.
Eigen::MatrixXd exact_backup(const LinearMarkovGame& game, int h,
                             const Eigen::MatrixXd& reward,
                             const Eigen::VectorXd& v_next) {
  Eigen::MatrixXd q(game.num_states(), game.num_joint_actions());
  for (int s = 0; s < game.num_states(); ++s) {
    for (int a = 0; a < game.num_joint_actions(); ++a) {
      double ev = 0.0;
      if (v_next.size() > 0) {
        ev = game.transition_matrix(h).row(game.sa_index(s, a)).dot(v_next);
      }
      q(s, a) = reward(s, a) + ev;
    }
  }
  return q;
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

}  // namespace

TEST_CASE("uniform_reward_bounds closed forms") {
  const LinearMarkovGame game = make_identical_interest_game();
  const GameSkeleton skel = skeleton_of(game);
  const Eigen::VectorXd theta =
      concat_theta(game.theta_star()[0]);

  SUBCASE("radius zero collapses the interval") {
    const RewardBounds b = uniform_reward_bounds(skel, theta, 0.0);
    for (int h = 0; h < skel.horizon; ++h) {
      CHECK((b.upper[h] - b.lower[h]).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
      for (int s = 0; s < skel.num_states; ++s) {
        for (int a = 0; a < skel.num_joint_actions; ++a) {
          const double want = skel.feature_row(s, a).dot(
              theta.segment(h * skel.feature_dim, skel.feature_dim));
          CHECK(b.upper[h](s, a) == doctest::Approx(want));
        }
      }
    }
  }

  SUBCASE("zero anchor with unit features gives plus-minus radius") {
    const double r = 0.3;  // below sqrt(d), so no clipping
    const RewardBounds b = uniform_reward_bounds(
        skel, Eigen::VectorXd::Zero(skel.horizon * skel.feature_dim), r);
    for (int h = 0; h < skel.horizon; ++h) {
      // one-hot features: ||phi|| = 1 everywhere
      CHECK(b.upper[h].maxCoeff() == doctest::Approx(r));
      CHECK(b.lower[h].minCoeff() == doctest::Approx(-r));
      CHECK(b.upper[h].minCoeff() == doctest::Approx(r));
    }
  }

  SUBCASE("zero feature row gives zero bounds") {
    GameSkeleton broken = skel;
    broken.features.row(0).setZero();
    const RewardBounds b = uniform_reward_bounds(broken, theta, 0.5);
    CHECK(b.upper[0](0, 0) == doctest::Approx(0.0));
    CHECK(b.lower[0](0, 0) == doctest::Approx(0.0));
  }
}

TEST_CASE("bonus model closed form and linearity in the scale") {
  // All samples share the feature e1, so Lambda = (3/5)(e1 e1^T + c I) with
  // c = eps + lambda, and the bonus at e1 is E * sqrt(5 / (3 (1 + c))).
  const LinearMarkovGame game = deterministic_chain_game();
  const GameSkeleton skel = skeleton_of(game);
  StepData step;
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(skel.feature_dim);
  e1[0] = 1.0;  // feature row of (s=0, a=0) in the one-hot map
  for (int j = 0; j < 50; ++j) {
    step.s.push_back(0);
    step.a.push_back(0);
    step.s_next.push_back(0);
    step.x.push_back(e1);
  }
  LearnerConfig config;
  config.epsilon = 0.0;
  config.lambda = 0.2;
  const BonusModel model =
      build_bonus_model(skel, std::vector<StepData>(skel.horizon, step), config);
  const double want =
      model.scale_e * std::sqrt(5.0 / (3.0 * (1.0 + config.lambda)));
  CHECK(model.value(skel, 0, 0, 0) == doctest::Approx(want).epsilon(1e-9));

  BonusModel doubled = model;
  doubled.scale_e *= 2.0;
  for (int s = 0; s < skel.num_states; ++s) {
    for (int a = 0; a < skel.num_joint_actions; ++a) {
      CHECK(doubled.value(skel, 0, s, a) ==
            doctest::Approx(2.0 * model.value(skel, 0, s, a)));
    }
  }
}

TEST_CASE("rob_q reproduces exact Bellman backups on noiseless data") {
  const LinearMarkovGame game = deterministic_chain_game();
  const GameSkeleton skel = skeleton_of(game);
  const int h = 0;
  StepData step = exhaustive_step_data(game, h, 25, false);

  Eigen::MatrixXd reward(skel.num_states, skel.num_joint_actions);
  for (int s = 0; s < skel.num_states; ++s) {
    for (int a = 0; a < skel.num_joint_actions; ++a) {
      reward(s, a) = skel.feature_row(s, a).dot(game.theta_star()[0][h]);
    }
  }
  Eigen::VectorXd v_next(skel.num_states);
  v_next << 0.3, -0.2;
  const Eigen::MatrixXd zero_bonus =
      Eigen::MatrixXd::Zero(skel.num_states, skel.num_joint_actions);

  const QEstimatePair q = rob_q(skel, step, h, 0.0, 1e-10, reward, reward,
                                v_next, v_next, zero_bonus);
  const Eigen::MatrixXd oracle = exact_backup(game, h, reward, v_next);
  CHECK((q.q_lo - oracle).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((q.q_hi - oracle).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("rob_q clipping saturation and pure-bonus outputs") {
  const LinearMarkovGame game = deterministic_chain_game();
  const GameSkeleton skel = skeleton_of(game);
  const int h = 0;
  const double range = (skel.horizon - h) * std::sqrt(skel.feature_dim);
  StepData step = exhaustive_step_data(game, h, 10, false);
  const Eigen::MatrixXd zero =
      Eigen::MatrixXd::Zero(skel.num_states, skel.num_joint_actions);

  SUBCASE("huge bonus pins both estimates at the clipping range") {
    const Eigen::MatrixXd big = Eigen::MatrixXd::Constant(
        skel.num_states, skel.num_joint_actions, 10.0 * range);
    Eigen::MatrixXd reward = zero;
    reward.setConstant(0.5);
    Eigen::VectorXd v_next = Eigen::VectorXd::Constant(skel.num_states, 0.4);
    const QEstimatePair q =
        rob_q(skel, step, h, 0.0, 1e-6, reward, reward, v_next, v_next, big);
    CHECK(q.q_lo.maxCoeff() == doctest::Approx(-range));
    CHECK(q.q_hi.minCoeff() == doctest::Approx(range));
  }

  SUBCASE("zero targets leave only the bonus") {
    Eigen::MatrixXd bonus = zero;
    bonus.setConstant(0.7);
    const Eigen::VectorXd v0 = Eigen::VectorXd::Zero(skel.num_states);
    const QEstimatePair q =
        rob_q(skel, step, h, 0.0, 1e-10, zero, zero, v0, v0, bonus);
    CHECK((q.q_lo.array() + 0.7).abs().maxCoeff() < 1e-6);
    CHECK((q.q_hi.array() - 0.7).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("robust value estimates track exact policy values on clean data") {
  // Rich clean transition data, true rewards, no bonus: the backward pass
  // should agree with exact dynamic programming per candidate policy.
  const LinearMarkovGame game = make_two_state_game();
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const PreferenceDataset dataset = generate_clean_dataset(game, mu, mu, 4000, 5);
  const std::vector<StepData> data = build_step_data(skel, dataset);

  std::vector<Eigen::MatrixXd> reward(skel.horizon);
  for (int h = 0; h < skel.horizon; ++h) {
    reward[h].resize(skel.num_states, skel.num_joint_actions);
    for (int s = 0; s < skel.num_states; ++s) {
      for (int a = 0; a < skel.num_joint_actions; ++a) {
        reward[h](s, a) = skel.feature_row(s, a).dot(game.theta_star()[0][h]);
      }
    }
  }
  const auto candidates = candidate_policies(game, 10, 3);
  for (const auto& policy : candidates) {
    const RobustValueTables tables = robust_value_tables(
        skel, data, policy, 0, reward, reward, nullptr, 0.0, 1e-8);
    const ValueTable oracle = evaluate_policy(game, policy, game.theta_star());
    const double v0 = oracle.V[0][0][game.initial_state()];
    CHECK(tables.v_lo[0][game.initial_state()] == doctest::Approx(v0).epsilon(0.05));
  }
}

TEST_CASE("uniform_learner returns the single candidate unchanged") {
  const LinearMarkovGame game = make_identical_interest_game();
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const PreferenceDataset dataset = generate_clean_dataset(game, mu, mu, 400, 2);
  const ProductMarkovPolicy only = make_deterministic_policy(
      game, {{{1}, {0}}, {{0}, {1}}});
  LearnerConfig config;
  const LearnerOutput out = uniform_learner(dataset, skel, config, {only});
  for (int i = 0; i < game.num_agents(); ++i) {
    for (int h = 0; h < game.horizon(); ++h) {
      CHECK(out.product_policy.table(i, h) == only.table(i, h));
    }
  }
  CHECK(std::isfinite(out.estimated_gap));
}

TEST_CASE("uniform_learner finds a near-equilibrium on clean data") {
  const LinearMarkovGame game = make_identical_interest_game();
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const PreferenceDataset dataset = generate_clean_dataset(game, mu, mu, 4000, 11);
  LearnerConfig config;
  config.seed = 11;
  const auto candidates = candidate_policies(game, 100000, 0);
  const LearnerOutput out = uniform_learner(dataset, skel, config, candidates);
  const double gap = true_gap_of(game, out);
  CHECK(gap <= 0.1 * game.horizon());
}

TEST_CASE("uniform_learner output is deterministic") {
  const LinearMarkovGame game = make_identical_interest_game();
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const PreferenceDataset dataset = generate_clean_dataset(game, mu, mu, 800, 21);
  LearnerConfig config;
  config.epsilon = 0.1;
  config.seed = 9;
  const auto candidates = candidate_policies(game, 100000, 0);
  const LearnerOutput a = uniform_learner(dataset, skel, config, candidates);
  const LearnerOutput b = uniform_learner(dataset, skel, config, candidates);
  CHECK(a.estimated_gap == b.estimated_gap);
  for (int i = 0; i < game.num_agents(); ++i) {
    for (int h = 0; h < game.horizon(); ++h) {
      CHECK(a.product_policy.table(i, h) == b.product_policy.table(i, h));
    }
  }
}

TEST_CASE("pga_gradient_estimate trivial cases") {
  const LinearMarkovGame game = make_two_state_game();

  SUBCASE("mu equal to mu_ref deterministic gives the zero vector") {
    // Deterministic transitions too, so paired trajectories are identical.
    const LinearMarkovGame chain = deterministic_chain_game();
    const ProductMarkovPolicy det =
        make_deterministic_policy(chain, {{{0, 1}, {1, 0}}});
    const PreferenceDataset dataset =
        generate_clean_dataset(chain, det, det, 50, 7);
    const PerStepFeatureViews views = per_step_feature_views(dataset);
    const Eigen::VectorXd g = pga_gradient_estimate(views, 0.0);
    CHECK(g.cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("a single sample reproduces its per-step feature difference") {
    const ProductMarkovPolicy mu = make_uniform_policy(game);
    const ProductMarkovPolicy mu_ref = make_biased_policy(game, {0, 1}, 0.9);
    const PreferenceDataset dataset =
        generate_clean_dataset(game, mu, mu_ref, 1, 13);
    const PerStepFeatureViews views = per_step_feature_views(dataset);
    const Eigen::VectorXd g = pga_gradient_estimate(views, 0.0);
    const Eigen::VectorXd want = delta_feature(dataset.samples[0]);
    CHECK((g - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pga_gradient_estimate matches finite differences of the DP value") {
  const LinearMarkovGame game = make_two_state_game();
  const ProductMarkovPolicy mu = make_biased_policy(game, {0, 0}, 0.8);
  const ProductMarkovPolicy mu_ref = make_biased_policy(game, {1, 1}, 0.8);
  const PreferenceDataset dataset =
      generate_clean_dataset(game, mu, mu_ref, 10000, 29);
  const PerStepFeatureViews views = per_step_feature_views(dataset);
  const Eigen::VectorXd g = pga_gradient_estimate(views, 0.0);

  // Objective f(theta_0) = V_mu - V_mu_ref for agent 0; its gradient in
  // theta_{0,h} is the exact occupancy feature difference at step h.
  const int agent = 0, d = game.feature_dim();
  const double delta = 1e-4;
  for (int h = 0; h < game.horizon(); ++h) {
    for (int k = 0; k < d; ++k) {
      auto value_at = [&](double shift) {
        RewardParams theta = game.theta_star();
        theta[agent][h][k] += shift;
        const ValueTable a = evaluate_policy(game, mu, theta);
        const ValueTable b = evaluate_policy(game, mu_ref, theta);
        return a.V[agent][0][game.initial_state()] -
               b.V[agent][0][game.initial_state()];
      };
      const double fd = (value_at(delta) - value_at(-delta)) / (2.0 * delta);
      CHECK(std::abs(g[h * d + k] - fd) < 0.05);
    }
  }
}

TEST_CASE("project_confidence_set feasibility and identity cases") {
  const LinearMarkovGame game = make_identical_interest_game();
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const PreferenceDataset dataset = generate_clean_dataset(game, mu, mu, 1000, 3);
  const auto view = agent_view(dataset, 0);
  TrimmedMleConfig mle;
  mle.norm_bound = std::sqrt(static_cast<double>(skel.horizon * skel.feature_dim));
  mle.whitening_enabled = false;
  const Eigen::VectorXd anchor = trimmed_mle(view, mle).theta;

  SUBCASE("the anchor projects to itself") {
    const Eigen::VectorXd got =
        project_confidence_set(anchor, anchor, view, 0.5, skel);
    CHECK((got - anchor).norm() < 1e-12);
  }

  SUBCASE("a feasible point is returned unchanged") {
    Eigen::VectorXd near = anchor * 0.99;
    if (confidence_ratio(view, anchor, near) <= 0.5) {
      const Eigen::VectorXd got =
          project_confidence_set(near, anchor, view, 0.5, skel);
      CHECK((got - near).norm() < 1e-12);
    }
  }

  SUBCASE("kappa zero pulls an infeasible point onto the anchor's level set") {
    // Offset small enough that the per-step norm clamp never fires, so the
    // output stays on the bisection segment.
    Eigen::VectorXd far =
        anchor + 0.2 * Eigen::VectorXd::Ones(anchor.size());
    const Eigen::VectorXd got =
        project_confidence_set(far, anchor, view, 0.0, skel);
    CHECK(confidence_ratio(view, anchor, got) <= 1e-8);
    // Output lies on the segment from the anchor toward the input.
    const Eigen::VectorXd dir = far - anchor;
    const Eigen::VectorXd off = got - anchor;
    const double t = off.norm() / dir.norm();
    CHECK((off - t * dir).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("true parameters satisfy the unilateral confidence budget") {
  // Lemma-style sanity: on clean data the kappa budget admits theta* for the
  // trimmed-MLE anchor in at least 90% of seeds.
  const LinearMarkovGame game = make_identical_interest_game();
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const Eigen::VectorXd truth = concat_theta(game.theta_star()[0]);
  int hits = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    const PreferenceDataset dataset =
        generate_clean_dataset(game, mu, mu, 2000, 40 + seed);
    const auto view = agent_view(dataset, 0);
    TrimmedMleConfig mle;
    mle.norm_bound =
        std::sqrt(static_cast<double>(skel.horizon * skel.feature_dim));
    mle.whitening_enabled = false;
    const Eigen::VectorXd anchor = trimmed_mle(view, mle).theta;
    const double kappa = kappa_budget(skel, dataset.size(), 0.0, 0.05);
    hits += confidence_ratio(view, anchor, truth) <= kappa;
  }
  CHECK(hits >= 9);
}

TEST_CASE("reward_est_pga fixed points") {
  const LinearMarkovGame game = make_two_state_game();
  const GameSkeleton skel = skeleton_of(game);

  SUBCASE("zero gradient freezes the iterates") {
    const LinearMarkovGame chain = deterministic_chain_game();
    const GameSkeleton chain_skel = skeleton_of(chain);
    const ProductMarkovPolicy det =
        make_deterministic_policy(chain, {{{0, 1}, {1, 0}}});
    const PreferenceDataset dataset =
        generate_clean_dataset(chain, det, det, 300, 17);
    LearnerConfig one, five;
    one.t1 = 1;
    five.t1 = 5;
    one.seed = five.seed = 123;
    const RewardEstimate a = reward_est_pga(dataset, chain_skel, one);
    const RewardEstimate b = reward_est_pga(dataset, chain_skel, five);
    for (int i = 0; i < chain.num_agents(); ++i) {
      CHECK((a.theta_hat[i] - b.theta_hat[i]).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  SUBCASE("t1 zero returns the anchors") {
    const ProductMarkovPolicy mu = make_uniform_policy(game);
    const PreferenceDataset dataset =
        generate_clean_dataset(game, mu, mu, 300, 18);
    LearnerConfig config;
    config.t1 = 0;
    const RewardEstimate est = reward_est_pga(dataset, skel, config);
    for (int i = 0; i < game.num_agents(); ++i) {
      CHECK((est.theta_hat[i] - est.theta_tilde[i]).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("reward_est_pga nearly maximizes the linear surrogate") {
  // The surrogate sum_i theta_i . g_i is linear, so its maximum over the
  // feasible segment from the anchor along g is at the far feasible end; a
  // 101-point grid along that ray is the oracle.
  const LinearMarkovGame game = make_two_state_game();
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_biased_policy(game, {0, 0}, 0.8);
  const ProductMarkovPolicy mu_ref = make_biased_policy(game, {1, 1}, 0.8);
  const PreferenceDataset dataset =
      generate_clean_dataset(game, mu, mu_ref, 2000, 23);
  const PerStepFeatureViews views = per_step_feature_views(dataset);
  const Eigen::VectorXd g = pga_gradient_estimate(views, 0.0);

  LearnerConfig config;
  config.t1 = 200;
  config.eta1 = 1.0;
  config.seed = 5;
  const RewardEstimate est = reward_est_pga(dataset, skel, config);

  for (int i = 0; i < game.num_agents(); ++i) {
    const auto view = agent_view(dataset, i);
    const double reach =
        2.0 * std::sqrt(static_cast<double>(skel.horizon * skel.feature_dim));
    double best = -1e100;
    for (int k = 0; k <= 100; ++k) {
      const double t = k / 100.0;
      const Eigen::VectorXd cand = project_confidence_set(
          est.theta_tilde[i] + t * reach * g.normalized(), est.theta_tilde[i],
          view, est.kappa, skel);
      best = std::max(best, cand.dot(g));
    }
    const double got = est.theta_hat[i].dot(g);
    const double anchor_obj = est.theta_tilde[i].dot(g);
    // Within 5% of the achievable improvement over the anchor.
    CHECK(got >= anchor_obj + 0.95 * (best - anchor_obj) - 1e-9);
  }
}

TEST_CASE("unilateral_learner keeps a known equilibrium candidate honest") {
  const LinearMarkovGame game = make_identical_interest_game();
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const PreferenceDataset dataset = generate_clean_dataset(game, mu, mu, 2000, 31);
  const ProductMarkovPolicy ne = make_deterministic_policy(
      game, {{{0}, {0}}, {{0}, {0}}});
  LearnerConfig config;
  config.seed = 31;
  const LearnerOutput out = unilateral_learner(dataset, skel, config, {ne});
  CHECK(out.estimated_gap >= -1e-9);
  CHECK(true_gap_of(game, out) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("unilateral_learner with zero bonus tracks true gaps") {
  const LinearMarkovGame game = make_identical_interest_game();
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const PreferenceDataset dataset =
      generate_clean_dataset(game, mu, mu, 8000, 37);
  LearnerConfig config;
  config.c2 = 0.0;  // kills the bonus scale E
  config.lambda = 1e-6;
  config.t1 = 0;    // rewards = trimmed-MLE anchor, clean data
  config.seed = 37;
  const auto candidates = candidate_policies(game, 100000, 0);
  const LearnerOutput out = unilateral_learner(dataset, skel, config, candidates);
  const double gap = true_gap_of(game, out);
  CHECK(gap <= 0.1 * game.horizon());
}

TEST_CASE("optimistic_hedge degenerate stages") {
  SUBCASE("single action puts all mass on it with zero regret") {
    std::vector<Eigen::MatrixXd> losses = {Eigen::MatrixXd::Constant(1, 1, 0.4)};
    const HedgeResult res = optimistic_hedge(losses, 0.5, 100);
    CHECK(res.min_policy[0][0] == doctest::Approx(1.0));
    CHECK(res.max_policy[0][0] == doctest::Approx(1.0));
    CHECK(std::abs(res.min_regret[0]) < 1e-12);
  }

  SUBCASE("loss constant in the min action keeps the min policy uniform") {
    Eigen::MatrixXd L(2, 2);
    L << 0.3, 0.3, -0.6, -0.6;  // rows a_dagger, columns a_prime
    const HedgeResult res = optimistic_hedge({L}, 0.5, 500);
    CHECK(res.min_policy[0][0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(res.min_policy[0][1] == doctest::Approx(0.5).epsilon(1e-9));
  }

  SUBCASE("t2 zero returns uniform policies") {
    Eigen::MatrixXd L(3, 3);
    L.setRandom();
    const HedgeResult res = optimistic_hedge({L}, 0.5, 0);
    for (int a = 0; a < 3; ++a) {
      CHECK(res.min_policy[0][a] == doctest::Approx(1.0 / 3.0));
    }
  }
}

TEST_CASE("optimistic_hedge approaches the matching-pennies saddle point") {
  Eigen::MatrixXd L(2, 2);
  L << 1.0, -1.0, -1.0, 1.0;  // zero-sum stage; minimax value 0 at uniform

  auto duality_gap = [&](const HedgeResult& res) {
    // max_a_dagger E_{a' ~ min}[L] minus the minimax value 0.
    Eigen::VectorXd gains = L * res.min_policy[0];
    return gains.maxCoeff();
  };
  const HedgeResult coarse = optimistic_hedge({L}, 0.3, 100);
  const HedgeResult fine = optimistic_hedge({L}, 0.3, 1000);
  CHECK((fine.min_policy[0] -
         Eigen::VectorXd::Constant(2, 0.5)).cwiseAbs().maxCoeff() < 0.05);
  CHECK((fine.max_policy[0] -
         Eigen::VectorXd::Constant(2, 0.5)).cwiseAbs().maxCoeff() < 0.05);
  CHECK(duality_gap(fine) <= duality_gap(coarse) + 1e-12);

  // Regret bound shape: C n log|A| log^4 T / T with C <= 10.
  const int t2 = 2000;
  const HedgeResult long_run = optimistic_hedge({L}, 0.3, t2);
  const double bound = 10.0 * 1.0 * std::log(2.0) *
                       std::pow(std::log(static_cast<double>(t2)), 4.0) / t2;
  for (double r : long_run.min_regret) CHECK(r <= bound);
}

TEST_CASE("cce_learner concentrates on the best action in the bandit case") {
  // H = 1, one agent, one state: the stage game is a plain argmax.
  const int S = 1, A = 3;
  std::vector<Eigen::MatrixXd> rows(1, Eigen::MatrixXd::Zero(S * A, S));
  rows[0].setOnes();
  Eigen::VectorXd r(S * A);
  r << 0.9, 0.1, 0.5;
  const LinearMarkovGame game =
      make_tabular_game(1, 1, S, {A}, rows, {{r}}, 0.0, 0);
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const PreferenceDataset dataset = generate_clean_dataset(game, mu, mu, 2000, 43);
  LearnerConfig config;
  config.t2 = 500;
  config.seed = 43;
  const LearnerOutput out = cce_learner(dataset, skel, config);
  REQUIRE(out.is_correlated);
  CHECK(out.correlated_policy.table(0)(0, 0) >= 0.9);
}

TEST_CASE("cce_learner on a zero-reward game is trivially an equilibrium") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  std::vector<Eigen::MatrixXd> rows(2, Eigen::MatrixXd::Zero(4, 1));
  for (auto& m : rows) m.setOnes();
  const LinearMarkovGame game = make_tabular_game(
      2, 2, 1, {2, 2}, rows, {{zero, zero}, {zero, zero}}, 0.0, 0);
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const PreferenceDataset dataset = generate_clean_dataset(game, mu, mu, 1000, 47);
  LearnerConfig config;
  config.seed = 47;
  const LearnerOutput out = cce_learner(dataset, skel, config);
  const GapReport gap =
      cce_gap(game, out.correlated_policy, game.theta_star());
  CHECK(gap.total_gap <= 1e-8);
}

TEST_CASE("cce_learner reaches a small gap on the identical-interest game") {
  const LinearMarkovGame game = make_identical_interest_game();
  const GameSkeleton skel = skeleton_of(game);
  const ProductMarkovPolicy mu = make_uniform_policy(game);
  const PreferenceDataset dataset = generate_clean_dataset(game, mu, mu, 4000, 53);
  LearnerConfig config;
  config.t2 = 2000;
  config.seed = 53;
  const LearnerOutput out = cce_learner(dataset, skel, config);
  const GapReport gap = cce_gap(game, out.correlated_policy, game.theta_star());
  CHECK(gap.total_gap <= 0.15 * game.horizon() * game.num_agents());
}
