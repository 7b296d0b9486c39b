#include "marg/dp.hpp"

#include <stdexcept>

namespace marg {

JointPolicyView view_of(const LinearMarkovGame& game,
                        const ProductMarkovPolicy& policy) {
  return [&game, &policy](int h, int s) {
    return policy.joint_distribution(game, h, s);
  };
}

JointPolicyView view_of(const StageCorrelatedPolicy& policy) {
  return [&policy](int h, int s) { return policy.joint_distribution(h, s); };
}

namespace {

void check_theta(const LinearMarkovGame& game, const RewardParams& theta) {
  if (static_cast<int>(theta.size()) != game.num_agents()) {
    throw std::invalid_argument("reward params: agent count mismatch");
  }
  for (const auto& per_agent : theta) {
    if (static_cast<int>(per_agent.size()) != game.horizon()) {
      throw std::invalid_argument("reward params: horizon mismatch");
    }
    for (const auto& th : per_agent) {
      if (th.size() != game.feature_dim()) {
        throw std::invalid_argument("reward params: dimension mismatch");
      }
    }
  }
}

// Mean reward vector over (s, a) rows for one (agent, h).
Eigen::VectorXd reward_column(const LinearMarkovGame& game,
                              const Eigen::VectorXd& theta_ih) {
  return game.features() * theta_ih;
}

}  // namespace

ValueTable evaluate_policy(const LinearMarkovGame& game,
                           const JointPolicyView& policy,
                           const RewardParams& theta) {
  check_theta(game, theta);
  const int n = game.num_agents();
  const int H = game.horizon();
  const int S = game.num_states();
  const int A = game.num_joint_actions();

  ValueTable table;
  table.V.assign(n, std::vector<Eigen::VectorXd>(H + 1,
                                                 Eigen::VectorXd::Zero(S)));
  table.Q.assign(n, std::vector<Eigen::MatrixXd>(H,
                                                 Eigen::MatrixXd::Zero(S, A)));
  for (int h = H - 1; h >= 0; --h) {
    const Eigen::MatrixXd& P = game.transition_matrix(h);  // (S*A) x S'
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd r = reward_column(game, theta[i][h]);
      const Eigen::VectorXd cont = P * table.V[i][h + 1];
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const int row = game.sa_index(s, a);
          table.Q[i][h](s, a) = r[row] + cont[row];
        }
      }
    }
    for (int s = 0; s < S; ++s) {
      const Eigen::VectorXd dist = policy(h, s);
      for (int i = 0; i < n; ++i) {
        table.V[i][h][s] = table.Q[i][h].row(s).dot(dist);
      }
    }
  }
  return table;
}

ValueTable evaluate_policy(const LinearMarkovGame& game,
                           const ProductMarkovPolicy& policy,
                           const RewardParams& theta) {
  return evaluate_policy(game, view_of(game, policy), theta);
}

ValueTable evaluate_policy(const LinearMarkovGame& game,
                           const StageCorrelatedPolicy& policy,
                           const RewardParams& theta) {
  return evaluate_policy(game, view_of(policy), theta);
}

double best_response_value(const LinearMarkovGame& game,
                           const JointPolicyView& policy, int agent,
                           const std::vector<Eigen::VectorXd>& theta_i) {
  if (agent < 0 || agent >= game.num_agents()) {
    throw std::invalid_argument("agent index out of range");
  }
  const int H = game.horizon();
  const int S = game.num_states();
  const int A = game.num_joint_actions();
  const int Ai = game.num_actions()[agent];

  // Precompute agent coordinate of every joint action.
  std::vector<int> own_action(A);
  for (int a = 0; a < A; ++a) own_action[a] = game.decode_joint(a)[agent];

  Eigen::VectorXd v_next = Eigen::VectorXd::Zero(S);
  for (int h = H - 1; h >= 0; --h) {
    const Eigen::MatrixXd& P = game.transition_matrix(h);
    const Eigen::VectorXd r = game.features() * theta_i[h];
    const Eigen::VectorXd cont = P * v_next;
    Eigen::VectorXd v(S);
    for (int s = 0; s < S; ++s) {
      const Eigen::VectorXd dist = policy(h, s);
      // Opponent marginal conditional on the agent's deviation: the deviator
      // acts independently of the correlation device, so a_{-i} keeps the
      // marginal of the stage distribution.
      Eigen::VectorXd own_marginal = Eigen::VectorXd::Zero(Ai);
      for (int a = 0; a < A; ++a) own_marginal[own_action[a]] += dist[a];
      Eigen::VectorXd q_dev = Eigen::VectorXd::Zero(Ai);
      for (int a = 0; a < A; ++a) {
        if (dist[a] == 0.0) continue;
        // Replace the agent's coordinate by each deviation action.
        auto actions = game.decode_joint(a);
        for (int b = 0; b < Ai; ++b) {
          actions[agent] = b;
          const int row = game.sa_index(s, game.encode_joint(actions));
          q_dev[b] += dist[a] * (r[row] + cont[row]);
        }
      }
      v[s] = q_dev.maxCoeff();
    }
    v_next = v;
  }
  return v_next[game.initial_state()];
}

namespace {

GapReport gap_impl(const LinearMarkovGame& game, const JointPolicyView& view,
                   const RewardParams& theta) {
  GapReport report;
  const ValueTable table = evaluate_policy(game, view, theta);
  for (int i = 0; i < game.num_agents(); ++i) {
    const double pv = table.V[i][0][game.initial_state()];
    const double br = best_response_value(game, view, i, theta[i]);
    report.policy_value.push_back(pv);
    report.best_response_value.push_back(br);
    report.total_gap += br - pv;
  }
  return report;
}

}  // namespace

GapReport nash_gap(const LinearMarkovGame& game,
                   const ProductMarkovPolicy& policy,
                   const RewardParams& theta) {
  return gap_impl(game, view_of(game, policy), theta);
}

GapReport cce_gap(const LinearMarkovGame& game,
                  const StageCorrelatedPolicy& policy,
                  const RewardParams& theta) {
  return gap_impl(game, view_of(policy), theta);
}

OccupancyMeasures occupancy_measures(const LinearMarkovGame& game,
                                     const JointPolicyView& policy) {
  const int H = game.horizon();
  const int S = game.num_states();
  const int A = game.num_joint_actions();
  OccupancyMeasures occ;
  occ.states.assign(H, Eigen::VectorXd::Zero(S));
  occ.state_actions.assign(H, Eigen::MatrixXd::Zero(S, A));
  occ.states[0][game.initial_state()] = 1.0;
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s) {
      if (occ.states[h][s] == 0.0) continue;
      occ.state_actions[h].row(s) =
          occ.states[h][s] * policy(h, s).transpose();
    }
    if (h + 1 < H) {
      const Eigen::MatrixXd& P = game.transition_matrix(h);
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const double w = occ.state_actions[h](s, a);
          if (w == 0.0) continue;
          occ.states[h + 1] += w * P.row(game.sa_index(s, a)).transpose();
        }
      }
    }
  }
  return occ;
}

Eigen::VectorXd expected_step_feature(const LinearMarkovGame& game,
                                      const JointPolicyView& policy, int h) {
  const OccupancyMeasures occ = occupancy_measures(game, policy);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(game.feature_dim());
  for (int s = 0; s < game.num_states(); ++s) {
    for (int a = 0; a < game.num_joint_actions(); ++a) {
      const double w = occ.state_actions[h](s, a);
      if (w != 0.0) mean += w * game.feature_row(s, a).transpose();
    }
  }
  return mean;
}

namespace {

// E[phi(tau) phi(tau)^T] and E[phi(tau)] for the trajectory feature sum.
void trajectory_feature_moments(const LinearMarkovGame& game,
                                const JointPolicyView& policy,
                                Eigen::VectorXd* mean,
                                Eigen::MatrixXd* second_moment) {
  const int H = game.horizon();
  const int S = game.num_states();
  const int A = game.num_joint_actions();
  const int d = game.feature_dim();
  const OccupancyMeasures occ = occupancy_measures(game, policy);

  *mean = Eigen::VectorXd::Zero(d);
  for (int h = 0; h < H; ++h) {
    *mean += expected_step_feature(game, policy, h);
  }

  // cond[s] = E[phi_{h2} | s_t = s] computed backward from h2 to t.
  auto conditional_feature = [&](int h2, int t) {
    std::vector<Eigen::VectorXd> cond(S);
    for (int s = 0; s < S; ++s) {
      Eigen::VectorXd f = Eigen::VectorXd::Zero(d);
      const Eigen::VectorXd dist = policy(h2, s);
      for (int a = 0; a < A; ++a) {
        if (dist[a] != 0.0) f += dist[a] * game.feature_row(s, a).transpose();
      }
      cond[s] = f;
    }
    for (int u = h2 - 1; u >= t; --u) {
      const Eigen::MatrixXd& P = game.transition_matrix(u);
      std::vector<Eigen::VectorXd> prev(S, Eigen::VectorXd::Zero(d));
      for (int s = 0; s < S; ++s) {
        const Eigen::VectorXd dist = policy(u, s);
        for (int a = 0; a < A; ++a) {
          if (dist[a] == 0.0) continue;
          const int row = game.sa_index(s, a);
          for (int sp = 0; sp < S; ++sp) {
            if (P(row, sp) != 0.0) prev[s] += dist[a] * P(row, sp) * cond[sp];
          }
        }
      }
      cond = prev;
    }
    return cond;
  };

  *second_moment = Eigen::MatrixXd::Zero(d, d);
  for (int h = 0; h < H; ++h) {
    // Diagonal term E[phi_h phi_h^T].
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const double w = occ.state_actions[h](s, a);
        if (w == 0.0) continue;
        const Eigen::VectorXd f = game.feature_row(s, a).transpose();
        *second_moment += w * f * f.transpose();
      }
    }
    // Cross terms E[phi_h phi_{h2}^T], via the conditional expected feature
    // at h2 given the step-(h+1) state reached from (s, a).
    for (int h2 = h + 1; h2 < H; ++h2) {
      const auto cond = conditional_feature(h2, h + 1);
      const Eigen::MatrixXd& P = game.transition_matrix(h);
      Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(d, d);
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const double w = occ.state_actions[h](s, a);
          if (w == 0.0) continue;
          const int row = game.sa_index(s, a);
          Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
          for (int sp = 0; sp < S; ++sp) {
            if (P(row, sp) != 0.0) g += P(row, sp) * cond[sp];
          }
          cross += w * game.feature_row(s, a).transpose() * g.transpose();
        }
      }
      *second_moment += cross + cross.transpose();
    }
  }
}

}  // namespace

CoverageMatrices coverage_matrices(const LinearMarkovGame& game,
                                   const ProductMarkovPolicy& mu,
                                   const ProductMarkovPolicy& mu_ref) {
  CoverageMatrices cov;
  const auto mu_view = view_of(game, mu);
  const auto ref_view = view_of(game, mu_ref);
  const OccupancyMeasures occ = occupancy_measures(game, mu_view);
  const int d = game.feature_dim();
  for (int h = 0; h < game.horizon(); ++h) {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
    for (int s = 0; s < game.num_states(); ++s) {
      for (int a = 0; a < game.num_joint_actions(); ++a) {
        const double w = occ.state_actions[h](s, a);
        if (w == 0.0) continue;
        const Eigen::VectorXd f = game.feature_row(s, a).transpose();
        sigma += w * f * f.transpose();
      }
    }
    cov.sigma_mu.push_back(sigma);
  }
  Eigen::VectorXd mean_mu, mean_ref;
  Eigen::MatrixXd m2_mu, m2_ref;
  trajectory_feature_moments(game, mu_view, &mean_mu, &m2_mu);
  trajectory_feature_moments(game, ref_view, &mean_ref, &m2_ref);
  // tau and tau' are independent, so the cross moments factorize.
  cov.sigma_diff = m2_mu + m2_ref - mean_mu * mean_ref.transpose() -
                   mean_ref * mean_mu.transpose();
  return cov;
}

}  // namespace marg
