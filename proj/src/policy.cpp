#include "marg/policy.hpp"

#include <random>
#include <stdexcept>

namespace marg {

namespace {
constexpr double kSimplexTol = 1e-9;

void check_stochastic(const Eigen::MatrixXd& table) {
  for (int r = 0; r < table.rows(); ++r) {
    double sum = 0.0;
    for (int c = 0; c < table.cols(); ++c) {
      if (table(r, c) < -kSimplexTol) {
        throw std::invalid_argument("negative policy probability");
      }
      sum += table(r, c);
    }
    if (std::abs(sum - 1.0) > kSimplexTol) {
      throw std::invalid_argument("policy row does not sum to 1");
    }
  }
}
}  // namespace

ProductMarkovPolicy::ProductMarkovPolicy(
    std::vector<std::vector<Eigen::MatrixXd>> tables)
    : tables_(std::move(tables)) {
  for (const auto& per_agent : tables_) {
    for (const auto& t : per_agent) check_stochastic(t);
  }
}

Eigen::VectorXd ProductMarkovPolicy::joint_distribution(
    const LinearMarkovGame& game, int h, int s) const {
  const int joint = game.num_joint_actions();
  Eigen::VectorXd dist = Eigen::VectorXd::Ones(joint);
  for (int a = 0; a < joint; ++a) {
    auto actions = game.decode_joint(a);
    for (int i = 0; i < game.num_agents(); ++i) {
      dist[a] *= tables_[i][h](s, actions[i]);
    }
  }
  return dist;
}

StageCorrelatedPolicy::StageCorrelatedPolicy(
    std::vector<Eigen::MatrixXd> tables)
    : tables_(std::move(tables)) {
  for (const auto& t : tables_) check_stochastic(t);
}

Eigen::VectorXd StageCorrelatedPolicy::marginal(const LinearMarkovGame& game,
                                                int agent, int h,
                                                int s) const {
  Eigen::VectorXd marg = Eigen::VectorXd::Zero(game.num_actions()[agent]);
  for (int a = 0; a < game.num_joint_actions(); ++a) {
    marg[game.decode_joint(a)[agent]] += tables_[h](s, a);
  }
  return marg;
}

ProductMarkovPolicy make_uniform_policy(const LinearMarkovGame& game) {
  std::vector<std::vector<Eigen::MatrixXd>> tables(game.num_agents());
  for (int i = 0; i < game.num_agents(); ++i) {
    const int ai = game.num_actions()[i];
    tables[i].assign(game.horizon(), Eigen::MatrixXd::Constant(
                                         game.num_states(), ai, 1.0 / ai));
  }
  return ProductMarkovPolicy(std::move(tables));
}

ProductMarkovPolicy make_deterministic_policy(
    const LinearMarkovGame& game,
    const std::vector<std::vector<std::vector<int>>>& choice) {
  std::vector<std::vector<Eigen::MatrixXd>> tables(game.num_agents());
  for (int i = 0; i < game.num_agents(); ++i) {
    tables[i].resize(game.horizon());
    for (int h = 0; h < game.horizon(); ++h) {
      Eigen::MatrixXd t = Eigen::MatrixXd::Zero(game.num_states(),
                                                game.num_actions()[i]);
      for (int s = 0; s < game.num_states(); ++s) t(s, choice[i][h][s]) = 1.0;
      tables[i][h] = t;
    }
  }
  return ProductMarkovPolicy(std::move(tables));
}

ProductMarkovPolicy make_biased_policy(const LinearMarkovGame& game,
                                       const std::vector<int>& preferred,
                                       double bias) {
  std::vector<std::vector<Eigen::MatrixXd>> tables(game.num_agents());
  for (int i = 0; i < game.num_agents(); ++i) {
    const int ai = game.num_actions()[i];
    const double rest = ai > 1 ? (1.0 - bias) / (ai - 1) : 0.0;
    Eigen::MatrixXd t =
        Eigen::MatrixXd::Constant(game.num_states(), ai, rest);
    for (int s = 0; s < game.num_states(); ++s) {
      t(s, preferred[i]) = ai > 1 ? bias : 1.0;
    }
    tables[i].assign(game.horizon(), t);
  }
  return ProductMarkovPolicy(std::move(tables));
}

StageCorrelatedPolicy to_correlated(const LinearMarkovGame& game,
                                    const ProductMarkovPolicy& policy) {
  std::vector<Eigen::MatrixXd> tables(game.horizon());
  for (int h = 0; h < game.horizon(); ++h) {
    Eigen::MatrixXd t(game.num_states(), game.num_joint_actions());
    for (int s = 0; s < game.num_states(); ++s) {
      t.row(s) = policy.joint_distribution(game, h, s).transpose();
    }
    tables[h] = t;
  }
  return StageCorrelatedPolicy(std::move(tables));
}

std::vector<ProductMarkovPolicy> enumerate_deterministic_policies(
    const LinearMarkovGame& game, std::int64_t budget, std::uint64_t seed) {
  const int S = game.num_states();
  const int H = game.horizon();
  const int n = game.num_agents();
  // One deterministic choice per (agent, h, s) cell.
  std::vector<int> cell_sizes;
  for (int i = 0; i < n; ++i) {
    for (int hs = 0; hs < H * S; ++hs) cell_sizes.push_back(game.num_actions()[i]);
  }
  double log_total = 0.0;
  for (int c : cell_sizes) log_total += std::log(static_cast<double>(c));
  const bool exhaustive =
      log_total <= std::log(static_cast<double>(budget) + 0.5);

  auto from_flat_choice = [&](const std::vector<int>& flat) {
    std::vector<std::vector<std::vector<int>>> choice(
        n, std::vector<std::vector<int>>(H, std::vector<int>(S)));
    int k = 0;
    for (int i = 0; i < n; ++i) {
      for (int h = 0; h < H; ++h) {
        for (int s = 0; s < S; ++s) choice[i][h][s] = flat[k++];
      }
    }
    return make_deterministic_policy(game, choice);
  };

  std::vector<ProductMarkovPolicy> out;
  const int cells = static_cast<int>(cell_sizes.size());
  if (exhaustive) {
    std::vector<int> flat(cells, 0);
    while (true) {
      out.push_back(from_flat_choice(flat));
      int k = cells - 1;
      while (k >= 0) {
        if (++flat[k] < cell_sizes[k]) break;
        flat[k--] = 0;
      }
      if (k < 0) break;
    }
  } else {
    std::mt19937_64 rng(seed);
    for (std::int64_t j = 0; j < budget; ++j) {
      std::vector<int> flat(cells);
      for (int k = 0; k < cells; ++k) {
        flat[k] = static_cast<int>(rng() % cell_sizes[k]);
      }
      out.push_back(from_flat_choice(flat));
    }
  }
  return out;
}

}  // namespace marg
