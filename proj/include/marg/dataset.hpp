#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "marg/game.hpp"
#include "marg/policy.hpp"
#include "marg/trajectory.hpp"

namespace marg {

// One Bradley-Terry preference tuple: a pair of trajectories plus one +-1
// label per agent (+1 means tau preferred to tau').
struct PreferenceSample {
  Trajectory tau;
  Trajectory tau_prime;
  std::vector<int> labels;
  bool corrupted = false;  // ground-truth bookkeeping, never read by learners
};

struct PreferenceDataset {
  std::vector<PreferenceSample> samples;
  double epsilon_budget = 0.0;
  std::uint64_t seed = 0;
  std::string game_hash;
  // Clean originals of corrupted samples, sample index -> pre-attack tuple.
  std::map<int, PreferenceSample> clean_originals;

  int size() const { return static_cast<int>(samples.size()); }
};

// sigma(sum_h <phi_h(tau) - phi_h(tau'), theta_{i,h}>); theta_i is the H*d
// concatenation of the per-step parameters.
double bt_preference_prob(const Trajectory& tau, const Trajectory& tau_prime,
                          const Eigen::VectorXd& theta_i);

// H*d concatenation of per-step feature differences phi_h(tau)-phi_h(tau').
Eigen::VectorXd delta_feature(const PreferenceSample& sample);

// Concatenation of an agent's per-step true parameters into an H*d vector.
Eigen::VectorXd concat_theta(const std::vector<Eigen::VectorXd>& theta_i);

PreferenceDataset generate_clean_dataset(const LinearMarkovGame& game,
                                         const ProductMarkovPolicy& mu,
                                         const ProductMarkovPolicy& mu_ref,
                                         int m, std::uint64_t seed);

enum class Attacker {
  kLabelFlipRandom,
  kLabelFlipTargeted,
  kTrajectorySubstitution,
  kFeatureOutlier,
};

Attacker attacker_from_string(const std::string& name);
std::string attacker_name(Attacker a);

// Full-information adversary: sees the clean data and theta*, modifies at
// most floor(epsilon*m) samples. Corruption sets are nested in epsilon for
// the deterministic attackers (targeted / substitution / outlier).
PreferenceDataset corrupt_dataset(const PreferenceDataset& dataset,
                                  const LinearMarkovGame& game,
                                  double epsilon, Attacker attacker,
                                  const std::vector<int>& target_agents,
                                  std::uint64_t seed);

// Seeded uniform split into disjoint halves of sizes floor(m/2), ceil(m/2).
std::pair<PreferenceDataset, PreferenceDataset> split_dataset(
    const PreferenceDataset& dataset, std::uint64_t seed);

// Step-h feature vectors of the mu-side (tau) and mu_ref-side (tau')
// trajectories; views[h] from mu, one vector per sample.
struct PerStepFeatureViews {
  std::vector<std::vector<Eigen::VectorXd>> mu_side;       // [h][sample]
  std::vector<std::vector<Eigen::VectorXd>> mu_ref_side;   // [h][sample]
};
PerStepFeatureViews per_step_feature_views(const PreferenceDataset& dataset);

// Line-delimited UTF-8 record file; corruption flags and clean originals go
// to the `<path>.truth` sidecar so learners cannot accidentally read them.
void save_dataset(const PreferenceDataset& dataset, const std::string& path);
PreferenceDataset load_dataset(const LinearMarkovGame& game,
                               const std::string& path);
// Evaluation-only: reattach flags and originals from the sidecar.
void load_truth_sidecar(const LinearMarkovGame& game,
                        PreferenceDataset* dataset, const std::string& path);

// FNV-1a hash of a game's JSON serialization, for dataset headers.
std::string game_hash(const LinearMarkovGame& game);

}  // namespace marg
