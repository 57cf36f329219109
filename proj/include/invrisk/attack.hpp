#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "invrisk/linalg.hpp"
#include "invrisk/shared_map.hpp"

namespace invrisk {

// Linear attacker that inverts the shared map on its top-k singular
// subspace: a_star = V_{1:k} S_k^+ U_{1:k}^T, shaped m x p.
struct RankKAttacker {
  Eigen::MatrixXd a_star;
  Eigen::Index k = 0;
};

enum class Distance { kL2, kCosine };
enum class AttackInit { kZeros, kGaussian };

struct AttackConfig {
  Distance distance = Distance::kL2;
  double tv_weight = 0.0;
  int iters = 2000;
  double step_size = 0.01;
  std::uint64_t seed = 0;
  AttackInit init = AttackInit::kZeros;
};

struct AttackResult {
  Eigen::VectorXd x_hat;
  // (iteration, objective) checkpoints, first at iteration 0, last at exit.
  std::vector<std::pair<int, double>> trajectory;
  double final_objective = 0.0;
};

RankKAttacker build_rank_k(const Jacobian& j, Eigen::Index k);

Eigen::VectorXd reconstruct_rank_k(const RankKAttacker& attacker,
                                   const Eigen::VectorXd& shared);

// Loss the rank-k attacker achieves against the linearized sharing:
// ||a_star (G x) - x||^2.
double empirical_invloss(const Jacobian& j, const Eigen::VectorXd& x,
                         Eigen::Index k);

// Iterative reconstruction: minimize distance(F(x_hat), shared_target) plus
// tv_weight times total variation, with a seeded moment-based first-order
// optimizer. Deterministic for a fixed config.
AttackResult matching_attack(const SharedMapSpec& spec,
                             const Eigen::VectorXd& shared_target,
                             const AttackConfig& cfg);

// Expected reconstruction error across attacker effort tiers. Tier t gets
// weight proportional to the reciprocal of the cumulative iteration budget
// T_t = sum_{i<=t} iters_i, normalized over tiers.
double expected_mse(std::span<const double> mse_by_tier,
                    std::span<const int> iters_by_tier);

// The tier weights themselves, summing to one.
std::vector<double> tier_weights(std::span<const int> iters_by_tier);

}  // namespace invrisk
