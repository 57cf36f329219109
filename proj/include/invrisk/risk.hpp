#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invrisk/shared_map.hpp"

namespace invrisk {

// Everything the bounds need to know about one instance: the spectrum of its
// Jacobian, the instance's coordinates in the right singular basis, and
// optionally the projections of an injected noise vector. proj_x covers the d
// leading directions; energy of x outside the row space (possible when d < m)
// is tracked separately in offspace_sq so tail bounds stay exact.
struct SpectralProfile {
  Eigen::VectorXd sigma;   // d, non-increasing
  Eigen::VectorXd proj_x;  // V_i^T x for i = 1..d
  double x_sq_norm = 0.0;
  double offspace_sq = 0.0;
  std::optional<Eigen::VectorXd> proj_noise_v;  // V^T eps, data-space noise
  std::optional<Eigen::VectorXd> proj_noise_u;  // U^T eps, sharing-space noise
  Eigen::Index m = 0;
  Eigen::Index p = 0;
  Eigen::Index d = 0;
};

struct Calibration {
  double alpha = 0.0;
  double beta = 5.0;
};

enum class RiskBand { kMinimal, kModerate, kHigh };

std::string to_string(RiskBand band);

struct BandThresholds {
  double minimal = 0.15;  // scores below are minimal risk
  double high = 0.45;     // scores above are high risk
};

struct RiskReport {
  std::vector<double> tau;        // d + 1 entries, tau[0] = ||x||^2
  std::vector<double> p_weights;  // d entries, sum to one
  double weighted_bound = 0.0;
  double invre = 0.0;             // in (0, 1)
  double reciprocal_score = 0.0;  // 1 / weighted_bound, for fixed-model ranking
  RiskBand band = RiskBand::kModerate;
};

// Profile of one instance against one Jacobian. A noise vector of length m
// fills proj_noise_v, length p fills proj_noise_u; square maps fill both.
SpectralProfile spectral_profile(
    const Jacobian& j, const Eigen::VectorXd& x,
    const std::optional<Eigen::VectorXd>& noise = std::nullopt);

// Residual energy of x outside the top-k right singular subspace; what the
// best rank-k linear attacker must leave unrecovered.
double bound_rank_k(const SpectralProfile& prof, Eigen::Index k);

// Rank-k residual plus the leakage a data-space noise injection adds back:
// sum_{i<=k} (V_i^T eps)^2 / m.
double bound_dnp(const SpectralProfile& prof, Eigen::Index k);

// Rank-k residual plus sharing-space noise amplified through the inverted
// spectrum: sum_{i<=k} (U_i^T eps)^2 / (sigma_i^2 p).
double bound_gnp(const SpectralProfile& prof, Eigen::Index k);

// Floor on any attacker's loss after q shared dimensions are discarded: the
// energy on the q weakest singular directions.
double ic_lower_bound(const SpectralProfile& prof, Eigen::Index q);

// Weight P_k for each attacker rank k, favoring ranks that are cheap to
// realize: T_k = sum_{i<=k} sigma_i / (sigma_i - sigma_{i+1}) with the last
// gap closing to zero, weights proportional to 1/T_k. Gaps are floored at
// 1e-12 * sigma_1 so tied singular values stay finite.
Eigen::VectorXd feasibility_weights(const Eigen::VectorXd& sigma);

// Which per-rank bound feeds the estimator: the clean rank-k residual, or the
// residual plus the leakage term of noise injected in the data space or the
// sharing space. Noise families need the matching projection in the profile.
enum class BoundFamily { kPlain, kDataNoise, kSharingNoise };

// Rank-weighted bound squashed to (0, 1): 1/(1 + exp(beta * (bound - alpha))).
// Larger scores mean the instance is easier to reconstruct.
RiskReport invre(const SpectralProfile& prof, const Calibration& cal,
                 const BandThresholds& bands = {},
                 BoundFamily family = BoundFamily::kPlain);

// alpha as the mean weighted bound over a calibration batch; beta stays at
// its default.
Calibration calibrate_alpha(std::span<const SpectralProfile> profiles);

}  // namespace invrisk
