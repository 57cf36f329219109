#include "invrisk/risk.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "invrisk/errors.hpp"
#include "invrisk/linalg.hpp"

namespace invrisk {
namespace {

void check_rank(const SpectralProfile& prof, Eigen::Index k,
                const char* what) {
  if (k < 0 || k > prof.d) {
    throw ConfigError(std::string(what) + " rank must be in [0, " +
                      std::to_string(prof.d) + "]");
  }
}

double tail_energy(const SpectralProfile& prof, Eigen::Index k) {
  double acc = prof.offspace_sq;
  for (Eigen::Index i = k; i < prof.d; ++i) {
    acc += prof.proj_x(i) * prof.proj_x(i);
  }
  return acc;
}

}  // namespace

std::string to_string(RiskBand band) {
  switch (band) {
    case RiskBand::kMinimal:
      return "minimal";
    case RiskBand::kModerate:
      return "moderate";
    case RiskBand::kHigh:
      return "high";
  }
  throw ConfigError("unhandled risk band");
}

SpectralProfile spectral_profile(const Jacobian& j, const Eigen::VectorXd& x,
                                 const std::optional<Eigen::VectorXd>& noise) {
  if (x.size() != j.g.cols()) {
    throw ConfigError("instance length does not match jacobian columns");
  }
  SvdBundle s = svd(j.g);
  SpectralProfile prof;
  prof.sigma = s.sigma;
  prof.proj_x = s.vt * x;
  prof.x_sq_norm = x.squaredNorm();
  prof.offspace_sq = (x - s.vt.transpose() * prof.proj_x).squaredNorm();
  prof.m = s.m();
  prof.p = s.p();
  prof.d = s.d();
  if (noise.has_value()) {
    bool matched = false;
    if (noise->size() == prof.m) {
      prof.proj_noise_v = s.vt * *noise;
      matched = true;
    }
    if (noise->size() == prof.p) {
      prof.proj_noise_u = s.u.transpose() * *noise;
      matched = true;
    }
    if (!matched) {
      throw ConfigError("noise length matches neither the input dimension " +
                        std::to_string(prof.m) + " nor the shared dimension " +
                        std::to_string(prof.p));
    }
  }
  return prof;
}

double bound_rank_k(const SpectralProfile& prof, Eigen::Index k) {
  check_rank(prof, k, "bound");
  return tail_energy(prof, k);
}

double bound_dnp(const SpectralProfile& prof, Eigen::Index k) {
  check_rank(prof, k, "bound");
  if (!prof.proj_noise_v.has_value()) {
    throw ConfigError("data-space noise projections missing from profile");
  }
  double noise_term = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    double c = (*prof.proj_noise_v)(i);
    noise_term += c * c;
  }
  return tail_energy(prof, k) + noise_term / static_cast<double>(prof.m);
}

double bound_gnp(const SpectralProfile& prof, Eigen::Index k) {
  check_rank(prof, k, "bound");
  if (!prof.proj_noise_u.has_value()) {
    throw ConfigError("sharing-space noise projections missing from profile");
  }
  double noise_term = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (prof.sigma(i) <= 0.0) {
      throw NumericError(
          "zero singular value inside the inverted band at index " +
          std::to_string(i));
    }
    double c = (*prof.proj_noise_u)(i);
    noise_term += (c * c) / (prof.sigma(i) * prof.sigma(i));
  }
  return tail_energy(prof, k) + noise_term / static_cast<double>(prof.p);
}

double ic_lower_bound(const SpectralProfile& prof, Eigen::Index q) {
  if (q < 0 || q > prof.d) {
    throw ConfigError("dropped dimension count must be in [0, d]");
  }
  double acc = 0.0;
  for (Eigen::Index i = prof.d - q; i < prof.d; ++i) {
    acc += prof.proj_x(i) * prof.proj_x(i);
  }
  return acc;
}

Eigen::VectorXd feasibility_weights(const Eigen::VectorXd& sigma) {
  const Eigen::Index d = sigma.size();
  if (d == 0) {
    throw ConfigError("spectrum must be non-empty");
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (sigma(i) < 0.0 || (i > 0 && sigma(i) > sigma(i - 1))) {
      throw ConfigError("spectrum must be non-increasing and nonnegative");
    }
  }
  if (sigma(0) <= 0.0) {
    throw ConfigError("spectrum must contain a positive singular value");
  }
  const double gap_floor = 1e-12 * sigma(0);
  Eigen::VectorXd inv_t(d);
  double t = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    double next = k + 1 < d ? sigma(k + 1) : 0.0;
    double gap = std::max(sigma(k) - next, gap_floor);
    t += sigma(k) / gap;
    inv_t(k) = 1.0 / t;
  }
  return inv_t / inv_t.sum();
}

RiskReport invre(const SpectralProfile& prof, const Calibration& cal,
                 const BandThresholds& bands, BoundFamily family) {
  if (cal.beta <= 0.0) {
    throw ConfigError("calibration beta must be positive");
  }
  if (!(bands.minimal > 0.0 && bands.minimal < bands.high &&
        bands.high < 1.0)) {
    throw ConfigError("band thresholds must satisfy 0 < minimal < high < 1");
  }
  RiskReport report;
  report.tau.resize(static_cast<std::size_t>(prof.d) + 1);
  for (Eigen::Index k = 0; k <= prof.d; ++k) {
    double bound = 0.0;
    switch (family) {
      case BoundFamily::kPlain:
        bound = bound_rank_k(prof, k);
        break;
      case BoundFamily::kDataNoise:
        bound = bound_dnp(prof, k);
        break;
      case BoundFamily::kSharingNoise:
        bound = bound_gnp(prof, k);
        break;
    }
    report.tau[static_cast<std::size_t>(k)] = bound;
  }
  Eigen::VectorXd weights = feasibility_weights(prof.sigma);
  report.p_weights.assign(weights.data(), weights.data() + weights.size());
  double wb = 0.0;
  for (Eigen::Index k = 1; k <= prof.d; ++k) {
    wb += weights(k - 1) * report.tau[static_cast<std::size_t>(k)];
  }
  report.weighted_bound = wb;
  double arg = cal.beta * (wb - cal.alpha);
  // Clamp keeps the sigmoid strictly inside (0, 1): exp(-34) still nudges the
  // denominator off 1.0, exp(700) stays finite.
  arg = std::clamp(arg, -34.0, 700.0);
  report.invre = 1.0 / (1.0 + std::exp(arg));
  report.reciprocal_score = wb > 1e-18 ? 1.0 / wb : 1e18;
  if (report.invre < bands.minimal) {
    report.band = RiskBand::kMinimal;
  } else if (report.invre > bands.high) {
    report.band = RiskBand::kHigh;
  } else {
    report.band = RiskBand::kModerate;
  }
  return report;
}

Calibration calibrate_alpha(std::span<const SpectralProfile> profiles) {
  if (profiles.empty()) {
    throw ConfigError("calibration requires at least one profile");
  }
  Calibration cal;
  double acc = 0.0;
  for (const SpectralProfile& prof : profiles) {
    Eigen::VectorXd weights = feasibility_weights(prof.sigma);
    double wb = 0.0;
    for (Eigen::Index k = 1; k <= prof.d; ++k) {
      wb += weights(k - 1) * bound_rank_k(prof, k);
    }
    acc += wb;
  }
  cal.alpha = acc / static_cast<double>(profiles.size());
  return cal;
}

}  // namespace invrisk
