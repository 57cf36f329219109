#include "invrisk/synthetic.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "invrisk/errors.hpp"

namespace invrisk {
namespace {

Eigen::VectorXd gaussian_instance(Eigen::Index m, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd x(m);
  do {
    for (Eigen::Index i = 0; i < m; ++i) x(i) = gauss(rng);
  } while (x.norm() < 1e-12);
  return x / x.norm();
}

// Random cosine-basis synthesis with power-law coefficient decay, the usual
// cheap stand-in for natural-image statistics at tiny sizes.
Eigen::VectorXd grid_instance(Eigen::Index side, double slope,
                              std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd coef(side, side);
  for (Eigen::Index f1 = 0; f1 < side; ++f1) {
    for (Eigen::Index f2 = 0; f2 < side; ++f2) {
      const double freq = static_cast<double>(f1 + f2);
      coef(f1, f2) = gauss(rng) * std::pow(1.0 + freq, -slope);
    }
  }
  const double pi = std::numbers::pi;
  Eigen::MatrixXd img = Eigen::MatrixXd::Zero(side, side);
  for (Eigen::Index u = 0; u < side; ++u) {
    for (Eigen::Index v = 0; v < side; ++v) {
      double acc = 0.0;
      for (Eigen::Index f1 = 0; f1 < side; ++f1) {
        const double cu = std::cos(pi * static_cast<double>(f1) *
                                   (static_cast<double>(u) + 0.5) /
                                   static_cast<double>(side));
        for (Eigen::Index f2 = 0; f2 < side; ++f2) {
          const double cv = std::cos(pi * static_cast<double>(f2) *
                                     (static_cast<double>(v) + 0.5) /
                                     static_cast<double>(side));
          acc += coef(f1, f2) * cu * cv;
        }
      }
      img(u, v) = acc;
    }
  }
  const double lo = img.minCoeff();
  const double hi = img.maxCoeff();
  Eigen::VectorXd out(side * side);
  for (Eigen::Index u = 0; u < side; ++u) {
    for (Eigen::Index v = 0; v < side; ++v) {
      out(u * side + v) =
          hi - lo > 1e-12 ? (img(u, v) - lo) / (hi - lo) : 0.5;
    }
  }
  return out;
}

}  // namespace

SyntheticKind synthetic_kind_from_string(const std::string& name) {
  if (name == "gaussian") return SyntheticKind::kGaussian;
  if (name == "grid") return SyntheticKind::kGrid;
  throw ConfigError("unknown synthetic data kind: " + name);
}

std::string to_string(SyntheticKind kind) {
  return kind == SyntheticKind::kGaussian ? "gaussian" : "grid";
}

Tensor generate_synthetic(SyntheticKind kind, std::size_t n, std::size_t m,
                          std::uint64_t seed, const GridSpectrum& spectrum) {
  if (n == 0) {
    throw ConfigError("synthetic batch needs at least one instance");
  }
  if (m < 2) {
    throw ConfigError("synthetic instances need dimension of at least two");
  }
  Eigen::Index side = 0;
  if (kind == SyntheticKind::kGrid) {
    side = static_cast<Eigen::Index>(
        std::llround(std::sqrt(static_cast<double>(m))));
    if (static_cast<std::size_t>(side) * static_cast<std::size_t>(side) != m ||
        side < 2) {
      throw ConfigError("grid instances need a square dimension");
    }
    if (!(spectrum.slope_min <= spectrum.slope_max) ||
        spectrum.slope_min < 0.0) {
      throw ConfigError("grid spectrum slopes must satisfy 0 <= min <= max");
    }
  }

  std::vector<double> data;
  data.reserve(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(i));
    Eigen::VectorXd x;
    if (kind == SyntheticKind::kGaussian) {
      x = gaussian_instance(static_cast<Eigen::Index>(m), rng);
    } else {
      std::uniform_real_distribution<double> pick_slope(spectrum.slope_min,
                                                        spectrum.slope_max);
      x = grid_instance(side, pick_slope(rng), rng);
    }
    data.insert(data.end(), x.data(), x.data() + x.size());
  }
  return Tensor({n, m}, std::move(data));
}

}  // namespace invrisk
