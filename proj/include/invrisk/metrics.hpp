#pragma once

#include <cstddef>
#include <span>

namespace invrisk {

// Reported PSNR saturates here so perfect reconstructions serialize as a
// finite number.
inline constexpr double kPsnrCapDb = 99.0;

struct QualityScore {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

double mse(std::span<const double> a, std::span<const double> b);

// 10 log10(max_value^2 / mse); +infinity when the inputs match exactly.
double psnr(std::span<const double> a, std::span<const double> b,
            double max_value = 1.0);

// Mean structural similarity over non-overlapping uniform windows of a
// square image (row-major, side = sqrt(len)). Windows clamp to the image and
// ragged edges form their own windows so every pixel contributes.
double ssim(std::span<const double> a, std::span<const double> b,
            std::size_t window = 8, double k1 = 0.01, double k2 = 0.03,
            double dynamic_range = 1.0);

struct CorrelationResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// Pearson correlation with a two-sided p-value from the exact t distribution
// of r under the null (via the regularized incomplete beta function).
CorrelationResult pearson(std::span<const double> xs,
                          std::span<const double> ys);

}  // namespace invrisk
