#include "invrisk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "invrisk/errors.hpp"

namespace invrisk {

namespace {

void require_pair(std::span<const double> a, std::span<const double> b,
                  const char* what) {
  if (a.empty()) {
    throw ConfigError(std::string(what) + " requires non-empty input");
  }
  if (a.size() != b.size()) {
    throw ConfigError(std::string(what) + " requires equal-length inputs");
  }
}

struct WindowStats {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  double cov = 0.0;
};

WindowStats window_stats(std::span<const double> a, std::span<const double> b,
                         std::size_t side, std::size_t y0, std::size_t x0,
                         std::size_t h, std::size_t w) {
  WindowStats s;
  const double count = static_cast<double>(h * w);
  for (std::size_t y = y0; y < y0 + h; ++y) {
    for (std::size_t x = x0; x < x0 + w; ++x) {
      s.mean_a += a[y * side + x];
      s.mean_b += b[y * side + x];
    }
  }
  s.mean_a /= count;
  s.mean_b /= count;
  for (std::size_t y = y0; y < y0 + h; ++y) {
    for (std::size_t x = x0; x < x0 + w; ++x) {
      const double da = a[y * side + x] - s.mean_a;
      const double db = b[y * side + x] - s.mean_b;
      s.var_a += da * da;
      s.var_b += db * db;
      s.cov += da * db;
    }
  }
  s.var_a /= count;
  s.var_b /= count;
  s.cov /= count;
  return s;
}

// Continued fraction for the regularized incomplete beta function, evaluated
// with Lentz's method.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  // The continued fraction converges fast only below the mean of the
  // distribution; use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) above it.
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double mse(std::span<const double> a, std::span<const double> b) {
  require_pair(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr(std::span<const double> a, std::span<const double> b,
            double max_value) {
  if (!(max_value > 0.0)) {
    throw ConfigError("psnr requires a positive dynamic range");
  }
  const double err = mse(a, b);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / err);
}

double ssim(std::span<const double> a, std::span<const double> b,
            std::size_t window, double k1, double k2, double dynamic_range) {
  require_pair(a, b, "ssim");
  if (window == 0) throw ConfigError("ssim window must be positive");
  if (!(dynamic_range > 0.0)) {
    throw ConfigError("ssim requires a positive dynamic range");
  }
  const auto side = static_cast<std::size_t>(
      std::llround(std::sqrt(static_cast<double>(a.size()))));
  if (side * side != a.size()) {
    throw ConfigError("ssim expects a square image");
  }
  const double c1 = (k1 * dynamic_range) * (k1 * dynamic_range);
  const double c2 = (k2 * dynamic_range) * (k2 * dynamic_range);
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t y0 = 0; y0 < side; y0 += window) {
    const std::size_t h = std::min(window, side - y0);
    for (std::size_t x0 = 0; x0 < side; x0 += window) {
      const std::size_t w = std::min(window, side - x0);
      const WindowStats s = window_stats(a, b, side, y0, x0, h, w);
      const double num =
          (2.0 * s.mean_a * s.mean_b + c1) * (2.0 * s.cov + c2);
      const double den = (s.mean_a * s.mean_a + s.mean_b * s.mean_b + c1) *
                         (s.var_a + s.var_b + c2);
      total += num / den;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

CorrelationResult pearson(std::span<const double> xs,
                          std::span<const double> ys) {
  require_pair(xs, ys, "pearson");
  const std::size_t n = xs.size();
  if (n < 3) {
    throw ConfigError("pearson needs at least three samples");
  }
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw NumericError("pearson is undefined for a constant series");
  }
  CorrelationResult out;
  out.n = n;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double nu = static_cast<double>(n - 2);
  if (std::fabs(out.r) >= 1.0) {
    out.p_value = 0.0;
    return out;
  }
  const double t2 = out.r * out.r * nu / (1.0 - out.r * out.r);
  out.p_value = incomplete_beta(0.5 * nu, 0.5, nu / (nu + t2));
  return out;
}

}  // namespace invrisk
