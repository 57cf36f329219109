#include "invrisk/defense.hpp"

#include <Eigen/Core>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "invrisk/errors.hpp"
#include "invrisk/linalg.hpp"
#include "oracles.hpp"

using invrisk::AdaptiveNoise;
using invrisk::ConfigError;
using invrisk::DefenseKind;
using invrisk::DefenseSpec;
using invrisk::Jacobian;
using invrisk::MapMode;
using invrisk::SkipMode;

namespace {

Jacobian linear_jacobian(Eigen::MatrixXd g) {
  Jacobian j;
  j.g = std::move(g);
  j.mode = MapMode::kVflEmbedding;
  return j;
}

Eigen::VectorXd make_sigma(std::vector<double> vals) {
  return Eigen::Map<Eigen::VectorXd>(vals.data(),
                                     static_cast<Eigen::Index>(vals.size()));
}

}  // namespace

TEST_CASE("select_k finds the smallest prefix covering the mass") {
  Eigen::VectorXd flat = make_sigma({1.0, 1.0, 1.0, 1.0});
  CHECK(invrisk::select_k(flat, 0.95) == 4);
  CHECK(invrisk::select_k(flat, 0.5) == 2);
  CHECK(invrisk::select_k(flat, 0.0) == 0);
  CHECK(invrisk::select_k(flat, 1.0) == 4);

  Eigen::VectorXd steep = make_sigma({10.0, 1.0, 0.1, 0.01});
  CHECK(invrisk::select_k(steep, 0.95) == 2);
  CHECK(invrisk::select_k(steep, 0.6) == 1);
  CHECK(invrisk::select_k(steep, 1.0) == 4);

  // Exact boundaries do not overshoot: 3 of 4 is exactly 75% of the mass.
  Eigen::VectorXd pair = make_sigma({3.0, 1.0});
  CHECK(invrisk::select_k(pair, 0.75) == 1);
}

TEST_CASE("select_k rejects degenerate spectra and fractions") {
  Eigen::VectorXd ok = make_sigma({1.0, 0.5});
  CHECK_THROWS_AS(invrisk::select_k(Eigen::VectorXd(), 0.5), ConfigError);
  CHECK_THROWS_AS(invrisk::select_k(ok, -0.1), ConfigError);
  CHECK_THROWS_AS(invrisk::select_k(ok, 1.1), ConfigError);
  CHECK_THROWS_AS(invrisk::select_k(make_sigma({1.0, -0.5}), 0.5),
                  ConfigError);
  CHECK_THROWS_AS(invrisk::select_k(make_sigma({0.0, 0.0}), 0.5), ConfigError);
}

TEST_CASE("gaussian noise scales as sqrt of the variance on a fixed seed") {
  Eigen::VectorXd small = invrisk::gaussian_noise(64, 0.25, 7);
  Eigen::VectorXd big = invrisk::gaussian_noise(64, 1.0, 7);
  // Quadrupling the variance exactly doubles the same sample path, which is
  // what makes strength sweeps comparable point to point.
  CHECK((big - 2.0 * small).norm() == 0.0);
  CHECK_THROWS_AS(invrisk::gaussian_noise(16, 0.0, 7), ConfigError);
}

TEST_CASE("gaussian noise matches the requested variance in bulk") {
  Eigen::VectorXd eps = invrisk::gaussian_noise(20000, 2.0, 11);
  const double mean = eps.mean();
  const double var = eps.squaredNorm() / static_cast<double>(eps.size());
  CHECK(std::abs(mean) < 0.05);
  CHECK(var == doctest::Approx(2.0).epsilon(0.05));
  CHECK_THROWS_AS(invrisk::gaussian_noise(0, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(invrisk::gaussian_noise(4, -1.0, 0), ConfigError);
}

TEST_CASE("genp skip fraction must stay below the keep fraction") {
  DefenseSpec spec;
  spec.kind = DefenseKind::kInvlGnp;
  spec.delta = 1.0;
  spec.spectral_keep = 0.5;
  spec.spectral_skip = 0.6;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("data-space shaping keeps only the top right-singular directions") {
  // Rows select the first two input coordinates, so V spans e0 and e1 and the
  // kept band at 95% mass covers both.
  Eigen::MatrixXd g(2, 3);
  g << 2.0, 0.0, 0.0, 0.0, 1.0, 0.0;
  Jacobian j = linear_jacobian(g);
  DefenseSpec spec;
  spec.kind = DefenseKind::kInvlDnp;
  spec.delta = 0.5;
  spec.seed = 21;
  AdaptiveNoise shaped = invrisk::adaptive_noise_dnp(j, spec);
  Eigen::VectorXd raw = invrisk::gaussian_noise(3, 0.5, 21);
  CHECK(shaped.kept_indices.first == 0);
  CHECK(shaped.kept_indices.second == 2);
  CHECK(shaped.eps_hat(0) == doctest::Approx(raw(0)).epsilon(1e-12));
  CHECK(shaped.eps_hat(1) == doctest::Approx(raw(1)).epsilon(1e-12));
  CHECK(std::abs(shaped.eps_hat(2)) < 1e-12);
  CHECK(shaped.energy ==
        doctest::Approx(raw(0) * raw(0) + raw(1) * raw(1)).epsilon(1e-12));
}

TEST_CASE("data-space shaping keeps at least one direction") {
  std::mt19937_64 rng(5);
  Eigen::MatrixXd g =
      oracles::matrix_with_spectrum(make_sigma({4.0, 2.0, 1.0}), 3, 3, rng);
  DefenseSpec spec;
  spec.kind = DefenseKind::kInvlDnp;
  spec.delta = 1.0;
  spec.spectral_keep = 1e-18;  // selects nothing on its own
  Jacobian j = linear_jacobian(g);
  AdaptiveNoise shaped = invrisk::adaptive_noise_dnp(j, spec);
  CHECK(shaped.kept_indices.second == 1);
}

TEST_CASE("shaped noise never carries more energy than the raw draw") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd g = oracles::matrix_with_spectrum(
        make_sigma({8.0, 1.0, 0.25, 0.05, 0.01}), 5, 5, rng);
    Jacobian j = linear_jacobian(g);
    DefenseSpec spec;
    spec.kind = DefenseKind::kInvlGnp;
    spec.delta = 0.3;
    spec.seed = 1000 + static_cast<std::uint64_t>(trial);
    AdaptiveNoise shaped = invrisk::adaptive_noise_genp(j, spec);
    Eigen::VectorXd raw = invrisk::gaussian_noise(5, 0.3, spec.seed);
    CHECK(shaped.energy <= raw.squaredNorm());
    // The 95% band on this spectrum is a strict subset of the directions, so
    // the inequality is strict almost surely.
    CHECK(shaped.kept_indices.second < 5);
    CHECK(shaped.energy < raw.squaredNorm());
  }
}

TEST_CASE("sharing-space shaping lands on the frozen spectral band") {
  Eigen::MatrixXd g = make_sigma({10.0, 1.0, 0.1, 0.01}).asDiagonal();
  Jacobian j = linear_jacobian(g);
  DefenseSpec spec;
  spec.kind = DefenseKind::kInvlGnp;
  spec.delta = 0.8;
  spec.seed = 33;
  // keep 0.95 -> k = 2, skip 0.6 of the mass -> j = 1: band [1, 2).
  AdaptiveNoise shaped = invrisk::adaptive_noise_genp(j, spec);
  CHECK(shaped.kept_indices.first == 1);
  CHECK(shaped.kept_indices.second == 2);
  Eigen::VectorXd raw = invrisk::gaussian_noise(4, 0.8, 33);
  CHECK(std::abs(shaped.eps_hat(0)) < 1e-12);
  CHECK(shaped.eps_hat(1) == doctest::Approx(raw(1)).epsilon(1e-12));
  CHECK(std::abs(shaped.eps_hat(2)) < 1e-12);
  CHECK(std::abs(shaped.eps_hat(3)) < 1e-12);
}

TEST_CASE("count-mode skip takes a share of directions, clamped below k") {
  Eigen::MatrixXd g = make_sigma({10.0, 1.0, 0.1, 0.01}).asDiagonal();
  Jacobian j = linear_jacobian(g);
  DefenseSpec spec;
  spec.kind = DefenseKind::kInvlGnp;
  spec.delta = 1.0;
  spec.seed = 4;
  spec.skip_mode = SkipMode::kCount;
  spec.spectral_keep = 1.0;  // k = 4
  spec.spectral_skip = 0.6;  // ceil(2.4) = 3 directions skipped
  AdaptiveNoise wide = invrisk::adaptive_noise_genp(j, spec);
  CHECK(wide.kept_indices.first == 3);
  CHECK(wide.kept_indices.second == 4);

  spec.spectral_keep = 0.95;  // k = 2, so the skip of 3 must clamp to 1
  AdaptiveNoise clamped = invrisk::adaptive_noise_genp(j, spec);
  CHECK(clamped.kept_indices.first == 1);
  CHECK(clamped.kept_indices.second == 2);
}

TEST_CASE("plain noise defenses add the seeded draw verbatim") {
  Eigen::VectorXd target(4);
  target << 1.0, -2.0, 0.5, 3.0;
  for (DefenseKind kind :
       {DefenseKind::kDnp, DefenseKind::kGnp, DefenseKind::kEnp}) {
    DefenseSpec spec;
    spec.kind = kind;
    spec.delta = 0.4;
    spec.seed = 99;
    Eigen::VectorXd out = invrisk::apply_defense(spec, target);
    Eigen::VectorXd expected = target + invrisk::gaussian_noise(4, 0.4, 99);
    CHECK((out - expected).norm() == 0.0);
  }
}

TEST_CASE("prune zeroes the smallest magnitudes, earliest index on ties") {
  Eigen::VectorXd v(4);
  v << 1.0, -1.0, 1.0, 2.0;
  DefenseSpec spec;
  spec.kind = DefenseKind::kPrune;
  spec.lambda = 0.25;
  Eigen::VectorXd one = invrisk::apply_defense(spec, v);
  CHECK(one(0) == 0.0);
  CHECK(one(1) == -1.0);
  CHECK(one(2) == 1.0);
  CHECK(one(3) == 2.0);

  spec.lambda = 0.5;
  Eigen::VectorXd two = invrisk::apply_defense(spec, v);
  CHECK(two(0) == 0.0);
  CHECK(two(1) == 0.0);
  CHECK(two(2) == 1.0);
  CHECK(two(3) == 2.0);

  spec.lambda = 0.0;
  CHECK((invrisk::apply_defense(spec, v) - v).norm() == 0.0);
  spec.lambda = 1.0;
  CHECK(invrisk::apply_defense(spec, v).norm() == 0.0);
}

TEST_CASE("dropout zeroes a seeded prefix so stronger settings nest") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(16);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 2.0 + gauss(rng);

  DefenseSpec weak;
  weak.kind = DefenseKind::kDropout;
  weak.lambda = 0.25;
  weak.seed = 3;
  DefenseSpec strong = weak;
  strong.lambda = 0.5;

  Eigen::VectorXd out_weak = invrisk::apply_defense(weak, v);
  Eigen::VectorXd out_strong = invrisk::apply_defense(strong, v);
  int weak_zeros = 0;
  int strong_zeros = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (out_weak(i) == 0.0) {
      ++weak_zeros;
      CHECK(out_strong(i) == 0.0);  // nested: weak drops are a subset
    }
    if (out_strong(i) == 0.0) ++strong_zeros;
  }
  CHECK(weak_zeros == 4);
  CHECK(strong_zeros == 8);

  // Same seed reproduces the mask; a different seed moves it.
  CHECK((invrisk::apply_defense(weak, v) - out_weak).norm() == 0.0);
  DefenseSpec other = weak;
  other.seed = 4;
  CHECK((invrisk::apply_defense(other, v) - out_weak).norm() > 0.0);
}

TEST_CASE("adaptive kinds route through apply_defense with a jacobian") {
  std::mt19937_64 rng(8);
  Eigen::MatrixXd g =
      oracles::matrix_with_spectrum(make_sigma({5.0, 2.0, 0.5}), 3, 3, rng);
  Jacobian j = linear_jacobian(g);
  Eigen::VectorXd x(3);
  x << 0.2, -0.4, 0.6;

  DefenseSpec spec;
  spec.kind = DefenseKind::kInvlDnp;
  spec.delta = 0.2;
  spec.seed = 5;
  Eigen::VectorXd defended = invrisk::apply_defense(spec, x, &j);
  Eigen::VectorXd expected = x + invrisk::adaptive_noise_dnp(j, spec).eps_hat;
  CHECK((defended - expected).norm() == 0.0);

  spec.kind = DefenseKind::kInvlEnp;
  Eigen::VectorXd shared = j.g * x;
  Eigen::VectorXd defended_shared = invrisk::apply_defense(spec, shared, &j);
  Eigen::VectorXd expected_shared =
      shared + invrisk::adaptive_noise_genp(j, spec).eps_hat;
  CHECK((defended_shared - expected_shared).norm() == 0.0);
}

TEST_CASE("defense specs reject missing or out-of-range parameters") {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(4);
  DefenseSpec noiseless;
  noiseless.kind = DefenseKind::kGnp;  // delta left unset
  CHECK_THROWS_AS(invrisk::apply_defense(noiseless, v), ConfigError);

  DefenseSpec no_lambda;
  no_lambda.kind = DefenseKind::kPrune;
  CHECK_THROWS_AS(invrisk::apply_defense(no_lambda, v), ConfigError);
  no_lambda.lambda = 1.5;
  CHECK_THROWS_AS(invrisk::apply_defense(no_lambda, v), ConfigError);

  DefenseSpec adaptive;
  adaptive.kind = DefenseKind::kInvlGnp;
  adaptive.delta = 1.0;
  CHECK_THROWS_WITH_AS(invrisk::apply_defense(adaptive, v),
                       "adaptive defense requires a jacobian", ConfigError);

  Jacobian j = linear_jacobian(Eigen::MatrixXd::Identity(3, 3));
  CHECK_THROWS_AS(invrisk::apply_defense(adaptive, v, &j), ConfigError);

  adaptive.spectral_skip = 1.0;
  CHECK_THROWS_AS(adaptive.validate(), ConfigError);

  DefenseSpec empty_target;
  empty_target.kind = DefenseKind::kDnp;
  empty_target.delta = 1.0;
  CHECK_THROWS_AS(invrisk::apply_defense(empty_target, Eigen::VectorXd()),
                  ConfigError);
}

TEST_CASE("defense kind names round-trip") {
  for (DefenseKind kind :
       {DefenseKind::kDnp, DefenseKind::kGnp, DefenseKind::kEnp,
        DefenseKind::kPrune, DefenseKind::kDropout, DefenseKind::kInvlDnp,
        DefenseKind::kInvlGnp, DefenseKind::kInvlEnp}) {
    CHECK(invrisk::defense_kind_from_string(invrisk::to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(invrisk::defense_kind_from_string("fog"), ConfigError);
}
