#include "invrisk/attack.hpp"

#include <Eigen/Core>
#include <array>
#include <random>

#include "doctest.h"
#include "invrisk/errors.hpp"
#include "invrisk/risk.hpp"
#include "oracles.hpp"

using invrisk::Activation;
using invrisk::AttackConfig;
using invrisk::AttackInit;
using invrisk::AttackResult;
using invrisk::ConfigError;
using invrisk::Distance;
using invrisk::Jacobian;
using invrisk::LossKind;
using invrisk::MapMode;
using invrisk::Network;
using invrisk::RankKAttacker;
using invrisk::SharedMapSpec;

namespace {

Jacobian linear_jacobian(Eigen::MatrixXd g) {
  Jacobian j;
  j.g = std::move(g);
  j.mode = MapMode::kVflEmbedding;
  return j;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = gauss(rng);
  return v;
}

SharedMapSpec identity_map(Eigen::Index m) {
  invrisk::DenseLayer dense;
  dense.weights = Eigen::MatrixXd::Identity(m, m);
  dense.bias = Eigen::VectorXd::Zero(m);
  SharedMapSpec spec(Network({dense}));
  spec.mode = MapMode::kVflEmbedding;
  spec.cut = 1;
  return spec;
}

}  // namespace

TEST_CASE("rank-k attacker is the truncated pseudoinverse") {
  Jacobian j = linear_jacobian(Eigen::Vector2d(2.0, 1.0).asDiagonal());
  RankKAttacker a1 = invrisk::build_rank_k(j, 1);
  CHECK(a1.a_star(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(a1.a_star.bottomRows(1).norm() == 0.0);
  CHECK_THROWS_AS(invrisk::build_rank_k(j, 3), ConfigError);
  CHECK_THROWS_AS(
      invrisk::reconstruct_rank_k(a1, Eigen::VectorXd::Ones(3)), ConfigError);
}

TEST_CASE("full-rank attacker recovers row-space instances exactly") {
  std::mt19937_64 rng(42);
  Eigen::VectorXd spectrum(3);
  spectrum << 2.0, 1.0, 0.5;
  Eigen::MatrixXd g = oracles::matrix_with_spectrum(spectrum, 5, 3, rng);
  Jacobian j = linear_jacobian(g);
  RankKAttacker full = invrisk::build_rank_k(j, 3);
  Eigen::VectorXd x = random_vector(3, rng);
  Eigen::VectorXd rec = invrisk::reconstruct_rank_k(full, g * x);
  CHECK((rec - x).norm() < 1e-10);
}

TEST_CASE("attacker loss on linear maps equals the spectral tail energy") {
  std::mt19937_64 rng(777);
  const std::array<std::array<Eigen::Index, 2>, 3> shapes = {
      {{6, 6}, {9, 5}, {5, 9}}};
  for (auto [p, m] : shapes) {
    Eigen::MatrixXd g(p, m);
    for (Eigen::Index r = 0; r < p; ++r) g.row(r) = random_vector(m, rng);
    Jacobian j = linear_jacobian(g);
    Eigen::VectorXd x = random_vector(m, rng);
    invrisk::SpectralProfile prof = invrisk::spectral_profile(j, x);
    for (Eigen::Index k = 0; k <= prof.d; ++k) {
      double bound = invrisk::bound_rank_k(prof, k);
      double achieved = invrisk::empirical_invloss(j, x, k);
      CHECK(std::abs(bound - achieved) <= 1e-9);
    }
  }
}

TEST_CASE("attacker loss never increases with rank") {
  std::mt19937_64 rng(1001);
  Eigen::MatrixXd g(7, 5);
  for (Eigen::Index r = 0; r < 7; ++r) g.row(r) = random_vector(5, rng);
  Jacobian j = linear_jacobian(g);
  Eigen::VectorXd x = random_vector(5, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k <= 5; ++k) {
    double loss = invrisk::empirical_invloss(j, x, k);
    CHECK(loss <= prev + 1e-12);
    prev = loss;
  }
}

TEST_CASE("matching attack drives a linear sharing back to the instance") {
  SharedMapSpec spec = identity_map(6);
  Eigen::VectorXd x(6);
  x << 0.9, 0.1, 0.4, 0.7, 0.2, 0.55;
  AttackConfig cfg;
  cfg.iters = 2000;
  AttackResult result = invrisk::matching_attack(spec, invrisk::forward(spec, x), cfg);
  CHECK((result.x_hat - x).norm() < 1e-4);
  CHECK(result.final_objective < 1e-8);
  // Checkpoints start at iteration zero and end at the final iterate.
  CHECK(result.trajectory.front().first == 0);
  CHECK(result.trajectory.back().first == cfg.iters);
}

TEST_CASE("matching attack against the zero-instance sharing starts converged") {
  SharedMapSpec spec = identity_map(4);
  AttackConfig cfg;
  cfg.iters = 50;
  Eigen::VectorXd target = invrisk::forward(spec, Eigen::VectorXd::Zero(4));
  AttackResult result = invrisk::matching_attack(spec, target, cfg);
  CHECK(result.trajectory.front().second == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(result.final_objective <= 1e-12);
}

TEST_CASE("cosine matching ignores the target scale") {
  std::mt19937_64 rng(5150);
  Network net = Network::seeded(5, {6}, 4, Activation::kTanh, 21);
  SharedMapSpec spec(net);
  spec.mode = MapMode::kVflEmbedding;
  spec.cut = net.layer_count();
  Eigen::VectorXd x = random_vector(5, rng) * 0.3;
  Eigen::VectorXd target = invrisk::forward(spec, x);

  AttackConfig cfg;
  cfg.distance = Distance::kCosine;
  cfg.iters = 1200;
  AttackResult plain = invrisk::matching_attack(spec, target, cfg);
  AttackResult scaled = invrisk::matching_attack(spec, 2.0 * target, cfg);
  CHECK((plain.x_hat - scaled.x_hat).norm() < 1e-12);
  CHECK(plain.final_objective < 1e-3);
}

TEST_CASE("matching attack is deterministic per seed") {
  std::mt19937_64 rng(61);
  Network net = Network::seeded(4, {5}, 3, Activation::kTanh, 13);
  SharedMapSpec spec(net);
  spec.mode = MapMode::kVflEmbedding;
  spec.cut = net.layer_count();
  Eigen::VectorXd target = invrisk::forward(spec, random_vector(4, rng));
  AttackConfig cfg;
  cfg.iters = 120;
  cfg.init = AttackInit::kGaussian;
  cfg.seed = 9;
  AttackResult a = invrisk::matching_attack(spec, target, cfg);
  AttackResult b = invrisk::matching_attack(spec, target, cfg);
  CHECK((a.x_hat - b.x_hat).norm() == 0.0);
  cfg.seed = 10;
  AttackResult c = invrisk::matching_attack(spec, target, cfg);
  CHECK((a.x_hat - c.x_hat).norm() > 0.0);
}

TEST_CASE("strong total variation pressure flattens the reconstruction") {
  SharedMapSpec spec = identity_map(9);  // 3x3 grid
  Eigen::VectorXd x(9);
  x << 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0;
  AttackConfig plain;
  plain.iters = 600;
  AttackConfig smoothed = plain;
  smoothed.tv_weight = 50.0;
  AttackResult sharp = invrisk::matching_attack(spec, invrisk::forward(spec, x), plain);
  AttackResult flat =
      invrisk::matching_attack(spec, invrisk::forward(spec, x), smoothed);
  double spread_sharp = sharp.x_hat.maxCoeff() - sharp.x_hat.minCoeff();
  double spread_flat = flat.x_hat.maxCoeff() - flat.x_hat.minCoeff();
  CHECK(spread_flat < 0.2 * spread_sharp);
}

TEST_CASE("matching attack inverts a gradient sharing on a tiny network") {
  std::mt19937_64 rng(88);
  Network net = Network::seeded(4, {3}, 2, Activation::kTanh, 31);
  SharedMapSpec spec(net);
  spec.mode = MapMode::kHflGradient;
  spec.loss = LossKind::kSquaredError;
  spec.target = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd x = random_vector(4, rng) * 0.5;
  Eigen::VectorXd target = invrisk::forward(spec, x);
  AttackConfig cfg;
  cfg.iters = 3000;
  AttackResult result = invrisk::matching_attack(spec, target, cfg);
  double initial_err = x.squaredNorm();  // zeros init
  CHECK(result.final_objective < 1e-3);
  CHECK((result.x_hat - x).squaredNorm() < 0.05 * initial_err);
}

TEST_CASE("linear matching recovers what the full-rank inverter recovers") {
  std::mt19937_64 rng(4242);
  Eigen::VectorXd spectrum(4);
  spectrum << 1.6, 1.2, 0.8, 0.5;
  Eigen::MatrixXd w = oracles::matrix_with_spectrum(spectrum, 6, 4, rng);
  invrisk::DenseLayer dense;
  dense.weights = w;
  dense.bias = Eigen::VectorXd::Zero(6);
  SharedMapSpec spec(Network({dense}));
  spec.mode = MapMode::kVflEmbedding;
  spec.cut = 1;

  Eigen::VectorXd x = random_vector(4, rng);
  Eigen::VectorXd target = invrisk::forward(spec, x);
  AttackConfig cfg;
  cfg.iters = 4000;
  AttackResult iterative = invrisk::matching_attack(spec, target, cfg);

  Jacobian j = linear_jacobian(w);
  RankKAttacker direct = invrisk::build_rank_k(j, 4);
  Eigen::VectorXd closed = invrisk::reconstruct_rank_k(direct, w * x);
  CHECK((iterative.x_hat - closed).norm() < 1e-3);
}

TEST_CASE("attack config is validated before running") {
  SharedMapSpec spec = identity_map(3);
  Eigen::VectorXd target = Eigen::VectorXd::Ones(3);
  AttackConfig bad;
  bad.iters = 0;
  CHECK_THROWS_AS(invrisk::matching_attack(spec, target, bad), ConfigError);
  AttackConfig wrong_len;
  CHECK_THROWS_AS(
      invrisk::matching_attack(spec, Eigen::VectorXd::Ones(4), wrong_len),
      ConfigError);
}

TEST_CASE("tier weights favor cheap attackers and sum to one") {
  std::array<int, 2> even = {1, 1};
  auto w2 = invrisk::tier_weights(even);
  CHECK(w2[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(w2[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  std::array<int, 3> tiers = {100, 500, 2000};
  auto w3 = invrisk::tier_weights(tiers);
  CHECK(w3[0] == doctest::Approx(39.0 / 47.0).epsilon(1e-15));
  CHECK(w3[1] == doctest::Approx(13.0 / 94.0).epsilon(1e-15));
  CHECK(w3[2] == doctest::Approx(3.0 / 94.0).epsilon(1e-15));
  CHECK(w3[0] + w3[1] + w3[2] == doctest::Approx(1.0).epsilon(1e-15));

  std::array<double, 3> mses = {0.5, 0.2, 0.1};
  double em = invrisk::expected_mse(mses, tiers);
  CHECK(em == doctest::Approx(0.5 * w3[0] + 0.2 * w3[1] + 0.1 * w3[2])
                  .epsilon(1e-15));

  std::array<int, 2> bad = {10, 0};
  std::array<double, 2> two = {0.1, 0.2};
  CHECK_THROWS_AS(invrisk::expected_mse(two, bad), ConfigError);
  std::array<double, 1> one = {0.1};
  CHECK_THROWS_AS(invrisk::expected_mse(one, tiers), ConfigError);
}
