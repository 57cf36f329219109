#include "invrisk/shared_map.hpp"

#include <Eigen/Core>
#include <random>

#include "doctest.h"
#include "invrisk/errors.hpp"

using invrisk::Activation;
using invrisk::ActivationLayer;
using invrisk::ConfigError;
using invrisk::DenseLayer;
using invrisk::Jacobian;
using invrisk::LossKind;
using invrisk::MapMode;
using invrisk::Network;
using invrisk::SharedMapSpec;

namespace {

SharedMapSpec embedding_spec(Network net, std::size_t cut) {
  SharedMapSpec spec(std::move(net));
  spec.mode = MapMode::kVflEmbedding;
  spec.cut = cut;
  return spec;
}

SharedMapSpec gradient_spec_squared(Network net, Eigen::VectorXd target) {
  SharedMapSpec spec(std::move(net));
  spec.mode = MapMode::kHflGradient;
  spec.loss = LossKind::kSquaredError;
  spec.target = std::move(target);
  return spec;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = gauss(rng);
  return v;
}

// Max entry error scaled against the matrix magnitude, with a floor so that
// near-zero entries are judged on the matrix scale instead of their own.
double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  double floor = std::max(1e-3 * scale, 1e-12);
  double worst = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      double denom = std::max({std::abs(a(r, c)), std::abs(b(r, c)), floor});
      worst = std::max(worst, std::abs(a(r, c) - b(r, c)) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("embedding forward applies dense layers and activations in order") {
  DenseLayer dense;
  dense.weights.resize(2, 3);
  dense.weights << 1, 0, -1, 2, 1, 0;
  dense.bias = Eigen::Vector2d(0.5, -0.5);
  Network net({dense, ActivationLayer{Activation::kRelu}});
  Eigen::VectorXd x(3);
  x << 1.0, 2.0, 3.0;

  auto spec1 = embedding_spec(net, 1);
  Eigen::VectorXd pre = invrisk::forward(spec1, x);
  CHECK(pre(0) == doctest::Approx(-1.5));
  CHECK(pre(1) == doctest::Approx(3.5));

  auto spec2 = embedding_spec(net, 2);
  Eigen::VectorXd post = invrisk::forward(spec2, x);
  CHECK(post(0) == 0.0);
  CHECK(post(1) == doctest::Approx(3.5));
}

TEST_CASE("gradient forward matches the scalar linear closed form") {
  // f(x) = w^T x + b with squared loss to target t shares the gradient
  // ((f - t) x, f - t) over (w, b).
  DenseLayer dense;
  dense.weights.resize(1, 3);
  dense.weights << 0.5, -1.0, 2.0;
  dense.bias = Eigen::VectorXd::Constant(1, 0.25);
  Network net({dense});
  Eigen::VectorXd x(3);
  x << 1.0, 2.0, -1.0;
  double t = 0.75;
  auto spec = gradient_spec_squared(net, Eigen::VectorXd::Constant(1, t));

  double f = 0.5 * 1.0 - 1.0 * 2.0 + 2.0 * -1.0 + 0.25;
  Eigen::VectorXd g = invrisk::forward(spec, x);
  REQUIRE(g.size() == 4);
  for (int i = 0; i < 3; ++i) CHECK(g(i) == doctest::Approx((f - t) * x(i)));
  CHECK(g(3) == doctest::Approx(f - t));
}

TEST_CASE("embedding jacobian of a linear cut is the weight matrix") {
  std::mt19937_64 rng(5);
  Network net = Network::seeded(4, {}, 3, Activation::kIdentity, 11);
  auto spec = embedding_spec(net, 1);
  Jacobian j = invrisk::jacobian(spec, random_vector(4, rng));
  const auto& dense = std::get<DenseLayer>(net.layers()[0]);
  CHECK((j.g - dense.weights).norm() == 0.0);
}

TEST_CASE("gradient jacobian of the scalar linear model matches closed form") {
  DenseLayer dense;
  dense.weights.resize(1, 3);
  dense.weights << 1.0, -0.5, 0.75;
  dense.bias = Eigen::VectorXd::Zero(1);
  Network net({dense});
  Eigen::VectorXd x(3);
  x << 0.2, -1.4, 0.8;
  double t = -0.3;
  auto spec = gradient_spec_squared(net, Eigen::VectorXd::Constant(1, t));

  Eigen::VectorXd w = dense.weights.row(0);
  double resid = w.dot(x) - t;
  Eigen::MatrixXd expected(4, 3);
  expected.topRows(3) = x * w.transpose() +
                        resid * Eigen::MatrixXd::Identity(3, 3);
  expected.bottomRows(1) = w.transpose();

  Jacobian j = invrisk::jacobian(spec, x);
  CHECK((j.g - expected).norm() < 1e-12);
}

TEST_CASE("analytic jacobians match central differences on tanh networks") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 6; ++trial) {
    Network net = Network::seeded(6, {8, 5}, 3, Activation::kTanh,
                                  1000 + static_cast<std::uint64_t>(trial));
    Eigen::VectorXd x = random_vector(6, rng);

    auto vfl = embedding_spec(net, net.layer_count());
    Jacobian a1 = invrisk::jacobian(vfl, x);
    Jacobian f1 = invrisk::jacobian_fd(vfl, x, 1e-5);
    CHECK(max_relative_error(a1.g, f1.g) < 1e-4);

    auto hfl = gradient_spec_squared(net, random_vector(3, rng));
    Jacobian a2 = invrisk::jacobian(hfl, x);
    Jacobian f2 = invrisk::jacobian_fd(hfl, x, 1e-5);
    CHECK(max_relative_error(a2.g, f2.g) < 1e-4);
  }
}

TEST_CASE("analytic jacobian matches central differences under cross entropy") {
  std::mt19937_64 rng(77);
  Network net = Network::seeded(5, {7}, 4, Activation::kTanh, 99);
  SharedMapSpec spec(net);
  spec.mode = MapMode::kHflGradient;
  spec.loss = LossKind::kCrossEntropy;
  spec.label = 2;
  Eigen::VectorXd x = random_vector(5, rng);
  Jacobian a = invrisk::jacobian(spec, x);
  Jacobian f = invrisk::jacobian_fd(spec, x, 1e-5);
  CHECK(max_relative_error(a.g, f.g) < 1e-4);
}

TEST_CASE("central differences converge at second order") {
  std::mt19937_64 rng(3111);
  Network net = Network::seeded(4, {6}, 3, Activation::kTanh, 17);
  auto spec = embedding_spec(net, net.layer_count());
  Eigen::VectorXd x = random_vector(4, rng);
  Jacobian exact = invrisk::jacobian(spec, x);
  double coarse = (invrisk::jacobian_fd(spec, x, 1e-3).g - exact.g).norm();
  double fine = (invrisk::jacobian_fd(spec, x, 5e-4).g - exact.g).norm();
  // Halving the step should shrink the error about fourfold.
  CHECK(fine < coarse / 2.5);
}

TEST_CASE("relu kink takes the zero subgradient exactly at zero") {
  DenseLayer dense;
  dense.weights = Eigen::MatrixXd::Identity(2, 2);
  dense.bias = Eigen::VectorXd::Zero(2);
  Network net({dense, ActivationLayer{Activation::kRelu}});
  auto spec = embedding_spec(net, 2);
  Eigen::VectorXd x(2);
  x << 0.0, 1.0;
  Jacobian j = invrisk::jacobian(spec, x);
  CHECK(j.g.row(0).norm() == 0.0);  // unit sits exactly on the kink
  CHECK(j.g(1, 1) == 1.0);
}

TEST_CASE("gradient forward matches parameter-space finite differences") {
  std::mt19937_64 rng(901);
  Network net = Network::seeded(4, {5}, 3, Activation::kTanh, 41);
  SharedMapSpec spec(net);
  spec.mode = MapMode::kHflGradient;
  spec.loss = LossKind::kCrossEntropy;
  spec.label = 1;
  Eigen::VectorXd x = random_vector(4, rng);
  Eigen::VectorXd grad = invrisk::forward(spec, x);

  // Loss value recomputed from scratch for the probe.
  auto loss_at = [&](const Eigen::VectorXd& theta) {
    Network probe = net;
    probe.set_params(theta);
    auto probe_spec = embedding_spec(probe, probe.layer_count());
    Eigen::VectorXd out = invrisk::forward(probe_spec, x);
    Eigen::VectorXd s = (out.array() - out.maxCoeff()).exp();
    return -std::log(s(1) / s.sum());
  };
  Eigen::VectorXd theta = net.params();
  std::uniform_int_distribution<Eigen::Index> pick(0, theta.size() - 1);
  for (int probe = 0; probe < 10; ++probe) {
    Eigen::Index i = pick(rng);
    Eigen::VectorXd hi = theta, lo = theta;
    hi(i) += 1e-6;
    lo(i) -= 1e-6;
    double fd = (loss_at(hi) - loss_at(lo)) / 2e-6;
    CHECK(grad(i) == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("class center jacobian is the mean of per-center jacobians") {
  std::mt19937_64 rng(444);
  Network net = Network::seeded(4, {5}, 3, Activation::kTanh, 7);
  auto spec = gradient_spec_squared(net, Eigen::VectorXd::Zero(3));
  std::vector<Eigen::VectorXd> centers = {random_vector(4, rng),
                                          random_vector(4, rng),
                                          random_vector(4, rng)};
  Jacobian mean = invrisk::class_center_jacobian(spec, centers);
  Eigen::MatrixXd manual = Eigen::MatrixXd::Zero(mean.g.rows(), mean.g.cols());
  for (const auto& c : centers) manual += invrisk::jacobian(spec, c).g;
  manual /= 3.0;
  CHECK((mean.g - manual).norm() < 1e-14);
  CHECK_THROWS_AS(invrisk::class_center_jacobian(spec, {}), ConfigError);
}

TEST_CASE("jacobian is deterministic and fingerprints its input") {
  std::mt19937_64 rng(31337);
  Network net = Network::seeded(5, {6}, 4, Activation::kTanh, 3);
  auto spec = embedding_spec(net, net.layer_count());
  Eigen::VectorXd x = random_vector(5, rng);
  Jacobian j1 = invrisk::jacobian(spec, x);
  Jacobian j2 = invrisk::jacobian(spec, x);
  CHECK((j1.g - j2.g).norm() == 0.0);
  CHECK(j1.instance_fingerprint == j2.instance_fingerprint);
  Eigen::VectorXd y = x;
  y(0) += 1e-12;
  CHECK(invrisk::jacobian(spec, y).instance_fingerprint !=
        j1.instance_fingerprint);
}

TEST_CASE("jacobian linearizes the map locally") {
  std::mt19937_64 rng(2025);
  Network net = Network::seeded(5, {8}, 6, Activation::kTanh, 12);
  auto spec = gradient_spec_squared(net, random_vector(6, rng));
  Eigen::VectorXd x = random_vector(5, rng);
  Eigen::VectorXd u = random_vector(5, rng).normalized();
  Jacobian j = invrisk::jacobian(spec, x);
  Eigen::VectorXd base = invrisk::forward(spec, x);
  double eps_big = 1e-3, eps_small = 5e-4;
  double err_big =
      (invrisk::forward(spec, x + eps_big * u) - base - eps_big * (j.g * u))
          .norm();
  double err_small = (invrisk::forward(spec, x + eps_small * u) - base -
                      eps_small * (j.g * u))
                         .norm();
  CHECK(err_big < 1e-4);
  CHECK(err_small < err_big / 2.5);  // quadratic remainder
}

TEST_CASE("network round-trips through its json document") {
  Network net = Network::seeded(4, {5, 3}, 2, Activation::kRelu, 8);
  nlohmann::json doc = net.to_json();
  CHECK(doc.at("version") == 1);
  Network back = Network::from_json(doc);
  CHECK(back.param_count() == net.param_count());
  CHECK((back.params() - net.params()).norm() == 0.0);
  auto spec_a = embedding_spec(net, net.layer_count());
  auto spec_b = embedding_spec(back, back.layer_count());
  Eigen::VectorXd x(4);
  x << 0.1, -0.2, 0.3, -0.4;
  CHECK((invrisk::forward(spec_a, x) - invrisk::forward(spec_b, x)).norm() ==
        0.0);

  nlohmann::json bad = doc;
  bad["version"] = 2;
  CHECK_THROWS_AS(Network::from_json(bad), ConfigError);
  nlohmann::json short_payload = doc;
  short_payload["layers"][0]["weights"].erase(0);
  CHECK_THROWS_AS(Network::from_json(short_payload), ConfigError);
}

TEST_CASE("spec validation rejects mode mismatches") {
  Network net = Network::seeded(3, {4}, 2, Activation::kTanh, 5);

  SharedMapSpec no_cut(net);
  no_cut.mode = MapMode::kVflEmbedding;
  CHECK_THROWS_AS(no_cut.validate(), ConfigError);

  SharedMapSpec bad_label(net);
  bad_label.mode = MapMode::kHflGradient;
  bad_label.loss = LossKind::kCrossEntropy;
  bad_label.label = 2;  // output width is 2, valid labels are 0 and 1
  CHECK_THROWS_AS(bad_label.validate(), ConfigError);

  SharedMapSpec mixed(net);
  mixed.mode = MapMode::kHflGradient;
  mixed.loss = LossKind::kSquaredError;
  mixed.target = Eigen::VectorXd::Zero(2);
  mixed.cut = 1;
  CHECK_THROWS_AS(mixed.validate(), ConfigError);

  SharedMapSpec bad_target(net);
  bad_target.mode = MapMode::kHflGradient;
  bad_target.loss = LossKind::kSquaredError;
  bad_target.target = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(bad_target.validate(), ConfigError);
}

TEST_CASE("seeded initialization stays inside the fan-in bound") {
  Network net = Network::seeded(9, {4}, 2, Activation::kTanh, 123);
  const auto& first = std::get<DenseLayer>(net.layers()[0]);
  CHECK(first.weights.cwiseAbs().maxCoeff() <= 1.0 / 3.0);
  Network again = Network::seeded(9, {4}, 2, Activation::kTanh, 123);
  CHECK((again.params() - net.params()).norm() == 0.0);
  Network other = Network::seeded(9, {4}, 2, Activation::kTanh, 124);
  CHECK((other.params() - net.params()).norm() > 0.0);
}
