#include "invrisk/attack.hpp"

#include <cmath>
#include <random>
#include <string>

#include "invrisk/errors.hpp"

namespace invrisk {
namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

bool is_perfect_square(Eigen::Index n, Eigen::Index& side) {
  side = static_cast<Eigen::Index>(std::llround(std::sqrt(double(n))));
  return side * side == n;
}

// Anisotropic total variation with its subgradient. Grid layout is row-major
// side x side when m is a perfect square, else a 1-D chain.
double total_variation(const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
  grad.setZero(x.size());
  Eigen::Index side = 0;
  double tv = 0.0;
  if (is_perfect_square(x.size(), side) && side > 1) {
    auto at = [&](Eigen::Index r, Eigen::Index c) { return r * side + c; };
    for (Eigen::Index r = 0; r < side; ++r) {
      for (Eigen::Index c = 0; c < side; ++c) {
        if (c + 1 < side) {
          double d = x(at(r, c + 1)) - x(at(r, c));
          tv += std::abs(d);
          grad(at(r, c + 1)) += sign_of(d);
          grad(at(r, c)) -= sign_of(d);
        }
        if (r + 1 < side) {
          double d = x(at(r + 1, c)) - x(at(r, c));
          tv += std::abs(d);
          grad(at(r + 1, c)) += sign_of(d);
          grad(at(r, c)) -= sign_of(d);
        }
      }
    }
  } else {
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      double d = x(i + 1) - x(i);
      tv += std::abs(d);
      grad(i + 1) += sign_of(d);
      grad(i) -= sign_of(d);
    }
  }
  return tv;
}

// Distance between the candidate sharing and the target, plus its gradient
// with respect to the candidate sharing.
double sharing_distance(Distance kind, const Eigen::VectorXd& f,
                        const Eigen::VectorXd& y, Eigen::VectorXd& grad) {
  if (kind == Distance::kL2) {
    Eigen::VectorXd r = f - y;
    grad = 2.0 * r;
    return r.squaredNorm();
  }
  double ny = y.norm();
  if (ny == 0.0) {
    throw ConfigError("cosine distance target must be nonzero");
  }
  double nf = f.norm();
  if (nf < 1e-300) {
    grad.setZero(f.size());
    return 1.0;
  }
  double dot = f.dot(y);
  grad = -(y / (nf * ny)) + (dot / (nf * nf * nf * ny)) * f;
  return 1.0 - dot / (nf * ny);
}

}  // namespace

RankKAttacker build_rank_k(const Jacobian& j, Eigen::Index k) {
  SvdBundle s = svd(j.g);
  RankKAttacker attacker;
  attacker.a_star = truncated_pinv(s, k);
  attacker.k = k;
  return attacker;
}

Eigen::VectorXd reconstruct_rank_k(const RankKAttacker& attacker,
                                   const Eigen::VectorXd& shared) {
  if (shared.size() != attacker.a_star.cols()) {
    throw ConfigError("shared vector length " + std::to_string(shared.size()) +
                      " does not match attacker input " +
                      std::to_string(attacker.a_star.cols()));
  }
  return attacker.a_star * shared;
}

double empirical_invloss(const Jacobian& j, const Eigen::VectorXd& x,
                         Eigen::Index k) {
  if (x.size() != j.g.cols()) {
    throw ConfigError("instance length does not match jacobian columns");
  }
  RankKAttacker attacker = build_rank_k(j, k);
  return (reconstruct_rank_k(attacker, j.g * x) - x).squaredNorm();
}

AttackResult matching_attack(const SharedMapSpec& spec,
                             const Eigen::VectorXd& shared_target,
                             const AttackConfig& cfg) {
  spec.validate();
  if (shared_target.size() != spec.shared_dim()) {
    throw ConfigError("attack target length does not match shared dimension");
  }
  if (cfg.iters <= 0 || cfg.step_size <= 0.0 || cfg.tv_weight < 0.0) {
    throw ConfigError("attack config requires positive iters and step size");
  }

  const Eigen::Index m = spec.input_dim();
  Eigen::VectorXd x_hat = Eigen::VectorXd::Zero(m);
  if (cfg.init == AttackInit::kGaussian) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < m; ++i) x_hat(i) = gauss(rng);
  }

  auto objective = [&](const Eigen::VectorXd& cand, Eigen::VectorXd& grad) {
    Eigen::VectorXd f = forward(spec, cand);
    Eigen::VectorXd df;
    double val = sharing_distance(cfg.distance, f, shared_target, df);
    grad = jacobian(spec, cand).g.transpose() * df;
    if (cfg.tv_weight > 0.0) {
      Eigen::VectorXd tv_grad;
      val += cfg.tv_weight * total_variation(cand, tv_grad);
      grad += cfg.tv_weight * tv_grad;
    }
    return val;
  };

  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(m);
  AttackResult result;
  const int stride = std::max(1, cfg.iters / 20);
  Eigen::VectorXd grad(m);
  for (int t = 0; t < cfg.iters; ++t) {
    double val = objective(x_hat, grad);
    if (!std::isfinite(val) || !grad.allFinite()) {
      throw NumericError("attack objective became non-finite at iteration " +
                         std::to_string(t));
    }
    if (t % stride == 0) {
      result.trajectory.emplace_back(t, val);
    }
    // Step halves each quarter of the budget so the iterate settles instead
    // of orbiting the minimizer at constant radius.
    double step = cfg.step_size * std::pow(0.5, (4 * t) / cfg.iters);
    m1 = beta1 * m1 + (1.0 - beta1) * grad;
    m2 = beta2 * m2.array().matrix() +
         (1.0 - beta2) * grad.array().square().matrix();
    double c1 = 1.0 - std::pow(beta1, t + 1);
    double c2 = 1.0 - std::pow(beta2, t + 1);
    x_hat -= step * ((m1 / c1).array() / ((m2 / c2).array().sqrt() + eps))
                        .matrix();
  }
  Eigen::VectorXd unused(m);
  result.final_objective = objective(x_hat, unused);
  result.trajectory.emplace_back(cfg.iters, result.final_objective);
  result.x_hat = std::move(x_hat);
  return result;
}

std::vector<double> tier_weights(std::span<const int> iters_by_tier) {
  if (iters_by_tier.empty()) {
    throw ConfigError("expected at least one attack tier");
  }
  std::vector<double> inv_cum(iters_by_tier.size());
  long long cum = 0;
  for (std::size_t t = 0; t < iters_by_tier.size(); ++t) {
    if (iters_by_tier[t] <= 0) {
      throw ConfigError("attack tiers must have positive iteration budgets");
    }
    cum += iters_by_tier[t];
    inv_cum[t] = 1.0 / static_cast<double>(cum);
  }
  double total = 0.0;
  for (double w : inv_cum) total += w;
  for (double& w : inv_cum) w /= total;
  return inv_cum;
}

double expected_mse(std::span<const double> mse_by_tier,
                    std::span<const int> iters_by_tier) {
  if (mse_by_tier.size() != iters_by_tier.size()) {
    throw ConfigError("tier mse and iteration lists must align");
  }
  std::vector<double> w = tier_weights(iters_by_tier);
  double acc = 0.0;
  for (std::size_t t = 0; t < w.size(); ++t) acc += w[t] * mse_by_tier[t];
  return acc;
}

}  // namespace invrisk
