#include "invrisk/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "invrisk/errors.hpp"
#include "invrisk/linalg.hpp"

namespace invrisk {
namespace {

struct KindName {
  DefenseKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {DefenseKind::kDnp, "dnp"},           {DefenseKind::kGnp, "gnp"},
    {DefenseKind::kEnp, "enp"},           {DefenseKind::kPrune, "prune"},
    {DefenseKind::kDropout, "dropout"},   {DefenseKind::kInvlDnp, "invl_dnp"},
    {DefenseKind::kInvlGnp, "invl_gnp"},  {DefenseKind::kInvlEnp, "invl_enp"},
};

// Count-fraction variant of the band edge: the smallest prefix covering the
// requested share of directions.
Eigen::Index select_k_count(Eigen::Index d, double fraction) {
  return static_cast<Eigen::Index>(
      std::ceil(fraction * static_cast<double>(d) - 1e-12));
}

std::vector<Eigen::Index> seeded_permutation(Eigen::Index n,
                                             std::uint64_t seed) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Eigen::Index> pick(0, i);
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(pick(rng))]);
  }
  return perm;
}

Eigen::Index drop_count(const DefenseSpec& spec, Eigen::Index len) {
  return static_cast<Eigen::Index>(std::floor(*spec.lambda *
                                              static_cast<double>(len)));
}

}  // namespace

std::vector<Eigen::Index> drop_indices(const DefenseSpec& spec,
                                       const Eigen::VectorXd& target) {
  spec.validate();
  if (!spec.is_drop()) {
    throw ConfigError("drop indices are defined for prune and dropout only");
  }
  const Eigen::Index count = drop_count(spec, target.size());
  if (spec.kind == DefenseKind::kPrune) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(target.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) {
                       return std::abs(target(a)) < std::abs(target(b));
                     });
    order.resize(static_cast<std::size_t>(count));
    return order;
  }
  auto perm = seeded_permutation(target.size(), spec.seed);
  perm.resize(static_cast<std::size_t>(count));
  return perm;
}

DefenseKind defense_kind_from_string(const std::string& name) {
  for (const auto& entry : kKindNames) {
    if (name == entry.name) return entry.kind;
  }
  throw ConfigError("unknown defense kind: " + name);
}

std::string to_string(DefenseKind kind) {
  for (const auto& entry : kKindNames) {
    if (kind == entry.kind) return entry.name;
  }
  throw ConfigError("unhandled defense kind");
}

bool DefenseSpec::is_additive_noise() const {
  return kind == DefenseKind::kDnp || kind == DefenseKind::kGnp ||
         kind == DefenseKind::kEnp || is_adaptive();
}

bool DefenseSpec::is_adaptive() const {
  return kind == DefenseKind::kInvlDnp || kind == DefenseKind::kInvlGnp ||
         kind == DefenseKind::kInvlEnp;
}

bool DefenseSpec::is_drop() const {
  return kind == DefenseKind::kPrune || kind == DefenseKind::kDropout;
}

bool DefenseSpec::acts_on_data() const {
  return kind == DefenseKind::kDnp || kind == DefenseKind::kInvlDnp;
}

void DefenseSpec::validate() const {
  if (is_additive_noise()) {
    if (!delta.has_value() || *delta <= 0.0 || !std::isfinite(*delta)) {
      throw ConfigError("noise defense requires a positive variance");
    }
  }
  if (is_drop()) {
    if (!lambda.has_value() || *lambda < 0.0 || *lambda > 1.0) {
      throw ConfigError("drop defense requires lambda in [0, 1]");
    }
  }
  if (is_adaptive()) {
    if (spectral_keep <= 0.0 || spectral_keep > 1.0) {
      throw ConfigError("spectral keep fraction must be in (0, 1]");
    }
    if (spectral_skip < 0.0 || spectral_skip >= 1.0) {
      throw ConfigError("spectral skip fraction must be in [0, 1)");
    }
    if ((kind == DefenseKind::kInvlGnp || kind == DefenseKind::kInvlEnp) &&
        spectral_skip >= spectral_keep) {
      throw ConfigError("spectral skip fraction must stay below the keep fraction");
    }
  }
}

Eigen::VectorXd gaussian_noise(Eigen::Index dim, double delta,
                               std::uint64_t seed) {
  if (dim <= 0) {
    throw ConfigError("noise dimension must be positive");
  }
  if (delta <= 0.0 || !std::isfinite(delta)) {
    throw ConfigError("noise variance must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double scale = std::sqrt(delta);
  Eigen::VectorXd eps(dim);
  for (Eigen::Index i = 0; i < dim; ++i) eps(i) = scale * gauss(rng);
  return eps;
}

Eigen::Index select_k(const Eigen::VectorXd& sigma, double keep_fraction) {
  if (sigma.size() == 0) {
    throw ConfigError("spectrum must be non-empty");
  }
  if (keep_fraction < 0.0 || keep_fraction > 1.0) {
    throw ConfigError("keep fraction must be in [0, 1]");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) < 0.0) {
      throw ConfigError("spectrum must be nonnegative");
    }
    total += sigma(i);
  }
  if (total <= 0.0) {
    throw ConfigError("spectrum has no mass to keep");
  }
  const double want = keep_fraction * total;
  double cum = 0.0;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    if (cum >= want - 1e-15 * total) return k;
    cum += sigma(k);
  }
  return sigma.size();
}

AdaptiveNoise adaptive_noise_dnp(const Jacobian& j, const DefenseSpec& spec) {
  spec.validate();
  SvdBundle s = svd(j.g);
  Eigen::Index k = std::max<Eigen::Index>(1, select_k(s.sigma, spec.spectral_keep));
  Eigen::VectorXd eps = gaussian_noise(s.m(), *spec.delta, spec.seed);
  Eigen::VectorXd coords = s.vt * eps;
  coords.tail(coords.size() - k).setZero();
  AdaptiveNoise out;
  out.eps_hat = s.vt.transpose() * coords;
  out.kept_indices = {0, k};
  out.energy = out.eps_hat.squaredNorm();
  return out;
}

AdaptiveNoise adaptive_noise_genp(const Jacobian& j, const DefenseSpec& spec) {
  spec.validate();
  SvdBundle s = svd(j.g);
  Eigen::Index k = std::max<Eigen::Index>(1, select_k(s.sigma, spec.spectral_keep));
  Eigen::Index skip = spec.skip_mode == SkipMode::kMass
                          ? select_k(s.sigma, spec.spectral_skip)
                          : select_k_count(s.d(), spec.spectral_skip);
  if (skip >= k) skip = k - 1;  // the kept band is never empty
  Eigen::VectorXd eps = gaussian_noise(s.p(), *spec.delta, spec.seed);
  Eigen::VectorXd coords = s.u.transpose() * eps;
  coords.head(skip).setZero();
  coords.tail(coords.size() - k).setZero();
  AdaptiveNoise out;
  out.eps_hat = s.u * coords;
  out.kept_indices = {skip, k};
  out.energy = out.eps_hat.squaredNorm();
  return out;
}

Eigen::VectorXd apply_defense(const DefenseSpec& spec,
                              const Eigen::VectorXd& target,
                              const Jacobian* j) {
  spec.validate();
  if (target.size() == 0) {
    throw ConfigError("defense target must be non-empty");
  }
  switch (spec.kind) {
    case DefenseKind::kDnp:
    case DefenseKind::kGnp:
    case DefenseKind::kEnp:
      return target + gaussian_noise(target.size(), *spec.delta, spec.seed);
    case DefenseKind::kPrune:
    case DefenseKind::kDropout: {
      Eigen::VectorXd out = target;
      for (Eigen::Index idx : drop_indices(spec, target)) out(idx) = 0.0;
      return out;
    }
    case DefenseKind::kInvlDnp: {
      if (j == nullptr) {
        throw ConfigError("adaptive defense requires a jacobian");
      }
      if (target.size() != j->g.cols()) {
        throw ConfigError("data defense target must match input dimension");
      }
      return target + adaptive_noise_dnp(*j, spec).eps_hat;
    }
    case DefenseKind::kInvlGnp:
    case DefenseKind::kInvlEnp: {
      if (j == nullptr) {
        throw ConfigError("adaptive defense requires a jacobian");
      }
      if (target.size() != j->g.rows()) {
        throw ConfigError("sharing defense target must match shared dimension");
      }
      return target + adaptive_noise_genp(*j, spec).eps_hat;
    }
  }
  throw ConfigError("unhandled defense kind");
}

}  // namespace invrisk
