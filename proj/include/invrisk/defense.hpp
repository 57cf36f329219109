#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "invrisk/shared_map.hpp"

namespace invrisk {

// dnp/gnp/enp add isotropic Gaussian noise to the instance, the shared
// gradient, or the shared embedding. prune/dropout discard shared entries by
// magnitude or at random. The invl_* variants shape the same Gaussian budget
// to the informative spectral band of the Jacobian before injecting it.
enum class DefenseKind {
  kDnp,
  kGnp,
  kEnp,
  kPrune,
  kDropout,
  kInvlDnp,
  kInvlGnp,
  kInvlEnp,
};

DefenseKind defense_kind_from_string(const std::string& name);
std::string to_string(DefenseKind kind);

// How the skip fraction reads the spectrum: as a share of total singular
// value mass or as a share of the direction count.
enum class SkipMode { kMass, kCount };

struct DefenseSpec {
  DefenseKind kind = DefenseKind::kDnp;
  std::optional<double> delta;    // noise variance, noise kinds only
  std::optional<double> lambda;   // drop fraction, prune/dropout only
  double spectral_keep = 0.95;    // cumulative mass defining the top band
  double spectral_skip = 0.60;    // leading mass left noise-free (gnp/enp)
  SkipMode skip_mode = SkipMode::kMass;
  std::uint64_t seed = 0;

  bool is_additive_noise() const;
  bool is_adaptive() const;
  bool is_drop() const;
  // Whether the defense perturbs the instance (data space) rather than the
  // shared vector.
  bool acts_on_data() const;
  void validate() const;
};

// Spectrally shaped noise: the raw draw, rewritten to live only on the kept
// singular directions [first, last).
struct AdaptiveNoise {
  Eigen::VectorXd eps_hat;
  std::pair<Eigen::Index, Eigen::Index> kept_indices = {0, 0};
  double energy = 0.0;  // ||eps_hat||^2
};

// Draw from N(0, delta * I). delta is a variance; the draw is a standard
// normal vector scaled by sqrt(delta), so a fixed seed yields the same
// sample path across different delta values.
Eigen::VectorXd gaussian_noise(Eigen::Index dim, double delta,
                               std::uint64_t seed);

// Smallest k whose leading singular values hold `keep_fraction` of the total
// mass. keep_fraction of zero gives zero; an all-zero spectrum is an error.
Eigen::Index select_k(const Eigen::VectorXd& sigma, double keep_fraction);

// The floor(lambda * len) indices a prune or dropout defense zeroes on this
// target. Prune picks ascending magnitude with ties broken by lower index;
// dropout picks a seeded random subset that grows with lambda, so stronger
// settings drop supersets of weaker ones.
std::vector<Eigen::Index> drop_indices(const DefenseSpec& spec,
                                       const Eigen::VectorXd& target);

// Data-space shaping: draw in the input space, keep only the components on
// the top-k right singular directions. k is forced to at least one.
AdaptiveNoise adaptive_noise_dnp(const Jacobian& j, const DefenseSpec& spec);

// Sharing-space shaping: draw in the shared space, keep the left singular
// band [j, k) where the leading skip share is left untouched and everything
// past the keep threshold is dropped. j is clamped below k.
AdaptiveNoise adaptive_noise_genp(const Jacobian& j, const DefenseSpec& spec);

// Apply the configured defense to its target vector (the instance for data
// defenses, the shared vector otherwise). Adaptive kinds need the Jacobian;
// invl_gnp conventionally receives a class-center averaged one.
Eigen::VectorXd apply_defense(const DefenseSpec& spec,
                              const Eigen::VectorXd& target,
                              const Jacobian* j = nullptr);

}  // namespace invrisk
