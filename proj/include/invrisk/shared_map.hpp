#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "invrisk/network.hpp"

namespace invrisk {

// Which artifact of the network a participant shares each round: the
// parameter gradient of a local loss (horizontal setting) or the activations
// at a cut layer (vertical setting).
enum class MapMode { kHflGradient, kVflEmbedding };

enum class LossKind { kSquaredError, kCrossEntropy };

struct SharedMapSpec {
  MapMode mode = MapMode::kVflEmbedding;
  Network network;

  // Gradient mode only. Squared error measures 0.5 * ||f(x) - target||^2
  // against an explicit target vector; cross entropy takes a class index
  // into the softmax of the network output.
  std::optional<LossKind> loss;
  std::optional<Eigen::VectorXd> target;
  std::optional<int> label;

  // Embedding mode only: number of leading layers that produce the sharing.
  std::optional<std::size_t> cut;

  explicit SharedMapSpec(Network net) : network(std::move(net)) {}

  // Dimension of the shared vector.
  Eigen::Index shared_dim() const;
  Eigen::Index input_dim() const { return network.input_dim(); }
  void validate() const;
};

// Jacobian of the shared map at one instance, p x m: rows index shared
// coordinates, columns index input coordinates. The fingerprint ties the
// matrix back to the exact input bytes it was computed at.
struct Jacobian {
  Eigen::MatrixXd g;
  MapMode mode = MapMode::kVflEmbedding;
  std::uint64_t instance_fingerprint = 0;
};

std::uint64_t fingerprint(const Eigen::VectorXd& x);

// Value of the shared map: the flattened parameter gradient (hfl) or the cut
// activations (vfl).
Eigen::VectorXd forward(const SharedMapSpec& spec, const Eigen::VectorXd& x);

// Exact Jacobian. The embedding path accumulates layer factors forward; the
// gradient path differentiates the analytic backward pass along every input
// direction (forward-over-reverse), so no finite differencing is involved.
Jacobian jacobian(const SharedMapSpec& spec, const Eigen::VectorXd& x);

// Central-difference check of the same matrix, used as an oracle in tests and
// available for diagnostics. Step h is absolute.
Jacobian jacobian_fd(const SharedMapSpec& spec, const Eigen::VectorXd& x,
                     double h = 1e-5);

// Mean Jacobian over representative class centers; the scalable stand-in for
// per-instance Jacobians when calibrating gradient-space defenses.
Jacobian class_center_jacobian(const SharedMapSpec& spec,
                               const std::vector<Eigen::VectorXd>& centers);

}  // namespace invrisk
