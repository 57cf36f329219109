#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace invrisk {

enum class Activation { kIdentity, kRelu, kTanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

struct ActivationLayer {
  Activation kind = Activation::kIdentity;
};

using Layer = std::variant<DenseLayer, ActivationLayer>;

// Small fully-connected network. Layers are applied in order; dense layers
// must chain dimensionally and the first layer must be dense so the input
// width is well defined. Parameters flatten in layer order, each dense layer
// contributing its weights row-major followed by its bias.
class Network {
 public:
  explicit Network(std::vector<Layer> layers);

  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index output_dim() const { return output_dim_; }
  // Output width after the first `upto` layers (upto = 0 gives the input).
  Eigen::Index width_after(std::size_t upto) const;
  Eigen::Index param_count() const { return param_count_; }

  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd& theta);

  nlohmann::json to_json() const;
  static Network from_json(const nlohmann::json& doc);

  // Dense layers interleaved with `act` after every hidden layer, weights and
  // biases drawn i.i.d. uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  static Network seeded(Eigen::Index input_dim,
                        const std::vector<Eigen::Index>& hidden,
                        Eigen::Index output_dim, Activation act,
                        std::uint64_t seed);

 private:
  std::vector<Layer> layers_;
  Eigen::Index input_dim_ = 0;
  Eigen::Index output_dim_ = 0;
  Eigen::Index param_count_ = 0;
};

}  // namespace invrisk
