#include "invrisk/network.hpp"

#include <cmath>
#include <random>
#include <utility>

#include "invrisk/errors.hpp"

namespace invrisk {

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation: " + name);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
  }
  throw ConfigError("unhandled activation");
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty() || !std::holds_alternative<DenseLayer>(layers_.front())) {
    throw ConfigError("network must start with a dense layer");
  }
  Eigen::Index width = std::get<DenseLayer>(layers_.front()).weights.cols();
  input_dim_ = width;
  for (const Layer& layer : layers_) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      if (dense->weights.cols() != width) {
        throw ConfigError("dense layer input width does not chain");
      }
      if (dense->bias.size() != dense->weights.rows()) {
        throw ConfigError("dense bias length does not match output width");
      }
      if (!dense->weights.allFinite() || !dense->bias.allFinite()) {
        throw ConfigError("network parameters must be finite");
      }
      width = dense->weights.rows();
      param_count_ += dense->weights.size() + dense->bias.size();
    }
  }
  output_dim_ = width;
}

Eigen::Index Network::width_after(std::size_t upto) const {
  if (upto > layers_.size()) {
    throw ConfigError("layer index out of range");
  }
  Eigen::Index width = input_dim_;
  for (std::size_t i = 0; i < upto; ++i) {
    if (const auto* dense = std::get_if<DenseLayer>(&layers_[i])) {
      width = dense->weights.rows();
    }
  }
  return width;
}

Eigen::VectorXd Network::params() const {
  Eigen::VectorXd theta(param_count_);
  Eigen::Index at = 0;
  for (const Layer& layer : layers_) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      for (Eigen::Index r = 0; r < dense->weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < dense->weights.cols(); ++c) {
          theta(at++) = dense->weights(r, c);
        }
      }
      theta.segment(at, dense->bias.size()) = dense->bias;
      at += dense->bias.size();
    }
  }
  return theta;
}

void Network::set_params(const Eigen::VectorXd& theta) {
  if (theta.size() != param_count_) {
    throw ConfigError("parameter vector length mismatch");
  }
  Eigen::Index at = 0;
  for (Layer& layer : layers_) {
    if (auto* dense = std::get_if<DenseLayer>(&layer)) {
      for (Eigen::Index r = 0; r < dense->weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < dense->weights.cols(); ++c) {
          dense->weights(r, c) = theta(at++);
        }
      }
      dense->bias = theta.segment(at, dense->bias.size());
      at += dense->bias.size();
    }
  }
}

nlohmann::json Network::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : layers_) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      std::vector<double> flat;
      flat.reserve(static_cast<std::size_t>(dense->weights.size()));
      for (Eigen::Index r = 0; r < dense->weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < dense->weights.cols(); ++c) {
          flat.push_back(dense->weights(r, c));
        }
      }
      std::vector<double> bias(dense->bias.data(),
                               dense->bias.data() + dense->bias.size());
      layers.push_back({{"type", "dense"},
                        {"dims", {dense->weights.rows(), dense->weights.cols()}},
                        {"weights", flat},
                        {"bias", bias}});
    } else {
      const auto& act = std::get<ActivationLayer>(layer);
      layers.push_back(
          {{"type", "activation"}, {"activation", to_string(act.kind)}});
    }
  }
  return {{"version", 1}, {"layers", layers}};
}

Network Network::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("version", 0) != 1 ||
      !doc.contains("layers")) {
    throw ConfigError("network document must be version 1 with a layers list");
  }
  std::vector<Layer> layers;
  for (const auto& entry : doc.at("layers")) {
    std::string type = entry.value("type", "");
    if (type == "dense") {
      const auto& dims = entry.at("dims");
      auto rows = dims.at(0).get<Eigen::Index>();
      auto cols = dims.at(1).get<Eigen::Index>();
      auto flat = entry.at("weights").get<std::vector<double>>();
      auto bias = entry.at("bias").get<std::vector<double>>();
      if (rows <= 0 || cols <= 0 ||
          flat.size() != static_cast<std::size_t>(rows * cols) ||
          bias.size() != static_cast<std::size_t>(rows)) {
        throw ConfigError("dense layer payload does not match dims");
      }
      DenseLayer dense;
      dense.weights.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          dense.weights(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
        }
      }
      dense.bias =
          Eigen::Map<const Eigen::VectorXd>(bias.data(), rows);
      layers.emplace_back(std::move(dense));
    } else if (type == "activation") {
      layers.emplace_back(
          ActivationLayer{activation_from_string(entry.at("activation"))});
    } else {
      throw ConfigError("unknown layer type: " + type);
    }
  }
  return Network(std::move(layers));
}

Network Network::seeded(Eigen::Index input_dim,
                        const std::vector<Eigen::Index>& hidden,
                        Eigen::Index output_dim, Activation act,
                        std::uint64_t seed) {
  if (input_dim <= 0 || output_dim <= 0) {
    throw ConfigError("network dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  auto make_dense = [&rng](Eigen::Index out, Eigen::Index in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    DenseLayer dense;
    dense.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) dense.weights(r, c) = uni(rng);
    }
    dense.bias.resize(out);
    for (Eigen::Index r = 0; r < out; ++r) dense.bias(r) = uni(rng);
    return dense;
  };
  std::vector<Layer> layers;
  Eigen::Index width = input_dim;
  for (Eigen::Index h : hidden) {
    layers.emplace_back(make_dense(h, width));
    layers.emplace_back(ActivationLayer{act});
    width = h;
  }
  layers.emplace_back(make_dense(output_dim, width));
  return Network(std::move(layers));
}

}  // namespace invrisk
