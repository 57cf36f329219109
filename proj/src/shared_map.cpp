#include "invrisk/shared_map.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "invrisk/errors.hpp"

namespace invrisk {
namespace {

double act_value(Activation a, double z) {
  switch (a) {
    case Activation::kIdentity:
      return z;
    case Activation::kRelu:
      return z > 0.0 ? z : 0.0;
    case Activation::kTanh:
      return std::tanh(z);
  }
  return z;
}

// First derivative. The relu kink at exactly zero takes subgradient 0.
double act_deriv(Activation a, double z) {
  switch (a) {
    case Activation::kIdentity:
      return 1.0;
    case Activation::kRelu:
      return z > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

double act_deriv2(Activation a, double z) {
  if (a != Activation::kTanh) return 0.0;
  double t = std::tanh(z);
  return -2.0 * t * (1.0 - t * t);
}

// h[0] = x, h[k+1] = layer_k(h[k]); `upto` limits how many layers run.
std::vector<Eigen::VectorXd> forward_trace(const Network& net,
                                           const Eigen::VectorXd& x,
                                           std::size_t upto) {
  std::vector<Eigen::VectorXd> h;
  h.reserve(upto + 1);
  h.push_back(x);
  for (std::size_t k = 0; k < upto; ++k) {
    const Layer& layer = net.layers()[k];
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      h.push_back(dense->weights * h.back() + dense->bias);
    } else {
      const auto& act = std::get<ActivationLayer>(layer);
      Eigen::VectorXd out = h.back();
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        out(i) = act_value(act.kind, out(i));
      }
      h.push_back(std::move(out));
    }
  }
  return h;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  Eigen::VectorXd s = (z.array() - z.maxCoeff()).exp();
  return s / s.sum();
}

// dL/d(output) for the configured loss.
Eigen::VectorXd loss_adjoint(const SharedMapSpec& spec,
                             const Eigen::VectorXd& out) {
  if (*spec.loss == LossKind::kSquaredError) {
    return out - *spec.target;
  }
  Eigen::VectorXd v = softmax(out);
  v(*spec.label) -= 1.0;
  return v;
}

// Directional derivative of the loss adjoint along an output tangent.
Eigen::VectorXd loss_adjoint_tangent(const SharedMapSpec& spec,
                                     const Eigen::VectorXd& out,
                                     const Eigen::VectorXd& out_tan) {
  if (*spec.loss == LossKind::kSquaredError) {
    return out_tan;
  }
  Eigen::VectorXd s = softmax(out);
  double mix = s.dot(out_tan);
  return (s.array() * (out_tan.array() - mix)).matrix();
}

// Adjoints v[k] = dL/dh[k] for every layer boundary, output to input.
std::vector<Eigen::VectorXd> adjoint_trace(
    const SharedMapSpec& spec, const std::vector<Eigen::VectorXd>& h) {
  const auto& layers = spec.network.layers();
  std::vector<Eigen::VectorXd> v(h.size());
  v.back() = loss_adjoint(spec, h.back());
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Layer& layer = layers[k];
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      v[k] = dense->weights.transpose() * v[k + 1];
    } else {
      const auto& act = std::get<ActivationLayer>(layer);
      v[k] = v[k + 1];
      for (Eigen::Index i = 0; i < v[k].size(); ++i) {
        v[k](i) *= act_deriv(act.kind, h[k](i));
      }
    }
  }
  return v;
}

// Parameter gradient in flattening order: per dense layer, dL/dW row-major
// then dL/db. Writing straight into the output avoids building matrices.
Eigen::VectorXd flatten_param_gradient(const Network& net,
                                       const std::vector<Eigen::VectorXd>& h,
                                       const std::vector<Eigen::VectorXd>& v) {
  Eigen::VectorXd grad(net.param_count());
  Eigen::Index at = 0;
  const auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (const auto* dense = std::get_if<DenseLayer>(&layers[k])) {
      for (Eigen::Index r = 0; r < dense->weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < dense->weights.cols(); ++c) {
          grad(at++) = v[k + 1](r) * h[k](c);
        }
      }
      grad.segment(at, dense->bias.size()) = v[k + 1];
      at += dense->bias.size();
    }
  }
  return grad;
}

void check_input(const SharedMapSpec& spec, const Eigen::VectorXd& x) {
  spec.validate();
  if (x.size() != spec.input_dim()) {
    throw ConfigError("input length " + std::to_string(x.size()) +
                      " does not match network input " +
                      std::to_string(spec.input_dim()));
  }
  if (!x.allFinite()) {
    throw ConfigError("input contains non-finite values");
  }
}

}  // namespace

Eigen::Index SharedMapSpec::shared_dim() const {
  if (mode == MapMode::kHflGradient) {
    return network.param_count();
  }
  return network.width_after(*cut);
}

void SharedMapSpec::validate() const {
  if (mode == MapMode::kHflGradient) {
    if (cut.has_value()) {
      throw ConfigError("cut layer is only meaningful for embedding sharing");
    }
    if (!loss.has_value()) {
      throw ConfigError("gradient sharing requires a loss");
    }
    if (*loss == LossKind::kSquaredError) {
      if (!target.has_value() || target->size() != network.output_dim()) {
        throw ConfigError(
            "squared error loss requires a target of output length");
      }
    } else {
      if (!label.has_value() || *label < 0 ||
          *label >= network.output_dim()) {
        throw ConfigError("cross entropy label out of range");
      }
    }
  } else {
    if (loss.has_value() || target.has_value() || label.has_value()) {
      throw ConfigError("loss settings are only meaningful for gradient sharing");
    }
    if (!cut.has_value() || *cut == 0 || *cut > network.layer_count()) {
      throw ConfigError("cut layer must be in [1, layer_count]");
    }
  }
}

std::uint64_t fingerprint(const Eigen::VectorXd& x) {
  std::uint64_t hash = 1469598103934665603ull;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &x(i), sizeof(double));
    for (unsigned char b : bytes) {
      hash ^= b;
      hash *= 1099511628211ull;
    }
  }
  return hash;
}

Eigen::VectorXd forward(const SharedMapSpec& spec, const Eigen::VectorXd& x) {
  check_input(spec, x);
  if (spec.mode == MapMode::kVflEmbedding) {
    return forward_trace(spec.network, x, *spec.cut).back();
  }
  auto h = forward_trace(spec.network, x, spec.network.layer_count());
  auto v = adjoint_trace(spec, h);
  return flatten_param_gradient(spec.network, h, v);
}

Jacobian jacobian(const SharedMapSpec& spec, const Eigen::VectorXd& x) {
  check_input(spec, x);
  const Eigen::Index m = x.size();
  Jacobian out;
  out.mode = spec.mode;
  out.instance_fingerprint = fingerprint(x);

  if (spec.mode == MapMode::kVflEmbedding) {
    auto h = forward_trace(spec.network, x, *spec.cut);
    Eigen::MatrixXd j = Eigen::MatrixXd::Identity(m, m);
    for (std::size_t k = 0; k < *spec.cut; ++k) {
      const Layer& layer = spec.network.layers()[k];
      if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
        j = dense->weights * j;
      } else {
        const auto& act = std::get<ActivationLayer>(layer);
        for (Eigen::Index r = 0; r < j.rows(); ++r) {
          j.row(r) *= act_deriv(act.kind, h[k](r));
        }
      }
    }
    out.g = std::move(j);
    return out;
  }

  // Gradient sharing: one tangent sweep per input coordinate. The value-side
  // traces are shared across all coordinates.
  const auto& layers = spec.network.layers();
  auto h = forward_trace(spec.network, x, layers.size());
  auto v = adjoint_trace(spec, h);
  out.g.resize(spec.network.param_count(), m);

  std::vector<Eigen::VectorXd> ht(h.size());
  std::vector<Eigen::VectorXd> vt(v.size());
  for (Eigen::Index dir = 0; dir < m; ++dir) {
    ht[0] = Eigen::VectorXd::Unit(m, dir);
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (const auto* dense = std::get_if<DenseLayer>(&layers[k])) {
        ht[k + 1] = dense->weights * ht[k];
      } else {
        const auto& act = std::get<ActivationLayer>(layers[k]);
        ht[k + 1] = ht[k];
        for (Eigen::Index i = 0; i < ht[k + 1].size(); ++i) {
          ht[k + 1](i) *= act_deriv(act.kind, h[k](i));
        }
      }
    }
    vt.back() = loss_adjoint_tangent(spec, h.back(), ht.back());
    for (std::size_t k = layers.size(); k-- > 0;) {
      if (const auto* dense = std::get_if<DenseLayer>(&layers[k])) {
        vt[k] = dense->weights.transpose() * vt[k + 1];
      } else {
        const auto& act = std::get<ActivationLayer>(layers[k]);
        vt[k] = vt[k + 1];
        for (Eigen::Index i = 0; i < vt[k].size(); ++i) {
          vt[k](i) = vt[k + 1](i) * act_deriv(act.kind, h[k](i)) +
                     v[k + 1](i) * act_deriv2(act.kind, h[k](i)) * ht[k](i);
        }
      }
    }
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (const auto* dense = std::get_if<DenseLayer>(&layers[k])) {
        for (Eigen::Index r = 0; r < dense->weights.rows(); ++r) {
          for (Eigen::Index c = 0; c < dense->weights.cols(); ++c) {
            out.g(at++, dir) = vt[k + 1](r) * h[k](c) + v[k + 1](r) * ht[k](c);
          }
        }
        for (Eigen::Index r = 0; r < dense->bias.size(); ++r) {
          out.g(at++, dir) = vt[k + 1](r);
        }
      }
    }
  }
  return out;
}

Jacobian jacobian_fd(const SharedMapSpec& spec, const Eigen::VectorXd& x,
                     double h) {
  check_input(spec, x);
  if (!(h > 0.0)) {
    throw ConfigError("finite difference step must be positive");
  }
  Jacobian out;
  out.mode = spec.mode;
  out.instance_fingerprint = fingerprint(x);
  out.g.resize(spec.shared_dim(), x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index dir = 0; dir < x.size(); ++dir) {
    probe(dir) = x(dir) + h;
    Eigen::VectorXd hi = forward(spec, probe);
    probe(dir) = x(dir) - h;
    Eigen::VectorXd lo = forward(spec, probe);
    probe(dir) = x(dir);
    out.g.col(dir) = (hi - lo) / (2.0 * h);
  }
  return out;
}

Jacobian class_center_jacobian(const SharedMapSpec& spec,
                               const std::vector<Eigen::VectorXd>& centers) {
  if (centers.empty()) {
    throw ConfigError("class centers must be non-empty");
  }
  Jacobian out = jacobian(spec, centers.front());
  std::uint64_t mixed = out.instance_fingerprint;
  for (std::size_t i = 1; i < centers.size(); ++i) {
    Jacobian next = jacobian(spec, centers[i]);
    out.g += next.g;
    mixed ^= next.instance_fingerprint + 0x9e3779b97f4a7c15ull + (mixed << 6) +
             (mixed >> 2);
  }
  out.g /= static_cast<double>(centers.size());
  out.instance_fingerprint = mixed;
  return out;
}

}  // namespace invrisk
