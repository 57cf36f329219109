#include "invrisk/tensor.hpp"

#include <cmath>
#include <utility>

#include "invrisk/errors.hpp"

namespace invrisk {
namespace {

std::size_t checked_element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t dim : shape) {
    if (dim != 0 && n > SIZE_MAX / dim) {
      throw ConfigError("tensor shape product overflows size_t");
    }
    n *= dim;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_element_count(shape_) != data_.size()) {
    throw ConfigError("tensor payload size does not match shape product");
  }
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw ConfigError("tensor values must be finite");
    }
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = checked_element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::from_vector(const Eigen::VectorXd& v) {
  return Tensor({static_cast<std::size_t>(v.size())},
                std::vector<double>(v.data(), v.data() + v.size()));
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
  std::vector<double> flat(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      flat[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
  }
  return Tensor({static_cast<std::size_t>(m.rows()),
                 static_cast<std::size_t>(m.cols())},
                std::move(flat));
}

Eigen::VectorXd Tensor::to_vector() const {
  return Eigen::Map<const Eigen::VectorXd>(data_.data(),
                                           static_cast<Eigen::Index>(size()));
}

Eigen::MatrixXd Tensor::to_matrix() const {
  if (ndim() != 2) {
    throw ConfigError("to_matrix requires a rank-2 tensor");
  }
  auto rows = static_cast<Eigen::Index>(shape_[0]);
  auto cols = static_cast<Eigen::Index>(shape_[1]);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = data_[static_cast<std::size_t>(r * cols + c)];
    }
  }
  return m;
}

Eigen::VectorXd Tensor::row(std::size_t i) const {
  if (ndim() != 2 || i >= shape_[0]) {
    throw ConfigError("row index out of range for tensor");
  }
  const double* begin = data_.data() + i * shape_[1];
  return Eigen::Map<const Eigen::VectorXd>(
      begin, static_cast<Eigen::Index>(shape_[1]));
}

}  // namespace invrisk
