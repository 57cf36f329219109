#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

namespace invrisk {

// Dense row-major f64 tensor. This is the carrier type at the tool boundary
// (file I/O, synthetic data batches); numeric kernels work on Eigen types and
// convert at the edges. Construction validates that the shape product matches
// the payload and that every value is finite.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor from_vector(const Eigen::VectorXd& v);
  static Tensor from_matrix(const Eigen::MatrixXd& m);

  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& mutable_data() { return data_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // Flattens any shape into a column vector.
  Eigen::VectorXd to_vector() const;
  // Requires ndim() == 2.
  Eigen::MatrixXd to_matrix() const;
  // Row i of a rank-2 tensor as a vector.
  Eigen::VectorXd row(std::size_t i) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace invrisk
