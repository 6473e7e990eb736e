#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace threadsel {

// Dense row-major 2-D tensor. Vectors are 1 x d.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

// A trainable tensor with its gradient accumulator. The gradient is a
// scratch buffer and not part of the parameter's logical value, so graphs
// built over a const model can still accumulate into it.
struct Parameter {
  std::string name;
  Matrix value;
  mutable Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

inline std::string shape_string(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

}  // namespace threadsel
