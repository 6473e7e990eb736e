#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "threadsel/tensor.hpp"

namespace threadsel {

// Adamax: m <- b1 m + (1-b1) g; u <- max(b2 u, |g|);
// theta <- theta - lr / (1 - b1^t) * m / (u + eps).
class AdamaxOptimizer {
 public:
  struct Options {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamaxOptimizer(std::span<Parameter* const> params, Options options);

  // Applies one update from the parameters' current gradients. Gradients are
  // left untouched; call zero_grad() before the next accumulation.
  void step();
  void zero_grad();

  double learning_rate() const { return options_.lr; }
  void set_learning_rate(double lr) { options_.lr = lr; }
  std::size_t steps() const { return step_; }
  const Matrix& first_moment(std::size_t i) const { return first_moment_.at(i); }
  const Matrix& infinity_norm(std::size_t i) const { return infinity_norm_.at(i); }

 private:
  std::vector<Parameter*> params_;
  Options options_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> infinity_norm_;
  std::size_t step_ = 0;
};

}  // namespace threadsel
