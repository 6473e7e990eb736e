#include "threadsel/adamax.hpp"

#include <cmath>

namespace threadsel {

AdamaxOptimizer::AdamaxOptimizer(std::span<Parameter* const> params, Options options)
    : params_(params.begin(), params.end()), options_(options) {
  for (const auto* p : params_) {
    first_moment_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    infinity_norm_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamaxOptimizer::step() {
  ++step_;
  const double correction = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double rate = options_.lr / correction;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& g = params_[i]->grad;
    Matrix& m = first_moment_[i];
    Matrix& u = infinity_norm_[i];
    m = options_.beta1 * m + (1.0 - options_.beta1) * g;
    u = (options_.beta2 * u).cwiseMax(g.cwiseAbs());
    params_[i]->value.array() -= rate * m.array() / (u.array() + options_.eps);
  }
}

void AdamaxOptimizer::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

}  // namespace threadsel
