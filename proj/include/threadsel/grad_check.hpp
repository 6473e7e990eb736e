#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "threadsel/tensor.hpp"

namespace threadsel {

// Evaluates the scalar loss at the current parameter values. When
// `with_gradients` is true it must also run backward, accumulating into the
// parameters' gradient buffers.
using LossClosure = std::function<double(bool with_gradients)>;

struct GradCheckOptions {
  double eps = 1e-4;
  // Check every element when the model has at most this many; otherwise draw
  // `samples` elements uniformly at random.
  std::size_t exhaustive_limit = 20000;
  std::size_t samples = 400;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t nonzero = 0;  // elements whose analytic gradient is not exactly zero
  // Element with the largest relative error.
  std::string worst_parameter;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares backward gradients with central differences and reports the
// largest |a - b| / max(1e-8, |a| + |b|).
GradCheckResult grad_check(const LossClosure& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace threadsel
