#include "threadsel/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "threadsel/error.hpp"

namespace threadsel {

GradCheckResult grad_check(const LossClosure& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  for (const auto* p : params) p->zero_grad();
  const double base = loss(true);
  if (!std::isfinite(base)) throw DataError("grad_check: non-finite loss");
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const auto* p : params) analytic.push_back(p->grad);

  struct Element {
    std::size_t param;
    Eigen::Index index;
  };
  std::vector<Element> elements;
  std::size_t total = 0;
  for (const auto* p : params) total += static_cast<std::size_t>(p->size());
  if (total <= options.exhaustive_limit) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (Eigen::Index j = 0; j < params[i]->size(); ++j) elements.push_back({i, j});
    }
  } else {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t s = 0; s < options.samples; ++s) {
      std::size_t flat = pick(rng);
      std::size_t i = 0;
      while (flat >= static_cast<std::size_t>(params[i]->size())) flat -= static_cast<std::size_t>(params[i++]->size());
      elements.push_back({i, static_cast<Eigen::Index>(flat)});
    }
  }

  GradCheckResult result;
  for (const auto& e : elements) {
    double* slot = params[e.param]->value.data() + e.index;
    const double original = *slot;
    *slot = original + options.eps;
    const double plus = loss(false);
    *slot = original - options.eps;
    const double minus = loss(false);
    *slot = original;
    if (!std::isfinite(plus) || !std::isfinite(minus)) throw DataError("grad_check: non-finite loss");
    const double numeric = (plus - minus) / (2.0 * options.eps);
    const double exact = analytic[e.param].data()[e.index];
    const double rel = std::abs(exact - numeric) / std::max(1e-8, std::abs(exact) + std::abs(numeric));
    if (rel > result.max_relative_error || result.checked == 0) {
      result.max_relative_error = rel;
      result.worst_parameter = params[e.param]->name + "[" + std::to_string(e.index) + "]";
      result.worst_analytic = exact;
      result.worst_numeric = numeric;
    }
    ++result.checked;
    if (exact != 0.0) ++result.nonzero;
  }
  return result;
}

}  // namespace threadsel
