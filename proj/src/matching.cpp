#include "threadsel/matching.hpp"

#include "threadsel/error.hpp"

namespace threadsel {

MatchVars match_score(Graph& g, Var context, Var response) {
  const Matrix& cv = g.value(context);
  const Matrix& rv = g.value(response);
  if (cv.rows() == 0) throw ShapeError("match_score: empty context");
  if (rv.rows() != 1 || rv.cols() != cv.cols()) {
    throw ShapeError("match_score: response " + shape_string(rv) + " does not match context " + shape_string(cv));
  }
  const Var logits = ops::transpose(g, ops::matmul(g, context, ops::transpose(g, response)));
  const Var weights = ops::softmax_rows(g, logits);
  const Var pooled = ops::weighted_row_sum(g, weights, context);
  return {weights, ops::dot(g, response, pooled)};
}

MatchResult match_score(const Matrix& context, const RowVector& response) {
  Graph g;
  const auto vars = match_score(g, g.constant(context), g.constant(response));
  return {g.value(vars.weights), g.value(vars.score)(0, 0)};
}

Var batch_scores(Graph& g, std::span<const Var> contexts, Var responses) {
  const Matrix& rv = g.value(responses);
  if (contexts.size() != static_cast<std::size_t>(rv.rows())) {
    throw ShapeError("batch_scores: " + std::to_string(contexts.size()) + " contexts but " +
                     std::to_string(rv.rows()) + " responses");
  }
  std::vector<Var> rows;
  rows.reserve(contexts.size());
  for (const Var context : contexts) {
    const Matrix& cv = g.value(context);
    if (cv.rows() == 0) throw ShapeError("batch_scores: empty context");
    if (cv.cols() != rv.cols()) {
      throw ShapeError("batch_scores: context " + shape_string(cv) + " does not match responses " + shape_string(rv));
    }
    // A x N logits; row b attends over this context with response b as the query.
    const Var weights = ops::softmax_rows(g, ops::matmul(g, responses, ops::transpose(g, context)));
    const Var pooled = ops::matmul(g, weights, context);
    rows.push_back(ops::transpose(g, ops::rowwise_dot(g, responses, pooled)));
  }
  return ops::concat_rows(g, rows);
}

Matrix batch_scores(std::span<const Matrix> contexts, const Matrix& responses) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& c : contexts) vars.push_back(g.constant(c));
  return g.value(batch_scores(g, vars, g.constant(responses)));
}

Var batch_loss(Graph& g, Var scores) { return ops::diagonal_cross_entropy(g, scores); }

double batch_loss(const Matrix& scores) {
  Graph g;
  return g.value(batch_loss(g, g.constant(scores)))(0, 0);
}

}  // namespace threadsel
