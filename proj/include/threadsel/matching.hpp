#pragma once

#include <span>
#include <vector>

#include "threadsel/autodiff.hpp"
#include "threadsel/tensor.hpp"

namespace threadsel {

// Context vectors stacked as rows: M threads x K codes, flattened.
struct MatchResult {
  RowVector weights;
  double score = 0.0;
};

struct MatchVars {
  Var weights;  // 1 x N
  Var score;    // 1 x 1
};

// s_m = r . v_m, w = softmax(s), C = sum_m w_m v_m, S = r . C.
MatchVars match_score(Graph& g, Var context, Var response);
MatchResult match_score(const Matrix& context, const RowVector& response);

// Row a holds S_ab for responses b = 0..A-1 against context a. Attention
// weights are recomputed for every (context, response) pair.
Var batch_scores(Graph& g, std::span<const Var> contexts, Var responses);
Matrix batch_scores(std::span<const Matrix> contexts, const Matrix& responses);

// In-batch cross entropy over the row-wise softmax of S with targets on the diagonal.
Var batch_loss(Graph& g, Var scores);
double batch_loss(const Matrix& scores);

}  // namespace threadsel
