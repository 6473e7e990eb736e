#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "threadsel/corpus.hpp"
#include "threadsel/tensor.hpp"

namespace threadsel {

// Handle to a node of a Graph.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode tape. Nodes are appended in topological order by the op
// functions below; backward() walks them in reverse. A graph is used for a
// single forward/backward pass and then discarded.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // A constant leaf; no gradient flows out of it.
  Var constant(Matrix value);
  // A leaf whose gradient is recorded but not accumulated anywhere.
  Var input(Matrix value);
  // A leaf bound to a parameter; backward() adds into parameter.grad.
  Var param(const Parameter& parameter);

  const Matrix& value(Var v) const;
  // Gradient of the last backward() pass for a node that requires one.
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Frees intermediate values and gradients as backward() passes them. Only
  // leaf gradients and parameter accumulators stay readable afterwards.
  void set_release_after_backward(bool release) { release_ = release; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 for a 1x1 node.
  void backward(Var loss);
  // Seeds the given upstream gradient for an arbitrary node.
  void backward(Var output, const Matrix& seed);

  // Used by op implementations.
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;
  Var record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);
  Matrix& grad_buffer(std::size_t id);
  const Matrix& output_grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    const Parameter* parameter = nullptr;
    Matrix grad;
    bool requires_grad = false;
    bool released = false;
    BackwardFn backward;
  };

  void run_backward(std::size_t output, const Matrix& seed);

  // A deque so references handed out by value() survive later records.
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
  bool release_ = false;
};

// Differentiable primitives. Shape mismatches throw ShapeError naming the op.
namespace ops {

Var matmul(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
// Adds a 1 x n row to every row of an m x n matrix.
Var add_row(Graph& g, Var a, Var row);
Var scale(Graph& g, Var a, double factor);
Var softmax_rows(Graph& g, Var a);
Var layer_norm(Graph& g, Var x, Var gain, Var bias, double eps = 1e-12);
Var gelu(Graph& g, Var x);
Var embedding_lookup(Graph& g, Var table, const std::vector<TokenId>& ids);
// Position rows 0..count-1 of a table.
Var take_rows(Graph& g, Var table, std::size_t count);
// axis 0: 1 x n mean over rows; axis 1: m x 1 mean over columns.
Var mean(Graph& g, Var a, int axis);
Var concat_rows(Graph& g, std::span<const Var> parts);
Var concat_cols(Graph& g, std::span<const Var> parts);
Var slice_cols(Graph& g, Var a, std::size_t start, std::size_t count);
Var transpose(Graph& g, Var a);
// 1 x n . 1 x n -> 1 x 1
Var dot(Graph& g, Var a, Var b);
// m x n, m x n -> m x 1 of row-wise dot products.
Var rowwise_dot(Graph& g, Var a, Var b);
// weights (k x t) times rows (t x d) by explicit accumulation in row order.
// mean(rows, 0) uses the same loop, so uniform weights reproduce it bitwise.
Var weighted_row_sum(Graph& g, Var weights, Var rows);
// -(1/A) sum_a log softmax(S)_aa for a square score matrix.
Var diagonal_cross_entropy(Graph& g, Var scores);

}  // namespace ops

// Forward helpers shared by the op set and value-level code.
Matrix softmax_rows(const Matrix& a);
Matrix weighted_row_sum(const Matrix& weights, const Matrix& rows);

}  // namespace threadsel
