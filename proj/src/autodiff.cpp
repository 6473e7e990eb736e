#include "threadsel/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "threadsel/error.hpp"

namespace threadsel {

Var Graph::constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Graph::input(Matrix value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Graph::param(const Parameter& parameter) {
  auto it = bound_.find(&parameter);
  if (it != bound_.end()) return Var{it->second};
  Node node;
  node.external = &parameter.value;
  node.parameter = &parameter;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  bound_.emplace(&parameter, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

const Matrix& Graph::value(Var v) const {
  const Node& node = nodes_.at(v.id);
  return node.external ? *node.external : node.value;
}

const Matrix& Graph::grad(Var v) const { return nodes_.at(v.id).grad; }

Var Graph::record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (auto id : inputs) node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Matrix& Graph::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.size() == 0) {
    const Matrix& v = node.external ? *node.external : node.value;
    node.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return node.grad;
}

void Graph::backward(Var loss) {
  const Matrix& v = value(loss);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("backward: loss must be 1x1, got " + shape_string(v));
  }
  if (!std::isfinite(v(0, 0))) throw DataError("backward: non-finite loss");
  run_backward(loss.id, Matrix::Ones(1, 1));
}

void Graph::backward(Var output, const Matrix& seed) {
  const Matrix& v = value(output);
  if (v.rows() != seed.rows() || v.cols() != seed.cols()) {
    throw ShapeError("backward: seed " + shape_string(seed) + " does not match output " + shape_string(v));
  }
  run_backward(output.id, seed);
}

void Graph::run_backward(std::size_t output, const Matrix& seed) {
  if (!nodes_[output].requires_grad) return;
  grad_buffer(output) += seed;
  for (std::size_t i = output + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.backward) {
      node.backward(*this, i);
      if (release_) {
        // Every consumer of node i has a larger id and has already run.
        node.value = Matrix();
        node.grad = Matrix();
        node.backward = nullptr;
      }
    } else if (node.parameter) {
      node.parameter->grad += node.grad;
    }
  }
}

namespace {

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

}  // namespace

Matrix softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double top = a.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      out(r, c) = std::exp(a(r, c) - top);
      sum += out(r, c);
    }
    for (Eigen::Index c = 0; c < a.cols(); ++c) out(r, c) = out(r, c) / sum;
  }
  return out;
}

Matrix weighted_row_sum(const Matrix& weights, const Matrix& rows) {
  if (weights.cols() != rows.rows()) shape_fail("weighted_row_sum", weights, rows);
  Matrix out = Matrix::Zero(weights.rows(), rows.cols());
  for (Eigen::Index k = 0; k < weights.rows(); ++k) {
    for (Eigen::Index t = 0; t < rows.rows(); ++t) {
      const double w = weights(k, t);
      for (Eigen::Index c = 0; c < rows.cols(); ++c) out(k, c) += w * rows(t, c);
    }
  }
  return out;
}

namespace ops {

Var matmul(Graph& g, Var a, Var b) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  Matrix out(av.rows(), bv.cols());
  out.noalias() = av * bv;
  return g.record(std::move(out), {a.id, b.id}, [a, b](Graph& g, std::size_t self) {
    const Matrix& up = g.output_grad(self);
    if (g.needs(a.id)) g.grad_buffer(a.id).noalias() += up * g.value(b).transpose();
    if (g.needs(b.id)) g.grad_buffer(b.id).noalias() += g.value(a).transpose() * up;
  });
}

Var add(Graph& g, Var a, Var b) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("add", av, bv);
  return g.record(av + bv, {a.id, b.id}, [a, b](Graph& g, std::size_t self) {
    const Matrix& up = g.output_grad(self);
    if (g.needs(a.id)) g.grad_buffer(a.id) += up;
    if (g.needs(b.id)) g.grad_buffer(b.id) += up;
  });
}

Var add_row(Graph& g, Var a, Var row) {
  const Matrix& av = g.value(a);
  const Matrix& rv = g.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_fail("add_row", av, rv);
  Matrix out = av;
  out.rowwise() += rv.row(0);
  return g.record(std::move(out), {a.id, row.id}, [a, row](Graph& g, std::size_t self) {
    const Matrix& up = g.output_grad(self);
    if (g.needs(a.id)) g.grad_buffer(a.id) += up;
    if (g.needs(row.id)) g.grad_buffer(row.id) += up.colwise().sum();
  });
}

Var scale(Graph& g, Var a, double factor) {
  return g.record(g.value(a) * factor, {a.id}, [a, factor](Graph& g, std::size_t self) {
    g.grad_buffer(a.id) += g.output_grad(self) * factor;
  });
}

Var softmax_rows(Graph& g, Var a) {
  return g.record(threadsel::softmax_rows(g.value(a)), {a.id}, [a](Graph& g, std::size_t self) {
    const Matrix& y = g.value(Var{self});
    const Matrix& up = g.output_grad(self);
    Matrix& da = g.grad_buffer(a.id);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double inner = up.row(r).dot(y.row(r));
      da.row(r).array() += y.row(r).array() * (up.row(r).array() - inner);
    }
  });
}

Var layer_norm(Graph& g, Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = g.value(x);
  const Matrix& gv = g.value(gain);
  const Matrix& bv = g.value(bias);
  if (gv.rows() != 1 || gv.cols() != xv.cols()) shape_fail("layer_norm", xv, gv);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) shape_fail("layer_norm", xv, bv);
  const auto n = static_cast<double>(xv.cols());
  Matrix normalized(xv.rows(), xv.cols());
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).sum() / n;
    const auto centered = (xv.row(r).array() - mu).eval();
    const double var = centered.square().sum() / n;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = centered * inv_std(r);
  }
  Matrix out = normalized.array().rowwise() * gv.row(0).array();
  out.rowwise() += bv.row(0);
  return g.record(std::move(out), {x.id, gain.id, bias.id},
                  [x, gain, bias, normalized = std::move(normalized), inv_std = std::move(inv_std)](
                      Graph& g, std::size_t self) {
                    const Matrix& up = g.output_grad(self);
                    if (g.needs(gain.id)) {
                      g.grad_buffer(gain.id) += (up.array() * normalized.array()).colwise().sum().matrix();
                    }
                    if (g.needs(bias.id)) g.grad_buffer(bias.id) += up.colwise().sum();
                    if (g.needs(x.id)) {
                      const Matrix& gv = g.value(gain);
                      Matrix& dx = g.grad_buffer(x.id);
                      const auto cols = static_cast<double>(up.cols());
                      for (Eigen::Index r = 0; r < up.rows(); ++r) {
                        const auto dxhat = (up.row(r).array() * gv.row(0).array()).eval();
                        const double mean_dxhat = dxhat.sum() / cols;
                        const double mean_dxhat_xhat = (dxhat * normalized.row(r).array()).sum() / cols;
                        dx.row(r).array() +=
                            inv_std(r) * (dxhat - mean_dxhat - normalized.row(r).array() * mean_dxhat_xhat);
                      }
                    }
                  });
}

Var gelu(Graph& g, Var x) {
  const Matrix& xv = g.value(x);
  Matrix out = xv.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
  return g.record(std::move(out), {x.id}, [x](Graph& g, std::size_t self) {
    const Matrix& xv = g.value(x);
    const Matrix derivative = xv.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
      return cdf + v * pdf;
    });
    g.grad_buffer(x.id).array() += g.output_grad(self).array() * derivative.array();
  });
}

Var embedding_lookup(Graph& g, Var table, const std::vector<TokenId>& ids) {
  const Matrix& tv = g.value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) {
      throw ShapeError("embedding_lookup: id " + std::to_string(ids[i]) + " outside table " + shape_string(tv));
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  return g.record(std::move(out), {table.id}, [table, ids](Graph& g, std::size_t self) {
    const Matrix& up = g.output_grad(self);
    Matrix& dt = g.grad_buffer(table.id);
    for (std::size_t i = 0; i < ids.size(); ++i) dt.row(ids[i]) += up.row(static_cast<Eigen::Index>(i));
  });
}

Var take_rows(Graph& g, Var table, std::size_t count) {
  const Matrix& tv = g.value(table);
  if (static_cast<Eigen::Index>(count) > tv.rows()) {
    throw ShapeError("take_rows: " + std::to_string(count) + " rows requested from " + shape_string(tv));
  }
  return g.record(tv.topRows(static_cast<Eigen::Index>(count)), {table.id}, [table](Graph& g, std::size_t self) {
    const Matrix& up = g.output_grad(self);
    g.grad_buffer(table.id).topRows(up.rows()) += up;
  });
}

Var mean(Graph& g, Var a, int axis) {
  const Matrix& av = g.value(a);
  if (av.size() == 0) throw ShapeError("mean: empty operand " + shape_string(av));
  if (axis == 0) {
    const Matrix uniform = Matrix::Constant(1, av.rows(), 1.0 / static_cast<double>(av.rows()));
    return g.record(threadsel::weighted_row_sum(uniform, av), {a.id}, [a](Graph& g, std::size_t self) {
      Matrix& da = g.grad_buffer(a.id);
      const double w = 1.0 / static_cast<double>(da.rows());
      da.rowwise() += g.output_grad(self).row(0) * w;
    });
  }
  if (axis == 1) {
    return g.record(av.rowwise().mean(), {a.id}, [a](Graph& g, std::size_t self) {
      Matrix& da = g.grad_buffer(a.id);
      const double w = 1.0 / static_cast<double>(da.cols());
      da.colwise() += g.output_grad(self).col(0) * w;
    });
  }
  throw ShapeError("mean: axis must be 0 or 1");
}

Var concat_rows(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Eigen::Index rows = 0;
  const Eigen::Index cols = g.value(parts[0]).cols();
  for (auto p : parts) {
    if (g.value(p).cols() != cols) shape_fail("concat_rows", g.value(parts[0]), g.value(p));
    rows += g.value(p).rows();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  Eigen::Index offset = 0;
  for (auto p : parts) {
    out.middleRows(offset, g.value(p).rows()) = g.value(p);
    offset += g.value(p).rows();
    ids.push_back(p.id);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), ids, [inputs](Graph& g, std::size_t self) {
    const Matrix& up = g.output_grad(self);
    Eigen::Index offset = 0;
    for (auto p : inputs) {
      const Eigen::Index r = g.value(p).rows();
      if (g.needs(p.id)) g.grad_buffer(p.id) += up.middleRows(offset, r);
      offset += r;
    }
  });
}

Var concat_cols(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Eigen::Index cols = 0;
  const Eigen::Index rows = g.value(parts[0]).rows();
  for (auto p : parts) {
    if (g.value(p).rows() != rows) shape_fail("concat_cols", g.value(parts[0]), g.value(p));
    cols += g.value(p).cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  Eigen::Index offset = 0;
  for (auto p : parts) {
    out.middleCols(offset, g.value(p).cols()) = g.value(p);
    offset += g.value(p).cols();
    ids.push_back(p.id);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), ids, [inputs](Graph& g, std::size_t self) {
    const Matrix& up = g.output_grad(self);
    Eigen::Index offset = 0;
    for (auto p : inputs) {
      const Eigen::Index c = g.value(p).cols();
      if (g.needs(p.id)) g.grad_buffer(p.id) += up.middleCols(offset, c);
      offset += c;
    }
  });
}

Var slice_cols(Graph& g, Var a, std::size_t start, std::size_t count) {
  const Matrix& av = g.value(a);
  if (static_cast<Eigen::Index>(start + count) > av.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_string(av));
  }
  const auto s = static_cast<Eigen::Index>(start);
  const auto c = static_cast<Eigen::Index>(count);
  return g.record(av.middleCols(s, c), {a.id}, [a, s, c](Graph& g, std::size_t self) {
    g.grad_buffer(a.id).middleCols(s, c) += g.output_grad(self);
  });
}

Var transpose(Graph& g, Var a) {
  return g.record(g.value(a).transpose(), {a.id}, [a](Graph& g, std::size_t self) {
    g.grad_buffer(a.id) += g.output_grad(self).transpose();
  });
}

Var dot(Graph& g, Var a, Var b) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.rows() != 1 || bv.rows() != 1 || av.cols() != bv.cols()) shape_fail("dot", av, bv);
  Matrix out(1, 1);
  out(0, 0) = av.row(0).dot(bv.row(0));
  return g.record(std::move(out), {a.id, b.id}, [a, b](Graph& g, std::size_t self) {
    const double up = g.output_grad(self)(0, 0);
    if (g.needs(a.id)) g.grad_buffer(a.id) += up * g.value(b);
    if (g.needs(b.id)) g.grad_buffer(b.id) += up * g.value(a);
  });
}

Var rowwise_dot(Graph& g, Var a, Var b) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("rowwise_dot", av, bv);
  Matrix out(av.rows(), 1);
  for (Eigen::Index r = 0; r < av.rows(); ++r) out(r, 0) = av.row(r).dot(bv.row(r));
  return g.record(std::move(out), {a.id, b.id}, [a, b](Graph& g, std::size_t self) {
    const Matrix& up = g.output_grad(self);
    if (g.needs(a.id)) g.grad_buffer(a.id) += (g.value(b).array().colwise() * up.col(0).array()).matrix();
    if (g.needs(b.id)) g.grad_buffer(b.id) += (g.value(a).array().colwise() * up.col(0).array()).matrix();
  });
}

Var weighted_row_sum(Graph& g, Var weights, Var rows) {
  return g.record(threadsel::weighted_row_sum(g.value(weights), g.value(rows)), {weights.id, rows.id},
                  [weights, rows](Graph& g, std::size_t self) {
                    const Matrix& up = g.output_grad(self);
                    if (g.needs(weights.id)) g.grad_buffer(weights.id).noalias() += up * g.value(rows).transpose();
                    if (g.needs(rows.id)) g.grad_buffer(rows.id).noalias() += g.value(weights).transpose() * up;
                  });
}

Var diagonal_cross_entropy(Graph& g, Var scores) {
  const Matrix& s = g.value(scores);
  if (s.rows() != s.cols() || s.rows() == 0) {
    throw ShapeError("diagonal_cross_entropy: expected a non-empty square matrix, got " + shape_string(s));
  }
  const auto batch = static_cast<double>(s.rows());
  double loss = 0.0;
  for (Eigen::Index a = 0; a < s.rows(); ++a) {
    const double top = s.row(a).maxCoeff();
    const double log_norm = top + std::log((s.row(a).array() - top).exp().sum());
    loss -= s(a, a) - log_norm;
  }
  Matrix out(1, 1);
  out(0, 0) = loss / batch;
  return g.record(std::move(out), {scores.id}, [scores, batch](Graph& g, std::size_t self) {
    const double up = g.output_grad(self)(0, 0);
    Matrix probs = threadsel::softmax_rows(g.value(scores));
    probs.diagonal().array() -= 1.0;
    g.grad_buffer(scores.id) += probs * (up / batch);
  });
}

}  // namespace ops
}  // namespace threadsel
