#include "sentmask/tape.hpp"

#include <cmath>

#include "sentmask/error.hpp"

namespace sentmask::ad {

namespace {

void check_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(op) + ": shape mismatch");
  }
}

bool any_grad(std::initializer_list<Var> vs) {
  for (auto v : vs) {
    if (v.tape->needs_grad(v)) return true;
  }
  return false;
}

}  // namespace

Var Tape::push(Matrix value, bool needs_grad, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad && grad_enabled_;
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var{this, it->second};
  Var v = push(Matrix(), p.trainable, nullptr);
  nodes_[v.id].param = &p;
  bound_.emplace(&p, v.id);
  return v;
}

Var Tape::detach(Var v) { return constant(value(v)); }

void Tape::accumulate(int id, const Matrix& g) {
  accumulate_with(id, [&](Matrix& dst) { dst += g; });
}

void Tape::backward(Var out) {
  if (out.rows() != 1 || out.cols() != 1) {
    throw Error(ErrorCode::kInvalidArgument, "backward: expected a 1x1 result");
  }
  if (!needs_grad(out)) return;
  accumulate(out.id, Matrix::Ones(1, 1));
  for (auto i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    auto& node = nodes_[i];
    if (!node.grad_live) continue;
    if (node.backward) node.backward(*this, node.grad, node.value);
    if (node.param && node.param->trainable) node.param->grad += node.grad;
  }
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "matmul: inner dimensions differ");
  }
  Matrix out = a.value() * b.value();
  return a.tape->push(std::move(out), any_grad({a, b}),
                      [a, b](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate_with(a.id, [&](Matrix& d) {
                          d.noalias() += g * t.value(b).transpose();
                        });
                        t.accumulate_with(b.id, [&](Matrix& d) {
                          d.noalias() += t.value(a).transpose() * g;
                        });
                      });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return a.tape->push(std::move(out), any_grad({a, b}),
                      [a, b](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate(a.id, g);
                        t.accumulate(b.id, g);
                      });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return a.tape->push(std::move(out), any_grad({a, b}),
                      [a, b](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate(a.id, g);
                        t.accumulate_with(b.id, [&](Matrix& d) { d -= g; });
                      });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape->push(std::move(out), any_grad({a, b}),
                      [a, b](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate_with(a.id, [&](Matrix& d) { d += g.cwiseProduct(t.value(b)); });
                        t.accumulate_with(b.id, [&](Matrix& d) { d += g.cwiseProduct(t.value(a)); });
                      });
}

Var add_bias(Var a, Var b) {
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "add_bias: bias must be 1 x cols");
  }
  Matrix out = a.value().rowwise() + b.value().row(0);
  return a.tape->push(std::move(out), any_grad({a, b}),
                      [a, b](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate(a.id, g);
                        t.accumulate_with(b.id, [&](Matrix& d) { d += g.colwise().sum(); });
                      });
}

Var scale(Var a, double c) {
  Matrix out = a.value() * c;
  return a.tape->push(std::move(out), any_grad({a}),
                      [a, c](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate_with(a.id, [&](Matrix& d) { d += g * c; });
                      });
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid(x); });
  return a.tape->push(std::move(out), any_grad({a}),
                      [a](Tape& t, const Matrix& g, const Matrix& y) {
                        t.accumulate_with(a.id, [&](Matrix& d) {
                          d.array() += g.array() * y.array() * (1.0 - y.array());
                        });
                      });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  return a.tape->push(std::move(out), any_grad({a}),
                      [a](Tape& t, const Matrix& g, const Matrix& y) {
                        t.accumulate_with(a.id, [&](Matrix& d) {
                          d.array() += g.array() * (1.0 - y.array().square());
                        });
                      });
}

Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "slice_cols: out of range");
  }
  Matrix out = a.value().middleCols(start, count);
  return a.tape->push(std::move(out), any_grad({a}),
                      [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate_with(a.id, [&](Matrix& d) { d.middleCols(start, count) += g; });
                      });
}

Var hcat(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "hcat: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  bool grad = false;
  for (auto p : parts) {
    if (p.rows() != rows) throw Error(ErrorCode::kInvalidArgument, "hcat: row mismatch");
    cols += p.cols();
    grad = grad || p.tape->needs_grad(p);
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (auto p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(out), grad,
                             [inputs = std::move(inputs)](Tape& t, const Matrix& g, const Matrix&) {
                               Index off = 0;
                               for (auto p : inputs) {
                                 const Index c = t.value(p).cols();
                                 t.accumulate_with(p.id, [&](Matrix& d) { d += g.middleCols(off, c); });
                                 off += c;
                               }
                             });
}

Var gather_rows(Var a, std::span<const int> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw Error(ErrorCode::kInvalidArgument, "gather_rows: index out of range");
    }
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return a.tape->push(std::move(out), any_grad({a}),
                      [a, idx = std::move(idx)](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate_with(a.id, [&](Matrix& d) {
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            d.row(idx[i]) += g.row(static_cast<Index>(i));
                          }
                        });
                      });
}

Var scatter_rows(Var a, std::span<const int> rows, Index total) {
  if (static_cast<Index>(rows.size()) != a.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "scatter_rows: one target row per input row");
  }
  Matrix out = Matrix::Zero(total, a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= total) {
      throw Error(ErrorCode::kInvalidArgument, "scatter_rows: index out of range");
    }
    out.row(rows[i]) = a.value().row(static_cast<Index>(i));
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return a.tape->push(std::move(out), any_grad({a}),
                      [a, idx = std::move(idx)](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate_with(a.id, [&](Matrix& d) {
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            d.row(static_cast<Index>(i)) += g.row(idx[i]);
                          }
                        });
                      });
}

Var scale_rows(Var a, Var s) {
  if (s.cols() != 1 || s.rows() != a.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "scale_rows: scale must be rows x 1");
  }
  Matrix out = a.value().array().colwise() * s.value().col(0).array();
  return a.tape->push(std::move(out), any_grad({a, s}),
                      [a, s](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate_with(a.id, [&](Matrix& d) {
                          d.array() += g.array().colwise() * t.value(s).col(0).array();
                        });
                        t.accumulate_with(s.id, [&](Matrix& d) {
                          d.col(0) += g.cwiseProduct(t.value(a)).rowwise().sum();
                        });
                      });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->push(std::move(out), any_grad({a}),
                      [a](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate_with(a.id, [&](Matrix& d) { d.array() += g(0, 0); });
                      });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "mean: empty input");
  return scale(sum(a), 1.0 / n);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Var softmax_cross_entropy(Var logits, const Matrix& targets) {
  const Matrix& z = logits.value();
  if (targets.rows() != z.rows() || targets.cols() != z.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "softmax_cross_entropy: target shape mismatch");
  }
  Matrix out(z.rows(), 1);
  for (Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    out(i, 0) = (targets.row(i).array() * (lse - z.row(i).array())).sum();
  }
  return logits.tape->push(std::move(out), any_grad({logits}),
                           [logits, targets](Tape& t, const Matrix& g, const Matrix&) {
                             const Matrix p = softmax_rows(t.value(logits));
                             t.accumulate_with(logits.id, [&](Matrix& d) {
                               for (Index i = 0; i < p.rows(); ++i) {
                                 const double mass = targets.row(i).sum();
                                 d.row(i) += g(i, 0) * (p.row(i) * mass - targets.row(i));
                               }
                             });
                           });
}

Var bernoulli_kl(Var logits, const Matrix& valid, double keep_rate) {
  const Matrix& z = logits.value();
  if (valid.rows() != z.rows() || valid.cols() != z.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "bernoulli_kl: validity shape mismatch");
  }
  const double log_r = std::log(keep_rate);
  const double log_1mr = std::log1p(-keep_rate);
  Matrix out = Matrix::Zero(z.rows(), 1);
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index j = 0; j < z.cols(); ++j) {
      if (valid(i, j) == 0) continue;
      const double l = z(i, j);
      const double p = sigmoid(l);
      const double q = sigmoid(-l);
      out(i, 0) += p * (log_sigmoid(l) - log_r) + q * (log_sigmoid(-l) - log_1mr);
    }
  }
  const double prior_logit = log_r - log_1mr;
  return logits.tape->push(std::move(out), any_grad({logits}),
                           [logits, valid, prior_logit](Tape& t, const Matrix& g, const Matrix&) {
                             const Matrix& zz = t.value(logits);
                             t.accumulate_with(logits.id, [&](Matrix& d) {
                               for (Index i = 0; i < zz.rows(); ++i) {
                                 for (Index j = 0; j < zz.cols(); ++j) {
                                   if (valid(i, j) == 0) continue;
                                   const double l = zz(i, j);
                                   const double p = sigmoid(l);
                                   d(i, j) += g(i, 0) * p * (1.0 - p) * (l - prior_logit);
                                 }
                               }
                             });
                           });
}

}  // namespace sentmask::ad
