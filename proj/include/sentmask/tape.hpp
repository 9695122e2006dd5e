#ifndef SENTMASK_TAPE_HPP
#define SENTMASK_TAPE_HPP

#include <Eigen/Core>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

// Minimal reverse-mode differentiation over dense row-major matrices. A Tape
// records one forward computation; backward() propagates from a 1x1 result
// into every reachable node and finally into bound Parameters.
namespace sentmask::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value, bool trainable = true)
      : name(std::move(name)),
        value(std::move(value)),
        grad(Matrix::Zero(this->value.rows(), this->value.cols())),
        trainable(trainable) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

class Tape {
 public:
  // Receives the output gradient and the output value.
  using Backward = std::function<void(Tape&, const Matrix& grad, const Matrix& out)>;

  // With gradients disabled, parameters enter as constants and no closures
  // are recorded.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);
  // Same value, no gradient path back through the source.
  Var detach(Var v);

  // Seeds d(out)/d(out) = 1 for a 1x1 result, then accumulates every trainable
  // bound parameter's gradient into Parameter::grad.
  void backward(Var out);

  const Matrix& value(Var v) const {
    const auto& node = nodes_[v.id];
    return node.param ? node.param->value : node.value;
  }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var push(Matrix value, bool needs_grad, Backward backward);
  void accumulate(int id, const Matrix& g);
  template <typename F>
  void accumulate_with(int id, F&& fn) {
    auto& node = nodes_[id];
    if (!node.needs_grad) return;
    ensure_grad(node);
    fn(node.grad);
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    bool grad_live = false;
    Backward backward;
    // Parameter nodes read the parameter's value in place; it must not change
    // while the tape is alive.
    Parameter* param = nullptr;
  };

  static void ensure_grad(Node& node) {
    if (!node.grad_live) {
      const Matrix& v = node.param ? node.param->value : node.value;
      node.grad.setZero(v.rows(), v.cols());
      node.grad_live = true;
    }
  }

  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, int> bound_;
  bool grad_enabled_;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a (n x m) + b (1 x m) broadcast over rows.
Var add_bias(Var a, Var b);
Var scale(Var a, double c);
Var sigmoid(Var a);
Var tanh(Var a);
Var slice_cols(Var a, Index start, Index count);
Var hcat(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const int> rows);
// total x cols zero matrix with row rows[i] set to row i of a (rows distinct).
Var scatter_rows(Var a, std::span<const int> rows, Index total);
// Row i of a multiplied by s(i, 0).
Var scale_rows(Var a, Var s);
Var sum(Var a);
Var mean(Var a);
// Per-row -sum_c t(i,c) * log softmax(logits)(i,c), returned as n x 1.
Var softmax_cross_entropy(Var logits, const Matrix& targets);
// Per-row sum over entries with valid(i,j) != 0 of KL(Bern(sigmoid(l)) || Bern(r)).
Var bernoulli_kl(Var logits, const Matrix& valid, double keep_rate);

double sigmoid(double x);
// log(sigmoid(x)) without overflow.
double log_sigmoid(double x);
Matrix softmax_rows(const Matrix& logits);

}  // namespace sentmask::ad

#endif  // SENTMASK_TAPE_HPP
