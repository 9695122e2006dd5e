#include "sentmask/layers.hpp"

#include <cmath>

#include "sentmask/error.hpp"

namespace sentmask {

Matrix glorot_uniform(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.rows(); ++i) {
    for (ad::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-limit, limit);
  }
  return m;
}

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : weight_(name + ".weight", glorot_uniform(in, out, rng)),
      bias_(name + ".bias", Matrix::Zero(1, out)) {}

Var Linear::forward(Tape& tape, Var x) {
  return ad::add_bias(ad::matmul(x, tape.param(weight_)), tape.param(bias_));
}

Lstm::Lstm(const std::string& name, int in, int hidden, Rng& rng)
    : input_(name + ".input", glorot_uniform(in, 4 * hidden, rng)),
      recurrent_(name + ".recurrent", glorot_uniform(hidden, 4 * hidden, rng)),
      bias_(name + ".bias", Matrix::Zero(1, 4 * hidden)),
      hidden_(hidden) {
  bias_.value.middleCols(hidden, hidden).setOnes();
}

std::vector<Var> Lstm::run(Tape& tape, const std::vector<Var>& steps,
                           const std::vector<Matrix>& step_mask, bool reverse) {
  if (steps.size() != step_mask.size()) {
    throw Error(ErrorCode::kInvalidArgument, "Lstm::run: mask count differs from step count");
  }
  const auto T = static_cast<int>(steps.size());
  std::vector<Var> out(T);
  if (T == 0) return out;
  const auto n = steps[0].rows();
  Var w = tape.param(input_);
  Var u = tape.param(recurrent_);
  Var b = tape.param(bias_);
  Var h = tape.constant(Matrix::Zero(n, hidden_));
  Var c = h;
  bool fresh = true;  // h and c are still the zero initial state
  for (int s = 0; s < T; ++s) {
    const int t = reverse ? T - 1 - s : s;
    const Matrix& m = step_mask[t];
    const double active = m.sum();
    if (active == 0) {
      out[t] = h;
      continue;
    }
    Var pre = ad::matmul(steps[t], w);
    if (!fresh) pre = ad::add(pre, ad::matmul(h, u));
    Var gates = ad::add_bias(pre, b);
    Var i = ad::sigmoid(ad::slice_cols(gates, 0, hidden_));
    Var f = ad::sigmoid(ad::slice_cols(gates, hidden_, hidden_));
    Var g = ad::tanh(ad::slice_cols(gates, 2 * hidden_, hidden_));
    Var o = ad::sigmoid(ad::slice_cols(gates, 3 * hidden_, hidden_));
    Var c_new = fresh ? ad::mul(i, g) : ad::add(ad::mul(f, c), ad::mul(i, g));
    Var h_new = ad::mul(o, ad::tanh(c_new));
    if (active == static_cast<double>(n)) {
      c = c_new;
      h = h_new;
    } else {
      Var keep = tape.constant(m);
      Var hold = tape.constant((1.0 - m.array()).matrix());
      c = ad::add(ad::scale_rows(c_new, keep), ad::scale_rows(c, hold));
      h = ad::add(ad::scale_rows(h_new, keep), ad::scale_rows(h, hold));
    }
    fresh = false;
    out[t] = h;
  }
  return out;
}

BiLstm::BiLstm(const std::string& name, int in, int hidden, Rng& rng)
    : fwd_(name + ".fwd", in, hidden, rng), bwd_(name + ".bwd", in, hidden, rng) {}

BiOutputs BiLstm::run(Tape& tape, const std::vector<Var>& steps,
                      const std::vector<Matrix>& step_mask) {
  BiOutputs out;
  out.forward = fwd_.run(tape, steps, step_mask, false);
  out.backward = bwd_.run(tape, steps, step_mask, true);
  return out;
}

std::vector<Parameter*> BiLstm::parameters() {
  auto ps = fwd_.parameters();
  for (auto* p : bwd_.parameters()) ps.push_back(p);
  return ps;
}

}  // namespace sentmask
