#ifndef SENTMASK_LAYERS_HPP
#define SENTMASK_LAYERS_HPP

#include <string>
#include <vector>

#include "sentmask/random.hpp"
#include "sentmask/tape.hpp"

namespace sentmask {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

// Glorot-uniform initialisation drawn from a portable generator.
Matrix glorot_uniform(int rows, int cols, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);

  Var forward(Tape& tape, Var x);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  int in_dim() const { return static_cast<int>(weight_.value.rows()); }
  int out_dim() const { return static_cast<int>(weight_.value.cols()); }

 private:
  Parameter weight_;
  Parameter bias_;
};

// Single-direction LSTM; gate columns are ordered input, forget, cell, output.
class Lstm {
 public:
  Lstm() = default;
  Lstm(const std::string& name, int in, int hidden, Rng& rng);

  // Runs over steps[0..T) (or reversed). Rows whose step mask is 0 carry the
  // previous state unchanged, so padding never perturbs the recurrence.
  // Returns the hidden state after every step, aligned with `steps`.
  std::vector<Var> run(Tape& tape, const std::vector<Var>& steps,
                       const std::vector<Matrix>& step_mask, bool reverse);

  std::vector<Parameter*> parameters() { return {&input_, &recurrent_, &bias_}; }
  int hidden() const { return hidden_; }

 private:
  Parameter input_;
  Parameter recurrent_;
  Parameter bias_;
  int hidden_ = 0;
};

struct BiOutputs {
  std::vector<Var> forward;   // state after reading steps [0..t]
  std::vector<Var> backward;  // state after reading steps [t..T)
};

class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(const std::string& name, int in, int hidden, Rng& rng);

  BiOutputs run(Tape& tape, const std::vector<Var>& steps, const std::vector<Matrix>& step_mask);
  std::vector<Parameter*> parameters();
  int hidden() const { return fwd_.hidden(); }

 private:
  Lstm fwd_;
  Lstm bwd_;
};

}  // namespace sentmask

#endif  // SENTMASK_LAYERS_HPP
