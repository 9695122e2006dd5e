#ifndef SENTMASK_MASKNET_HPP
#define SENTMASK_MASKNET_HPP

#include <optional>
#include <vector>

#include "sentmask/config.hpp"
#include "sentmask/embedder.hpp"
#include "sentmask/layers.hpp"
#include "sentmask/random.hpp"

namespace sentmask {

// Per-sentence keep decisions. Invalid rows carry logit -inf, prob 0 and
// sample 0. Training samples are relaxed into (0,1); inference samples are
// exactly 0 or 1.
struct MaskVector {
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<double> sample;
  std::vector<std::uint8_t> sentence_valid;
};

// Factorised Bernoulli(keep_rate) prior over sentence masks.
struct MaskPrior {
  explicit MaskPrior(double keep_rate);
  double keep_rate;
};

// Bidirectional recurrence over the sentence vectors, so every logit sees the
// whole document, followed by a per-position affine map to a scalar.
class MaskNet {
 public:
  MaskNet() = default;
  MaskNet(int in, int hidden, Rng& rng);

  // steps[j] is B x d; valid is B x S. Returns B x S logits (finite; callers
  // apply validity).
  Var logits(Tape& tape, const std::vector<Var>& steps, const Matrix& valid);
  std::vector<Parameter*> parameters();

 private:
  BiLstm rnn_;
  Linear proj_;
};

// Logistic noise log(u) - log(1-u), u ~ U(0,1), drawn row-major for valid
// entries only; invalid entries are 0.
Matrix draw_logistic_noise(const Matrix& valid, Rng& rng);

// Binary-Concrete relaxation sigmoid((logits + noise) / temperature), zeroed
// on invalid entries. Differentiable with respect to logits.
Var relaxed_mask(Var logits, const Matrix& noise, const Matrix& valid, double temperature);

// Single-document operations.
std::vector<double> mask_logits(MaskNet& net, const SentenceEmbeddings& embeddings);
MaskVector sample_relaxed(const std::vector<double>& logits, double temperature, Rng& noise);
// Threshold mode keeps pi >= 0.5; top_n keeps the n most probable valid rows,
// ties going to the lower index. An empty validity vector means all valid.
MaskVector harden(const std::vector<double>& probs, HardenMode mode, std::optional<int> n = std::nullopt,
                  const std::vector<std::uint8_t>& sentence_valid = {});
// Sum over valid rows of KL(Bern(pi) || Bern(r)) with 0 log 0 = 0. An empty
// validity vector means all rows are valid.
double kl_to_prior(const std::vector<double>& probs, const MaskPrior& prior,
                   const std::vector<std::uint8_t>& sentence_valid = {});
SentenceEmbeddings apply_mask(const SentenceEmbeddings& embeddings, const MaskVector& mask);

// Logits with -inf on invalid rows, and the matching probabilities.
std::vector<double> probs_from_logits(const std::vector<double>& logits);

}  // namespace sentmask

#endif  // SENTMASK_MASKNET_HPP
