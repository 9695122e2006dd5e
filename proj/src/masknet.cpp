#include "sentmask/masknet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sentmask/error.hpp"

namespace sentmask {

namespace {

std::vector<std::uint8_t> validity_or_all(const std::vector<std::uint8_t>& valid, std::size_t n) {
  if (valid.empty()) return std::vector<std::uint8_t>(n, 1);
  if (valid.size() != n) throw Error(ErrorCode::kInvalidArgument, "validity length differs from mask length");
  return valid;
}

}  // namespace

MaskPrior::MaskPrior(double keep_rate) : keep_rate(keep_rate) {
  if (!(keep_rate > 0.0 && keep_rate < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "prior keep rate must lie in (0,1)");
  }
}

MaskNet::MaskNet(int in, int hidden, Rng& rng)
    : rnn_("mask.rnn", in, hidden, rng), proj_("mask.proj", 2 * hidden, 1, rng) {}

std::vector<Parameter*> MaskNet::parameters() {
  auto ps = rnn_.parameters();
  for (auto* p : proj_.parameters()) ps.push_back(p);
  return ps;
}

Var MaskNet::logits(Tape& tape, const std::vector<Var>& steps, const Matrix& valid) {
  const auto B = valid.rows();
  const auto S = valid.cols();
  std::vector<Matrix> masks(S);
  for (ad::Index j = 0; j < S; ++j) masks[j] = valid.col(j);
  auto out = rnn_.run(tape, steps, masks);
  std::vector<Var> columns;
  columns.reserve(S);
  for (ad::Index j = 0; j < S; ++j) {
    if (masks[j].sum() == 0) {
      columns.push_back(tape.constant(Matrix::Zero(B, 1)));
      continue;
    }
    const std::array<Var, 2> both{out.forward[j], out.backward[j]};
    columns.push_back(proj_.forward(tape, ad::hcat(both)));
  }
  return ad::hcat(columns);
}

Matrix draw_logistic_noise(const Matrix& valid, Rng& rng) {
  Matrix noise = Matrix::Zero(valid.rows(), valid.cols());
  for (ad::Index i = 0; i < valid.rows(); ++i) {
    for (ad::Index j = 0; j < valid.cols(); ++j) {
      if (valid(i, j) == 0) continue;
      const double u = rng.uniform();
      noise(i, j) = std::log(u) - std::log1p(-u);
    }
  }
  return noise;
}

Var relaxed_mask(Var logits, const Matrix& noise, const Matrix& valid, double temperature) {
  if (!(temperature > 0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be > 0");
  Tape& tape = *logits.tape;
  Var perturbed = ad::add(logits, tape.constant(noise));
  Var relaxed = ad::sigmoid(ad::scale(perturbed, 1.0 / temperature));
  return ad::mul(relaxed, tape.constant(valid));
}

std::vector<double> probs_from_logits(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::isinf(logits[j]) && logits[j] < 0 ? 0.0 : ad::sigmoid(logits[j]);
  }
  return p;
}

std::vector<double> mask_logits(MaskNet& net, const SentenceEmbeddings& embeddings) {
  const auto S = embeddings.vectors.rows();
  Matrix valid(1, S);
  for (ad::Index j = 0; j < S; ++j) valid(0, j) = embeddings.sentence_valid[j];
  Tape tape(false);
  Var vectors = tape.constant(embeddings.vectors);
  Var logits = net.logits(tape, sentence_steps(vectors, 1, static_cast<int>(S)), valid);
  std::vector<double> out(S);
  for (ad::Index j = 0; j < S; ++j) {
    out[j] = embeddings.sentence_valid[j] ? logits.value()(0, j)
                                          : -std::numeric_limits<double>::infinity();
  }
  return out;
}

MaskVector sample_relaxed(const std::vector<double>& logits, double temperature, Rng& noise) {
  if (!(temperature > 0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be > 0");
  MaskVector m;
  m.logits = logits;
  m.probs = probs_from_logits(logits);
  m.sample.assign(logits.size(), 0.0);
  m.sentence_valid.assign(logits.size(), 0);
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (std::isinf(logits[j]) && logits[j] < 0) continue;
    m.sentence_valid[j] = 1;
    const double u = noise.uniform();
    m.sample[j] = ad::sigmoid((logits[j] + std::log(u) - std::log1p(-u)) / temperature);
  }
  return m;
}

MaskVector harden(const std::vector<double>& probs, HardenMode mode, std::optional<int> n,
                  const std::vector<std::uint8_t>& sentence_valid) {
  MaskVector m;
  m.sentence_valid = validity_or_all(sentence_valid, probs.size());
  m.probs = probs;
  m.logits.resize(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!m.sentence_valid[j]) m.probs[j] = 0.0;
    m.logits[j] = m.sentence_valid[j] ? std::log(probs[j]) - std::log1p(-probs[j])
                                      : -std::numeric_limits<double>::infinity();
  }
  m.sample.assign(probs.size(), 0.0);
  if (mode == HardenMode::kThreshold) {
    for (std::size_t j = 0; j < probs.size(); ++j) {
      if (m.sentence_valid[j] && m.probs[j] >= 0.5) m.sample[j] = 1.0;
    }
    return m;
  }
  if (!n || *n < 1) throw Error(ErrorCode::kInvalidArgument, "top_n hardening needs n >= 1");
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (m.sentence_valid[j]) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return m.probs[a] > m.probs[b]; });
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(*n), order.size());
  for (std::size_t i = 0; i < keep; ++i) m.sample[order[i]] = 1.0;
  return m;
}

double kl_to_prior(const std::vector<double>& probs, const MaskPrior& prior,
                   const std::vector<std::uint8_t>& sentence_valid) {
  const auto valid = validity_or_all(sentence_valid, probs.size());
  const double r = prior.keep_rate;
  double kl = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!valid[j]) continue;
    const double p = probs[j];
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "probabilities must lie in [0,1]");
    if (p > 0.0) kl += p * std::log(p / r);
    if (p < 1.0) kl += (1.0 - p) * std::log((1.0 - p) / (1.0 - r));
  }
  // Rounding can leave a -1e-17 residue when pi == r.
  return std::max(kl, 0.0);
}

SentenceEmbeddings apply_mask(const SentenceEmbeddings& embeddings, const MaskVector& mask) {
  if (static_cast<ad::Index>(mask.sample.size()) != embeddings.vectors.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "apply_mask: mask length differs from S");
  }
  SentenceEmbeddings out = embeddings;
  for (ad::Index j = 0; j < out.vectors.rows(); ++j) out.vectors.row(j) *= mask.sample[j];
  return out;
}

}  // namespace sentmask
