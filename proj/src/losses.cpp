#include "sentmask/losses.hpp"

#include "sentmask/error.hpp"

namespace sentmask {

nlohmann::json LossBreakdown::to_json() const {
  return {{"ce_labeled", ce_labeled},         {"kl_labeled", kl_labeled},
          {"consistency_ce", consistency_ce}, {"kl_unlabeled", kl_unlabeled},
          {"supervised", supervised},         {"unsupervised", unsupervised},
          {"total", total}};
}

Matrix draw_batch_noise(const DocBatch& batch, Rng& rng) {
  return draw_logistic_noise(batch.sentence_valid, rng);
}

namespace {

void require_nonempty(const DocBatch& batch) {
  if (batch.size() == 0) throw Error(ErrorCode::kEmptyDataset, "empty batch");
}

}  // namespace

MaskedObjective masked_vib_objective(Tape& tape, Model& model, const ForwardPass& pass,
                                     const Matrix& targets, const Matrix& noise, double temperature) {
  const auto& valid = pass.batch.sentence_valid;
  if (noise.rows() != valid.rows() || noise.cols() != valid.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "noise shape differs from batch shape");
  }
  Var mask = relaxed_mask(pass.mask_logits, noise, valid, temperature);
  Var logits = model.masked_logits(tape, pass, mask);
  const auto& cfg = model.config();
  MaskedObjective t;
  t.ce = ad::mean(ad::softmax_cross_entropy(logits, targets));
  t.kl = ad::mean(ad::bernoulli_kl(pass.mask_logits, valid, cfg.mask.keep_rate));
  t.objective = ad::add(t.ce, ad::scale(t.kl, cfg.loss.beta));
  return t;
}

LossTerm supervised_vib_loss(Tape& tape, Model& model, const DocBatch& batch,
                             const Matrix& noise, double temperature) {
  require_nonempty(batch);
  Matrix targets = Matrix::Zero(batch.size(), 2);
  for (int b = 0; b < batch.size(); ++b) {
    const auto& label = batch.docs[b]->label;
    if (!label) {
      throw Error(ErrorCode::kBadLabel, "unlabeled document in supervised batch: " + batch.docs[b]->id);
    }
    targets(b, *label) = 1.0;
  }
  const auto pass = model.begin(tape, batch);
  const auto t = masked_vib_objective(tape, model, pass, targets, noise, temperature);
  LossTerm out{t.objective, {}};
  out.parts.ce_labeled = t.ce.value()(0, 0);
  out.parts.kl_labeled = t.kl.value()(0, 0);
  out.parts.supervised = t.objective.value()(0, 0);
  out.parts.total = out.parts.supervised;
  return out;
}

Matrix teacher_targets(Model& model, const ForwardPass& pass, bool hard) {
  Tape teacher(false);
  Var vectors = teacher.constant(pass.embeddings.value());
  const auto steps = sentence_steps(vectors, pass.batch.size(), pass.batch.num_sentences);
  const Matrix probs =
      ad::softmax_rows(model.head().logits(teacher, steps, pass.batch.sentence_valid, std::nullopt).value());
  if (!hard) return probs;
  Matrix onehot = Matrix::Zero(probs.rows(), 2);
  for (ad::Index b = 0; b < probs.rows(); ++b) onehot(b, probs(b, 1) > probs(b, 0) ? 1 : 0) = 1.0;
  return onehot;
}

LossTerm consistency_vib_loss(Tape& tape, Model& model, const DocBatch& batch,
                              const Matrix& noise, double temperature) {
  require_nonempty(batch);
  const auto pass = model.begin(tape, batch);
  const Matrix targets = teacher_targets(model, pass, model.config().loss.hard_teacher);
  const auto t = masked_vib_objective(tape, model, pass, targets, noise, temperature);
  LossTerm out{t.objective, {}};
  out.parts.consistency_ce = t.ce.value()(0, 0);
  out.parts.kl_unlabeled = t.kl.value()(0, 0);
  out.parts.unsupervised = t.objective.value()(0, 0);
  return out;
}

LossBreakdown total_loss(const LossBreakdown& supervised, const LossBreakdown& unsupervised,
                         double alpha) {
  if (!(alpha >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be >= 0");
  LossBreakdown out;
  out.supervised = supervised.supervised;
  out.ce_labeled = supervised.ce_labeled;
  out.kl_labeled = supervised.kl_labeled;
  out.unsupervised = unsupervised.unsupervised;
  out.consistency_ce = unsupervised.consistency_ce;
  out.kl_unlabeled = unsupervised.kl_unlabeled;
  out.total = out.supervised + alpha * out.unsupervised;
  return out;
}

}  // namespace sentmask
