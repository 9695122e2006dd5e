#ifndef SENTMASK_LOSSES_HPP
#define SENTMASK_LOSSES_HPP

#include <span>

#include "sentmask/model.hpp"

namespace sentmask {

// Scalar values of every loss term for one step. Fragments leave the terms
// of the other objective at zero.
struct LossBreakdown {
  double supervised = 0.0;
  double unsupervised = 0.0;
  double total = 0.0;
  double kl_labeled = 0.0;
  double kl_unlabeled = 0.0;
  double ce_labeled = 0.0;
  double consistency_ce = 0.0;

  nlohmann::json to_json() const;
};

// A differentiable objective together with its logged values.
struct LossTerm {
  Var objective;  // 1 x 1
  LossBreakdown parts;
};

// CE(targets, masked path) + beta * KL(pi || r), each averaged over the batch.
// Both objectives below are this with different targets.
struct MaskedObjective {
  Var ce;  // 1 x 1
  Var kl;  // 1 x 1
  Var objective;
};
MaskedObjective masked_vib_objective(Tape& tape, Model& model, const ForwardPass& pass,
                                     const Matrix& targets, const Matrix& noise, double temperature);

// Noise for one batch: B x S logistic noise, 0 on invalid rows. Tests freeze it.
Matrix draw_batch_noise(const DocBatch& batch, Rng& rng);

// Mean over documents of CE(label, masked path) + beta * KL(pi || r).
LossTerm supervised_vib_loss(Tape& tape, Model& model, const DocBatch& batch,
                             const Matrix& noise, double temperature);

// Mean over documents of CE(teacher, masked path) + beta * KL(pi || r). The
// teacher is the unmasked classifier evaluated on a separate gradient-free
// tape, so no gradient flows through it.
LossTerm consistency_vib_loss(Tape& tape, Model& model, const DocBatch& batch,
                              const Matrix& noise, double temperature);

// Teacher targets (B x 2): soft distributions, or one-hot argmax when hard.
Matrix teacher_targets(Model& model, const ForwardPass& pass, bool hard);

LossBreakdown total_loss(const LossBreakdown& supervised, const LossBreakdown& unsupervised,
                         double alpha);

}  // namespace sentmask

#endif  // SENTMASK_LOSSES_HPP
