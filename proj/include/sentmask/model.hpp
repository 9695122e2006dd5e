#ifndef SENTMASK_MODEL_HPP
#define SENTMASK_MODEL_HPP

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sentmask/config.hpp"
#include "sentmask/embedder.hpp"
#include "sentmask/masknet.hpp"

namespace sentmask {

// State shared by every path of one batched forward computation.
struct ForwardPass {
  DocBatch batch;
  Var embeddings;          // (B*S) x d
  std::vector<Var> steps;  // S blocks of B x d
  Var mask_logits;         // B x S
};

class Model {
 public:
  // vocab, when given, is used to map pretrained word vectors.
  Model(const TrainingConfig& config, int vocab_size, Rng& init_rng, const Vocabulary* vocab = nullptr);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ForwardPass begin(Tape& tape, const DocBatch& batch);
  // B x 2 logits with sentence vectors scaled by mask (B x S).
  Var masked_logits(Tape& tape, const ForwardPass& pass, Var mask);
  Var unmasked_logits(Tape& tape, const ForwardPass& pass);

  // Inference, no sampling noise. Probabilities are 0 on invalid rows.
  std::vector<double> keep_probabilities(const ShapedDocument& doc);
  // Classifies with the hardened inference mask (config mask.harden_mode).
  std::vector<ClassDistribution> predict(std::span<const ShapedDocument* const> docs);
  ClassDistribution predict(const ShapedDocument& doc);
  ClassDistribution predict_unmasked(const ShapedDocument& doc);

  // Fixed order; names are unique and stable across runs.
  std::vector<Parameter*> parameters();
  std::vector<Matrix> snapshot();
  void restore(const std::vector<Matrix>& values);

  const TrainingConfig& config() const { return config_; }
  int vocab_size() const { return vocab_size_; }
  SentenceEncoder& encoder() { return *encoder_; }
  MaskNet& masknet() { return masknet_; }
  DocumentHead& head() { return head_; }

  // 64-bit FNV-1a over parameter names and values, as hex.
  std::string fingerprint();
  // Set when the weights come from training or a checkpoint; explanations
  // refuse to run on freshly initialised weights.
  const std::string& checkpoint_id() const { return checkpoint_id_; }
  void set_checkpoint_id(std::string id) { checkpoint_id_ = std::move(id); }

 private:
  Matrix hardened_mask(const Matrix& logits, const Matrix& valid) const;

  TrainingConfig config_;
  int vocab_size_;
  std::unique_ptr<SentenceEncoder> encoder_;
  MaskNet masknet_;
  DocumentHead head_;
  std::string checkpoint_id_;
};

}  // namespace sentmask

#endif  // SENTMASK_MODEL_HPP
