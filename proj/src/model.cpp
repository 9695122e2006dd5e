#include "sentmask/model.hpp"

#include <algorithm>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "sentmask/error.hpp"
#include "sentmask/transformer.hpp"

namespace sentmask {

namespace {
constexpr int kInferenceBatch = 32;
}  // namespace

Model::Model(const TrainingConfig& config, int vocab_size, Rng& init_rng, const Vocabulary* vocab)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  if (vocab_size < 2) throw Error(ErrorCode::kInvalidArgument, "vocabulary must include PAD and UNK");
  encoder_ = make_encoder(config_.encoder, vocab_size, init_rng);
  const int d = encoder_->dim();
  masknet_ = MaskNet(d, config_.mask.hidden, init_rng);
  head_ = DocumentHead(d, config_.head.hidden, init_rng);

  if (auto* rec = dynamic_cast<RecurrentEncoder*>(encoder_.get());
      rec && vocab && !config_.encoder.embeddings_path.empty()) {
    load_word_vectors(config_.encoder.embeddings_path, *vocab, rec->embeddings().value);
  }
  if (auto* tr = dynamic_cast<TransformerEncoder*>(encoder_.get());
      tr && !config_.encoder.pretrained_path.empty()) {
    tr->load_safetensors(config_.encoder.pretrained_path);
  }
}

ForwardPass Model::begin(Tape& tape, const DocBatch& batch) {
  ForwardPass pass{batch, {}, {}, {}};
  pass.embeddings = encoder_->encode(tape, pass.batch);
  pass.steps = sentence_steps(pass.embeddings, pass.batch.size(), pass.batch.num_sentences);
  pass.mask_logits = masknet_.logits(tape, pass.steps, pass.batch.sentence_valid);
  return pass;
}

Var Model::masked_logits(Tape& tape, const ForwardPass& pass, Var mask) {
  return head_.logits(tape, pass.steps, pass.batch.sentence_valid, mask);
}

Var Model::unmasked_logits(Tape& tape, const ForwardPass& pass) {
  return head_.logits(tape, pass.steps, pass.batch.sentence_valid, std::nullopt);
}

Matrix Model::hardened_mask(const Matrix& logits, const Matrix& valid) const {
  Matrix m = Matrix::Zero(logits.rows(), logits.cols());
  for (ad::Index b = 0; b < logits.rows(); ++b) {
    std::vector<double> probs(logits.cols());
    std::vector<std::uint8_t> v(logits.cols());
    for (ad::Index j = 0; j < logits.cols(); ++j) {
      v[j] = valid(b, j) != 0;
      probs[j] = v[j] ? ad::sigmoid(logits(b, j)) : 0.0;
    }
    const auto h = harden(probs, config_.mask.harden_mode, config_.mask.top_n, v);
    for (ad::Index j = 0; j < logits.cols(); ++j) m(b, j) = h.sample[j];
  }
  return m;
}

std::vector<double> Model::keep_probabilities(const ShapedDocument& doc) {
  Tape tape(false);
  const auto pass = begin(tape, DocBatch::of(doc));
  std::vector<double> probs(doc.num_sentences, 0.0);
  for (int j = 0; j < doc.num_sentences; ++j) {
    if (doc.is_valid(j)) probs[j] = ad::sigmoid(pass.mask_logits.value()(0, j));
  }
  return probs;
}

std::vector<ClassDistribution> Model::predict(std::span<const ShapedDocument* const> docs) {
  std::vector<ClassDistribution> out;
  out.reserve(docs.size());
  for (std::size_t start = 0; start < docs.size(); start += kInferenceBatch) {
    const auto count = std::min<std::size_t>(kInferenceBatch, docs.size() - start);
    Tape tape(false);
    const auto pass = begin(tape, DocBatch::of(docs.subspan(start, count)));
    Var mask = tape.constant(hardened_mask(pass.mask_logits.value(), pass.batch.sentence_valid));
    const Matrix logits = masked_logits(tape, pass, mask).value();
    for (ad::Index b = 0; b < logits.rows(); ++b) out.push_back(to_distribution(logits.row(b)));
  }
  return out;
}

ClassDistribution Model::predict(const ShapedDocument& doc) {
  const ShapedDocument* p = &doc;
  return predict(std::span<const ShapedDocument* const>(&p, 1)).front();
}

ClassDistribution Model::predict_unmasked(const ShapedDocument& doc) {
  Tape tape(false);
  const auto pass = begin(tape, DocBatch::of(doc));
  return to_distribution(unmasked_logits(tape, pass).value());
}

std::vector<Parameter*> Model::parameters() {
  auto ps = encoder_->parameters();
  for (auto* p : masknet_.parameters()) ps.push_back(p);
  for (auto* p : head_.parameters()) ps.push_back(p);
  return ps;
}

std::vector<Matrix> Model::snapshot() {
  std::vector<Matrix> values;
  for (auto* p : parameters()) values.push_back(p->value);
  return values;
}

void Model::restore(const std::vector<Matrix>& values) {
  auto ps = parameters();
  if (values.size() != ps.size()) throw Error(ErrorCode::kCheckpoint, "parameter count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (values[i].rows() != ps[i]->value.rows() || values[i].cols() != ps[i]->value.cols()) {
      throw Error(ErrorCode::kCheckpoint, "shape mismatch for " + ps[i]->name);
    }
    ps[i]->value = values[i];
  }
}

std::string Model::fingerprint() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (auto* p : parameters()) {
    mix(p->name.data(), p->name.size());
    mix(p->value.data(), sizeof(double) * static_cast<std::size_t>(p->value.size()));
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace sentmask
