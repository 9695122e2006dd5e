#ifndef SENTMASK_EMBEDDER_HPP
#define SENTMASK_EMBEDDER_HPP

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sentmask/config.hpp"
#include "sentmask/ingest.hpp"
#include "sentmask/layers.hpp"

namespace sentmask {

// A batch of equally shaped documents. Sentence row j of document b lives at
// row b * S + j of every (B*S) x d matrix built from it.
struct DocBatch {
  std::vector<const ShapedDocument*> docs;
  int num_sentences = 0;
  int num_tokens = 0;
  Matrix sentence_valid;  // B x S, entries 0 or 1

  static DocBatch of(std::span<const ShapedDocument* const> docs);
  static DocBatch of(const ShapedDocument& doc);
  int size() const { return static_cast<int>(docs.size()); }
  // B x 1 validity column of sentence row j.
  Matrix step_mask(int j) const { return sentence_valid.col(j); }
  bool any_valid(int j) const { return sentence_valid.col(j).sum() > 0; }
};

struct SentenceEmbeddings {
  Matrix vectors;                            // S x d
  std::vector<std::uint8_t> sentence_valid;  // S
};

struct ClassDistribution {
  std::array<double, 2> probs{0.5, 0.5};
  int argmax() const { return probs[1] > probs[0] ? 1 : 0; }
};

// Interchangeable sentence encoders. Implementations register a factory by
// name; the built-in names are "recurrent" and "transformer".
class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;

  virtual std::string backend() const = 0;
  virtual int dim() const = 0;
  // (B*S) x dim sentence vectors; invalid rows are zero.
  virtual Var encode(Tape& tape, const DocBatch& batch) = 0;
  virtual std::vector<Parameter*> parameters() = 0;
};

using EncoderFactory = std::function<std::unique_ptr<SentenceEncoder>(
    const EncoderConfig& config, int vocab_size, Rng& rng)>;

void register_encoder(const std::string& name, EncoderFactory factory);
std::unique_ptr<SentenceEncoder> make_encoder(const EncoderConfig& config, int vocab_size, Rng& rng);
std::vector<std::string> registered_encoders();

// Rows of the vocabulary found in a "token v1 ... vD" file are overwritten;
// the file's width must equal the table's. Returns the number of rows filled.
int load_word_vectors(const std::string& path, const Vocabulary& vocab, Matrix& table);

// Throws Error(kVocabularyMismatch) if any token id falls outside [0, vocab_size).
void check_token_range(const DocBatch& batch, int vocab_size);

// Word embeddings -> BiLSTM over each sentence's tokens; the sentence vector
// concatenates the final forward and backward states.
class RecurrentEncoder : public SentenceEncoder {
 public:
  RecurrentEncoder(const EncoderConfig& config, int vocab_size, Rng& rng);

  std::string backend() const override { return "recurrent"; }
  int dim() const override { return 2 * rnn_.hidden(); }
  Var encode(Tape& tape, const DocBatch& batch) override;
  std::vector<Parameter*> parameters() override;

  Parameter& embeddings() { return embeddings_; }

 private:
  Parameter embeddings_;
  BiLstm rnn_;
};

// BiLSTM over the (optionally masked) sentence vectors, mean-pooled over valid
// rows, then a 2-way affine layer.
class DocumentHead {
 public:
  DocumentHead() = default;
  DocumentHead(int in, int hidden, Rng& rng);

  // steps[j] is B x d (sentence j of every document); valid is B x S. mask,
  // if given, is B x S and scales step j row-wise before the recurrence.
  // Returns B x 2 logits.
  Var logits(Tape& tape, const std::vector<Var>& steps, const Matrix& valid,
             std::optional<Var> mask);
  std::vector<Parameter*> parameters();

 private:
  BiLstm rnn_;
  Linear out_;
};

// Splits (B*S) x d sentence vectors into S per-step B x d blocks.
std::vector<Var> sentence_steps(Var vectors, int batch_size, int num_sentences);

ClassDistribution to_distribution(const Matrix& logits_row);

SentenceEmbeddings encode_sentences(const ShapedDocument& doc, SentenceEncoder& encoder);
// Mask entries scale sentence vectors before the document encoder; an all-ones
// mask reproduces the unmasked output exactly.
ClassDistribution classify(DocumentHead& head, const SentenceEmbeddings& embeddings,
                           const std::optional<std::vector<double>>& mask = std::nullopt);

}  // namespace sentmask

#endif  // SENTMASK_EMBEDDER_HPP
