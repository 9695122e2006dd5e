#include "sentmask/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "sentmask/error.hpp"
#include "sentmask/transformer.hpp"

namespace sentmask {

DocBatch DocBatch::of(std::span<const ShapedDocument* const> docs) {
  if (docs.empty()) throw Error(ErrorCode::kInvalidArgument, "empty document batch");
  DocBatch batch;
  batch.docs.assign(docs.begin(), docs.end());
  batch.num_sentences = docs[0]->num_sentences;
  batch.num_tokens = docs[0]->num_tokens;
  batch.sentence_valid = Matrix::Zero(batch.size(), batch.num_sentences);
  for (int b = 0; b < batch.size(); ++b) {
    const auto& doc = *docs[b];
    if (doc.num_sentences != batch.num_sentences || doc.num_tokens != batch.num_tokens) {
      throw Error(ErrorCode::kInvalidArgument, "documents in a batch must share S and K");
    }
    for (int j = 0; j < batch.num_sentences; ++j) batch.sentence_valid(b, j) = doc.sentence_valid[j];
  }
  return batch;
}

DocBatch DocBatch::of(const ShapedDocument& doc) {
  const ShapedDocument* p = &doc;
  return of(std::span<const ShapedDocument* const>(&p, 1));
}

namespace {

struct Registry {
  std::mutex mu;
  std::map<std::string, EncoderFactory> factories;

  Registry() {
    factories.emplace("recurrent", [](const EncoderConfig& c, int v, Rng& r) {
      return std::unique_ptr<SentenceEncoder>(new RecurrentEncoder(c, v, r));
    });
    factories.emplace("transformer", [](const EncoderConfig& c, int v, Rng& r) {
      return std::unique_ptr<SentenceEncoder>(new TransformerEncoder(c, v, r));
    });
  }
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_encoder(const std::string& name, EncoderFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.factories[name] = std::move(factory);
}

std::unique_ptr<SentenceEncoder> make_encoder(const EncoderConfig& config, int vocab_size, Rng& rng) {
  auto& r = registry();
  EncoderFactory factory;
  {
    std::lock_guard lock(r.mu);
    auto it = r.factories.find(config.backend);
    if (it == r.factories.end()) {
      throw Error(ErrorCode::kConfig, "unknown encoder backend '" + config.backend + "'");
    }
    factory = it->second;
  }
  return factory(config, vocab_size, rng);
}

std::vector<std::string> registered_encoders() {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  std::vector<std::string> names;
  for (const auto& [name, f] : r.factories) names.push_back(name);
  return names;
}

int load_word_vectors(const std::string& path, const Vocabulary& vocab, Matrix& table) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open word vectors '" + path + "'");
  std::string line;
  int filled = 0;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    double v;
    while (fields >> v) values.push_back(v);
    // word2vec text exports start with a "count dim" header line.
    if (lineno == 1 && values.size() == 1) continue;
    if (static_cast<ad::Index>(values.size()) != table.cols()) {
      throw Error(ErrorCode::kVocabularyMismatch,
                  path + ":" + std::to_string(lineno) + ": expected " + std::to_string(table.cols()) +
                      " values, found " + std::to_string(values.size()));
    }
    const int id = vocab.id(token);
    if (id == kUnkId || id >= table.rows()) continue;
    for (ad::Index c = 0; c < table.cols(); ++c) table(id, c) = values[c];
    ++filled;
  }
  return filled;
}

void check_token_range(const DocBatch& batch, int vocab_size) {
  for (const auto* doc : batch.docs) {
    for (auto t : doc->tokens) {
      if (t < 0 || t >= vocab_size) {
        throw Error(ErrorCode::kVocabularyMismatch,
                    "vocabulary mismatch: token id " + std::to_string(t) + " in document '" + doc->id +
                        "' outside embedding table of " + std::to_string(vocab_size) + " rows");
      }
    }
  }
}

RecurrentEncoder::RecurrentEncoder(const EncoderConfig& config, int vocab_size, Rng& rng) {
  Matrix table(vocab_size, config.word_dim);
  for (ad::Index i = 0; i < table.rows(); ++i) {
    for (ad::Index j = 0; j < table.cols(); ++j) table(i, j) = rng.uniform(-0.1, 0.1);
  }
  table.row(kPadId).setZero();
  embeddings_ = Parameter("encoder.embeddings", std::move(table), !config.freeze_embeddings);
  rnn_ = BiLstm("encoder.rnn", config.word_dim, config.hidden, rng);
}

std::vector<Parameter*> RecurrentEncoder::parameters() {
  std::vector<Parameter*> ps{&embeddings_};
  for (auto* p : rnn_.parameters()) ps.push_back(p);
  return ps;
}

Var RecurrentEncoder::encode(Tape& tape, const DocBatch& batch) {
  const int S = batch.num_sentences;
  const int K = batch.num_tokens;
  const auto total = static_cast<ad::Index>(batch.size()) * S;
  check_token_range(batch, static_cast<int>(embeddings_.value.rows()));

  std::vector<int> active;  // flat (b*S + j) rows of valid sentences
  int longest = 0;
  for (int b = 0; b < batch.size(); ++b) {
    const auto& doc = *batch.docs[b];
    for (int j = 0; j < S; ++j) {
      if (!doc.is_valid(j)) continue;
      active.push_back(b * S + j);
      for (int k = 0; k < K; ++k) {
        if (doc.token_valid[static_cast<std::size_t>(j) * K + k]) longest = std::max(longest, k + 1);
      }
    }
  }
  if (active.empty()) return tape.constant(Matrix::Zero(total, dim()));

  Var table = tape.param(embeddings_);
  const auto n = static_cast<ad::Index>(active.size());
  std::vector<Var> steps;
  std::vector<Matrix> masks;
  std::vector<int> ids(active.size());
  for (int k = 0; k < longest; ++k) {
    Matrix m(n, 1);
    for (ad::Index r = 0; r < n; ++r) {
      const int b = active[r] / S;
      const int j = active[r] % S;
      const auto cell = static_cast<std::size_t>(j) * K + k;
      ids[r] = batch.docs[b]->tokens[cell];
      m(r, 0) = batch.docs[b]->token_valid[cell];
    }
    steps.push_back(ad::gather_rows(table, ids));
    masks.push_back(std::move(m));
  }
  auto out = rnn_.run(tape, steps, masks);
  const std::array<Var, 2> ends{out.forward.back(), out.backward.front()};
  return ad::scatter_rows(ad::hcat(ends), active, total);
}

DocumentHead::DocumentHead(int in, int hidden, Rng& rng)
    : rnn_("head.rnn", in, hidden, rng), out_("head.out", 2 * hidden, 2, rng) {}

std::vector<Parameter*> DocumentHead::parameters() {
  auto ps = rnn_.parameters();
  for (auto* p : out_.parameters()) ps.push_back(p);
  return ps;
}

Var DocumentHead::logits(Tape& tape, const std::vector<Var>& steps, const Matrix& valid,
                         std::optional<Var> mask) {
  const auto B = valid.rows();
  const auto S = valid.cols();
  if (static_cast<ad::Index>(steps.size()) != S) {
    throw Error(ErrorCode::kInvalidArgument, "DocumentHead: one step per sentence row expected");
  }
  std::vector<Var> inputs(steps.begin(), steps.end());
  std::vector<Matrix> masks(S);
  for (ad::Index j = 0; j < S; ++j) {
    masks[j] = valid.col(j);
    if (mask && masks[j].sum() > 0) {
      inputs[j] = ad::scale_rows(steps[j], ad::slice_cols(*mask, j, 1));
    }
  }
  auto out = rnn_.run(tape, inputs, masks);

  const Eigen::VectorXd counts = valid.rowwise().sum();
  std::optional<Var> pooled;
  for (ad::Index j = 0; j < S; ++j) {
    if (masks[j].sum() == 0) continue;
    Matrix w(B, 1);
    for (ad::Index b = 0; b < B; ++b) w(b, 0) = counts(b) > 0 ? valid(b, j) / counts(b) : 0.0;
    const std::array<Var, 2> both{out.forward[j], out.backward[j]};
    Var term = ad::scale_rows(ad::hcat(both), tape.constant(std::move(w)));
    pooled = pooled ? ad::add(*pooled, term) : term;
  }
  if (!pooled) pooled = tape.constant(Matrix::Zero(B, 2 * rnn_.hidden()));
  return out_.forward(tape, *pooled);
}

std::vector<Var> sentence_steps(Var vectors, int batch_size, int num_sentences) {
  std::vector<Var> steps(num_sentences);
  std::vector<int> rows(batch_size);
  for (int j = 0; j < num_sentences; ++j) {
    for (int b = 0; b < batch_size; ++b) rows[b] = b * num_sentences + j;
    steps[j] = ad::gather_rows(vectors, rows);
  }
  return steps;
}

ClassDistribution to_distribution(const Matrix& logits_row) {
  const Matrix p = ad::softmax_rows(logits_row);
  return ClassDistribution{{p(0, 0), p(0, 1)}};
}

SentenceEmbeddings encode_sentences(const ShapedDocument& doc, SentenceEncoder& encoder) {
  Tape tape(false);
  const auto batch = DocBatch::of(doc);
  Var v = encoder.encode(tape, batch);
  return SentenceEmbeddings{v.value(), doc.sentence_valid};
}

ClassDistribution classify(DocumentHead& head, const SentenceEmbeddings& embeddings,
                           const std::optional<std::vector<double>>& mask) {
  const auto S = embeddings.vectors.rows();
  if (static_cast<ad::Index>(embeddings.sentence_valid.size()) != S) {
    throw Error(ErrorCode::kInvalidArgument, "classify: validity length differs from S");
  }
  Matrix valid(1, S);
  for (ad::Index j = 0; j < S; ++j) valid(0, j) = embeddings.sentence_valid[j];
  Tape tape(false);
  Var vectors = tape.constant(embeddings.vectors);
  auto steps = sentence_steps(vectors, 1, static_cast<int>(S));
  std::optional<Var> m;
  if (mask) {
    if (static_cast<ad::Index>(mask->size()) != S) {
      throw Error(ErrorCode::kInvalidArgument, "classify: mask length differs from S");
    }
    Matrix mm(1, S);
    for (ad::Index j = 0; j < S; ++j) {
      const double v = (*mask)[j];
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "classify: mask outside [0,1]");
      if (!embeddings.sentence_valid[j] && v != 0.0) {
        throw Error(ErrorCode::kInvalidArgument, "classify: mask must be 0 on invalid rows");
      }
      mm(0, j) = v;
    }
    m = tape.constant(std::move(mm));
  }
  Var logits = head.logits(tape, steps, valid, m);
  return to_distribution(logits.value());
}

}  // namespace sentmask
