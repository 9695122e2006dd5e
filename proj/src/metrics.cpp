#include "sentmask/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "sentmask/error.hpp"

namespace sentmask {

namespace {

void invalidate_row(ShapedDocument& doc, int row) {
  doc.sentence_valid[row] = 0;
  for (int k = 0; k < doc.num_tokens; ++k) {
    const auto at = static_cast<std::size_t>(row) * doc.num_tokens + k;
    doc.tokens[at] = kPadId;
    doc.token_valid[at] = 0;
  }
}

// Moves valid rows to the front, preserving their order.
void compact_rows(ShapedDocument& doc) {
  ShapedDocument out = doc;
  std::fill(out.tokens.begin(), out.tokens.end(), kPadId);
  std::fill(out.token_valid.begin(), out.token_valid.end(), 0);
  std::fill(out.sentence_valid.begin(), out.sentence_valid.end(), 0);
  out.original_sentences.clear();
  int next = 0;
  for (int row = 0; row < doc.num_sentences; ++row) {
    if (!doc.is_valid(row)) continue;
    const auto from = static_cast<std::size_t>(row) * doc.num_tokens;
    const auto to = static_cast<std::size_t>(next) * doc.num_tokens;
    std::copy_n(doc.tokens.begin() + from, doc.num_tokens, out.tokens.begin() + to);
    std::copy_n(doc.token_valid.begin() + from, doc.num_tokens, out.token_valid.begin() + to);
    out.sentence_valid[next] = 1;
    if (row < static_cast<int>(doc.original_sentences.size())) {
      out.original_sentences.push_back(doc.original_sentences[row]);
    }
    ++next;
  }
  doc = std::move(out);
}

void check_ranking(const ShapedDocument& doc, const ExplanationRecord& ranked, int n) {
  if (n < 0) throw Error(ErrorCode::kInvalidArgument, "n must be >= 0");
  for (int row : ranked.ranked_indices) {
    if (row < 0 || row >= doc.num_sentences || !doc.is_valid(row)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "ranked index " + std::to_string(row) + " is not a valid row of " + doc.id);
    }
  }
}

void check_inputs(std::span<const ShapedDocument> docs, std::span<const ExplanationRecord> explanations) {
  if (docs.empty()) throw Error(ErrorCode::kEmptyDataset, "metrics over an empty test set");
  if (docs.size() != explanations.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one explanation per test document is required");
  }
}

std::vector<const ShapedDocument*> pointers(std::span<const ShapedDocument> docs) {
  std::vector<const ShapedDocument*> out;
  for (const auto& d : docs) out.push_back(&d);
  return out;
}

// Sorting first makes the sum independent of document order.
double ordered_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace

Predictor model_predictor(Model& model) {
  return [&model](std::span<const ShapedDocument* const> docs) { return model.predict(docs); };
}

Predictor constant_predictor(ClassDistribution dist) {
  return [dist](std::span<const ShapedDocument* const> docs) {
    return std::vector<ClassDistribution>(docs.size(), dist);
  };
}

ShapedDocument delete_top_sentences(const ShapedDocument& doc, const ExplanationRecord& ranked, int n,
                                    bool compact) {
  check_ranking(doc, ranked, n);
  ShapedDocument out = doc;
  for (int row : ranked.top(n)) invalidate_row(out, row);
  if (compact) compact_rows(out);
  return out;
}

ShapedDocument keep_top_sentences(const ShapedDocument& doc, const ExplanationRecord& ranked, int n,
                                  bool compact) {
  check_ranking(doc, ranked, n);
  ShapedDocument out = doc;
  std::vector<std::uint8_t> keep(doc.num_sentences, 0);
  for (int row : ranked.top(n)) keep[row] = 1;
  for (int row = 0; row < doc.num_sentences; ++row) {
    if (doc.is_valid(row) && !keep[row]) invalidate_row(out, row);
  }
  if (compact) compact_rows(out);
  return out;
}

double aopc(const Predictor& predict, std::span<const ShapedDocument> docs,
            std::span<const ExplanationRecord> explanations, int n, bool compact) {
  check_inputs(docs, explanations);
  std::vector<ShapedDocument> perturbed;
  perturbed.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    perturbed.push_back(delete_top_sentences(docs[i], explanations[i], n, compact));
  }
  const auto before = predict(pointers(docs));
  const auto after = predict(pointers(perturbed));
  std::vector<double> drops(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const int c = before[i].argmax();
    drops[i] = before[i].probs[c] - after[i].probs[c];
  }
  return ordered_sum(std::move(drops)) / static_cast<double>(docs.size() + 1);
}

double posthoc_accuracy(const Predictor& predict, std::span<const ShapedDocument> docs,
                        std::span<const ExplanationRecord> explanations, int n, bool compact) {
  check_inputs(docs, explanations);
  std::vector<ShapedDocument> kept;
  kept.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    kept.push_back(keep_top_sentences(docs[i], explanations[i], n, compact));
  }
  const auto full = predict(pointers(docs));
  const auto top = predict(pointers(kept));
  int same = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) same += full[i].argmax() == top[i].argmax();
  return static_cast<double>(same) / static_cast<double>(docs.size());
}

double accuracy(const Predictor& predict, std::span<const ShapedDocument> docs) {
  if (docs.empty()) throw Error(ErrorCode::kEmptyDataset, "accuracy over an empty set");
  const auto preds = predict(pointers(docs));
  int correct = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!docs[i].label) throw Error(ErrorCode::kBadLabel, "test document without label: " + docs[i].id);
    correct += preds[i].argmax() == *docs[i].label;
  }
  return static_cast<double>(correct) / static_cast<double>(docs.size());
}

nlohmann::json MetricsResult::to_json() const {
  return {{"accuracy", accuracy}, {"aopc", aopc}, {"posthoc", posthoc},
          {"n", n},               {"T", T},       {"checkpoint", checkpoint}};
}

MetricsResult evaluate(const Predictor& predict, std::span<const ShapedDocument> docs,
                       std::span<const ExplanationRecord> explanations, int n, bool compact,
                       std::string checkpoint) {
  MetricsResult r;
  r.accuracy = accuracy(predict, docs);
  r.aopc = aopc(predict, docs, explanations, n, compact);
  r.posthoc = posthoc_accuracy(predict, docs, explanations, n, compact);
  r.n = n;
  r.T = static_cast<int>(docs.size());
  r.checkpoint = std::move(checkpoint);
  return r;
}

}  // namespace sentmask
