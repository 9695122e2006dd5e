#ifndef SENTMASK_METRICS_HPP
#define SENTMASK_METRICS_HPP

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sentmask/explainer.hpp"

namespace sentmask {

// Batched class distributions for documents, in inference mode.
using Predictor = std::function<std::vector<ClassDistribution>(std::span<const ShapedDocument* const>)>;

Predictor model_predictor(Model& model);
// Control: ignores its input.
Predictor constant_predictor(ClassDistribution dist);

// Copy of doc with the first n ranked rows invalidated (all-pad, invalid).
// Remaining rows keep their positions unless compact is set, in which case
// they are moved up in order.
ShapedDocument delete_top_sentences(const ShapedDocument& doc, const ExplanationRecord& ranked, int n,
                                    bool compact = false);
// Copy of doc keeping only the first n ranked rows.
ShapedDocument keep_top_sentences(const ShapedDocument& doc, const ExplanationRecord& ranked, int n,
                                  bool compact = false);

// (1 / (T + 1)) * sum_i [f(x_i) - f(x_i without top n)], f being the
// probability of the class predicted for the unperturbed document.
double aopc(const Predictor& predict, std::span<const ShapedDocument> docs,
            std::span<const ExplanationRecord> explanations, int n, bool compact = false);
// Fraction of documents whose prediction from the top n rows alone matches
// the prediction from the full document.
double posthoc_accuracy(const Predictor& predict, std::span<const ShapedDocument> docs,
                        std::span<const ExplanationRecord> explanations, int n, bool compact = false);
double accuracy(const Predictor& predict, std::span<const ShapedDocument> docs);

struct MetricsResult {
  double accuracy = 0.0;
  double aopc = 0.0;
  double posthoc = 0.0;
  int n = 0;
  int T = 0;
  std::string checkpoint;

  nlohmann::json to_json() const;
};

MetricsResult evaluate(const Predictor& predict, std::span<const ShapedDocument> docs,
                       std::span<const ExplanationRecord> explanations, int n, bool compact = false,
                       std::string checkpoint = {});

}  // namespace sentmask

#endif  // SENTMASK_METRICS_HPP
