#ifndef SENTMASK_EXPLAINER_HPP
#define SENTMASK_EXPLAINER_HPP

#include <span>
#include <string>
#include <vector>

#include "sentmask/model.hpp"

namespace sentmask {

inline constexpr int kDefaultTopN = 20;

// Valid sentence rows by descending keep-probability, ties to the lower index.
struct ExplanationRecord {
  std::string doc_id;
  std::vector<int> ranked_indices;
  std::vector<double> scores;
  int n_default = kDefaultTopN;
  std::string checkpoint_id;

  // Up to n leading indices.
  std::vector<int> top(int n) const;
};

ExplanationRecord rank_by_scores(const ShapedDocument& doc, const std::vector<double>& scores,
                                 int n_default = kDefaultTopN, std::string checkpoint_id = {});

// Throws Error(kUntrained) unless the model carries a checkpoint id.
ExplanationRecord explain(const ShapedDocument& doc, Model& model, int n_default = kDefaultTopN);
std::vector<ExplanationRecord> explain_all(std::span<const ShapedDocument> docs, Model& model,
                                           int n_default = kDefaultTopN);

// Control explainer: a uniformly random permutation of the valid rows.
ExplanationRecord random_explanation(const ShapedDocument& doc, Rng& rng,
                                     int n_default = kDefaultTopN);

// format is "json" or "html"; n >= 1 sentences are highlighted.
std::string render_report(const ShapedDocument& doc, const ExplanationRecord& record, int n,
                          const std::string& format);
nlohmann::json explanation_json(const ShapedDocument& doc, const ExplanationRecord& record);
ExplanationRecord parse_explanation(const nlohmann::json& j);

}  // namespace sentmask

#endif  // SENTMASK_EXPLAINER_HPP
