#include "sentmask/explainer.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include "sentmask/error.hpp"

namespace sentmask {

namespace {

std::string escape_html(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed6(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 6);
  return std::string(buf, end);
}

std::string sentence_text(const ShapedDocument& doc, int row) {
  return row < static_cast<int>(doc.original_sentences.size()) ? doc.original_sentences[row] : std::string{};
}

}  // namespace

std::vector<int> ExplanationRecord::top(int n) const {
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(n, 0)), ranked_indices.size());
  return {ranked_indices.begin(), ranked_indices.begin() + static_cast<std::ptrdiff_t>(k)};
}

ExplanationRecord rank_by_scores(const ShapedDocument& doc, const std::vector<double>& scores,
                                 int n_default, std::string checkpoint_id) {
  if (static_cast<int>(scores.size()) != doc.num_sentences) {
    throw Error(ErrorCode::kInvalidArgument, "one score per sentence row is required");
  }
  ExplanationRecord rec;
  rec.doc_id = doc.id;
  rec.n_default = n_default;
  rec.checkpoint_id = std::move(checkpoint_id);
  rec.ranked_indices = doc.valid_rows();
  std::stable_sort(rec.ranked_indices.begin(), rec.ranked_indices.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  for (int i : rec.ranked_indices) rec.scores.push_back(scores[i]);
  return rec;
}

ExplanationRecord explain(const ShapedDocument& doc, Model& model, int n_default) {
  if (model.checkpoint_id().empty()) {
    throw Error(ErrorCode::kUntrained, "explanations need a trained checkpoint");
  }
  return rank_by_scores(doc, model.keep_probabilities(doc), n_default, model.checkpoint_id());
}

std::vector<ExplanationRecord> explain_all(std::span<const ShapedDocument> docs, Model& model,
                                           int n_default) {
  std::vector<ExplanationRecord> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(explain(d, model, n_default));
  return out;
}

ExplanationRecord random_explanation(const ShapedDocument& doc, Rng& rng, int n_default) {
  ExplanationRecord rec;
  rec.doc_id = doc.id;
  rec.n_default = n_default;
  rec.checkpoint_id = "random";
  rec.ranked_indices = doc.valid_rows();
  rng.shuffle(rec.ranked_indices);
  const auto n = rec.ranked_indices.size();
  // Scores decrease along the permutation so the record stays well formed.
  for (std::size_t i = 0; i < n; ++i) rec.scores.push_back(static_cast<double>(n - i) / static_cast<double>(n));
  return rec;
}

nlohmann::json explanation_json(const ShapedDocument& doc, const ExplanationRecord& record) {
  nlohmann::json ranking = nlohmann::json::array();
  for (std::size_t i = 0; i < record.ranked_indices.size(); ++i) {
    const int row = record.ranked_indices[i];
    ranking.push_back({{"index", row}, {"score", record.scores[i]}, {"text", sentence_text(doc, row)}});
  }
  return {{"doc_id", record.doc_id},
          {"ranking", ranking},
          {"n_default", record.n_default},
          {"checkpoint", record.checkpoint_id}};
}

ExplanationRecord parse_explanation(const nlohmann::json& j) {
  try {
    ExplanationRecord rec;
    rec.doc_id = j.at("doc_id").get<std::string>();
    rec.n_default = j.at("n_default").get<int>();
    rec.checkpoint_id = j.at("checkpoint").get<std::string>();
    for (const auto& item : j.at("ranking")) {
      rec.ranked_indices.push_back(item.at("index").get<int>());
      rec.scores.push_back(item.at("score").get<double>());
    }
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("bad explanation record: ") + e.what());
  }
}

std::string render_report(const ShapedDocument& doc, const ExplanationRecord& record, int n,
                          const std::string& format) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "report needs n >= 1");
  if (format == "json") {
    auto j = explanation_json(doc, record);
    j["n"] = n;
    return j.dump(2) + "\n";
  }
  if (format != "html") throw Error(ErrorCode::kInvalidArgument, "unknown report format '" + format + "'");

  std::vector<int> rank_of(doc.num_sentences, -1);
  const auto top = record.top(n);
  for (std::size_t i = 0; i < top.size(); ++i) rank_of.at(top[i]) = static_cast<int>(i);
  std::vector<double> score_of(doc.num_sentences, 0.0);
  for (std::size_t i = 0; i < record.ranked_indices.size(); ++i) score_of.at(record.ranked_indices[i]) = record.scores[i];

  std::string html;
  html += "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  html += "<title>Explanation for " + escape_html(record.doc_id) + "</title>\n";
  html += "<style>\nbody { font-family: serif; max-width: 50em; margin: 2em auto; line-height: 1.5; }\n"
          ".highlight { background: #ffe38a; }\n.meta { color: #555; font-size: 0.9em; }\n</style>\n";
  html += "</head>\n<body>\n";
  html += "<h1>" + escape_html(record.doc_id) + "</h1>\n";
  html += "<p class=\"meta\">Top " + std::to_string(top.size()) + " of " +
          std::to_string(record.ranked_indices.size()) + " sentences; checkpoint " +
          escape_html(record.checkpoint_id) + "</p>\n<p class=\"document\">\n";
  for (int row = 0; row < static_cast<int>(doc.original_sentences.size()); ++row) {
    const auto text = escape_html(doc.original_sentences[row]);
    if (row < doc.num_sentences && rank_of[row] >= 0) {
      html += "<span class=\"highlight\" data-rank=\"" + std::to_string(rank_of[row] + 1) +
              "\" title=\"score " + fixed6(score_of[row]) + "\">" + text + "</span>\n";
    } else {
      html += text + "\n";
    }
  }
  html += "</p>\n</body>\n</html>\n";
  return html;
}

}  // namespace sentmask
