#include "sentmask/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "sentmask/error.hpp"
#include "sentmask/random.hpp"

namespace sentmask {

namespace {

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ne", "po", "ra", "si", "tu",
                                      "va", "we", "bo", "de", "fi", "go", "ha", "ju"};
constexpr int kSyllableCount = 16;

std::string pseudo_word(int index, const std::string& prefix) {
  std::string w = prefix;
  do {
    w += kSyllables[index % kSyllableCount];
    index /= kSyllableCount;
  } while (index > 0);
  return w;
}

}  // namespace

void SynthConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, std::string("synth: ") + what);
  };
  need(documents >= 1, "documents must be >= 1");
  need(sentences >= 1, "sentences must be >= 1");
  need(signal >= 1 && signal <= sentences, "signal must lie in [1, sentences]");
  need(labeled >= 0 && unlabeled >= 0 && test >= 0, "partition sizes must be >= 0");
  need(labeled + unlabeled + test <= documents, "partitions exceed the document count");
  need(min_words >= 1 && max_words >= min_words, "word counts must satisfy 1 <= min <= max");
  need(distractor_vocab >= 1 && markers_per_class >= 1, "vocabularies must be non-empty");
  need(markers_per_signal >= 1 && markers_per_signal <= min_words, "markers_per_signal must lie in [1, min_words]");
}

SynthDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::vector<std::string> distractors;
  for (int i = 0; i < config.distractor_vocab; ++i) distractors.push_back(pseudo_word(i, ""));
  const std::array<std::string, 2> prefixes{"zu", "xi"};
  std::array<std::vector<std::string>, 2> markers;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < config.markers_per_class; ++i) markers[c].push_back(pseudo_word(i, prefixes[c]));
  }

  // Exactly balanced labels in shuffled order.
  std::vector<int> labels(config.documents);
  for (int i = 0; i < config.documents; ++i) labels[i] = i < config.documents / 2 ? 0 : 1;
  rng.shuffle(labels);

  SynthDataset data;
  const int width = static_cast<int>(std::to_string(config.documents - 1).size());
  for (int d = 0; d < config.documents; ++d) {
    SynthDocument sd;
    std::string id = std::to_string(d);
    sd.doc.id = "syn-" + std::string(width - id.size(), '0') + id;
    sd.doc.label = labels[d];

    std::vector<int> positions(config.sentences);
    for (int j = 0; j < config.sentences; ++j) positions[j] = j;
    for (int i = 0; i < config.signal; ++i) {
      const auto pick = i + static_cast<int>(rng.below(config.sentences - i));
      std::swap(positions[i], positions[pick]);
    }
    sd.signal.assign(positions.begin(), positions.begin() + config.signal);
    std::sort(sd.signal.begin(), sd.signal.end());
    const std::set<int> signal_rows(sd.signal.begin(), sd.signal.end());

    std::string text;
    for (int j = 0; j < config.sentences; ++j) {
      const int len = config.min_words + static_cast<int>(rng.below(config.max_words - config.min_words + 1));
      std::vector<std::string> words(len);
      for (auto& w : words) w = distractors[rng.below(distractors.size())];
      if (signal_rows.count(j)) {
        std::vector<int> slots(len);
        for (int k = 0; k < len; ++k) slots[k] = k;
        for (int i = 0; i < config.markers_per_signal; ++i) {
          const auto pick = i + static_cast<int>(rng.below(len - i));
          std::swap(slots[i], slots[pick]);
          const auto& lex = markers[*sd.doc.label];
          words[slots[i]] = lex[rng.below(lex.size())];
        }
      }
      if (!text.empty()) text += ' ';
      for (int k = 0; k < len; ++k) {
        if (k) text += ' ';
        text += words[k];
      }
      text += '.';
    }
    sd.doc.text = std::move(text);
    data.docs.push_back(std::move(sd));
  }
  int at = 0;
  for (int i = 0; i < config.labeled; ++i) data.manifest.labeled.push_back(data.docs[at++].doc.id);
  for (int i = 0; i < config.unlabeled; ++i) data.manifest.unlabeled.push_back(data.docs[at++].doc.id);
  for (int i = 0; i < config.test; ++i) data.manifest.test.push_back(data.docs[at++].doc.id);
  return data;
}

std::vector<RawDocument> published_documents(const SynthDataset& data) {
  const std::set<std::string> hidden(data.manifest.unlabeled.begin(), data.manifest.unlabeled.end());
  std::vector<RawDocument> out;
  out.reserve(data.docs.size());
  for (const auto& sd : data.docs) {
    RawDocument d = sd.doc;
    if (hidden.count(d.id)) d.label.reset();
    out.push_back(std::move(d));
  }
  return out;
}

void write_synthetic(const SynthDataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  auto open = [&](const char* name) {
    std::ofstream out(root / name, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + (root / name).string());
    return out;
  };
  {
    auto out = open("data.jsonl");
    for (const auto& d : published_documents(data)) {
      nlohmann::json j = {{"id", d.id}, {"text", d.text}};
      if (d.label) j["label"] = *d.label;
      out << j.dump() << '\n';
    }
  }
  {
    auto out = open("rationales.jsonl");
    for (const auto& sd : data.docs) {
      out << nlohmann::json{{"id", sd.doc.id}, {"label", *sd.doc.label}, {"signal", sd.signal}}.dump() << '\n';
    }
  }
  save_manifest(data.manifest, (root / "manifest.json").string());
}

double precision_at_k(const std::vector<int>& ranked, const std::vector<int>& signal, int k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "precision@k needs k >= 1");
  const std::set<int> truth(signal.begin(), signal.end());
  int hits = 0;
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) hits += truth.count(ranked[i]) > 0;
  return static_cast<double>(hits) / k;
}

}  // namespace sentmask
