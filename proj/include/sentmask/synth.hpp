#ifndef SENTMASK_SYNTH_HPP
#define SENTMASK_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sentmask/ingest.hpp"

namespace sentmask {

// Planted-rationale documents: every sentence is drawn from a distractor
// vocabulary, except `signal` sentences at distinct uniform positions that
// also carry marker words of the document's class. The label is the class
// whose markers appear.
struct SynthConfig {
  int documents = 2000;
  int sentences = 40;
  int signal = 3;
  int labeled = 200;
  int unlabeled = 1600;
  int test = 200;
  int min_words = 5;
  int max_words = 10;
  int distractor_vocab = 400;
  int markers_per_class = 8;
  int markers_per_signal = 2;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthDocument {
  RawDocument doc;           // label always set
  std::vector<int> signal;   // sentence positions, ascending
};

struct SynthDataset {
  std::vector<SynthDocument> docs;
  Manifest manifest;  // labeled, unlabeled, test in generation order
};

SynthDataset generate_synthetic(const SynthConfig& config);

// Writes data.jsonl (unlabeled-pool documents carry no label), manifest.json
// and rationales.jsonl ({"id", "label", "signal"}) into dir.
void write_synthetic(const SynthDataset& data, const std::string& dir);

// Raw documents with labels withheld from the unlabeled pool, as they would
// be read back from data.jsonl.
std::vector<RawDocument> published_documents(const SynthDataset& data);

// Fraction of the top-k ranked rows that are planted signal sentences.
double precision_at_k(const std::vector<int>& ranked, const std::vector<int>& signal, int k);

}  // namespace sentmask

#endif  // SENTMASK_SYNTH_HPP
