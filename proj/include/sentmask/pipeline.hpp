#ifndef SENTMASK_PIPELINE_HPP
#define SENTMASK_PIPELINE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sentmask/metrics.hpp"
#include "sentmask/synth.hpp"
#include "sentmask/trainer.hpp"

// File-level steps behind the command line tool: each reads and writes a
// fixed layout inside a directory.
namespace sentmask {

inline constexpr const char* kCacheDirEnv = "SENTMASK_CACHE_DIR";
inline constexpr const char* kShapedFile = "shaped.bin";
inline constexpr const char* kVocabFile = "vocab.txt";

// Defaults, then the key-value file (if any), then each "key=value" override.
TrainingConfig load_config(const std::string& file, const std::vector<std::string>& overrides);

// Returns dir, or $SENTMASK_CACHE_DIR when dir is empty; throws if neither is set.
std::string resolve_data_dir(const std::string& dir);

struct IngestOptions {
  std::string data;      // raw JSONL
  std::string manifest;  // {"labeled", "unlabeled", "test"} id lists
  std::string out_dir;
  std::string vocab;  // existing vocabulary; built from training text if empty
  TrainingConfig config;
};

struct IngestSummary {
  int labeled = 0;
  int unlabeled = 0;
  int test = 0;
  int vocab_size = 0;

  nlohmann::json to_json() const;
};

// Writes shaped.bin, vocab.txt and ingest.json into out_dir.
IngestSummary run_ingest(const IngestOptions& options);

// Writes data.jsonl, manifest.json and rationales.jsonl into out_dir.
void run_synth(const SynthConfig& config, const std::string& out_dir);

struct TrainOptions {
  std::string data_dir;
  std::string out_dir;
  std::string resume;  // checkpoint to continue from
  TrainingConfig config;
};

struct TrainSummary {
  std::string best_checkpoint;
  std::string checkpoint_id;
  int best_epoch = 0;
  double best_heldout_accuracy = 0.0;
  int epochs_run = 0;

  nlohmann::json to_json() const;
};

// Writes best.ckpt, last.ckpt, steps.jsonl, epochs.jsonl and config.json.
TrainSummary run_train(const TrainOptions& options);

struct EvalOptions {
  std::string data_dir;
  std::string checkpoint;
  std::string out_dir;
  std::vector<int> n;         // empty: the checkpoint's eval.top_n
  bool compact = false;
  std::string control;        // "", "constant" or "random"
  std::uint64_t seed = 13;    // random control only
};

// One result per n, also written to metrics.jsonl.
std::vector<MetricsResult> run_eval(const EvalOptions& options);

struct ExplainOptions {
  std::string data_dir;
  std::string checkpoint;
  std::string out_dir;
  std::string format = "both";  // json | html | both
  int n = kDefaultTopN;
  std::string split = "test";   // test | labeled | unlabeled | all
  std::vector<std::string> ids;  // restrict to these documents
};

// Writes explanations.jsonl plus one report per document and format under
// out_dir/reports. Returns the number of documents explained.
int run_explain(const ExplainOptions& options);

// File-name-safe form of a document id.
std::string report_stem(const std::string& doc_id);

}  // namespace sentmask

#endif  // SENTMASK_PIPELINE_HPP
