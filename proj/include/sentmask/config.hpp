#ifndef SENTMASK_CONFIG_HPP
#define SENTMASK_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace sentmask {

enum class HardenMode { kThreshold, kTopN };

struct EncoderConfig {
  std::string backend = "recurrent";  // recurrent | transformer
  int word_dim = 300;
  int hidden = 300;  // per direction; sentence vectors are 2 * hidden wide
  bool freeze_embeddings = true;
  std::string embeddings_path;  // optional "token v1 ... vD" text file
  // transformer backend only
  int layers = 2;
  int heads = 4;
  int ff_dim = 512;
  std::string pretrained_path;  // optional safetensors checkpoint
};

struct MaskConfig {
  int hidden = 64;
  double temperature = 1.0;
  double temperature_final = 1.0;  // linear anneal target over the run
  double keep_rate = 0.2;
  HardenMode harden_mode = HardenMode::kTopN;
  int top_n = 20;
};

struct HeadConfig {
  int hidden = 64;
};

struct LossConfig {
  double alpha = 1.0;
  double beta = 0.1;
  bool hard_teacher = false;
};

struct OptimConfig {
  double lr = 1e-3;
  double lr_transformer = 2e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 5.0;
  int epochs = 30;
  int labeled_batch = 8;
  int unlabeled_batch = 8;
  double heldout_fraction = 0.1;
  std::uint64_t seed = 13;
};

struct DataConfig {
  int max_sentences = 400;
  int max_tokens = 25;
  int vocab_size = 50000;
};

struct EvalConfig {
  int top_n = 20;
  bool compact = false;
};

struct TrainingConfig {
  EncoderConfig encoder;
  MaskConfig mask;
  HeadConfig head;
  LossConfig loss;
  OptimConfig train;
  DataConfig data;
  EvalConfig eval;

  // Throws Error(kConfig) on unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();
  // Key -> one-line description including the default.
  static std::map<std::string, std::string> documentation();

  void validate() const;
  double effective_lr() const;
  // Temperature for a 0-based epoch of a run with `epochs` epochs.
  double temperature_at(int epoch, int epochs) const;

  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

// "key = value" lines; '#' starts a comment. Later assignments win.
std::vector<std::pair<std::string, std::string>> read_key_values(const std::string& path);

const char* harden_mode_name(HardenMode mode);
HardenMode parse_harden_mode(const std::string& s);

}  // namespace sentmask

#endif  // SENTMASK_CONFIG_HPP
