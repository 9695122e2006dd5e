#ifndef SENTMASK_TRAINER_HPP
#define SENTMASK_TRAINER_HPP

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sentmask/losses.hpp"

namespace sentmask {

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t steps = 0;
};

// Adam with global-norm clipping and decoupled weight decay.
class Adam {
 public:
  Adam(const OptimConfig& config, double lr) : config_(config), lr_(lr) {}

  // Applies one update from Parameter::grad and returns the gradient norm
  // before clipping. Frozen parameters are skipped.
  double step(const std::vector<Parameter*>& params);

  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  OptimConfig config_;
  double lr_;
  AdamState state_;
};

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  std::string phase;  // "labeled" | "unlabeled"
  LossBreakdown loss;
  double alpha = 0.0;

  nlohmann::json to_json() const;
};

struct EpochLog {
  int epoch = 0;
  double temperature = 0.0;
  int labeled_steps = 0;
  int unlabeled_steps = 0;
  double mean_supervised = 0.0;
  double mean_unsupervised = 0.0;
  double heldout_accuracy = 0.0;

  nlohmann::json to_json() const;
};

// Everything needed to rebuild a model and continue its run.
struct Checkpoint {
  TrainingConfig config;
  int vocab_size = 0;
  int epoch = 0;  // completed epochs
  std::int64_t global_step = 0;
  double best_heldout_accuracy = -1.0;
  int best_epoch = 0;
  std::vector<std::string> names;
  std::vector<Matrix> values;
  AdamState adam;
  std::string rng_state;
  std::string id;  // parameter fingerprint

  std::unique_ptr<Model> build_model() const;
};

// "SMCK" header, version 1, little-endian; metadata is a JSON block.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// One labeled pass optimizing the supervised loss, then one unlabeled pass
// optimizing alpha times the consistency loss.
class Trainer {
 public:
  using StepSink = std::function<void(const StepLog&)>;

  Trainer(Model& model, std::uint64_t seed);
  // Continues from a checkpoint: optimizer and RNG state, step counter.
  Trainer(Model& model, const Checkpoint& ckpt);

  EpochLog train_epoch(const std::vector<const ShapedDocument*>& labeled,
                       const std::vector<const ShapedDocument*>& unlabeled, int epoch,
                       int total_epochs, const StepSink& sink = {});

  Checkpoint checkpoint(int epoch) const;
  Adam& optimizer() { return adam_; }
  Rng& rng() { return rng_; }
  std::int64_t global_step() const { return step_; }

 private:
  Model& model_;
  Adam adam_;
  Rng rng_;
  std::int64_t step_ = 0;
};

double accuracy_of(Model& model, const std::vector<const ShapedDocument*>& docs);

// Labeled documents are split into training and held-out parts by a seeded
// shuffle; held-out ids come back in file order.
struct HeldoutSplit {
  std::vector<const ShapedDocument*> train;
  std::vector<const ShapedDocument*> heldout;
};
HeldoutSplit carve_heldout(const std::vector<ShapedDocument>& labeled, double fraction,
                           std::uint64_t seed);

struct FitOptions {
  std::string out_dir;  // when set, last.ckpt and best.ckpt are written there
  std::ostream* step_log = nullptr;  // JSONL, one line per step
  std::function<void(const EpochLog&)> on_epoch;
  const Checkpoint* resume = nullptr;
  const Vocabulary* vocab = nullptr;  // for pretrained word vectors
  // Stop after this many epochs of this call (the run's epoch count still
  // drives the schedule); used to simulate interruptions.
  std::optional<int> stop_after;
};

struct FitResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochLog> epochs;
};

FitResult fit(const DatasetSplit& split, const TrainingConfig& config, int vocab_size,
              const FitOptions& options = {});

}  // namespace sentmask

#endif  // SENTMASK_TRAINER_HPP
