#include "sentmask/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "sentmask/error.hpp"

namespace sentmask {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint64_t kInitSalt = 1;
constexpr std::uint64_t kTrainSalt = 2;
constexpr std::uint64_t kHeldoutSalt = 3;

Rng derived_rng(std::uint64_t seed, std::uint64_t salt) {
  Rng base(seed);
  return base.fork(salt);
}

void write_matrix(detail::BinaryWriter& w, const Matrix& m) {
  w.u64(static_cast<std::uint64_t>(m.rows()));
  w.u64(static_cast<std::uint64_t>(m.cols()));
  for (ad::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}

Matrix read_matrix(detail::BinaryReader& r) {
  const auto rows = r.u64();
  const auto cols = r.u64();
  if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw Error(ErrorCode::kCheckpoint, "implausible tensor shape");
  Matrix m(static_cast<ad::Index>(rows), static_cast<ad::Index>(cols));
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
  return m;
}

std::vector<const ShapedDocument*> pointers(const std::vector<ShapedDocument>& docs) {
  std::vector<const ShapedDocument*> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(&d);
  return out;
}

}  // namespace

double Adam::step(const std::vector<Parameter*>& params) {
  if (state_.m.size() != params.size()) {
    state_.m.clear();
    state_.v.clear();
    for (auto* p : params) {
      state_.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state_.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  double sq = 0.0;
  for (auto* p : params) {
    if (p->trainable) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double clip = config_.clip_norm > 0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;

  ++state_.steps;
  const double b1 = config_.adam_beta1;
  const double b2 = config_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.steps));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    if (!p->trainable) continue;
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    const Matrix g = p->grad * clip;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const Matrix update =
        (m.array() / c1) / ((v.array() / c2).sqrt() + config_.adam_eps);
    if (config_.weight_decay > 0) p->value *= 1.0 - lr_ * config_.weight_decay;
    p->value -= lr_ * update;
  }
  return norm;
}

nlohmann::json StepLog::to_json() const {
  auto j = loss.to_json();
  j["step"] = step;
  j["epoch"] = epoch;
  j["phase"] = phase;
  j["alpha"] = alpha;
  return j;
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch},
          {"temperature", temperature},
          {"labeled_steps", labeled_steps},
          {"unlabeled_steps", unlabeled_steps},
          {"mean_supervised", mean_supervised},
          {"mean_unsupervised", mean_unsupervised},
          {"heldout_accuracy", heldout_accuracy}};
}

std::unique_ptr<Model> Checkpoint::build_model() const {
  TrainingConfig cfg = config;
  // Weights come from the checkpoint, not from the original files.
  cfg.encoder.embeddings_path.clear();
  cfg.encoder.pretrained_path.clear();
  Rng init = derived_rng(cfg.train.seed, kInitSalt);
  auto model = std::make_unique<Model>(cfg, vocab_size, init);
  const auto params = model->parameters();
  if (params.size() != names.size()) throw Error(ErrorCode::kCheckpoint, "parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != names[i]) {
      throw Error(ErrorCode::kCheckpoint, "unexpected parameter " + names[i] + ", model has " + params[i]->name);
    }
  }
  model->restore(values);
  model->set_checkpoint_id(id);
  return model;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write checkpoint '" + path + "'");
    detail::BinaryWriter w(out);
    w.bytes("SMCK", 4);
    w.u32(kCheckpointVersion);
    const nlohmann::json meta = {{"config", ckpt.config.to_json()},
                                 {"vocab_size", ckpt.vocab_size},
                                 {"epoch", ckpt.epoch},
                                 {"global_step", ckpt.global_step},
                                 {"best_heldout_accuracy", ckpt.best_heldout_accuracy},
                                 {"best_epoch", ckpt.best_epoch},
                                 {"rng_state", ckpt.rng_state},
                                 {"id", ckpt.id},
                                 {"adam_steps", ckpt.adam.steps}};
    w.str(meta.dump());
    w.u32(static_cast<std::uint32_t>(ckpt.values.size()));
    for (std::size_t i = 0; i < ckpt.values.size(); ++i) {
      w.str(ckpt.names[i]);
      write_matrix(w, ckpt.values[i]);
    }
    const bool has_adam = ckpt.adam.m.size() == ckpt.values.size();
    w.u8(has_adam ? 1 : 0);
    if (has_adam) {
      for (std::size_t i = 0; i < ckpt.values.size(); ++i) {
        write_matrix(w, ckpt.adam.m[i]);
        write_matrix(w, ckpt.adam.v[i]);
      }
    }
    if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open checkpoint '" + path + "'");
  detail::BinaryReader r(in, path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "SMCK") throw Error(ErrorCode::kCheckpoint, path + ": not a checkpoint");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw Error(ErrorCode::kCheckpoint, path + ": unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ckpt;
  try {
    const auto meta = nlohmann::json::parse(r.str());
    ckpt.config = TrainingConfig::from_json(meta.at("config"));
    ckpt.vocab_size = meta.at("vocab_size").get<int>();
    ckpt.epoch = meta.at("epoch").get<int>();
    ckpt.global_step = meta.at("global_step").get<std::int64_t>();
    ckpt.best_heldout_accuracy = meta.at("best_heldout_accuracy").get<double>();
    ckpt.best_epoch = meta.at("best_epoch").get<int>();
    ckpt.rng_state = meta.at("rng_state").get<std::string>();
    ckpt.id = meta.at("id").get<std::string>();
    ckpt.adam.steps = meta.at("adam_steps").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCheckpoint, path + ": bad metadata: " + e.what());
  }
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    ckpt.names.push_back(r.str());
    ckpt.values.push_back(read_matrix(r));
  }
  if (r.u8()) {
    for (std::uint32_t i = 0; i < count; ++i) {
      ckpt.adam.m.push_back(read_matrix(r));
      ckpt.adam.v.push_back(read_matrix(r));
    }
  }
  return ckpt;
}

Trainer::Trainer(Model& model, std::uint64_t seed)
    : model_(model),
      adam_(model.config().train, model.config().effective_lr()),
      rng_(derived_rng(seed, kTrainSalt)) {}

Trainer::Trainer(Model& model, const Checkpoint& ckpt)
    : model_(model),
      adam_(model.config().train, model.config().effective_lr()),
      step_(ckpt.global_step) {
  rng_.set_state(ckpt.rng_state);
  adam_.state() = ckpt.adam;
}

EpochLog Trainer::train_epoch(const std::vector<const ShapedDocument*>& labeled,
                              const std::vector<const ShapedDocument*>& unlabeled, int epoch,
                              int total_epochs, const StepSink& sink) {
  if (labeled.empty()) throw Error(ErrorCode::kEmptyDataset, "no labeled training documents");
  const auto& cfg = model_.config();
  const double alpha = cfg.loss.alpha;
  EpochLog log;
  log.epoch = epoch;
  log.temperature = cfg.temperature_at(epoch, total_epochs);
  const auto params = model_.parameters();

  auto run_pass = [&](const std::vector<const ShapedDocument*>& docs, int batch_size, bool supervised) {
    std::vector<const ShapedDocument*> order = docs;
    rng_.shuffle(order);
    int steps = 0;
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const auto count = std::min<std::size_t>(batch_size, order.size() - start);
      const auto batch = DocBatch::of(std::span(order).subspan(start, count));
      Tape tape;
      const Matrix noise = draw_batch_noise(batch, rng_);
      StepLog entry;
      entry.step = ++step_;
      entry.epoch = epoch;
      entry.alpha = alpha;
      Var objective;
      if (supervised) {
        auto term = supervised_vib_loss(tape, model_, batch, noise, log.temperature);
        entry.phase = "labeled";
        entry.loss = total_loss(term.parts, {}, alpha);
        objective = term.objective;
        sum += entry.loss.supervised;
      } else {
        auto term = consistency_vib_loss(tape, model_, batch, noise, log.temperature);
        entry.phase = "unlabeled";
        entry.loss = total_loss({}, term.parts, alpha);
        objective = ad::scale(term.objective, alpha);
        sum += entry.loss.unsupervised;
      }
      if (sink) sink(entry);
      if (!std::isfinite(entry.loss.total)) {
        throw Error(ErrorCode::kDiverged, "non-finite loss at step " + std::to_string(entry.step) +
                                              " (" + entry.phase + ")");
      }
      for (auto* p : params) p->zero_grad();
      tape.backward(objective);
      adam_.step(params);
      ++steps;
    }
    return std::pair{steps, steps > 0 ? sum / steps : 0.0};
  };

  std::tie(log.labeled_steps, log.mean_supervised) = run_pass(labeled, cfg.train.labeled_batch, true);
  // With alpha = 0 the pass is skipped outright: an Adam step on a zero
  // gradient would still move parameters through its momentum.
  if (alpha > 0 && !unlabeled.empty()) {
    std::tie(log.unlabeled_steps, log.mean_unsupervised) =
        run_pass(unlabeled, cfg.train.unlabeled_batch, false);
  }
  return log;
}

Checkpoint Trainer::checkpoint(int epoch) const {
  Checkpoint c;
  c.config = model_.config();
  c.vocab_size = model_.vocab_size();
  c.epoch = epoch;
  c.global_step = step_;
  for (auto* p : model_.parameters()) {
    c.names.push_back(p->name);
    c.values.push_back(p->value);
  }
  c.adam = adam_.state();
  c.rng_state = rng_.state();
  c.id = model_.fingerprint();
  return c;
}

double accuracy_of(Model& model, const std::vector<const ShapedDocument*>& docs) {
  if (docs.empty()) throw Error(ErrorCode::kEmptyDataset, "accuracy over an empty set");
  const auto preds = model.predict(docs);
  int correct = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!docs[i]->label) throw Error(ErrorCode::kBadLabel, "document without label: " + docs[i]->id);
    correct += preds[i].argmax() == *docs[i]->label;
  }
  return static_cast<double>(correct) / static_cast<double>(docs.size());
}

HeldoutSplit carve_heldout(const std::vector<ShapedDocument>& labeled, double fraction,
                           std::uint64_t seed) {
  std::vector<std::size_t> idx(labeled.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = derived_rng(seed, kHeldoutSalt);
  rng.shuffle(idx);
  auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(labeled.size()) + 0.5));
  if (!labeled.empty()) n = std::min(n, labeled.size() - 1);
  std::vector<std::size_t> held(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end());
  std::sort(held.begin(), held.end());
  std::sort(train.begin(), train.end());
  HeldoutSplit out;
  for (auto i : train) out.train.push_back(&labeled[i]);
  for (auto i : held) out.heldout.push_back(&labeled[i]);
  return out;
}

FitResult fit(const DatasetSplit& split, const TrainingConfig& config, int vocab_size,
              const FitOptions& options) {
  config.validate();
  if (split.labeled.empty()) throw Error(ErrorCode::kEmptyDataset, "no labeled documents to train on");
  const auto parts = carve_heldout(split.labeled, config.train.heldout_fraction, config.train.seed);
  const auto unlabeled = pointers(split.unlabeled);
  const auto& selection = parts.heldout.empty() ? parts.train : parts.heldout;

  std::unique_ptr<Model> model;
  std::unique_ptr<Trainer> trainer;
  FitResult result;
  int first_epoch = 0;
  std::filesystem::path dir(options.out_dir);
  if (!options.out_dir.empty()) std::filesystem::create_directories(dir);
  auto write = [&](const Checkpoint& c, const char* name) {
    if (!options.out_dir.empty()) save_checkpoint(c, (dir / name).string());
  };

  if (options.resume) {
    model = options.resume->build_model();
    trainer = std::make_unique<Trainer>(*model, *options.resume);
    first_epoch = options.resume->epoch;
    result.last = *options.resume;
    const auto best_path = dir / "best.ckpt";
    result.best = !options.out_dir.empty() && std::filesystem::exists(best_path)
                      ? load_checkpoint(best_path.string())
                      : *options.resume;
  } else {
    Rng init = derived_rng(config.train.seed, kInitSalt);
    model = std::make_unique<Model>(config, vocab_size, init, options.vocab);
    trainer = std::make_unique<Trainer>(*model, config.train.seed);
    result.last = trainer->checkpoint(0);
    result.last.best_heldout_accuracy = accuracy_of(*model, selection);
    result.best = result.last;
    write(result.last, "last.ckpt");
    write(result.best, "best.ckpt");
  }

  const int epochs = config.train.epochs;
  int run = 0;
  for (int epoch = first_epoch; epoch < epochs; ++epoch) {
    if (options.stop_after && run >= *options.stop_after) break;
    ++run;
    Trainer::StepSink sink;
    if (options.step_log) {
      sink = [&](const StepLog& s) { *options.step_log << s.to_json().dump() << '\n'; };
    }
    auto log = trainer->train_epoch(parts.train, unlabeled, epoch, epochs, sink);
    log.heldout_accuracy = accuracy_of(*model, selection);
    result.epochs.push_back(log);
    if (options.on_epoch) options.on_epoch(log);

    Checkpoint last = trainer->checkpoint(epoch + 1);
    const bool improved = log.heldout_accuracy >= result.last.best_heldout_accuracy;
    last.best_heldout_accuracy = improved ? log.heldout_accuracy : result.last.best_heldout_accuracy;
    last.best_epoch = improved ? epoch + 1 : result.last.best_epoch;
    result.last = std::move(last);
    write(result.last, "last.ckpt");
    if (improved) {
      result.best = result.last;
      write(result.best, "best.ckpt");
    }
  }
  if (options.step_log) options.step_log->flush();
  return result;
}

}  // namespace sentmask
