#include "sentmask/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sentmask/error.hpp"

namespace fs = std::filesystem;

namespace sentmask {

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  return out;
}

void make_dir(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorCode::kInvalidArgument, "an output directory is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + dir + "': " + ec.message());
}

DatasetSplit read_data(const std::string& data_dir) {
  return read_shaped_cache((fs::path(resolve_data_dir(data_dir)) / kShapedFile).string());
}

std::vector<ShapedDocument> select_split(DatasetSplit&& split, const std::string& which) {
  if (which == "test") return std::move(split.test);
  if (which == "labeled") return std::move(split.labeled);
  if (which == "unlabeled") return std::move(split.unlabeled);
  if (which == "all") {
    auto out = std::move(split.labeled);
    for (auto* part : {&split.unlabeled, &split.test}) {
      for (auto& d : *part) out.push_back(std::move(d));
    }
    return out;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + which + "'");
}

}  // namespace

TrainingConfig load_config(const std::string& file, const std::vector<std::string>& overrides) {
  TrainingConfig config;
  if (!file.empty()) {
    for (const auto& [k, v] : read_key_values(file)) config.set(k, v);
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kConfig, "expected key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.validate();
  return config;
}

std::string resolve_data_dir(const std::string& dir) {
  if (!dir.empty()) return dir;
  if (const char* env = std::getenv(kCacheDirEnv); env && *env) return env;
  throw Error(ErrorCode::kInvalidArgument, std::string("no data directory given and ") + kCacheDirEnv + " is unset");
}

nlohmann::json IngestSummary::to_json() const {
  return {{"labeled", labeled}, {"unlabeled", unlabeled}, {"test", test}, {"vocab_size", vocab_size}};
}

IngestSummary run_ingest(const IngestOptions& options) {
  make_dir(options.out_dir);
  const auto& data = options.config.data;
  const auto docs = read_jsonl(options.data);
  if (docs.empty()) throw Error(ErrorCode::kEmptyDataset, options.data + ": no documents");
  const auto manifest = load_manifest(options.manifest);
  const Vocabulary vocab = options.vocab.empty() ? build_training_vocabulary(docs, manifest, data.vocab_size)
                                                 : Vocabulary::load(options.vocab);
  const auto split = assemble_split(docs, manifest, vocab, data.max_sentences, data.max_tokens);
  const fs::path dir(options.out_dir);
  vocab.save((dir / kVocabFile).string());
  write_shaped_cache(split, (dir / kShapedFile).string());

  IngestSummary s;
  s.labeled = static_cast<int>(split.labeled.size());
  s.unlabeled = static_cast<int>(split.unlabeled.size());
  s.test = static_cast<int>(split.test.size());
  s.vocab_size = vocab.size();
  auto meta = s.to_json();
  meta["max_sentences"] = data.max_sentences;
  meta["max_tokens"] = data.max_tokens;
  open_out(dir / "ingest.json") << meta.dump(2) << '\n';
  return s;
}

void run_synth(const SynthConfig& config, const std::string& out_dir) {
  make_dir(out_dir);
  write_synthetic(generate_synthetic(config), out_dir);
}

nlohmann::json TrainSummary::to_json() const {
  return {{"best_checkpoint", best_checkpoint},
          {"checkpoint", checkpoint_id},
          {"best_epoch", best_epoch},
          {"best_heldout_accuracy", best_heldout_accuracy},
          {"epochs_run", epochs_run}};
}

TrainSummary run_train(const TrainOptions& options) {
  make_dir(options.out_dir);
  const fs::path data_dir(resolve_data_dir(options.data_dir));
  const auto split = read_shaped_cache((data_dir / kShapedFile).string());
  const auto vocab = Vocabulary::load((data_dir / kVocabFile).string());
  TrainingConfig config = options.config;
  if (!split.labeled.empty()) {
    config.data.max_sentences = split.labeled.front().num_sentences;
    config.data.max_tokens = split.labeled.front().num_tokens;
  }
  const fs::path dir(options.out_dir);
  open_out(dir / "config.json") << config.to_json().dump(2) << '\n';

  std::optional<Checkpoint> resume;
  if (!options.resume.empty()) resume = load_checkpoint(options.resume);
  // A resumed run appends to its logs.
  const auto mode = resume ? std::ios::app : std::ios::trunc;
  std::ofstream steps(dir / "steps.jsonl", std::ios::binary | mode);
  std::ofstream epochs(dir / "epochs.jsonl", std::ios::binary | mode);
  if (!steps || !epochs) throw Error(ErrorCode::kIo, "cannot write logs in '" + options.out_dir + "'");

  FitOptions fo;
  fo.out_dir = options.out_dir;
  fo.step_log = &steps;
  fo.vocab = &vocab;
  fo.resume = resume ? &*resume : nullptr;
  fo.on_epoch = [&](const EpochLog& e) { epochs << e.to_json().dump() << '\n' << std::flush; };
  const auto result = fit(split, config, vocab.size(), fo);

  TrainSummary s;
  s.best_checkpoint = (dir / "best.ckpt").string();
  s.checkpoint_id = result.best.id;
  s.best_epoch = result.best.best_epoch;
  s.best_heldout_accuracy = result.best.best_heldout_accuracy;
  s.epochs_run = static_cast<int>(result.epochs.size());
  return s;
}

std::vector<MetricsResult> run_eval(const EvalOptions& options) {
  make_dir(options.out_dir);
  const auto ckpt = load_checkpoint(options.checkpoint);
  auto split = read_data(options.data_dir);
  if (split.test.empty()) throw Error(ErrorCode::kEmptyDataset, "no test documents");
  auto model = ckpt.build_model();

  std::vector<ExplanationRecord> records;
  Predictor predict = model_predictor(*model);
  if (options.control.empty() || options.control == "constant") {
    records = explain_all(split.test, *model);
    if (options.control == "constant") predict = constant_predictor(ClassDistribution{});
  } else if (options.control == "random") {
    Rng rng(options.seed);
    for (const auto& d : split.test) records.push_back(random_explanation(d, rng));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown control '" + options.control + "'");
  }

  std::vector<int> ns = options.n;
  if (ns.empty()) ns.push_back(ckpt.config.eval.top_n);
  const bool compact = options.compact || ckpt.config.eval.compact;
  std::vector<MetricsResult> results;
  auto out = open_out(fs::path(options.out_dir) / "metrics.jsonl");
  for (int n : ns) {
    results.push_back(evaluate(predict, split.test, records, n, compact, ckpt.id));
    auto j = results.back().to_json();
    if (!options.control.empty()) j["control"] = options.control;
    out << j.dump() << '\n';
  }
  return results;
}

std::string report_stem(const std::string& doc_id) {
  std::string s = doc_id;
  for (char& c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  if (s.empty() || s.front() == '.') s.insert(s.begin(), '_');
  return s;
}

int run_explain(const ExplainOptions& options) {
  if (options.format != "json" && options.format != "html" && options.format != "both") {
    throw Error(ErrorCode::kInvalidArgument, "unknown report format '" + options.format + "'");
  }
  if (options.n < 1) throw Error(ErrorCode::kInvalidArgument, "report needs n >= 1");
  make_dir(options.out_dir);
  const auto ckpt = load_checkpoint(options.checkpoint);
  auto docs = select_split(read_data(options.data_dir), options.split);
  if (!options.ids.empty()) {
    std::vector<ShapedDocument> chosen;
    for (const auto& id : options.ids) {
      auto it = std::find_if(docs.begin(), docs.end(), [&](const ShapedDocument& d) { return d.id == id; });
      if (it == docs.end()) throw Error(ErrorCode::kInvalidArgument, "unknown document id '" + id + "'");
      chosen.push_back(*it);
    }
    docs = std::move(chosen);
  }
  auto model = ckpt.build_model();
  const fs::path dir(options.out_dir);
  fs::create_directories(dir / "reports");
  auto index = open_out(dir / "explanations.jsonl");
  for (const auto& doc : docs) {
    const auto record = explain(doc, *model, options.n);
    index << explanation_json(doc, record).dump() << '\n';
    const auto stem = report_stem(doc.id);
    for (const char* fmt : {"json", "html"}) {
      if (options.format != "both" && options.format != fmt) continue;
      open_out(dir / "reports" / (stem + "." + fmt)) << render_report(doc, record, options.n, fmt);
    }
  }
  return static_cast<int>(docs.size());
}

}  // namespace sentmask
