// Command line entry point: synth, ingest, train, eval, explain.
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sentmask/error.hpp"
#include "sentmask/pipeline.hpp"

using namespace sentmask;

namespace {

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(const char* code, int status, const std::string& msg) {
  std::cerr << "error code=" << code << " msg=" << one_line(msg) << '\n';
  return status;
}

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value config file");
    cmd->add_option("--set", overrides, "override one config key (key=value); repeatable");
  }
  TrainingConfig load() const { return load_config(file, overrides); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sentence-mask explanations for long-document classification"};
  app.require_subcommand(0, 1);
  bool list_keys = false;
  app.add_flag("--list-config", list_keys, "print every config key with its default and exit");

  SynthConfig synth;
  std::string synth_out;
  auto* c_synth = app.add_subcommand("synth", "generate a planted-rationale dataset");
  c_synth->add_option("--out-dir", synth_out)->required();
  c_synth->add_option("--documents", synth.documents)->capture_default_str();
  c_synth->add_option("--sentences", synth.sentences)->capture_default_str();
  c_synth->add_option("--signal", synth.signal, "signal sentences per document")->capture_default_str();
  c_synth->add_option("--labeled", synth.labeled)->capture_default_str();
  c_synth->add_option("--unlabeled", synth.unlabeled)->capture_default_str();
  c_synth->add_option("--test", synth.test)->capture_default_str();
  c_synth->add_option("--seed", synth.seed)->capture_default_str();

  IngestOptions ingest;
  ConfigArgs ingest_cfg;
  auto* c_ingest = app.add_subcommand("ingest", "shape raw JSONL into a cached dataset");
  c_ingest->add_option("--data", ingest.data, "raw documents, one JSON object per line")->required();
  c_ingest->add_option("--manifest", ingest.manifest, "labeled/unlabeled/test id lists")->required();
  c_ingest->add_option("--out-dir", ingest.out_dir)->required();
  c_ingest->add_option("--vocab", ingest.vocab, "reuse this vocabulary instead of building one");
  ingest_cfg.attach(c_ingest);

  TrainOptions train;
  ConfigArgs train_cfg;
  auto* c_train = app.add_subcommand("train", "train and keep the best checkpoint");
  c_train->add_option("--data-dir", train.data_dir, "ingest output (default $SENTMASK_CACHE_DIR)");
  c_train->add_option("--out-dir", train.out_dir)->required();
  c_train->add_option("--resume", train.resume, "continue from this checkpoint");
  train_cfg.attach(c_train);

  EvalOptions eval;
  auto* c_eval = app.add_subcommand("eval", "accuracy, AOPC and post-hoc accuracy on the test split");
  c_eval->add_option("--data-dir", eval.data_dir, "ingest output (default $SENTMASK_CACHE_DIR)");
  c_eval->add_option("--checkpoint", eval.checkpoint)->required();
  c_eval->add_option("--out-dir", eval.out_dir)->required();
  c_eval->add_option("--n", eval.n, "top-n sentences; repeat for a sweep");
  c_eval->add_flag("--compact", eval.compact, "close gaps left by deleted sentences");
  c_eval->add_option("--control", eval.control, "constant | random")
      ->check(CLI::IsMember({"constant", "random"}));
  c_eval->add_option("--seed", eval.seed, "seed of the random control")->capture_default_str();

  ExplainOptions explain;
  auto* c_explain = app.add_subcommand("explain", "write ranked-sentence reports");
  c_explain->add_option("--data-dir", explain.data_dir, "ingest output (default $SENTMASK_CACHE_DIR)");
  c_explain->add_option("--checkpoint", explain.checkpoint)->required();
  c_explain->add_option("--out-dir", explain.out_dir)->required();
  c_explain->add_option("--format", explain.format, "json | html | both")->capture_default_str();
  c_explain->add_option("--n", explain.n, "highlighted sentences")->capture_default_str();
  c_explain->add_option("--split", explain.split, "test | labeled | unlabeled | all")->capture_default_str();
  c_explain->add_option("--id", explain.ids, "only this document; repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(error_code_name(ErrorCode::kInvalidArgument),
                10 + static_cast<int>(ErrorCode::kInvalidArgument), e.what());
  }

  if (list_keys) {
    for (const auto& [k, doc] : TrainingConfig::documentation()) std::cout << k << "\t" << doc << '\n';
    return 0;
  }
  if (app.get_subcommands().empty()) {
    return fail(error_code_name(ErrorCode::kInvalidArgument), 10 + static_cast<int>(ErrorCode::kInvalidArgument),
                "a subcommand is required: synth, ingest, train, eval or explain");
  }

  try {
    if (*c_synth) {
      run_synth(synth, synth_out);
      std::cout << nlohmann::json{{"out_dir", synth_out}, {"documents", synth.documents}}.dump() << '\n';
    } else if (*c_ingest) {
      ingest.config = ingest_cfg.load();
      std::cout << run_ingest(ingest).to_json().dump() << '\n';
    } else if (*c_train) {
      train.config = train_cfg.load();
      std::cout << run_train(train).to_json().dump() << '\n';
    } else if (*c_eval) {
      for (const auto& r : run_eval(eval)) std::cout << r.to_json().dump() << '\n';
    } else if (*c_explain) {
      std::cout << nlohmann::json{{"explained", run_explain(explain)}, {"out_dir", explain.out_dir}}.dump()
                << '\n';
    }
  } catch (const Error& e) {
    return fail(error_code_name(e.code()), 10 + static_cast<int>(e.code()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(error_code_name(ErrorCode::kIo), 10 + static_cast<int>(ErrorCode::kIo), e.what());
  } catch (const std::exception& e) {
    return fail("E_INTERNAL", 1, e.what());
  }
  return 0;
}
