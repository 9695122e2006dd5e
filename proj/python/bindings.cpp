#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sentmask/error.hpp"
#include "sentmask/explainer.hpp"
#include "sentmask/masknet.hpp"
#include "sentmask/pipeline.hpp"
#include "sentmask/synth.hpp"
#include "sentmask/trainer.hpp"

namespace py = pybind11;
using namespace sentmask;

namespace {

// A trained checkpoint plus the vocabulary it was trained with, for
// classifying and explaining raw text.
class Classifier {
 public:
  Classifier(const std::string& checkpoint, const std::string& vocab_path)
      : ckpt_(load_checkpoint(checkpoint)), vocab_(Vocabulary::load(vocab_path)), model_(ckpt_.build_model()) {
    if (vocab_.size() != ckpt_.vocab_size) {
      throw Error(ErrorCode::kVocabularyMismatch, "vocabulary size differs from the checkpoint's");
    }
  }

  std::vector<double> predict(const std::string& text) {
    const auto d = model_->predict(shape(text));
    return {d.probs[0], d.probs[1]};
  }

  // JSON string of the ranked explanation (same layout as the report files).
  std::string explain(const std::string& text, int n, const std::string& format) {
    const auto doc = shape(text);
    const auto rec = sentmask::explain(doc, *model_, n);
    if (format == "record") return explanation_json(doc, rec).dump();
    return render_report(doc, rec, n, format);
  }

  std::string checkpoint_id() const { return ckpt_.id; }
  std::string config_json() const { return ckpt_.config.to_json().dump(); }

 private:
  ShapedDocument shape(const std::string& text) const {
    RawDocument raw{"input", text, std::nullopt};
    return shape_document(raw, vocab_, ckpt_.config.data.max_sentences, ckpt_.config.data.max_tokens);
  }

  Checkpoint ckpt_;
  Vocabulary vocab_;
  std::unique_ptr<Model> model_;
};

}  // namespace

PYBIND11_MODULE(_sentmask, m) {
  m.doc() = "Sentence-mask explanations for long-document classification (native core)";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result([&] { return py::object(py::exception<Error>(m, "SentmaskError")); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object type = error_type.get_stored();
      py::object exc = type(py::str(e.what()));
      exc.attr("code") = error_code_name(e.code());
      PyErr_SetObject(type.ptr(), exc.ptr());
    }
  });

  m.def("config_keys", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, doc] : TrainingConfig::documentation()) out.emplace_back(k, doc);
    return out;
  });
  m.def("resolve_config", [](const std::string& file, const std::vector<std::string>& overrides) {
    return load_config(file, overrides).to_json().dump();
  }, py::arg("file") = "", py::arg("overrides") = std::vector<std::string>{});

  m.def("split_sentences", [](const std::string& text) { return split_sentences(text); });
  m.def("tokenize", [](const std::string& s) { return tokenize(s); });
  m.def("bernoulli_kl", [](const std::vector<double>& probs, double keep_rate) {
    return kl_to_prior(probs, MaskPrior(keep_rate));
  }, py::arg("probs"), py::arg("keep_rate"));
  m.def("harden", [](const std::vector<double>& probs, const std::string& mode, std::optional<int> n) {
    if (mode != "threshold" && mode != "top_n") throw Error(ErrorCode::kInvalidArgument, "unknown mode '" + mode + "'");
    const auto mv = harden(probs, mode == "threshold" ? HardenMode::kThreshold : HardenMode::kTopN, n);
    return mv.sample;
  }, py::arg("probs"), py::arg("mode") = "top_n", py::arg("n") = py::none());

  m.def("synth", [](const std::string& out_dir, int documents, int sentences, int signal, int labeled,
                    int unlabeled, int test, std::uint64_t seed) {
    SynthConfig c;
    c.documents = documents;
    c.sentences = sentences;
    c.signal = signal;
    c.labeled = labeled;
    c.unlabeled = unlabeled;
    c.test = test;
    c.seed = seed;
    py::gil_scoped_release release;
    run_synth(c, out_dir);
  }, py::arg("out_dir"), py::arg("documents") = 2000, py::arg("sentences") = 40, py::arg("signal") = 3,
     py::arg("labeled") = 200, py::arg("unlabeled") = 1600, py::arg("test") = 200, py::arg("seed") = 7);

  m.def("ingest", [](const std::string& data, const std::string& manifest, const std::string& out_dir,
                     const std::string& config, const std::vector<std::string>& overrides, const std::string& vocab) {
    IngestOptions o;
    o.data = data;
    o.manifest = manifest;
    o.out_dir = out_dir;
    o.vocab = vocab;
    o.config = load_config(config, overrides);
    py::gil_scoped_release release;
    return run_ingest(o).to_json().dump();
  }, py::arg("data"), py::arg("manifest"), py::arg("out_dir"), py::arg("config") = "",
     py::arg("overrides") = std::vector<std::string>{}, py::arg("vocab") = "");

  m.def("train", [](const std::string& data_dir, const std::string& out_dir, const std::string& config,
                    const std::vector<std::string>& overrides, const std::string& resume) {
    TrainOptions o;
    o.data_dir = data_dir;
    o.out_dir = out_dir;
    o.resume = resume;
    o.config = load_config(config, overrides);
    py::gil_scoped_release release;
    return run_train(o).to_json().dump();
  }, py::arg("data_dir"), py::arg("out_dir"), py::arg("config") = "",
     py::arg("overrides") = std::vector<std::string>{}, py::arg("resume") = "");

  m.def("evaluate", [](const std::string& data_dir, const std::string& checkpoint, const std::string& out_dir,
                       const std::vector<int>& n, bool compact, const std::string& control, std::uint64_t seed) {
    EvalOptions o;
    o.data_dir = data_dir;
    o.checkpoint = checkpoint;
    o.out_dir = out_dir;
    o.n = n;
    o.compact = compact;
    o.control = control;
    o.seed = seed;
    std::vector<std::string> out;
    py::gil_scoped_release release;
    for (const auto& r : run_eval(o)) out.push_back(r.to_json().dump());
    return out;
  }, py::arg("data_dir"), py::arg("checkpoint"), py::arg("out_dir"), py::arg("n") = std::vector<int>{},
     py::arg("compact") = false, py::arg("control") = "", py::arg("seed") = 13);

  m.def("explain", [](const std::string& data_dir, const std::string& checkpoint, const std::string& out_dir,
                      const std::string& format, int n, const std::string& split, const std::vector<std::string>& ids) {
    ExplainOptions o;
    o.data_dir = data_dir;
    o.checkpoint = checkpoint;
    o.out_dir = out_dir;
    o.format = format;
    o.n = n;
    o.split = split;
    o.ids = ids;
    py::gil_scoped_release release;
    return run_explain(o);
  }, py::arg("data_dir"), py::arg("checkpoint"), py::arg("out_dir"), py::arg("format") = "both",
     py::arg("n") = kDefaultTopN, py::arg("split") = "test", py::arg("ids") = std::vector<std::string>{});

  py::class_<Classifier>(m, "Classifier")
      .def(py::init<const std::string&, const std::string&>(), py::arg("checkpoint"), py::arg("vocab"))
      .def("predict", &Classifier::predict, py::arg("text"))
      .def("explain", &Classifier::explain, py::arg("text"), py::arg("n") = kDefaultTopN,
           py::arg("format") = "record")
      .def_property_readonly("checkpoint_id", &Classifier::checkpoint_id)
      .def_property_readonly("config_json", &Classifier::config_json);
}
