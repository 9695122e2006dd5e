#include "sentmask/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>

#include "sentmask/error.hpp"

namespace sentmask {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorCode::kConfig, "config key '" + key + "': cannot parse '" + value + "' as " + want);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::string show(double v) { return nlohmann::json(v).dump(); }
std::string show(bool v) { return v ? "true" : "false"; }

struct Field {
  std::string doc;
  std::function<void(TrainingConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainingConfig&)> get;
};

template <typename M>
Field int_field(M member, std::string doc) {
  return {std::move(doc),
          [member](TrainingConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_int(k, v);
          },
          [member](const TrainingConfig& c) {
            return std::to_string(member(c));
          }};
}

template <typename M>
Field double_field(M member, std::string doc) {
  return {std::move(doc),
          [member](TrainingConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_double(k, v);
          },
          [member](const TrainingConfig& c) { return show(member(c)); }};
}

template <typename M>
Field bool_field(M member, std::string doc) {
  return {std::move(doc),
          [member](TrainingConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_bool(k, v);
          },
          [member](const TrainingConfig& c) { return show(member(c)); }};
}

template <typename M>
Field string_field(M member, std::string doc) {
  return {std::move(doc),
          [member](TrainingConfig& c, const std::string&, const std::string& v) { member(c) = v; },
          [member](const TrainingConfig& c) { return member(c); }};
}

#define SM_MEMBER(path) [](auto& c) -> auto& { return c.path; }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t.emplace("encoder.backend", string_field(SM_MEMBER(encoder.backend),
                                              "sentence encoder: recurrent | transformer (default recurrent)"));
    t.emplace("encoder.word_dim", int_field(SM_MEMBER(encoder.word_dim), "word embedding width (default 300)"));
    t.emplace("encoder.hidden", int_field(SM_MEMBER(encoder.hidden),
                                          "encoder width per direction / transformer model width (default 300)"));
    t.emplace("encoder.freeze_embeddings", bool_field(SM_MEMBER(encoder.freeze_embeddings),
                                                      "keep word embeddings fixed (default true)"));
    t.emplace("encoder.embeddings_path", string_field(SM_MEMBER(encoder.embeddings_path),
                                                      "pretrained word vectors, text format (default none)"));
    t.emplace("encoder.layers", int_field(SM_MEMBER(encoder.layers), "transformer layers (default 2)"));
    t.emplace("encoder.heads", int_field(SM_MEMBER(encoder.heads), "transformer attention heads (default 4)"));
    t.emplace("encoder.ff_dim", int_field(SM_MEMBER(encoder.ff_dim), "transformer feed-forward width (default 512)"));
    t.emplace("encoder.pretrained_path", string_field(SM_MEMBER(encoder.pretrained_path),
                                                      "transformer weights, safetensors (default none)"));
    t.emplace("mask.hidden", int_field(SM_MEMBER(mask.hidden), "mask network width per direction (default 64)"));
    t.emplace("mask.temperature", double_field(SM_MEMBER(mask.temperature), "relaxation temperature (default 1.0)"));
    t.emplace("mask.temperature_final", double_field(SM_MEMBER(mask.temperature_final),
                                                     "temperature reached at the last epoch (default 1.0)"));
    t.emplace("mask.keep_rate", double_field(SM_MEMBER(mask.keep_rate), "Bernoulli prior keep rate (default 0.2)"));
    t.emplace("mask.harden_mode",
              Field{"inference mask: threshold | top_n (default top_n)",
                    [](TrainingConfig& c, const std::string&, const std::string& v) {
                      c.mask.harden_mode = parse_harden_mode(v);
                    },
                    [](const TrainingConfig& c) { return std::string(harden_mode_name(c.mask.harden_mode)); }});
    t.emplace("mask.top_n", int_field(SM_MEMBER(mask.top_n), "sentences kept in top_n mode (default 20)"));
    t.emplace("head.hidden", int_field(SM_MEMBER(head.hidden), "document classifier width per direction (default 64)"));
    t.emplace("loss.alpha", double_field(SM_MEMBER(loss.alpha), "weight of the consistency loss (default 1.0)"));
    t.emplace("loss.beta", double_field(SM_MEMBER(loss.beta), "weight of the KL term (default 0.1)"));
    t.emplace("loss.hard_teacher", bool_field(SM_MEMBER(loss.hard_teacher),
                                              "argmax teacher targets instead of soft (default false)"));
    t.emplace("train.lr", double_field(SM_MEMBER(train.lr), "learning rate, recurrent backend (default 0.001)"));
    t.emplace("train.lr_transformer", double_field(SM_MEMBER(train.lr_transformer),
                                                   "learning rate, transformer backend (default 2e-5)"));
    t.emplace("train.adam_beta1", double_field(SM_MEMBER(train.adam_beta1), "Adam beta1 (default 0.9)"));
    t.emplace("train.adam_beta2", double_field(SM_MEMBER(train.adam_beta2), "Adam beta2 (default 0.999)"));
    t.emplace("train.adam_eps", double_field(SM_MEMBER(train.adam_eps), "Adam epsilon (default 1e-8)"));
    t.emplace("train.weight_decay", double_field(SM_MEMBER(train.weight_decay),
                                                 "decoupled weight decay (default 0)"));
    t.emplace("train.clip_norm", double_field(SM_MEMBER(train.clip_norm),
                                              "global gradient norm clip, 0 disables (default 5.0)"));
    t.emplace("train.epochs", int_field(SM_MEMBER(train.epochs), "epochs (default 30)"));
    t.emplace("train.labeled_batch", int_field(SM_MEMBER(train.labeled_batch), "labeled batch size (default 8)"));
    t.emplace("train.unlabeled_batch", int_field(SM_MEMBER(train.unlabeled_batch),
                                                 "unlabeled batch size (default 8)"));
    t.emplace("train.heldout_fraction", double_field(SM_MEMBER(train.heldout_fraction),
                                                     "labeled fraction held out for model selection (default 0.1)"));
    t.emplace("train.seed",
              Field{"master seed (default 13)",
                    [](TrainingConfig& c, const std::string& k, const std::string& v) {
                      c.train.seed = parse_u64(k, v);
                    },
                    [](const TrainingConfig& c) { return std::to_string(c.train.seed); }});
    t.emplace("data.max_sentences", int_field(SM_MEMBER(data.max_sentences), "sentences per document S (default 400)"));
    t.emplace("data.max_tokens", int_field(SM_MEMBER(data.max_tokens), "tokens per sentence K (default 25)"));
    t.emplace("data.vocab_size", int_field(SM_MEMBER(data.vocab_size), "vocabulary cap (default 50000)"));
    t.emplace("eval.top_n", int_field(SM_MEMBER(eval.top_n), "sentences deleted/kept by the metrics (default 20)"));
    t.emplace("eval.compact", bool_field(SM_MEMBER(eval.compact),
                                         "compact remaining sentences after deletion (default false)"));
    return t;
  }();
  return table;
}

#undef SM_MEMBER

const Field& field(const std::string& key) {
  auto it = fields().find(key);
  if (it == fields().end()) throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

const char* harden_mode_name(HardenMode mode) {
  return mode == HardenMode::kThreshold ? "threshold" : "top_n";
}

HardenMode parse_harden_mode(const std::string& s) {
  if (s == "threshold") return HardenMode::kThreshold;
  if (s == "top_n") return HardenMode::kTopN;
  throw Error(ErrorCode::kConfig, "unknown harden mode '" + s + "'");
}

void TrainingConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, key, trim(value));
}

std::string TrainingConfig::get(const std::string& key) const { return field(key).get(*this); }

std::vector<std::string> TrainingConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

std::map<std::string, std::string> TrainingConfig::documentation() {
  std::map<std::string, std::string> out;
  for (const auto& [k, f] : fields()) out.emplace(k, f.doc);
  return out;
}

void TrainingConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kConfig, what);
  };
  require(encoder.backend == "recurrent" || encoder.backend == "transformer",
          "encoder.backend must be recurrent or transformer");
  require(encoder.word_dim >= 1 && encoder.hidden >= 1, "encoder dimensions must be >= 1");
  require(encoder.layers >= 1 && encoder.heads >= 1 && encoder.ff_dim >= 1,
          "transformer dimensions must be >= 1");
  require(encoder.backend != "transformer" || encoder.hidden % encoder.heads == 0,
          "encoder.hidden must be divisible by encoder.heads");
  require(mask.hidden >= 1 && head.hidden >= 1, "mask.hidden and head.hidden must be >= 1");
  require(mask.temperature > 0 && mask.temperature_final > 0, "temperatures must be > 0");
  require(mask.keep_rate > 0 && mask.keep_rate < 1, "mask.keep_rate must lie in (0,1)");
  require(mask.top_n >= 1, "mask.top_n must be >= 1");
  require(loss.alpha >= 0, "loss.alpha must be >= 0");
  require(loss.beta >= 0, "loss.beta must be >= 0");
  require(train.lr > 0 && train.lr_transformer > 0, "learning rates must be > 0");
  require(train.adam_beta1 >= 0 && train.adam_beta1 < 1 && train.adam_beta2 >= 0 && train.adam_beta2 < 1,
          "Adam betas must lie in [0,1)");
  require(train.adam_eps > 0, "train.adam_eps must be > 0");
  require(train.weight_decay >= 0 && train.clip_norm >= 0, "weight decay and clip norm must be >= 0");
  require(train.epochs >= 0, "train.epochs must be >= 0");
  require(train.labeled_batch >= 1 && train.unlabeled_batch >= 1, "batch sizes must be >= 1");
  require(train.heldout_fraction >= 0 && train.heldout_fraction < 1,
          "train.heldout_fraction must lie in [0,1)");
  require(data.max_sentences >= 1 && data.max_tokens >= 1, "S and K must be >= 1");
  require(eval.top_n >= 0, "eval.top_n must be >= 0");
}

double TrainingConfig::effective_lr() const {
  return encoder.backend == "transformer" ? train.lr_transformer : train.lr;
}

double TrainingConfig::temperature_at(int epoch, int epochs) const {
  if (epochs <= 1) return mask.temperature;
  const double t = static_cast<double>(std::clamp(epoch, 0, epochs - 1)) / (epochs - 1);
  return mask.temperature + (mask.temperature_final - mask.temperature) * t;
}

nlohmann::json TrainingConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, f] : fields()) j[k] = f.get(*this);
  return j;
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig c;
  for (const auto& [k, v] : j.items()) c.set(k, v.is_string() ? v.get<std::string>() : v.dump());
  return c;
}

std::vector<std::pair<std::string, std::string>> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

}  // namespace sentmask
