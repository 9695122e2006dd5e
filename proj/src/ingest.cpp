#include "sentmask/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "binary_io.hpp"
#include "json.hpp"
#include "sentmask/error.hpp"

namespace sentmask {

namespace {

using nlohmann::json;

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         c == '_' || c >= 0x80;
}

bool has_content(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return !is_space(static_cast<unsigned char>(c)); });
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  return out;
}

std::optional<int> parse_label(const json& value, const std::string& where) {
  if (value.is_null()) return std::nullopt;
  if (!value.is_number_integer() && !value.is_number_unsigned()) {
    throw Error(ErrorCode::kBadLabel, where + ": label must be 0 or 1");
  }
  const auto label = value.get<long long>();
  if (label != 0 && label != 1) {
    throw Error(ErrorCode::kBadLabel, where + ": label " + std::to_string(label) + " not in {0,1}");
  }
  return static_cast<int>(label);
}

std::vector<std::string> id_list(const json& manifest, const char* key, const std::string& path) {
  if (!manifest.contains(key)) return {};
  const auto& arr = manifest.at(key);
  if (!arr.is_array()) throw Error(ErrorCode::kParse, path + ": '" + key + "' must be an array");
  std::vector<std::string> ids;
  ids.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_string()) throw Error(ErrorCode::kParse, path + ": ids must be strings");
    ids.push_back(v.get<std::string>());
  }
  return ids;
}

void write_doc(detail::BinaryWriter& w, const ShapedDocument& doc) {
  w.str(doc.id);
  w.u8(doc.label ? static_cast<std::uint8_t>(*doc.label) : 0xFF);
  for (auto t : doc.tokens) w.i32(t);
  w.bytes(doc.sentence_valid.data(), doc.sentence_valid.size());
  w.bytes(doc.token_valid.data(), doc.token_valid.size());
  w.u32(static_cast<std::uint32_t>(doc.original_sentences.size()));
  for (const auto& s : doc.original_sentences) w.str(s);
}

ShapedDocument read_doc(detail::BinaryReader& r, int S, int K) {
  ShapedDocument doc;
  doc.num_sentences = S;
  doc.num_tokens = K;
  doc.id = r.str();
  const auto label = r.u8();
  if (label != 0xFF) doc.label = label;
  const auto cells = static_cast<std::size_t>(S) * K;
  doc.tokens.resize(cells);
  for (auto& t : doc.tokens) t = r.i32();
  doc.sentence_valid.resize(S);
  r.bytes(doc.sentence_valid.data(), doc.sentence_valid.size());
  doc.token_valid.resize(cells);
  r.bytes(doc.token_valid.data(), doc.token_valid.size());
  doc.original_sentences.resize(r.u32());
  for (auto& s : doc.original_sentences) s = r.str();
  return doc;
}

}  // namespace

int ShapedDocument::valid_count() const {
  return static_cast<int>(std::count(sentence_valid.begin(), sentence_valid.end(), 1));
}

std::vector<int> ShapedDocument::valid_rows() const {
  std::vector<int> rows;
  for (int j = 0; j < num_sentences; ++j) {
    if (sentence_valid[j]) rows.push_back(j);
  }
  return rows;
}

void Vocabulary::add(std::string token) {
  index_.emplace(token, static_cast<int>(tokens_.size()) + 2);
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const std::vector<std::string_view>& texts, int max_size) {
  std::map<std::string, long long> counts;
  for (auto text : texts) {
    for (const auto& sentence : split_sentences(text)) {
      for (auto& tok : tokenize(sentence)) ++counts[std::move(tok)];
    }
  }
  std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_size > 0 && static_cast<int>(ranked.size()) > max_size) ranked.resize(max_size);
  Vocabulary vocab;
  for (auto& [tok, n] : ranked) vocab.add(tok);
  return vocab;
}

Vocabulary Vocabulary::load(const std::string& path) {
  auto in = open_input(path);
  Vocabulary vocab;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (vocab.index_.count(line)) {
      throw Error(ErrorCode::kDuplicateId,
                  path + ":" + std::to_string(lineno) + ": duplicate token '" + line + "'");
    }
    vocab.add(line);
  }
  return vocab;
}

void Vocabulary::save(const std::string& path) const {
  auto out = open_output(path);
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  static const std::string kPad = "<pad>";
  static const std::string kUnk = "<unk>";
  if (id == kPadId) return kPad;
  if (id == kUnkId || id < 0 || id >= size()) return kUnk;
  return tokens_[id - 2];
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.' || c == '?' || c == ';') {
      auto piece = text.substr(start, i + 1 - start);
      if (has_content(piece)) out.emplace_back(piece);
      start = i + 1;
    }
  }
  if (start < text.size()) {
    auto tail = text.substr(start);
    if (has_content(tail)) out.emplace_back(tail);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < sentence.size()) {
    const auto c = static_cast<unsigned char>(sentence[i]);
    if (is_space(c)) {
      ++i;
    } else if (is_word_byte(c)) {
      std::string tok;
      while (i < sentence.size() && is_word_byte(static_cast<unsigned char>(sentence[i]))) {
        auto b = static_cast<unsigned char>(sentence[i++]);
        if (b >= 'A' && b <= 'Z') b = static_cast<unsigned char>(b - 'A' + 'a');
        tok.push_back(static_cast<char>(b));
      }
      out.push_back(std::move(tok));
    } else {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }
  return out;
}

ShapedDocument shape_document(const RawDocument& doc, const Vocabulary& vocab, int max_sentences,
                              int max_tokens) {
  if (max_sentences < 1 || max_tokens < 1) {
    throw Error(ErrorCode::kInvalidArgument, "S and K must be >= 1");
  }
  auto sentences = split_sentences(doc.text);
  if (sentences.empty()) {
    throw Error(ErrorCode::kEmptyDocument, "empty document '" + doc.id + "'");
  }
  ShapedDocument shaped;
  shaped.id = doc.id;
  shaped.label = doc.label;
  shaped.num_sentences = max_sentences;
  shaped.num_tokens = max_tokens;
  const auto cells = static_cast<std::size_t>(max_sentences) * max_tokens;
  shaped.tokens.assign(cells, kPadId);
  shaped.token_valid.assign(cells, 0);
  shaped.sentence_valid.assign(max_sentences, 0);

  const int kept = std::min<int>(max_sentences, static_cast<int>(sentences.size()));
  for (int j = 0; j < kept; ++j) {
    const auto toks = tokenize(sentences[j]);
    const int n = std::min<int>(max_tokens, static_cast<int>(toks.size()));
    for (int k = 0; k < n; ++k) {
      const auto cell = static_cast<std::size_t>(j) * max_tokens + k;
      shaped.tokens[cell] = vocab.id(toks[k]);
      shaped.token_valid[cell] = 1;
    }
    // Sentences always carry a non-space byte, hence at least one token.
    shaped.sentence_valid[j] = 1;
    shaped.original_sentences.push_back(std::move(sentences[j]));
  }
  return shaped;
}

std::vector<RawDocument> read_jsonl(const std::string& path) {
  auto in = open_input(path);
  std::vector<RawDocument> docs;
  std::unordered_set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!has_content(line)) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParse, where + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("text") ||
        !obj["id"].is_string() || !obj["text"].is_string()) {
      throw Error(ErrorCode::kParse, where + ": expected {\"id\": str, \"text\": str}");
    }
    RawDocument doc;
    doc.id = obj["id"].get<std::string>();
    doc.text = obj["text"].get<std::string>();
    if (obj.contains("label")) doc.label = parse_label(obj["label"], where);
    if (!seen.insert(doc.id).second) {
      throw Error(ErrorCode::kDuplicateId, where + ": duplicate id '" + doc.id + "'");
    }
    if (!has_content(doc.text)) {
      throw Error(ErrorCode::kEmptyDocument, where + ": empty document '" + doc.id + "'");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

Manifest load_manifest(const std::string& path) {
  auto in = open_input(path);
  json obj;
  try {
    obj = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, path + ": malformed JSON (" + e.what() + ")");
  }
  if (!obj.is_object()) throw Error(ErrorCode::kParse, path + ": manifest must be an object");
  Manifest m;
  m.labeled = id_list(obj, "labeled", path);
  m.unlabeled = id_list(obj, "unlabeled", path);
  m.test = id_list(obj, "test", path);
  return m;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  json obj = {{"labeled", manifest.labeled},
              {"unlabeled", manifest.unlabeled},
              {"test", manifest.test}};
  auto out = open_output(path);
  out << obj.dump() << '\n';
}

namespace {

enum class Partition { kLabeled, kUnlabeled, kTest };

std::unordered_map<std::string, Partition> partition_index(const Manifest& manifest) {
  std::unordered_map<std::string, Partition> where;
  auto assign = [&](const std::vector<std::string>& ids, Partition p) {
    for (const auto& id : ids) {
      if (!where.emplace(id, p).second) {
        throw Error(ErrorCode::kDuplicateId, "id '" + id + "' appears twice in the manifest");
      }
    }
  };
  assign(manifest.labeled, Partition::kLabeled);
  assign(manifest.unlabeled, Partition::kUnlabeled);
  assign(manifest.test, Partition::kTest);
  return where;
}

}  // namespace

DatasetSplit assemble_split(const std::vector<RawDocument>& docs, const Manifest& manifest,
                            const Vocabulary& vocab, int max_sentences, int max_tokens) {
  const auto where = partition_index(manifest);
  DatasetSplit split;
  std::size_t found = 0;
  for (const auto& raw : docs) {
    auto it = where.find(raw.id);
    if (it == where.end()) continue;
    ++found;
    if (it->second != Partition::kUnlabeled && !raw.label) {
      throw Error(ErrorCode::kBadLabel, "document '" + raw.id + "' needs a label");
    }
    auto shaped = shape_document(raw, vocab, max_sentences, max_tokens);
    switch (it->second) {
      case Partition::kLabeled:
        split.labeled.push_back(std::move(shaped));
        break;
      case Partition::kUnlabeled:
        shaped.label.reset();
        split.unlabeled.push_back(std::move(shaped));
        break;
      case Partition::kTest:
        split.test.push_back(std::move(shaped));
        break;
    }
  }
  if (found != where.size()) {
    std::unordered_set<std::string> present;
    for (const auto& d : docs) present.insert(d.id);
    for (const auto& [id, p] : where) {
      if (!present.count(id)) {
        throw Error(ErrorCode::kInvalidArgument, "manifest id '" + id + "' not found in data");
      }
    }
  }
  return split;
}

DatasetSplit load_jsonl(const std::string& path, const std::string& manifest_path,
                        const Vocabulary& vocab, int max_sentences, int max_tokens) {
  const auto docs = read_jsonl(path);
  if (docs.empty()) throw Error(ErrorCode::kEmptyDataset, path + ": no documents");
  return assemble_split(docs, load_manifest(manifest_path), vocab, max_sentences, max_tokens);
}

Vocabulary build_training_vocabulary(const std::vector<RawDocument>& docs,
                                     const Manifest& manifest, int max_size) {
  std::unordered_set<std::string> train_ids(manifest.labeled.begin(), manifest.labeled.end());
  train_ids.insert(manifest.unlabeled.begin(), manifest.unlabeled.end());
  std::vector<std::string_view> texts;
  for (const auto& d : docs) {
    if (train_ids.count(d.id)) texts.emplace_back(d.text);
  }
  return Vocabulary::build(texts, max_size);
}

void write_shaped_cache(const DatasetSplit& split, const std::string& path) {
  auto out = open_output(path);
  detail::BinaryWriter w(out);
  w.bytes("SMSH", 4);
  w.u32(1);
  const ShapedDocument* any = nullptr;
  for (const auto* part : {&split.labeled, &split.unlabeled, &split.test}) {
    if (!part->empty() && !any) any = &part->front();
  }
  w.u32(any ? static_cast<std::uint32_t>(any->num_sentences) : 0);
  w.u32(any ? static_cast<std::uint32_t>(any->num_tokens) : 0);
  for (const auto* part : {&split.labeled, &split.unlabeled, &split.test}) {
    w.u64(part->size());
    for (const auto& doc : *part) write_doc(w, doc);
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
}

DatasetSplit read_shaped_cache(const std::string& path) {
  auto in = open_input(path);
  detail::BinaryReader r(in, path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "SMSH") throw Error(ErrorCode::kParse, path + ": not a shaped cache");
  if (const auto version = r.u32(); version != 1) {
    throw Error(ErrorCode::kParse, path + ": unsupported cache version " + std::to_string(version));
  }
  const int S = static_cast<int>(r.u32());
  const int K = static_cast<int>(r.u32());
  DatasetSplit split;
  for (auto* part : {&split.labeled, &split.unlabeled, &split.test}) {
    const auto n = r.u64();
    part->reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) part->push_back(read_doc(r, S, K));
  }
  return split;
}

}  // namespace sentmask
