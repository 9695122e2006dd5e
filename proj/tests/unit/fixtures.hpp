#ifndef SENTMASK_TESTS_FIXTURES_HPP
#define SENTMASK_TESTS_FIXTURES_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "sentmask/model.hpp"

namespace fixtures {

using namespace sentmask;

// Document with the given valid token count per sentence row (0 = invalid
// row); token ids cycle through [2, vocab).
inline ShapedDocument grid_doc(const std::string& id, int S, int K, const std::vector<int>& lengths,
                               int vocab, int salt = 0, std::optional<int> label = std::nullopt) {
  ShapedDocument d;
  d.id = id;
  d.num_sentences = S;
  d.num_tokens = K;
  d.tokens.assign(static_cast<std::size_t>(S) * K, kPadId);
  d.token_valid.assign(d.tokens.size(), 0);
  d.sentence_valid.assign(S, 0);
  d.label = label;
  int next = salt;
  for (int j = 0; j < S && j < static_cast<int>(lengths.size()); ++j) {
    if (lengths[j] == 0) continue;
    d.sentence_valid[j] = 1;
    for (int k = 0; k < lengths[j] && k < K; ++k) {
      d.tokens[static_cast<std::size_t>(j) * K + k] = 2 + (next++ * 7 + j) % (vocab - 2);
      d.token_valid[static_cast<std::size_t>(j) * K + k] = 1;
    }
    d.original_sentences.push_back("sentence " + std::to_string(j) + ".");
  }
  return d;
}

// Small model: word_dim 6, hidden widths 4/3/3.
inline TrainingConfig tiny_config(int S = 4, int K = 5) {
  TrainingConfig c;
  c.encoder.word_dim = 6;
  c.encoder.hidden = 4;
  c.encoder.freeze_embeddings = false;
  c.mask.hidden = 3;
  c.head.hidden = 3;
  c.data.max_sentences = S;
  c.data.max_tokens = K;
  return c;
}

inline std::vector<const ShapedDocument*> ptrs(const std::vector<ShapedDocument>& docs) {
  std::vector<const ShapedDocument*> out;
  for (const auto& d : docs) out.push_back(&d);
  return out;
}

struct TempDir {
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("sentmask_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
  std::filesystem::path path;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixtures

#endif  // SENTMASK_TESTS_FIXTURES_HPP
