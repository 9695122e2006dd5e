#ifndef SENTMASK_INGEST_HPP
#define SENTMASK_INGEST_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sentmask {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kDefaultMaxSentences = 400;
inline constexpr int kDefaultMaxTokens = 25;

struct RawDocument {
  std::string id;
  std::string text;
  std::optional<int> label;
};

// One document as a fixed S x K grid of token ids. Rows past the last kept
// sentence, and rows invalidated by perturbation, are all-pad.
struct ShapedDocument {
  std::string id;
  int num_sentences = 0;  // S
  int num_tokens = 0;     // K
  std::vector<std::int32_t> tokens;          // S*K, row-major
  std::vector<std::uint8_t> sentence_valid;  // S
  std::vector<std::uint8_t> token_valid;     // S*K
  std::optional<int> label;
  // Untruncated text of each kept sentence; row j maps to entry j.
  std::vector<std::string> original_sentences;

  std::int32_t token(int row, int col) const {
    return tokens[static_cast<std::size_t>(row) * num_tokens + col];
  }
  bool is_valid(int row) const { return sentence_valid[row] != 0; }
  int valid_count() const;
  std::vector<int> valid_rows() const;
};

struct DatasetSplit {
  std::vector<ShapedDocument> labeled;
  std::vector<ShapedDocument> unlabeled;
  std::vector<ShapedDocument> test;
};

struct Manifest {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
  std::vector<std::string> test;
};

// Token map with reserved ids 0 = PAD and 1 = UNK. Regular tokens start at 2.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Frequency-ordered (count desc, then token asc), capped at max_size
  // regular tokens. max_size <= 0 means uncapped.
  static Vocabulary build(const std::vector<std::string_view>& texts, int max_size);
  // Newline-delimited tokens; line i holds the token with id i + 2.
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  // Total ids including the two reserved ones.
  int size() const { return static_cast<int>(tokens_.size()) + 2; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Splits on '.', '?' and ';'. Delimiters stay attached to the sentence they
// end; whitespace-only fragments are dropped, all other bytes are kept.
std::vector<std::string> split_sentences(std::string_view text);

// Lower-cased ASCII word runs; every other non-space byte is its own token.
// Bytes >= 0x80 count as word characters so UTF-8 sequences stay intact.
std::vector<std::string> tokenize(std::string_view sentence);

// Keeps the first S sentences and the first K tokens of each.
ShapedDocument shape_document(const RawDocument& doc, const Vocabulary& vocab,
                              int max_sentences = kDefaultMaxSentences,
                              int max_tokens = kDefaultMaxTokens);

std::vector<RawDocument> read_jsonl(const std::string& path);
Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& manifest, const std::string& path);

// Partitions raw documents by the manifest, preserving file order inside each
// partition. Documents the manifest does not mention are skipped. Labels of
// unlabeled-pool documents are withheld.
DatasetSplit assemble_split(const std::vector<RawDocument>& docs, const Manifest& manifest,
                            const Vocabulary& vocab, int max_sentences, int max_tokens);

DatasetSplit load_jsonl(const std::string& path, const std::string& manifest_path,
                        const Vocabulary& vocab, int max_sentences = kDefaultMaxSentences,
                        int max_tokens = kDefaultMaxTokens);

// Vocabulary over the labeled and unlabeled training text named by the manifest.
Vocabulary build_training_vocabulary(const std::vector<RawDocument>& docs,
                                     const Manifest& manifest, int max_size);

// Binary cache of a shaped split ("SMSH" header, version 1, little-endian).
void write_shaped_cache(const DatasetSplit& split, const std::string& path);
DatasetSplit read_shaped_cache(const std::string& path);

}  // namespace sentmask

#endif  // SENTMASK_INGEST_HPP
