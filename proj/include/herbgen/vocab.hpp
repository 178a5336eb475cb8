#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace herbgen::vocab {

// Character-level vocabulary. Ids are contiguous; the six reserved tokens
// occupy ids 0..5 in fixed order and appear exactly once.
class Vocabulary {
 public:
  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kCls = "[CLS]";
  static constexpr const char* kSep = "[SEP]";
  static constexpr const char* kMask = "[MASK]";
  static constexpr const char* kDelimiter = "\xE3\x80\x81";  // U+3001 "、"

  Vocabulary() = default;

  // Takes the full ordered token list; validates the reserved-token layout
  // and uniqueness of every token.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }

  // -1 when the token is unknown.
  int id_of(std::string_view token) const;
  bool contains(std::string_view token) const { return id_of(token) >= 0; }

  // Throws on out-of-range ids.
  const std::string& token_of(int id) const;

  // Per-codepoint encoding; unknown characters map to [UNK].
  std::vector<int> encode(std::string_view text) const;

  // Inverse of encode for known characters. Throws on id >= size().
  std::string decode(std::span<const int> ids) const;

  int pad_id() const { return 0; }
  int unk_id() const { return 1; }
  int cls_id() const { return 2; }
  int sep_id() const { return 3; }
  int mask_id() const { return 4; }
  int delimiter_id() const { return 5; }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct HerbSpan {
  std::size_t start = 0;  // inclusive token index
  std::size_t end = 0;    // exclusive token index
  std::string herb;
};

// Registry of multi-character herb entities. Matching is greedy
// longest-first, left to right, which makes whole-entity masking and
// herb-boundary detection deterministic.
class EntityRegistry {
 public:
  EntityRegistry() = default;
  explicit EntityRegistry(std::vector<std::string> herbs);

  const std::vector<std::string>& herbs() const { return herbs_; }
  bool contains(std::string_view herb) const;
  std::size_t size() const { return herbs_.size(); }

  // Non-overlapping spans sorted by start; each span decodes to a
  // registered herb.
  std::vector<HerbSpan> find_spans(std::span<const int> ids,
                                   const Vocabulary& vocab) const;

 private:
  std::vector<std::string> herbs_;          // sorted, unique
  std::vector<std::string> match_order_;    // by (length desc, lexicographic)
};

struct BuildVocabResult {
  Vocabulary vocabulary;
  EntityRegistry registry;
  std::size_t duplicate_herb_count = 0;
};

// Builds the vocabulary over every character in the corpus and herb list
// plus the reserved tokens, and the herb registry. Duplicate herb names are
// dropped silently; the count of dropped duplicates is returned.
BuildVocabResult build_vocabulary(std::span<const std::string> corpus_lines,
                                  std::span<const std::string> herb_names);

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, std::span<const std::string> lines);

}  // namespace herbgen::vocab
