#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "herbgen/kg.hpp"
#include "herbgen/rng.hpp"
#include "herbgen/tensor.hpp"
#include "herbgen/vocab.hpp"

namespace herbgen::encoding {

inline constexpr int kSegmentA = 0;
inline constexpr int kSegmentB = 1;
inline constexpr std::size_t kNoPosition = static_cast<std::size_t>(-1);
inline constexpr int kNoOwner = -1;

struct ZSpan {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  int owner_herb = kNoOwner;
};

// Positional layout of one sequence:
//   [CLS] X [SEP] Y [SEP] Z_0 Z_1 ...
// The second [SEP] is treated as a Y position. Inference prefixes have no
// second [SEP]; their Y range ends with the trailing [MASK].
struct SegmentLayout {
  std::size_t cls_pos = 0;
  std::size_t x_start = 1, x_end = 1;  // [x_start, x_end)
  std::size_t sep1_pos = kNoPosition;
  std::size_t y_start = 0, y_end = 0;  // [y_start, y_end), includes 2nd [SEP]
  std::size_t sep2_pos = kNoPosition;  // inside [y_start, y_end) when present
  std::vector<ZSpan> z_spans;
  std::size_t total = 0;

  bool in_source(std::size_t p) const {
    return p == cls_pos || (p >= x_start && p < x_end) || p == sep1_pos;
  }
  bool in_y(std::size_t p) const { return p >= y_start && p < y_end; }
  // Z span index containing p, or -1.
  int z_span_of(std::size_t p) const;
  // Verifies that source, Y and Z ranges are disjoint, ordered, and tile
  // 0..total-1. Throws on violation.
  void check_tiling() const;
};

// One fully prepared model input. `mask` is the N x N additive attention
// matrix over {0, -inf}: entry (r, c) is 0 iff query row r may attend to
// key column c. `loss_positions[p]` marks rows whose logits are scored
// against `target_ids[p]`.
struct EncodedExample {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> position_ids;
  compute::Tensor mask;
  std::vector<bool> loss_positions;
  std::vector<int> target_ids;  // -1 where loss_positions is false
  SegmentLayout layout;
  // Per Y position, the index of the herb owning it, or kNoOwner for
  // delimiters, the second [SEP] and the inference [MASK].
  std::vector<int> y_owner;
  // (start, end) of each gold herb inside Y, by herb index.
  std::vector<std::pair<std::size_t, std::size_t>> herb_spans;
  bool knowledge_truncated = false;

  std::size_t size() const { return token_ids.size(); }
  std::vector<std::size_t> loss_rows() const;
  std::vector<int> loss_targets() const;
};

// Bidirectional masked-LM example: [CLS] text [SEP], all-zero mask, a
// subset of positions replaced by [MASK]. Whenever any character of a
// registered herb is selected the whole herb span is masked together.
// Targets hold the original ids at masked positions.
EncodedExample build_pretrain_example(std::string_view text, double mask_rate,
                                      const vocab::Vocabulary& vocab,
                                      const vocab::EntityRegistry& registry,
                                      Rng& rng, std::size_t max_len);

// Seq2seq fine-tuning example with per-herb knowledge visibility.
// Mask rules:
//   (a) source rows ([CLS], X, first [SEP]) see exactly the source columns;
//   (b) the Y row at position j sees source, Y columns <= j, and the Z
//       columns of the herb owning j; all later Y columns and all other
//       herbs' Z columns are -inf;
//   (c) rows of herb i's Z span see source and their own span only.
// Rows from sep1 to the position before the final [SEP] are scored against
// the next token, so every Y token (herb characters, delimiters, final
// [SEP]) is predicted exactly once from its gold prefix.
EncodedExample build_finetune_example(std::string_view symptoms,
                                      std::span<const std::string> herbs,
                                      const vocab::Vocabulary& vocab,
                                      const kg::KnowledgeGraph& graph,
                                      kg::KnowledgeMode mode, Rng* rng,
                                      std::size_t max_len);

// Stepwise decoding prefix: [CLS] X [SEP] y1 ... [MASK], optionally
// followed by Z spans of already-completed herbs. The [MASK] row sees
// source and all prior Y but no Z span (its herb identity is unknown).
EncodedExample build_inference_prefix(std::string_view symptoms,
                                      std::span<const std::string> completed_herbs,
                                      std::span<const int> partial_herb_ids,
                                      const vocab::Vocabulary& vocab,
                                      const kg::KnowledgeGraph& graph,
                                      bool knowledge_at_inference,
                                      std::size_t max_len);

// Right-pads to target_len with [PAD]: pad columns are -inf for every row,
// pad rows attend only to themselves, and pads carry no loss.
EncodedExample pad_example(const EncodedExample& example,
                           std::size_t target_len, int pad_id);

struct DatasetExample {
  std::string symptom;
  std::vector<std::string> herbs;
};

// JSON-lines records {"symptom": text, "herbs": [text, ...]}.
std::vector<DatasetExample> load_dataset(const std::string& path);
void save_dataset(const std::string& path,
                  std::span<const DatasetExample> examples);

}  // namespace herbgen::encoding
