#include "herbgen/encoding.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "herbgen/utf8.hpp"

namespace herbgen::encoding {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Encodes a herb name, rejecting characters outside the vocabulary.
std::vector<int> encode_herb(std::string_view herb,
                             const vocab::Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& c : utf8::split_codepoints(herb)) {
    const int id = vocab.id_of(c);
    if (id < 0) {
      throw std::invalid_argument("herb character not in vocabulary: " + c +
                                  " (herb " + std::string(herb) + ")");
    }
    ids.push_back(id);
  }
  if (ids.empty()) throw std::invalid_argument("empty herb name");
  return ids;
}

// Fills the attention mask from the layout and per-position herb ownership.
compute::Tensor build_visibility_mask(const SegmentLayout& layout,
                                      std::span<const int> y_owner) {
  const std::size_t n = layout.total;
  compute::Tensor mask = compute::Tensor::matrix(n, n, kNegInf);
  const auto allow = [&](std::size_t r, std::size_t c) { mask.at(r, c) = 0.0; };
  const auto allow_source = [&](std::size_t r) {
    allow(r, layout.cls_pos);
    for (std::size_t c = layout.x_start; c < layout.x_end; ++c) allow(r, c);
    if (layout.sep1_pos != kNoPosition) allow(r, layout.sep1_pos);
  };

  for (std::size_t r = 0; r < n; ++r) {
    if (layout.in_source(r)) {
      allow_source(r);
    } else if (layout.in_y(r)) {
      allow_source(r);
      for (std::size_t c = layout.y_start; c <= r; ++c) allow(r, c);
      const int owner = y_owner[r];
      if (owner != kNoOwner) {
        for (const auto& span : layout.z_spans) {
          if (span.owner_herb != owner) continue;
          for (std::size_t c = span.start; c < span.end; ++c) allow(r, c);
        }
      }
    } else {
      const int zi = layout.z_span_of(r);
      if (zi < 0) {
        throw std::logic_error("position " + std::to_string(r) +
                               " not covered by the layout");
      }
      allow_source(r);
      const auto& span = layout.z_spans[static_cast<std::size_t>(zi)];
      for (std::size_t c = span.start; c < span.end; ++c) allow(r, c);
    }
  }
  return mask;
}

struct KnowledgeChunks {
  // Per herb index, the encoded per-triple chunks (herb name + tail).
  std::vector<std::vector<std::vector<int>>> per_herb;
};

KnowledgeChunks collect_knowledge(std::span<const std::string> herbs,
                                  const kg::KnowledgeGraph& graph,
                                  kg::KnowledgeMode mode, Rng* rng,
                                  const vocab::Vocabulary& vocab) {
  KnowledgeChunks chunks;
  chunks.per_herb.resize(herbs.size());
  if (mode == kg::KnowledgeMode::none) return chunks;
  for (std::size_t i = 0; i < herbs.size(); ++i) {
    const auto triples = graph.knowledge_for(herbs[i], mode, rng);
    for (const auto& triple : triples) {
      const std::string text = kg::linearize(herbs[i], {&triple, 1});
      chunks.per_herb[i].push_back(vocab.encode(text));
    }
  }
  return chunks;
}

// Appends as many whole triple chunks as fit, dropping from the tail.
// Returns true if anything was dropped.
bool append_knowledge(std::vector<int>& token_ids, SegmentLayout& layout,
                      const KnowledgeChunks& chunks, std::size_t max_len) {
  bool truncated = false;
  for (std::size_t i = 0; i < chunks.per_herb.size(); ++i) {
    std::size_t span_start = token_ids.size();
    std::size_t span_end = span_start;
    for (const auto& chunk : chunks.per_herb[i]) {
      if (truncated || token_ids.size() + chunk.size() > max_len) {
        truncated = true;
        break;
      }
      token_ids.insert(token_ids.end(), chunk.begin(), chunk.end());
      span_end = token_ids.size();
    }
    if (span_end > span_start) {
      layout.z_spans.push_back({span_start, span_end, static_cast<int>(i)});
    }
    if (truncated) break;
  }
  return truncated;
}

void finish_example(EncodedExample& ex) {
  const std::size_t n = ex.token_ids.size();
  ex.layout.total = n;
  ex.position_ids.resize(n);
  for (std::size_t p = 0; p < n; ++p) ex.position_ids[p] = static_cast<int>(p);
  ex.segment_ids.assign(n, kSegmentA);
  for (std::size_t p = ex.layout.y_start; p < ex.layout.y_end; ++p) {
    ex.segment_ids[p] = kSegmentB;
  }
  ex.y_owner.resize(n, kNoOwner);
  ex.loss_positions.assign(n, false);
  ex.target_ids.assign(n, -1);
}

}  // namespace

int SegmentLayout::z_span_of(std::size_t p) const {
  for (std::size_t i = 0; i < z_spans.size(); ++i) {
    if (p >= z_spans[i].start && p < z_spans[i].end) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

void SegmentLayout::check_tiling() const {
  std::vector<int> cover(total, 0);
  const auto claim = [&](std::size_t p) {
    if (p >= total) throw std::logic_error("layout range outside sequence");
    ++cover[p];
  };
  claim(cls_pos);
  for (std::size_t p = x_start; p < x_end; ++p) claim(p);
  if (sep1_pos != kNoPosition) claim(sep1_pos);
  for (std::size_t p = y_start; p < y_end; ++p) claim(p);
  for (const auto& span : z_spans) {
    for (std::size_t p = span.start; p < span.end; ++p) claim(p);
  }
  for (std::size_t p = 0; p < total; ++p) {
    if (cover[p] != 1) {
      throw std::logic_error("layout does not tile position " +
                             std::to_string(p) + " exactly once");
    }
  }
  if (!(cls_pos < x_start && x_start <= x_end && x_end == sep1_pos &&
        sep1_pos + 1 == y_start)) {
    throw std::logic_error("layout segments out of order");
  }
}

std::vector<std::size_t> EncodedExample::loss_rows() const {
  std::vector<std::size_t> rows;
  for (std::size_t p = 0; p < loss_positions.size(); ++p) {
    if (loss_positions[p]) rows.push_back(p);
  }
  return rows;
}

std::vector<int> EncodedExample::loss_targets() const {
  std::vector<int> targets;
  for (std::size_t p = 0; p < loss_positions.size(); ++p) {
    if (loss_positions[p]) targets.push_back(target_ids[p]);
  }
  return targets;
}

EncodedExample build_pretrain_example(std::string_view text, double mask_rate,
                                      const vocab::Vocabulary& vocab,
                                      const vocab::EntityRegistry& registry,
                                      Rng& rng, std::size_t max_len) {
  if (mask_rate < 0.0 || mask_rate > 1.0) {
    throw std::invalid_argument("mask_rate must be within [0, 1]");
  }
  if (max_len < 3) throw std::invalid_argument("max_len too small");
  std::vector<int> text_ids = vocab.encode(text);
  if (text_ids.size() > max_len - 2) text_ids.resize(max_len - 2);
  if (text_ids.empty()) {
    throw std::invalid_argument("empty text after truncation");
  }

  EncodedExample ex;
  ex.token_ids.push_back(vocab.cls_id());
  ex.token_ids.insert(ex.token_ids.end(), text_ids.begin(), text_ids.end());
  ex.token_ids.push_back(vocab.sep_id());
  const std::size_t n = ex.token_ids.size();

  ex.layout.cls_pos = 0;
  ex.layout.x_start = 1;
  ex.layout.x_end = n - 1;
  ex.layout.sep1_pos = n - 1;
  ex.layout.y_start = ex.layout.y_end = n;
  ex.layout.total = n;

  // Select positions, then expand any hit inside a herb to the whole span.
  std::vector<bool> selected(text_ids.size(), false);
  for (std::size_t i = 0; i < text_ids.size(); ++i) {
    selected[i] = rng.next_bernoulli(mask_rate);
  }
  for (const auto& span : registry.find_spans(text_ids, vocab)) {
    const bool hit = std::any_of(selected.begin() + span.start,
                                 selected.begin() + span.end,
                                 [](bool b) { return b; });
    if (hit) std::fill(selected.begin() + span.start,
                       selected.begin() + span.end, true);
  }

  ex.loss_positions.assign(n, false);
  ex.target_ids.assign(n, -1);
  for (std::size_t i = 0; i < text_ids.size(); ++i) {
    if (!selected[i]) continue;
    const std::size_t p = i + 1;  // offset past [CLS]
    ex.target_ids[p] = ex.token_ids[p];
    ex.token_ids[p] = vocab.mask_id();
    ex.loss_positions[p] = true;
  }

  // Fully bidirectional: every row sees every column.
  ex.position_ids.resize(n);
  for (std::size_t p = 0; p < n; ++p) ex.position_ids[p] = static_cast<int>(p);
  ex.segment_ids.assign(n, kSegmentA);
  ex.y_owner.assign(n, kNoOwner);
  ex.mask = compute::Tensor::matrix(n, n, 0.0);
  return ex;
}

EncodedExample build_finetune_example(std::string_view symptoms,
                                      std::span<const std::string> herbs,
                                      const vocab::Vocabulary& vocab,
                                      const kg::KnowledgeGraph& graph,
                                      kg::KnowledgeMode mode, Rng* rng,
                                      std::size_t max_len) {
  if (herbs.empty()) throw std::invalid_argument("herb list is empty");
  const std::vector<int> x_ids = vocab.encode(symptoms);
  if (x_ids.empty()) throw std::invalid_argument("symptoms encode to empty");

  EncodedExample ex;
  ex.token_ids.push_back(vocab.cls_id());
  ex.token_ids.insert(ex.token_ids.end(), x_ids.begin(), x_ids.end());
  ex.token_ids.push_back(vocab.sep_id());
  ex.layout.cls_pos = 0;
  ex.layout.x_start = 1;
  ex.layout.x_end = 1 + x_ids.size();
  ex.layout.sep1_pos = ex.layout.x_end;
  ex.layout.y_start = ex.layout.sep1_pos + 1;

  std::vector<int> owner_by_pos(ex.token_ids.size(), kNoOwner);
  for (std::size_t i = 0; i < herbs.size(); ++i) {
    const auto herb_ids = encode_herb(herbs[i], vocab);
    const std::size_t start = ex.token_ids.size();
    ex.token_ids.insert(ex.token_ids.end(), herb_ids.begin(), herb_ids.end());
    ex.herb_spans.emplace_back(start, ex.token_ids.size());
    owner_by_pos.resize(ex.token_ids.size(), static_cast<int>(i));
    if (i + 1 < herbs.size()) {
      ex.token_ids.push_back(vocab.delimiter_id());
      owner_by_pos.push_back(kNoOwner);
    }
  }
  ex.token_ids.push_back(vocab.sep_id());
  owner_by_pos.push_back(kNoOwner);
  ex.layout.sep2_pos = ex.token_ids.size() - 1;
  ex.layout.y_end = ex.token_ids.size();
  if (ex.token_ids.size() > max_len) {
    throw std::invalid_argument(
        "sequence of " + std::to_string(ex.token_ids.size()) +
        " tokens exceeds maximum length " + std::to_string(max_len));
  }

  const auto chunks = collect_knowledge(herbs, graph, mode, rng, vocab);
  ex.knowledge_truncated =
      append_knowledge(ex.token_ids, ex.layout, chunks, max_len);

  finish_example(ex);
  std::copy(owner_by_pos.begin(), owner_by_pos.end(), ex.y_owner.begin());
  ex.mask = build_visibility_mask(ex.layout, ex.y_owner);

  // Teacher forcing: the row at p is scored against the gold token at p+1,
  // for p from the first [SEP] up to the position before the final [SEP].
  for (std::size_t p = ex.layout.sep1_pos; p + 1 < ex.layout.y_end; ++p) {
    ex.loss_positions[p] = true;
    ex.target_ids[p] = ex.token_ids[p + 1];
  }
  return ex;
}

EncodedExample build_inference_prefix(std::string_view symptoms,
                                      std::span<const std::string> completed_herbs,
                                      std::span<const int> partial_herb_ids,
                                      const vocab::Vocabulary& vocab,
                                      const kg::KnowledgeGraph& graph,
                                      bool knowledge_at_inference,
                                      std::size_t max_len) {
  const std::vector<int> x_ids = vocab.encode(symptoms);
  if (x_ids.empty()) throw std::invalid_argument("symptoms encode to empty");

  EncodedExample ex;
  ex.token_ids.push_back(vocab.cls_id());
  ex.token_ids.insert(ex.token_ids.end(), x_ids.begin(), x_ids.end());
  ex.token_ids.push_back(vocab.sep_id());
  ex.layout.cls_pos = 0;
  ex.layout.x_start = 1;
  ex.layout.x_end = 1 + x_ids.size();
  ex.layout.sep1_pos = ex.layout.x_end;
  ex.layout.y_start = ex.layout.sep1_pos + 1;

  std::vector<int> owner_by_pos(ex.token_ids.size(), kNoOwner);
  for (std::size_t i = 0; i < completed_herbs.size(); ++i) {
    const auto herb_ids = encode_herb(completed_herbs[i], vocab);
    const std::size_t start = ex.token_ids.size();
    ex.token_ids.insert(ex.token_ids.end(), herb_ids.begin(), herb_ids.end());
    ex.herb_spans.emplace_back(start, ex.token_ids.size());
    owner_by_pos.resize(ex.token_ids.size(), static_cast<int>(i));
    ex.token_ids.push_back(vocab.delimiter_id());
    owner_by_pos.push_back(kNoOwner);
  }
  // Characters of the herb currently being generated own no Z span: the
  // herb is not complete, so its identity is still unknown.
  ex.token_ids.insert(ex.token_ids.end(), partial_herb_ids.begin(),
                      partial_herb_ids.end());
  owner_by_pos.resize(ex.token_ids.size(), kNoOwner);
  ex.token_ids.push_back(vocab.mask_id());
  owner_by_pos.push_back(kNoOwner);
  ex.layout.y_end = ex.token_ids.size();
  if (ex.token_ids.size() > max_len) {
    throw std::invalid_argument(
        "decoding prefix of " + std::to_string(ex.token_ids.size()) +
        " tokens exceeds maximum length " + std::to_string(max_len));
  }

  if (knowledge_at_inference) {
    const auto chunks = collect_knowledge(completed_herbs, graph,
                                          kg::KnowledgeMode::all, nullptr,
                                          vocab);
    ex.knowledge_truncated =
        append_knowledge(ex.token_ids, ex.layout, chunks, max_len);
  }

  finish_example(ex);
  std::copy(owner_by_pos.begin(), owner_by_pos.end(), ex.y_owner.begin());
  ex.mask = build_visibility_mask(ex.layout, ex.y_owner);
  return ex;
}

EncodedExample pad_example(const EncodedExample& example,
                           std::size_t target_len, int pad_id) {
  const std::size_t n = example.size();
  if (target_len < n) {
    throw std::invalid_argument("pad target shorter than the sequence");
  }
  if (target_len == n) return example;

  EncodedExample ex = example;
  ex.token_ids.resize(target_len, pad_id);
  ex.segment_ids.resize(target_len, kSegmentA);
  ex.position_ids.resize(target_len);
  for (std::size_t p = n; p < target_len; ++p) {
    ex.position_ids[p] = static_cast<int>(p);
  }
  ex.loss_positions.resize(target_len, false);
  ex.target_ids.resize(target_len, -1);
  ex.y_owner.resize(target_len, kNoOwner);

  // Pad columns are invisible to every real row; pad rows see only
  // themselves so their softmax stays well defined.
  ex.mask = compute::Tensor::matrix(target_len, target_len, kNegInf);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      ex.mask.at(r, c) = example.mask.at(r, c);
    }
  }
  for (std::size_t p = n; p < target_len; ++p) ex.mask.at(p, p) = 0.0;
  return ex;
}

std::vector<DatasetExample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<DatasetExample> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
    if (!record.is_object() || !record.contains("symptom") ||
        !record.contains("herbs") || !record["herbs"].is_array()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected {\"symptom\": ..., \"herbs\": "
                               "[...]}");
    }
    DatasetExample ex;
    ex.symptom = record["symptom"].get<std::string>();
    for (const auto& h : record["herbs"]) {
      ex.herbs.push_back(h.get<std::string>());
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

void save_dataset(const std::string& path,
                  std::span<const DatasetExample> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  for (const auto& ex : examples) {
    nlohmann::json record;
    record["symptom"] = ex.symptom;
    record["herbs"] = ex.herbs;
    out << record.dump() << '\n';
  }
}

}  // namespace herbgen::encoding
