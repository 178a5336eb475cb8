#include "herbgen/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "herbgen/utf8.hpp"

namespace herbgen::vocab {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> kReserved = {
      Vocabulary::kPad, Vocabulary::kUnk,  Vocabulary::kCls,
      Vocabulary::kSep, Vocabulary::kMask, Vocabulary::kDelimiter};
  return kReserved;
}

}  // namespace

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  const auto& reserved = reserved_tokens();
  if (tokens.size() < reserved.size()) {
    throw std::invalid_argument("vocabulary too small for reserved tokens");
  }
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (tokens[i] != reserved[i]) {
      throw std::invalid_argument("vocabulary line " + std::to_string(i) +
                                  " must be " + reserved[i] + ", got " +
                                  tokens[i]);
    }
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.index_.reserve(v.tokens_.size());
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    const auto [_, inserted] =
        v.index_.emplace(v.tokens_[i], static_cast<int>(i));
    if (!inserted) {
      throw std::invalid_argument("duplicate vocabulary token: " +
                                  v.tokens_[i]);
    }
  }
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
  for (const auto& token : tokens_) out << token << '\n';
}

int Vocabulary::id_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) +
                            " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  const auto chars = utf8::split_codepoints(text);
  ids.reserve(chars.size());
  for (const auto& c : chars) {
    const int id = id_of(c);
    ids.push_back(id >= 0 ? id : unk_id());
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (const int id : ids) out += token_of(id);
  return out;
}

EntityRegistry::EntityRegistry(std::vector<std::string> herbs) {
  std::set<std::string> unique;
  for (auto& h : herbs) {
    if (h.empty()) throw std::invalid_argument("empty herb name");
    if (h.find(Vocabulary::kDelimiter) != std::string::npos) {
      throw std::invalid_argument("herb name contains the delimiter: " + h);
    }
    unique.insert(std::move(h));
  }
  herbs_.assign(unique.begin(), unique.end());
  match_order_ = herbs_;
  std::sort(match_order_.begin(), match_order_.end(),
            [](const std::string& a, const std::string& b) {
              const auto la = utf8::codepoint_count(a);
              const auto lb = utf8::codepoint_count(b);
              if (la != lb) return la > lb;
              return a < b;
            });
}

bool EntityRegistry::contains(std::string_view herb) const {
  return std::binary_search(herbs_.begin(), herbs_.end(), herb);
}

std::vector<HerbSpan> EntityRegistry::find_spans(
    std::span<const int> ids, const Vocabulary& vocab) const {
  std::vector<std::string> chars;
  chars.reserve(ids.size());
  for (const int id : ids) chars.push_back(vocab.token_of(id));

  std::vector<HerbSpan> spans;
  std::size_t pos = 0;
  while (pos < chars.size()) {
    bool matched = false;
    for (const auto& herb : match_order_) {
      const auto herb_chars = utf8::split_codepoints(herb);
      if (pos + herb_chars.size() > chars.size()) continue;
      if (std::equal(herb_chars.begin(), herb_chars.end(),
                     chars.begin() + static_cast<std::ptrdiff_t>(pos))) {
        spans.push_back({pos, pos + herb_chars.size(), herb});
        pos += herb_chars.size();
        matched = true;
        break;
      }
    }
    if (!matched) ++pos;
  }
  return spans;
}

BuildVocabResult build_vocabulary(std::span<const std::string> corpus_lines,
                                  std::span<const std::string> herb_names) {
  if (corpus_lines.empty()) throw std::invalid_argument("empty corpus");

  std::set<std::string> chars;
  for (const auto& line : corpus_lines) {
    for (auto& c : utf8::split_codepoints(line)) chars.insert(std::move(c));
  }
  for (const auto& herb : herb_names) {
    if (herb.empty()) throw std::invalid_argument("empty herb name");
    for (auto& c : utf8::split_codepoints(herb)) chars.insert(std::move(c));
  }

  std::vector<std::string> tokens = reserved_tokens();
  for (const auto& c : chars) {
    // The delimiter may occur in corpus text; it already has a reserved id.
    if (c == Vocabulary::kDelimiter) continue;
    tokens.push_back(c);
  }

  std::set<std::string> unique_herbs(herb_names.begin(), herb_names.end());
  BuildVocabResult result;
  result.duplicate_herb_count = herb_names.size() - unique_herbs.size();
  result.vocabulary = Vocabulary::from_tokens(std::move(tokens));
  result.registry = EntityRegistry(
      std::vector<std::string>(unique_herbs.begin(), unique_herbs.end()));
  return result;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, std::span<const std::string> lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const auto& line : lines) out << line << '\n';
}

}  // namespace herbgen::vocab
