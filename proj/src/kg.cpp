#include "herbgen/kg.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace herbgen::kg {

Relation relation_from_string(std::string_view s) {
  if (s == "has_nature") return Relation::has_nature;
  if (s == "has_taste") return Relation::has_taste;
  if (s == "has_channel") return Relation::has_channel;
  if (s == "has_effect") return Relation::has_effect;
  throw std::invalid_argument("unknown relation: " + std::string(s));
}

std::string_view relation_to_string(Relation r) {
  switch (r) {
    case Relation::has_nature: return "has_nature";
    case Relation::has_taste: return "has_taste";
    case Relation::has_channel: return "has_channel";
    case Relation::has_effect: return "has_effect";
  }
  throw std::logic_error("invalid relation value");
}

KnowledgeMode knowledge_mode_from_string(std::string_view s) {
  if (s == "none") return KnowledgeMode::none;
  if (s == "all") return KnowledgeMode::all;
  if (s == "random") return KnowledgeMode::random;
  throw std::invalid_argument("unknown knowledge mode: " + std::string(s));
}

std::string_view knowledge_mode_to_string(KnowledgeMode m) {
  switch (m) {
    case KnowledgeMode::none: return "none";
    case KnowledgeMode::all: return "all";
    case KnowledgeMode::random: return "random";
  }
  throw std::logic_error("invalid knowledge mode value");
}

bool KnowledgeGraph::add(Triple triple) {
  if (triple.head.empty() || triple.tail.empty()) {
    throw std::invalid_argument("triple head and tail must be non-empty");
  }
  auto& triples = by_head_[triple.head];
  if (std::find(triples.begin(), triples.end(), triple) != triples.end()) {
    return false;
  }
  // Insert before the first triple of a later relation kind, keeping
  // insertion order within a kind.
  auto it = std::find_if(triples.begin(), triples.end(),
                         [&](const Triple& t) {
                           return static_cast<int>(t.relation) >
                                  static_cast<int>(triple.relation);
                         });
  triples.insert(it, std::move(triple));
  ++size_;
  return true;
}

KnowledgeGraph KnowledgeGraph::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open knowledge graph: " + path);
  KnowledgeGraph graph;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos
                                                : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos ||
        line.find('\t', tab2 + 1) != std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": malformed row, expected 3 tab-separated "
                               "columns");
    }
    Triple t;
    t.head = line.substr(0, tab1);
    t.tail = line.substr(tab2 + 1);
    try {
      t.relation = relation_from_string(line.substr(tab1 + 1, tab2 - tab1 - 1));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
    if (t.head.empty() || t.tail.empty()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": empty head or tail");
    }
    graph.add(std::move(t));
  }
  return graph;
}

void KnowledgeGraph::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write knowledge graph: " + path);
  for (const auto& [head, triples] : by_head_) {
    for (const auto& t : triples) {
      out << t.head << '\t' << relation_to_string(t.relation) << '\t' << t.tail
          << '\n';
    }
  }
}

bool KnowledgeGraph::contains(std::string_view herb) const {
  return by_head_.find(herb) != by_head_.end();
}

const std::vector<Triple>& KnowledgeGraph::triples_for(
    std::string_view herb) const {
  static const std::vector<Triple> kEmpty;
  const auto it = by_head_.find(herb);
  return it == by_head_.end() ? kEmpty : it->second;
}

std::vector<Triple> KnowledgeGraph::knowledge_for(std::string_view herb,
                                                  KnowledgeMode mode,
                                                  Rng* rng) const {
  if (mode == KnowledgeMode::none) return {};
  const auto& triples = triples_for(herb);
  if (triples.empty()) return {};
  if (mode == KnowledgeMode::all) return triples;
  if (rng == nullptr) {
    throw std::invalid_argument("knowledge_for: random mode requires an rng");
  }
  return {triples[rng->next_below(triples.size())]};
}

std::vector<std::string> KnowledgeGraph::herbs() const {
  std::vector<std::string> out;
  out.reserve(by_head_.size());
  for (const auto& [head, _] : by_head_) out.push_back(head);
  return out;
}

std::string linearize(std::string_view herb, std::span<const Triple> triples) {
  std::string out;
  for (const auto& t : triples) {
    if (t.head != herb) {
      throw std::invalid_argument("linearize: triple head " + t.head +
                                  " does not match herb " + std::string(herb));
    }
    out += t.head;
    out += t.tail;
  }
  return out;
}

}  // namespace herbgen::kg
