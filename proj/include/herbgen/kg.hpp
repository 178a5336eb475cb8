#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "herbgen/rng.hpp"

namespace herbgen::kg {

// The four herb attribute relations. Canonical order is the enum order.
enum class Relation { has_nature = 0, has_taste = 1, has_channel = 2, has_effect = 3 };

Relation relation_from_string(std::string_view s);
std::string_view relation_to_string(Relation r);

struct Triple {
  std::string head;
  Relation relation = Relation::has_nature;
  std::string tail;

  bool operator==(const Triple&) const = default;
  auto operator<=>(const Triple&) const = default;
};

enum class KnowledgeMode { none, all, random };

KnowledgeMode knowledge_mode_from_string(std::string_view s);
std::string_view knowledge_mode_to_string(KnowledgeMode m);

// Herb-centric triple store. Immutable once loaded; per-herb triples are
// kept in canonical order: nature, taste, channel, effect, insertion order
// within a relation kind.
class KnowledgeGraph {
 public:
  // Returns true if the triple was new.
  bool add(Triple triple);

  // TSV rows: head<TAB>relation<TAB>tail. Lines starting with '#' and blank
  // lines are skipped.
  static KnowledgeGraph load(const std::string& path);
  void save(const std::string& path) const;

  bool contains(std::string_view herb) const;
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  // Canonically ordered triples of one herb; empty when absent.
  const std::vector<Triple>& triples_for(std::string_view herb) const;

  // mode=all: every triple in canonical order. mode=random: exactly one
  // uniformly chosen triple (rng required). mode=none: empty.
  std::vector<Triple> knowledge_for(std::string_view herb, KnowledgeMode mode,
                                    Rng* rng = nullptr) const;

  std::vector<std::string> herbs() const;

 private:
  std::map<std::string, std::vector<Triple>, std::less<>> by_head_;
  std::size_t size_ = 0;
};

// Surface form of a triple list in the input sequence: for each triple,
// the herb name directly followed by the attribute value (the relation is
// rendered as an empty marker). Throws if any head differs from `herb`.
std::string linearize(std::string_view herb, std::span<const Triple> triples);

}  // namespace herbgen::kg
