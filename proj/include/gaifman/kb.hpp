#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gaifman/common.hpp"

namespace gaifman {

/// A fact is a relation applied to an ordered argument tuple.
struct Fact {
  RelationId relation;
  std::vector<ObjectId> args;
};

/// A finite relational structure: a domain of named objects, a set of named
/// relations with fixed arities, and a deduplicated fact store with
/// per-(relation, position, object) indexes.
///
/// Construction is single-writer; once built (and after finalize()) the
/// structure is safe for unrestricted shared reads.
class KnowledgeBase {
 public:
  // --- symbol tables -------------------------------------------------------

  ObjectId add_object(std::string_view name) {
    auto it = object_ids_.find(std::string(name));
    if (it != object_ids_.end()) return it->second;
    ObjectId id = static_cast<ObjectId>(object_names_.size());
    object_names_.emplace_back(name);
    object_ids_.emplace(object_names_.back(), id);
    return id;
  }

  RelationId add_relation(std::string_view name, int arity) {
    auto it = relation_ids_.find(std::string(name));
    if (it != relation_ids_.end()) {
      if (relations_[it->second].arity != arity)
        throw Error("relation '" + std::string(name) + "' redeclared with arity " +
                    std::to_string(arity) + " (was " +
                    std::to_string(relations_[it->second].arity) + ")");
      return it->second;
    }
    if (arity < 1) throw Error("relation arity must be >= 1");
    RelationId id = static_cast<RelationId>(relations_.size());
    relations_.push_back({std::string(name), arity});
    relation_ids_.emplace(relations_.back().name, id);
    rows_.emplace_back();
    row_hash_.emplace_back();
    return id;
  }

  std::size_t num_objects() const { return object_names_.size(); }
  std::size_t num_relations() const { return relations_.size(); }

  const std::string& object_name(ObjectId id) const { return object_names_.at(id); }
  const std::string& relation_name(RelationId id) const { return relations_.at(id).name; }
  int arity(RelationId id) const { return relations_.at(id).arity; }

  /// Returns kInvalidObject / kInvalidRelation when the name is unknown.
  ObjectId find_object(std::string_view name) const {
    auto it = object_ids_.find(std::string(name));
    return it == object_ids_.end() ? kInvalidObject : it->second;
  }
  RelationId find_relation(std::string_view name) const {
    auto it = relation_ids_.find(std::string(name));
    return it == relation_ids_.end() ? kInvalidRelation : it->second;
  }

  // --- facts ---------------------------------------------------------------

  /// Inserts a fact (set semantics: re-adding is a no-op). Returns true when
  /// the fact was new.
  bool add_fact(RelationId rel, std::span<const ObjectId> args) {
    check_fact(rel, args);
    const int n = relations_[rel].arity;
    const std::uint64_t h = hash_row(rel, args);
    auto& buckets = row_hash_[rel];
    auto range = buckets.equal_range(h);
    for (auto it = range.first; it != range.second; ++it) {
      if (row_equals(rel, it->second, args)) return false;
    }
    const std::uint32_t row = static_cast<std::uint32_t>(rows_[rel].size() / n);
    rows_[rel].insert(rows_[rel].end(), args.begin(), args.end());
    buckets.emplace(h, row);
    ++num_facts_;
    indexed_ = false;
    return true;
  }

  bool add_fact(const Fact& f) { return add_fact(f.relation, f.args); }

  /// Membership in the fact set.
  bool holds(RelationId rel, std::span<const ObjectId> args) const {
    check_fact(rel, args);
    const std::uint64_t h = hash_row(rel, args);
    auto range = row_hash_[rel].equal_range(h);
    for (auto it = range.first; it != range.second; ++it) {
      if (row_equals(rel, it->second, args)) return true;
    }
    return false;
  }

  bool holds(const Fact& f) const { return holds(f.relation, f.args); }

  std::size_t num_facts() const { return num_facts_; }
  std::size_t num_facts(RelationId rel) const {
    return rows_.at(rel).size() / static_cast<std::size_t>(relations_[rel].arity);
  }

  /// Row-major argument tuples of one relation, in insertion order.
  std::span<const ObjectId> rows(RelationId rel) const { return rows_.at(rel); }

  std::span<const ObjectId> row(RelationId rel, std::uint32_t index) const {
    const int n = relations_.at(rel).arity;
    return std::span<const ObjectId>(rows_[rel]).subspan(static_cast<std::size_t>(index) * n, n);
  }

  // --- indexes -------------------------------------------------------------

  /// Builds the (relation, position, object) postings and the per-object
  /// incidence lists. Idempotent; call before sharing across threads.
  void finalize() const {
    if (indexed_) return;
    postings_.assign(relations_.size(), {});
    for (RelationId r = 0; r < relations_.size(); ++r) {
      const int n = relations_[r].arity;
      const std::size_t count = num_facts(r);
      postings_[r].assign(static_cast<std::size_t>(n), {});
      for (int pos = 0; pos < n; ++pos) {
        auto& list = postings_[r][pos];
        list.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i)
          list.emplace_back(rows_[r][static_cast<std::size_t>(i) * n + pos], i);
        std::sort(list.begin(), list.end());
      }
    }
    // incidence CSR: for each object, the (relation, row) pairs it occurs in,
    // deduplicated per fact.
    std::vector<std::uint32_t> counts(object_names_.size() + 1, 0);
    auto for_each_occurrence = [&](auto&& fn) {
      for (RelationId r = 0; r < relations_.size(); ++r) {
        const int n = relations_[r].arity;
        const std::size_t count = num_facts(r);
        for (std::uint32_t i = 0; i < count; ++i) {
          const ObjectId* a = rows_[r].data() + static_cast<std::size_t>(i) * n;
          for (int p = 0; p < n; ++p) {
            bool seen = false;
            for (int q = 0; q < p; ++q)
              if (a[q] == a[p]) { seen = true; break; }
            if (!seen) fn(a[p], r, i);
          }
        }
      }
    };
    for_each_occurrence([&](ObjectId o, RelationId, std::uint32_t) { ++counts[o + 1]; });
    for (std::size_t i = 1; i < counts.size(); ++i) counts[i] += counts[i - 1];
    incidence_offsets_ = counts;
    incidence_.resize(counts.back());
    std::vector<std::uint32_t> cursor(incidence_offsets_.begin(), incidence_offsets_.end() - 1);
    for_each_occurrence([&](ObjectId o, RelationId r, std::uint32_t i) {
      incidence_[cursor[o]++] = {r, i};
    });
    indexed_ = true;
  }

  /// Facts of rel whose argument at position pos equals obj (row indexes).
  /// Checked against a linear scan by the test suite on small instances.
  std::vector<std::uint32_t> lookup(RelationId rel, int pos, ObjectId obj) const {
    finalize();
    if (pos < 0 || pos >= relations_.at(rel).arity) throw Error("index position out of range");
    const auto& list = postings_[rel][pos];
    auto lo = std::lower_bound(list.begin(), list.end(), std::make_pair(obj, std::uint32_t{0}));
    std::vector<std::uint32_t> out;
    for (auto it = lo; it != list.end() && it->first == obj; ++it) out.push_back(it->second);
    return out;
  }

  /// Number of facts matching (rel, pos, obj) without materializing them.
  std::size_t lookup_count(RelationId rel, int pos, ObjectId obj) const {
    finalize();
    const auto& list = postings_[rel][pos];
    auto lo = std::lower_bound(list.begin(), list.end(), std::make_pair(obj, std::uint32_t{0}));
    auto hi = std::upper_bound(list.begin(), list.end(),
                               std::make_pair(obj, std::numeric_limits<std::uint32_t>::max()));
    return static_cast<std::size_t>(hi - lo);
  }

  struct Occurrence {
    RelationId relation;
    std::uint32_t row;
  };

  /// All facts the object occurs in.
  std::span<const Occurrence> incident_facts(ObjectId obj) const {
    finalize();
    if (obj >= object_names_.size()) throw Error("unknown object id");
    return std::span<const Occurrence>(incidence_.data() + incidence_offsets_[obj],
                                       incidence_offsets_[obj + 1] - incidence_offsets_[obj]);
  }

  // --- misc ----------------------------------------------------------------

  std::string stats_line() const {
    return "|D|=" + std::to_string(num_objects()) + " |R|=" + std::to_string(num_relations()) +
           " |facts|=" + std::to_string(num_facts());
  }

  /// Content hash over symbols and the fact set. Independent of input line
  /// order (and hence of id assignment), so KBs loaded from permuted files
  /// hash identically.
  std::uint64_t content_hash() const {
    Fnv64 h;
    h.add_u64(num_objects());
    h.add_u64(num_relations());
    {
      std::vector<const std::string*> names;
      names.reserve(object_names_.size());
      for (const auto& name : object_names_) names.push_back(&name);
      std::sort(names.begin(), names.end(),
                [](const std::string* a, const std::string* b) { return *a < *b; });
      for (const auto* name : names) h.add_string(*name);
    }
    {
      std::vector<std::pair<std::string_view, int>> rels;
      rels.reserve(relations_.size());
      for (const auto& rel : relations_) rels.emplace_back(rel.name, rel.arity);
      std::sort(rels.begin(), rels.end());
      for (const auto& [name, arity] : rels) {
        h.add_string(name);
        h.add_u64(static_cast<std::uint64_t>(arity));
      }
    }
    std::uint64_t facts_acc = 0;
    for (RelationId r = 0; r < relations_.size(); ++r) {
      const int n = relations_[r].arity;
      const std::size_t count = num_facts(r);
      for (std::uint32_t i = 0; i < count; ++i) {
        Fnv64 fh;
        fh.add_string(relations_[r].name);
        for (int p = 0; p < n; ++p)
          fh.add_string(object_names_[rows_[r][static_cast<std::size_t>(i) * n + p]]);
        facts_acc += fh.value();  // unordered combine
      }
    }
    h.add_u64(facts_acc);
    return h.value();
  }

 private:
  struct RelationInfo {
    std::string name;
    int arity;
  };

  void check_fact(RelationId rel, std::span<const ObjectId> args) const {
    if (rel >= relations_.size()) throw Error("unknown relation id");
    if (static_cast<int>(args.size()) != relations_[rel].arity)
      throw Error("arity mismatch for relation '" + relations_[rel].name + "': got " +
                  std::to_string(args.size()) + ", expected " +
                  std::to_string(relations_[rel].arity));
    for (ObjectId a : args)
      if (a >= object_names_.size()) throw Error("unknown object id");
  }

  static std::uint64_t hash_row(RelationId rel, std::span<const ObjectId> args) {
    Fnv64 h;
    h.add_u32(rel);
    for (ObjectId a : args) h.add_u32(a);
    return h.value();
  }

  bool row_equals(RelationId rel, std::uint32_t row, std::span<const ObjectId> args) const {
    const int n = relations_[rel].arity;
    const ObjectId* a = rows_[rel].data() + static_cast<std::size_t>(row) * n;
    for (int i = 0; i < n; ++i)
      if (a[i] != args[i]) return false;
    return true;
  }

  std::vector<std::string> object_names_;
  std::unordered_map<std::string, ObjectId> object_ids_;
  std::vector<RelationInfo> relations_;
  std::unordered_map<std::string, RelationId> relation_ids_;
  std::vector<std::vector<ObjectId>> rows_;  // per relation, row-major tuples
  std::vector<std::unordered_multimap<std::uint64_t, std::uint32_t>> row_hash_;
  std::size_t num_facts_ = 0;

  mutable bool indexed_ = false;
  // per relation, per position: (object, row) sorted by object then row
  mutable std::vector<std::vector<std::vector<std::pair<ObjectId, std::uint32_t>>>> postings_;
  mutable std::vector<std::uint32_t> incidence_offsets_;
  mutable std::vector<Occurrence> incidence_;
};

// ---------------------------------------------------------------------------
// Induced substructures
// ---------------------------------------------------------------------------

/// The restriction of a knowledge base to a carrier set: exactly those facts
/// whose arguments all lie in the carrier, with small local fact tables.
class Substructure {
 public:
  Substructure(const KnowledgeBase& kb, std::span<const ObjectId> carrier)
      : kb_(&kb), carrier_(carrier.begin(), carrier.end()) {
    sorted_carrier_ = carrier_;
    std::sort(sorted_carrier_.begin(), sorted_carrier_.end());
    sorted_carrier_.erase(std::unique(sorted_carrier_.begin(), sorted_carrier_.end()),
                          sorted_carrier_.end());
    for (ObjectId o : sorted_carrier_)
      if (o >= kb.num_objects()) throw Error("carrier contains unknown object id");

    // collect facts fully inside the carrier, deduplicated across the
    // carrier objects that witness them
    std::vector<std::pair<RelationId, std::uint32_t>> hits;
    for (ObjectId o : sorted_carrier_) {
      for (const auto& occ : kb.incident_facts(o)) {
        auto args = kb.row(occ.relation, occ.row);
        bool inside = true;
        for (ObjectId a : args) {
          if (!contains(a)) {
            inside = false;
            break;
          }
        }
        if (inside) hits.emplace_back(occ.relation, occ.row);
      }
    }
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
    for (std::size_t i = 0; i < hits.size();) {
      std::size_t j = i;
      while (j < hits.size() && hits[j].first == hits[i].first) ++j;
      LocalRelation lr;
      lr.relation = hits[i].first;
      lr.arity = kb.arity(lr.relation);
      const std::size_t n = static_cast<std::size_t>(lr.arity);
      lr.rows.reserve((j - i) * n);
      for (std::size_t t = i; t < j; ++t) {
        auto args = kb.row(hits[t].first, hits[t].second);
        lr.rows.insert(lr.rows.end(), args.begin(), args.end());
      }
      // lexicographic row order, so membership tests can bisect
      const std::size_t count = j - i;
      std::vector<std::uint32_t> perm(count);
      for (std::uint32_t p = 0; p < count; ++p) perm[p] = p;
      std::sort(perm.begin(), perm.end(), [&](std::uint32_t x, std::uint32_t y) {
        return std::lexicographical_compare(lr.rows.begin() + x * n, lr.rows.begin() + (x + 1) * n,
                                            lr.rows.begin() + y * n, lr.rows.begin() + (y + 1) * n);
      });
      std::vector<ObjectId> sorted;
      sorted.reserve(lr.rows.size());
      for (std::uint32_t p : perm)
        sorted.insert(sorted.end(), lr.rows.begin() + p * n, lr.rows.begin() + (p + 1) * n);
      lr.rows = std::move(sorted);
      num_facts_ += count;
      locals_.push_back(std::move(lr));
      i = j;
    }
  }

  const KnowledgeBase& kb() const { return *kb_; }

  /// Carrier in construction order (centers first for sampled neighborhoods).
  const std::vector<ObjectId>& carrier() const { return carrier_; }

  /// Carrier as a set (sorted, deduplicated); quantifiers range over this.
  const std::vector<ObjectId>& domain() const { return sorted_carrier_; }

  bool contains(ObjectId o) const {
    return std::binary_search(sorted_carrier_.begin(), sorted_carrier_.end(), o);
  }

  std::size_t num_facts() const { return num_facts_; }

  struct LocalRelation {
    RelationId relation;
    int arity;
    std::vector<ObjectId> rows;  // row-major, lexicographically sorted
  };

  const std::vector<LocalRelation>& local_relations() const { return locals_; }

  const LocalRelation* find_relation(RelationId rel) const {
    auto it = std::lower_bound(locals_.begin(), locals_.end(), rel,
                               [](const LocalRelation& lr, RelationId r) { return lr.relation < r; });
    if (it == locals_.end() || it->relation != rel) return nullptr;
    return &*it;
  }

  bool has_relation(RelationId rel) const { return find_relation(rel) != nullptr; }

  /// Membership in the induced fact set. Arguments outside the carrier never
  /// match (the induced interpretation drops such facts).
  bool holds(RelationId rel, std::span<const ObjectId> args) const {
    const LocalRelation* lr = find_relation(rel);
    if (lr == nullptr) return false;
    const std::size_t n = static_cast<std::size_t>(lr->arity);
    if (args.size() != n) throw Error("arity mismatch in substructure lookup");
    const std::size_t count = lr->rows.size() / n;
    std::size_t lo = 0, hi = count;
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      const ObjectId* row = lr->rows.data() + mid * n;
      int cmp = 0;
      for (std::size_t p = 0; p < n; ++p) {
        if (row[p] < args[p]) { cmp = -1; break; }
        if (row[p] > args[p]) { cmp = 1; break; }
      }
      if (cmp == 0) return true;
      if (cmp < 0) lo = mid + 1;
      else hi = mid;
    }
    return false;
  }

 private:
  const KnowledgeBase* kb_;
  std::vector<ObjectId> carrier_;
  std::vector<ObjectId> sorted_carrier_;
  std::vector<LocalRelation> locals_;  // sorted by relation id
  std::size_t num_facts_ = 0;
};

/// Induced substructure on a carrier (carrier order preserved).
inline Substructure induce(const KnowledgeBase& kb, std::span<const ObjectId> carrier) {
  return Substructure(kb, carrier);
}

// ---------------------------------------------------------------------------
// Loaders and serialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

template <typename LineFn>
void for_each_line(std::istream& in, LineFn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
          static_cast<unsigned char>(line[1]) == 0xBB &&
          static_cast<unsigned char>(line[2]) == 0xBF)
        line.erase(0, 3);
    }
    if (line.empty()) continue;
    fn(lineno, std::string_view(line));
  }
}

}  // namespace detail

/// Loads `head<TAB>relation<TAB>tail` lines into a KB of binary relations.
/// Duplicate lines collapse; ids are assigned in first-appearance order.
inline KnowledgeBase load_triples(std::istream& in) {
  KnowledgeBase kb;
  detail::for_each_line(in, [&](std::size_t lineno, std::string_view line) {
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3)
      throw Error("line " + std::to_string(lineno) + ": expected 3 tab-separated fields, got " +
                  std::to_string(fields.size()));
    ObjectId head = kb.add_object(fields[0]);
    RelationId rel = kb.add_relation(fields[1], 2);
    ObjectId tail = kb.add_object(fields[2]);
    const ObjectId args[2] = {head, tail};
    kb.add_fact(rel, args);
  });
  return kb;
}

/// Loads `relation<TAB>arg1<TAB>...<TAB>argn` lines; a relation's arity is
/// fixed by its first occurrence.
inline KnowledgeBase load_nary(std::istream& in) {
  KnowledgeBase kb;
  detail::for_each_line(in, [&](std::size_t lineno, std::string_view line) {
    auto fields = detail::split_tabs(line);
    if (fields.size() < 2)
      throw Error("line " + std::to_string(lineno) + ": expected relation and at least one argument");
    const int arity = static_cast<int>(fields.size()) - 1;
    RelationId rel;
    try {
      rel = kb.add_relation(fields[0], arity);
    } catch (const Error& e) {
      throw Error("line " + std::to_string(lineno) + ": " + e.what());
    }
    std::vector<ObjectId> args;
    args.reserve(arity);
    for (int i = 1; i <= arity; ++i) args.push_back(kb.add_object(fields[i]));
    kb.add_fact(rel, args);
  });
  return kb;
}

/// Emits the fact set in the triple format, lexicographically sorted so the
/// output is independent of input line order. All relations must be binary.
inline void serialize_triples(const KnowledgeBase& kb, std::ostream& out) {
  std::vector<std::string> lines;
  lines.reserve(kb.num_facts());
  for (RelationId r = 0; r < kb.num_relations(); ++r) {
    if (kb.arity(r) != 2)
      throw Error("triple serialization requires binary relations; '" + kb.relation_name(r) +
                  "' has arity " + std::to_string(kb.arity(r)));
    const std::size_t count = kb.num_facts(r);
    for (std::uint32_t i = 0; i < count; ++i) {
      auto row = kb.row(r, i);
      lines.push_back(kb.object_name(row[0]) + "\t" + kb.relation_name(r) + "\t" +
                      kb.object_name(row[1]));
    }
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& l : lines) out << l << '\n';
}

/// n-ary counterpart of serialize_triples.
inline void serialize_nary(const KnowledgeBase& kb, std::ostream& out) {
  std::vector<std::string> lines;
  lines.reserve(kb.num_facts());
  for (RelationId r = 0; r < kb.num_relations(); ++r) {
    const std::size_t count = kb.num_facts(r);
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string line = kb.relation_name(r);
      for (ObjectId a : kb.row(r, i)) {
        line += '\t';
        line += kb.object_name(a);
      }
      lines.push_back(std::move(line));
    }
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace gaifman
