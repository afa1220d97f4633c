#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "gaifman/common.hpp"
#include "gaifman/kb.hpp"

namespace gaifman {

/// Reusable scratch space for truncated BFS. One instance per worker thread;
/// queries sharing an instance must not run concurrently.
struct BfsScratch {
  std::vector<std::uint32_t> stamp;
  std::uint32_t epoch = 0;
  std::vector<ObjectId> queue;
};

/// The co-occurrence graph of a knowledge base: objects are vertices and two
/// distinct objects are adjacent iff some fact has both among its arguments.
/// Stored as flat CSR adjacency (sorted, deduplicated). Immutable once built.
class GaifmanGraph {
 public:
  GaifmanGraph() = default;

  std::size_t num_vertices() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_edges() const { return neighbors_.size() / 2; }

  std::span<const ObjectId> neighbors(ObjectId v) const {
    return std::span<const ObjectId>(neighbors_.data() + offsets_[v],
                                     offsets_[v + 1] - offsets_[v]);
  }

  std::size_t degree(ObjectId v) const { return offsets_[v + 1] - offsets_[v]; }

  bool adjacent(ObjectId a, ObjectId b) const {
    auto n = neighbors(a);
    return std::binary_search(n.begin(), n.end(), b);
  }

  /// degree -> number of vertices with that degree; counts sum to |D|.
  const std::map<std::size_t, std::size_t>& degree_histogram() const { return histogram_; }

  /// All objects within distance r of src, ascending by id (src included).
  std::vector<ObjectId> ball(ObjectId src, int r, BfsScratch* scratch = nullptr) const {
    BfsScratch local;
    BfsScratch& s = scratch ? *scratch : local;
    prepare(s);
    std::vector<ObjectId> members;
    bfs_into(src, r, s, members);
    std::sort(members.begin(), members.end());
    return members;
  }

  /// Union ball of a tuple: all objects within distance r of some element.
  /// Each element gets its own BFS pass; a shared visited set would stop a
  /// later source from expanding through vertices an earlier source reached
  /// at its depth limit.
  std::vector<ObjectId> ball(std::span<const ObjectId> centers, int r,
                             BfsScratch* scratch = nullptr) const {
    BfsScratch local;
    BfsScratch& s = scratch ? *scratch : local;
    std::vector<ObjectId> members;
    for (ObjectId c : centers) {
      prepare(s);
      bfs_into(c, r, s, members);
    }
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    return members;
  }

  static GaifmanGraph build(const KnowledgeBase& kb) {
    GaifmanGraph g;
    const std::size_t n = kb.num_objects();
    std::vector<std::pair<ObjectId, ObjectId>> edges;
    for (RelationId r = 0; r < kb.num_relations(); ++r) {
      const int arity = kb.arity(r);
      const std::size_t count = kb.num_facts(r);
      for (std::uint32_t i = 0; i < count; ++i) {
        auto args = kb.row(r, i);
        for (int p = 0; p < arity; ++p) {
          for (int q = p + 1; q < arity; ++q) {
            if (args[p] == args[q]) continue;
            edges.emplace_back(args[p], args[q]);
            edges.emplace_back(args[q], args[p]);
          }
        }
      }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    g.offsets_.assign(n + 1, 0);
    for (const auto& e : edges) ++g.offsets_[e.first + 1];
    for (std::size_t i = 1; i <= n; ++i) g.offsets_[i] += g.offsets_[i - 1];
    g.neighbors_.resize(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) g.neighbors_[i] = edges[i].second;
    for (ObjectId v = 0; v < n; ++v) {
      ++g.histogram_[g.degree(v)];
    }
    if (n == 0) g.offsets_.assign(1, 0);
    return g;
  }

 private:
  void prepare(BfsScratch& s) const {
    if (s.stamp.size() < num_vertices()) s.stamp.assign(num_vertices(), 0);
    ++s.epoch;
    if (s.epoch == 0) {  // wrapped
      std::fill(s.stamp.begin(), s.stamp.end(), 0);
      s.epoch = 1;
    }
  }

  /// Appends the r-ball of src to out (unsorted). Objects visited earlier in
  /// the same epoch are skipped, so repeated calls accumulate a set union.
  void bfs_into(ObjectId src, int r, BfsScratch& s, std::vector<ObjectId>& out) const {
    if (src >= num_vertices()) throw Error("unknown object id in neighborhood query");
    if (r < 0) throw Error("neighborhood radius must be >= 0");
    if (s.stamp[src] == s.epoch) return;
    s.stamp[src] = s.epoch;
    out.push_back(src);
    s.queue.clear();
    s.queue.push_back(src);
    std::size_t head = 0;
    int depth = 0;
    std::size_t level_end = s.queue.size();
    while (head < s.queue.size() && depth < r) {
      ObjectId v = s.queue[head++];
      for (ObjectId w : neighbors(v)) {
        if (s.stamp[w] == s.epoch) continue;
        s.stamp[w] = s.epoch;
        out.push_back(w);
        s.queue.push_back(w);
      }
      if (head == level_end) {
        ++depth;
        level_end = s.queue.size();
      }
    }
  }

  std::vector<std::size_t> offsets_{0};
  std::vector<ObjectId> neighbors_;
  std::map<std::size_t, std::size_t> histogram_;
};

inline GaifmanGraph build_gaifman_graph(const KnowledgeBase& kb) { return GaifmanGraph::build(kb); }

/// An r-neighborhood of a tuple: the union of the elements' r-balls.
struct Neighborhood {
  std::vector<ObjectId> center;
  int radius = 0;
  std::vector<ObjectId> members;  // ascending by id
};

inline Neighborhood neighborhood(const GaifmanGraph& g, std::span<const ObjectId> center, int r,
                                 BfsScratch* scratch = nullptr) {
  Neighborhood n;
  n.center.assign(center.begin(), center.end());
  n.radius = r;
  n.members = g.ball(center, r, scratch);
  return n;
}

/// Size of the largest single-object r-neighborhood.
inline std::size_t max_r_neighborhood_size(const GaifmanGraph& g, int r, unsigned jobs = 1) {
  const std::size_t n = g.num_vertices();
  if (n == 0) return 0;
  if (jobs <= 1) {
    BfsScratch scratch;
    std::size_t best = 0;
    for (ObjectId v = 0; v < n; ++v) best = std::max(best, g.ball(v, r, &scratch).size());
    return best;
  }
  std::vector<std::size_t> per_job(jobs, 0);
  parallel_for(jobs, jobs, [&](std::size_t t) {
    BfsScratch scratch;
    std::size_t best = 0;
    for (ObjectId v = static_cast<ObjectId>(t); v < n; v += jobs)
      best = std::max(best, g.ball(v, r, &scratch).size());
    per_job[t] = best;
  });
  return *std::max_element(per_job.begin(), per_job.end());
}

/// Histogram as CSV rows `degree,count` with a header line.
inline std::string degree_histogram_csv(const GaifmanGraph& g) {
  std::string out = "degree,count\n";
  for (const auto& [deg, count] : g.degree_histogram())
    out += std::to_string(deg) + "," + std::to_string(count) + "\n";
  return out;
}

}  // namespace gaifman
