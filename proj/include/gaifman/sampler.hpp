#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "gaifman/common.hpp"
#include "gaifman/graph.hpp"
#include "gaifman/kb.hpp"

namespace gaifman {

enum class Label : std::uint8_t { Negative = 0, Positive = 1, Unlabeled = 2 };

struct SamplerConfig {
  int radius = 1;
  std::uint32_t k = 20;           // kUnboundedK means "use the whole r-neighborhood"
  int samples_per_tuple = 1;      // w
  int negatives_per_tuple = 0;    // w~
  std::uint64_t seed = 42;

  bool unbounded() const { return k == kUnboundedK; }

  void validate(std::size_t tuple_len) const {
    if (radius < 0) throw Error("radius must be >= 0");
    if (samples_per_tuple < 1) throw Error("samples per tuple (w) must be >= 1");
    if (negatives_per_tuple < 0) throw Error("negative samples per tuple must be >= 0");
    if (!unbounded() && k < tuple_len)
      throw Error("size bound k must be at least the tuple length");
    if (!unbounded() && k < 1) throw Error("size bound k must be >= 1");
  }
};

/// One bounded neighborhood drawn for a tuple: the tuple's elements plus at
/// most k - |tuple| sampled members of its r-neighborhood, sorted ascending.
struct SampledNeighborhood {
  std::vector<ObjectId> tuple;
  std::vector<ObjectId> members;
  Label label = Label::Positive;
};

namespace detail {

inline std::uint64_t tuple_stream_id(std::span<const ObjectId> tuple) {
  Fnv64 h;
  h.add_u64(tuple.size());
  for (ObjectId o : tuple) h.add_u32(o);
  return h.value();
}

}  // namespace detail

/// Draws w size-bounded neighborhoods of the tuple.
///
/// Each draw seeds the member set with the tuple's elements, then for each
/// element d_i takes up to floor(k/n) members (the element itself included in
/// that quota) uniformly without replacement from the element's r-ball, and
/// finally tops the set up to k from the remaining pool of the tuple's
/// r-neighborhood. Whenever the whole r-neighborhood has at most k members it
/// is returned unsampled, w times over. Deterministic given (graph, tuple,
/// config.seed); each (tuple, sample-index) pair uses an independent RNG
/// stream, so generation order does not matter.
inline std::vector<SampledNeighborhood> gen_neighs(const GaifmanGraph& graph,
                                                   std::span<const ObjectId> tuple,
                                                   const SamplerConfig& config,
                                                   Label label = Label::Positive,
                                                   BfsScratch* scratch = nullptr) {
  config.validate(tuple.size());
  if (tuple.empty()) throw Error("cannot sample a neighborhood of an empty tuple");
  const std::size_t n = tuple.size();

  BfsScratch local_scratch;
  BfsScratch& bfs = scratch ? *scratch : local_scratch;

  // per-element pools N_r(d_i) and their union N_r(d)
  std::vector<std::vector<ObjectId>> pools;
  pools.reserve(n);
  std::vector<ObjectId> full;
  for (ObjectId d : tuple) {
    pools.push_back(graph.ball(d, config.radius, &bfs));
    full.insert(full.end(), pools.back().begin(), pools.back().end());
  }
  std::sort(full.begin(), full.end());
  full.erase(std::unique(full.begin(), full.end()), full.end());

  const std::uint64_t stream = detail::tuple_stream_id(tuple);
  SplitRng base(config.seed);

  std::vector<SampledNeighborhood> out;
  out.reserve(static_cast<std::size_t>(config.samples_per_tuple));

  const bool whole = config.unbounded() || full.size() <= config.k;
  for (int s = 0; s < config.samples_per_tuple; ++s) {
    SampledNeighborhood nb;
    nb.tuple.assign(tuple.begin(), tuple.end());
    nb.label = label;
    if (whole) {
      nb.members = full;
      out.push_back(std::move(nb));
      continue;
    }

    SplitRng rng = base.derive(stream, static_cast<std::uint64_t>(s));
    std::vector<ObjectId> members(tuple.begin(), tuple.end());
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    auto taken = [&members](ObjectId o) {
      return std::binary_search(members.begin(), members.end(), o);
    };
    auto take = [&members](ObjectId o) {
      members.insert(std::upper_bound(members.begin(), members.end(), o), o);
    };

    const std::size_t quota = static_cast<std::size_t>(config.k) / n;
    std::vector<ObjectId> candidates;
    for (std::size_t i = 0; i < n; ++i) {
      // the element itself fills one slot of its quota
      std::size_t want = std::min(quota, pools[i].size());
      if (want <= 1) continue;
      want -= 1;
      candidates.clear();
      for (ObjectId o : pools[i])
        if (!taken(o)) candidates.push_back(o);
      std::size_t got = rng.partial_sample(candidates, want);
      for (std::size_t j = 0; j < got; ++j) take(candidates[j]);
    }

    if (members.size() < config.k) {
      candidates.clear();
      for (ObjectId o : full)
        if (!taken(o)) candidates.push_back(o);
      std::size_t want = std::min<std::size_t>(config.k - members.size(), candidates.size());
      std::size_t got = rng.partial_sample(candidates, want);
      for (std::size_t j = 0; j < got; ++j) take(candidates[j]);
    }

    nb.members = std::move(members);
    out.push_back(std::move(nb));
  }
  return out;
}

struct CorruptionOptions {
  /// Redraw replacements that produce a fact already present in the training
  /// KB for the target relation (avoids labelling true statements negative).
  bool reject_known_true = true;
  /// After this many redraws the candidate is accepted anyway and counted.
  int max_retries = 64;
};

struct CorruptionStats {
  std::size_t accepted_known_true = 0;  // gave up redrawing; possible false negatives
};

/// Core corruption loop with a caller-supplied "known true" predicate.
/// Output j replaces position j mod n with an object drawn uniformly from the
/// domain; the original object is always redrawn, and replacements the
/// predicate flags are redrawn up to opts.max_retries times.
template <typename KnownFn>
std::vector<std::vector<ObjectId>> corrupt_with(const KnowledgeBase& kb,
                                                std::span<const ObjectId> tuple, int num_corrupted,
                                                std::uint64_t seed, KnownFn&& is_known,
                                                const CorruptionOptions& opts = {},
                                                CorruptionStats* stats = nullptr) {
  if (num_corrupted < 0) throw Error("number of corrupted tuples must be >= 0");
  if (tuple.empty()) throw Error("cannot corrupt an empty tuple");
  if (num_corrupted > 0 && kb.num_objects() <= 1)
    throw Error("cannot corrupt tuples over a domain with fewer than 2 objects");

  const std::size_t n = tuple.size();
  const std::uint64_t stream = detail::tuple_stream_id(tuple);
  SplitRng base(seed);

  std::vector<std::vector<ObjectId>> out;
  out.reserve(static_cast<std::size_t>(num_corrupted));
  std::vector<ObjectId> candidate(tuple.begin(), tuple.end());
  for (int j = 0; j < num_corrupted; ++j) {
    const std::size_t pos = static_cast<std::size_t>(j) % n;
    SplitRng rng = base.derive(stream, static_cast<std::uint64_t>(j), 0x10c0);
    candidate.assign(tuple.begin(), tuple.end());
    int tries = 0;
    while (true) {
      ObjectId repl = static_cast<ObjectId>(rng.below(kb.num_objects()));
      if (repl == tuple[pos]) continue;  // must differ from the original
      candidate[pos] = repl;
      ++tries;
      if (is_known(std::span<const ObjectId>(candidate))) {
        if (tries <= opts.max_retries) continue;
        if (stats != nullptr) ++stats->accepted_known_true;
      }
      break;
    }
    out.push_back(candidate);
  }
  return out;
}

/// Corruption for a relational target query: replacements forming a known
/// fact of the target relation are redrawn (when opts.reject_known_true).
inline std::vector<std::vector<ObjectId>> corrupt(const KnowledgeBase& kb, RelationId relation,
                                                  std::span<const ObjectId> tuple,
                                                  int num_corrupted, std::uint64_t seed,
                                                  const CorruptionOptions& opts = {},
                                                  CorruptionStats* stats = nullptr) {
  return corrupt_with(
      kb, tuple, num_corrupted, seed,
      [&](std::span<const ObjectId> cand) {
        return opts.reject_known_true && kb.holds(relation, cand);
      },
      opts, stats);
}

}  // namespace gaifman
