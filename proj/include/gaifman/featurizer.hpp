#pragma once

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "gaifman/common.hpp"
#include "gaifman/graph.hpp"
#include "gaifman/kb.hpp"
#include "gaifman/logic.hpp"
#include "gaifman/sampler.hpp"

namespace gaifman {

enum class Transform : std::uint8_t { Raw = 0, Log1p = 1 };

inline const char* transform_name(Transform t) { return t == Transform::Log1p ? "log1p" : "raw"; }
inline Transform transform_from_name(std::string_view s) {
  if (s == "log1p") return Transform::Log1p;
  if (s == "raw") return Transform::Raw;
  throw Error("unknown transform '" + std::string(s) + "'");
}

/// One labelled feature vector. Position i holds the value of the i-th
/// feature: a 0/1 truth value, or a grounding count for counting features
/// (log(1+count) under the Log1p transform).
struct FeatureVector {
  std::vector<double> values;
  std::vector<ObjectId> tuple;
  Label label = Label::Unlabeled;
};

/// Fills `out` (resized to the feature count) with the vector for the tuple
/// on the given induced substructure.
inline void featurize_into(const Substructure& sub, std::span<const ObjectId> tuple,
                           const FeatureSet& features, Transform transform,
                           std::vector<double>& out) {
  out.assign(features.size(), 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FormulaInfo& info = features.info(i);
    if (info.positive_conjunctive) {
      // a positive existential-conjunctive feature is 0 whenever one of its
      // relations has no fact inside the carrier; skipping these keeps large
      // per-relation feature sets cheap on small neighborhoods
      bool possible = true;
      for (RelationId r : info.relations) {
        if (!sub.has_relation(r)) {
          possible = false;
          break;
        }
      }
      if (!possible) continue;
    }
    if (info.is_counting()) {
      double v = static_cast<double>(count(sub, features[i], tuple, &info));
      out[i] = transform == Transform::Log1p ? std::log1p(v) : v;
    } else {
      out[i] = evaluate(sub, features[i], tuple, &info) ? 1.0 : 0.0;
    }
  }
}

inline FeatureVector featurize(const Substructure& sub, std::span<const ObjectId> tuple,
                               const FeatureSet& features, Transform transform = Transform::Log1p,
                               Label label = Label::Unlabeled) {
  FeatureVector fv;
  fv.tuple.assign(tuple.begin(), tuple.end());
  fv.label = label;
  featurize_into(sub, tuple, features, transform, fv.values);
  return fv;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// A materialized training set: row-major feature values with labels and the
/// originating tuples, plus the metadata needed to detect stale pairings
/// (feature-set hash, KB hash, seed, sampler configuration).
struct Dataset {
  std::uint32_t num_features = 0;
  std::uint32_t tuple_arity = 0;
  std::vector<double> values;    // row-major, size = rows * num_features
  std::vector<Label> labels;     // size = rows
  std::vector<ObjectId> tuples;  // size = rows * tuple_arity

  std::uint64_t feature_hash = 0;
  std::uint64_t kb_hash = 0;
  std::uint64_t seed = 0;
  Transform transform = Transform::Log1p;
  std::string config;  // human-readable sampler/query description

  std::size_t rows() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * num_features, num_features);
  }
  std::span<const ObjectId> tuple(std::size_t i) const {
    return std::span<const ObjectId>(tuples).subspan(i * tuple_arity, tuple_arity);
  }
  std::size_t count_label(Label l) const {
    std::size_t n = 0;
    for (Label x : labels)
      if (x == l) ++n;
    return n;
  }
};

struct BuildOptions {
  Transform transform = Transform::Log1p;
  CorruptionOptions corruption;
  unsigned jobs = 1;
  ProgressFn progress;  // optional; called with (tuples done, tuples total)
};

/// Materializes the training set for a target query: for every tuple in the
/// query's result set, w positively labelled vectors from its sampled
/// neighborhoods and one negatively labelled vector for each of w~ corrupted
/// tuples. Deterministic under the config seed; parallel workers write
/// disjoint row ranges so the output is order-stable.
inline Dataset build_dataset(const KnowledgeBase& kb, const GaifmanGraph& graph,
                             const TargetQuery& query, const FeatureSet& features,
                             const SamplerConfig& config, const BuildOptions& opts = {}) {
  if (features.num_targets() > query.num_targets)
    throw Error("feature set references s" + std::to_string(features.num_targets()) +
                " but the target query has " + std::to_string(query.num_targets) +
                " free variables");
  config.validate(static_cast<std::size_t>(query.num_targets));
  kb.finalize();

  const auto tuples = result_set(kb, query);
  if (tuples.empty()) throw Error("no positive examples: the target query has an empty result set");

  // known-true filter for corruption: single-atom queries check the relation
  // directly; general conjunctive queries check result-set membership
  RelationId target_relation = kInvalidRelation;
  if (query.formula.kind == Connective::Atom) target_relation = query.formula.relation;
  std::unordered_set<std::uint64_t> known;
  if (target_relation == kInvalidRelation && opts.corruption.reject_known_true) {
    known.reserve(tuples.size() * 2);
    for (const auto& t : tuples) known.insert(detail::tuple_stream_id(t));
  }

  const std::size_t per_tuple =
      static_cast<std::size_t>(config.samples_per_tuple) +
      static_cast<std::size_t>(config.negatives_per_tuple);
  Dataset ds;
  ds.num_features = static_cast<std::uint32_t>(features.size());
  ds.tuple_arity = static_cast<std::uint32_t>(query.num_targets);
  ds.feature_hash = features.content_hash();
  ds.kb_hash = kb.content_hash();
  ds.seed = config.seed;
  ds.transform = opts.transform;
  ds.config = "q=" + print(query.formula) + " r=" + std::to_string(config.radius) +
              " k=" + (config.unbounded() ? std::string("inf") : std::to_string(config.k)) +
              " w=" + std::to_string(config.samples_per_tuple) +
              " neg=" + std::to_string(config.negatives_per_tuple);
  const std::size_t rows = tuples.size() * per_tuple;
  ds.values.assign(rows * ds.num_features, 0.0);
  ds.labels.assign(rows, Label::Unlabeled);
  ds.tuples.assign(rows * ds.tuple_arity, 0);

  std::atomic<std::size_t> done{0};
  parallel_for(opts.jobs, tuples.size(), [&](std::size_t t) {
    BfsScratch scratch;
    std::vector<double> row;
    std::size_t slot = t * per_tuple;
    auto emit = [&](const SampledNeighborhood& nb) {
      Substructure sub = induce(kb, nb.members);
      featurize_into(sub, nb.tuple, features, opts.transform, row);
      std::copy(row.begin(), row.end(), ds.values.begin() + slot * ds.num_features);
      std::copy(nb.tuple.begin(), nb.tuple.end(), ds.tuples.begin() + slot * ds.tuple_arity);
      ds.labels[slot] = nb.label;
      ++slot;
    };
    for (const auto& nb : gen_neighs(graph, tuples[t], config, Label::Positive, &scratch))
      emit(nb);
    if (config.negatives_per_tuple > 0) {
      std::vector<std::vector<ObjectId>> corrupted;
      if (target_relation != kInvalidRelation) {
        corrupted = corrupt(kb, target_relation, tuples[t], config.negatives_per_tuple,
                            config.seed, opts.corruption);
      } else {
        corrupted = corrupt_with(kb, tuples[t], config.negatives_per_tuple, config.seed,
                                 [&](std::span<const ObjectId> cand) {
                                   return opts.corruption.reject_known_true &&
                                          known.count(detail::tuple_stream_id(cand)) > 0;
                                 },
                                 opts.corruption);
      }
      SamplerConfig one = config;
      one.samples_per_tuple = 1;
      for (const auto& ct : corrupted)
        emit(gen_neighs(graph, ct, one, Label::Negative, &scratch).front());
    }
    std::size_t d = done.fetch_add(1) + 1;
    if (opts.progress && (d % 1024 == 0 || d == tuples.size())) opts.progress(d, tuples.size());
  });
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset files: plain-text header, then fixed-width binary columns
// (labels, tuple components, one column per feature; little-endian f64).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_f64_column(std::ostream& out, const double* data, std::size_t n,
                             std::size_t stride) {
  std::vector<unsigned char> buf(n * 8);
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(buf.data() + i * 8, data + i * stride, 8);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline std::string header_value(const std::string& line, const char* key) {
  std::string prefix = std::string(key) + "=";
  if (line.rfind(prefix, 0) != 0) throw Error("malformed header: expected '" + prefix + "...'");
  return line.substr(prefix.size());
}

inline std::uint64_t parse_u64(const std::string& s) {
  if (s.empty()) throw Error("malformed header: empty number");
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw Error("malformed header: bad number '" + s + "'");
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return v;
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, std::ostream& out) {
  out << "GAIFDS1\n";
  out << "rows=" << ds.rows() << "\n";
  out << "arity=" << ds.tuple_arity << "\n";
  out << "features=" << ds.num_features << "\n";
  out << "positives=" << ds.count_label(Label::Positive) << "\n";
  out << "negatives=" << ds.count_label(Label::Negative) << "\n";
  out << "feature_hash=" << ds.feature_hash << "\n";
  out << "kb_hash=" << ds.kb_hash << "\n";
  out << "seed=" << ds.seed << "\n";
  out << "transform=" << transform_name(ds.transform) << "\n";
  out << "config=" << ds.config << "\n";
  out << "END\n";
  const std::size_t n = ds.rows();
  std::vector<unsigned char> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<unsigned char>(ds.labels[i]);
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(n));
  for (std::uint32_t p = 0; p < ds.tuple_arity; ++p) {
    std::vector<unsigned char> col(n * 4);
    for (std::size_t i = 0; i < n; ++i)
      std::memcpy(col.data() + i * 4, &ds.tuples[i * ds.tuple_arity + p], 4);
    out.write(reinterpret_cast<const char*>(col.data()), static_cast<std::streamsize>(col.size()));
  }
  for (std::uint32_t f = 0; f < ds.num_features; ++f)
    detail::write_f64_column(out, ds.values.data() + f, n, ds.num_features);
  if (!out) throw Error("failed to write dataset");
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  save_dataset(ds, out);
}

inline Dataset load_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "GAIFDS1")
    throw Error("not a dataset file (missing GAIFDS1 header)");
  Dataset ds;
  std::size_t rows = 0, positives = 0, negatives = 0;
  auto next = [&](const char* key) {
    if (!std::getline(in, line)) throw Error("truncated dataset header");
    return detail::header_value(line, key);
  };
  rows = detail::parse_u64(next("rows"));
  ds.tuple_arity = static_cast<std::uint32_t>(detail::parse_u64(next("arity")));
  ds.num_features = static_cast<std::uint32_t>(detail::parse_u64(next("features")));
  positives = detail::parse_u64(next("positives"));
  negatives = detail::parse_u64(next("negatives"));
  ds.feature_hash = detail::parse_u64(next("feature_hash"));
  ds.kb_hash = detail::parse_u64(next("kb_hash"));
  ds.seed = detail::parse_u64(next("seed"));
  ds.transform = transform_from_name(next("transform"));
  ds.config = next("config");
  if (!std::getline(in, line) || line != "END") throw Error("malformed dataset header: missing END");

  std::vector<unsigned char> labels(rows);
  in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(rows));
  ds.labels.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] > 2) throw Error("corrupt dataset: bad label byte");
    ds.labels[i] = static_cast<Label>(labels[i]);
  }
  ds.tuples.assign(rows * ds.tuple_arity, 0);
  for (std::uint32_t p = 0; p < ds.tuple_arity; ++p) {
    std::vector<unsigned char> col(rows * 4);
    in.read(reinterpret_cast<char*>(col.data()), static_cast<std::streamsize>(col.size()));
    for (std::size_t i = 0; i < rows; ++i)
      std::memcpy(&ds.tuples[i * ds.tuple_arity + p], col.data() + i * 4, 4);
  }
  ds.values.assign(rows * ds.num_features, 0.0);
  for (std::uint32_t f = 0; f < ds.num_features; ++f) {
    std::vector<unsigned char> col(rows * 8);
    in.read(reinterpret_cast<char*>(col.data()), static_cast<std::streamsize>(col.size()));
    for (std::size_t i = 0; i < rows; ++i)
      std::memcpy(&ds.values[i * ds.num_features + f], col.data() + i * 8, 8);
  }
  if (!in) throw Error("truncated dataset file");
  if (ds.count_label(Label::Positive) != positives || ds.count_label(Label::Negative) != negatives)
    throw Error("corrupt dataset: label counts disagree with header");
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  return load_dataset(in);
}

/// Human-readable dump: one CSV row per record.
inline void dump_dataset_csv(const Dataset& ds, const KnowledgeBase* kb, std::ostream& out) {
  out << "label";
  for (std::uint32_t p = 0; p < ds.tuple_arity; ++p) out << ",s" << (p + 1);
  for (std::uint32_t f = 0; f < ds.num_features; ++f) out << ",v" << f;
  out << "\n";
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    out << (ds.labels[i] == Label::Positive ? "pos"
            : ds.labels[i] == Label::Negative ? "neg"
                                              : "unlabeled");
    for (ObjectId o : ds.tuple(i)) {
      out << ',';
      if (kb)
        out << kb->object_name(o);
      else
        out << o;
    }
    for (double v : ds.row(i)) out << ',' << format_double(v);
    out << "\n";
  }
}

}  // namespace gaifman
