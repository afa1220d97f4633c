#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gaifman/common.hpp"
#include "gaifman/featurizer.hpp"
#include "gaifman/graph.hpp"
#include "gaifman/kb.hpp"
#include "gaifman/logic.hpp"
#include "gaifman/mlp.hpp"
#include "gaifman/sampler.hpp"

namespace gaifman {

/// Full model configuration: neighborhood parameters (r, k, w, w~), the
/// inference sample count N, the feature transform and the base classifier.
struct PipelineConfig {
  SamplerConfig sampler;
  int infer_samples = 1;  // N: neighborhoods averaged per query answer
  Transform transform = Transform::Log1p;
  CorruptionOptions corruption;
  MlpConfig mlp;
  unsigned jobs = 1;

  /// Stream for inference-time neighborhood sampling; fixed so reported
  /// metrics are reproducible.
  std::uint64_t eval_seed() const { return SplitRng(sampler.seed).derive(0xEA57).next_u64(); }
};

struct Triple {
  ObjectId head;
  RelationId relation;
  ObjectId tail;
};

/// Parses `head<TAB>relation<TAB>tail` lines against an existing KB's symbol
/// tables. Lines naming unknown objects or relations are dropped and counted.
inline std::vector<Triple> load_triples_against(std::istream& in, const KnowledgeBase& kb,
                                                std::size_t* dropped = nullptr) {
  std::vector<Triple> out;
  std::size_t drop = 0;
  detail::for_each_line(in, [&](std::size_t lineno, std::string_view line) {
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3)
      throw Error("line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    ObjectId h = kb.find_object(fields[0]);
    RelationId r = kb.find_relation(fields[1]);
    ObjectId t = kb.find_object(fields[2]);
    if (h == kInvalidObject || r == kInvalidRelation || t == kInvalidObject) {
      ++drop;
      return;
    }
    out.push_back({h, r, t});
  });
  if (dropped) *dropped = drop;
  return out;
}

// ---------------------------------------------------------------------------
// Model bundles: one classifier per relation plus the shared feature set.
// ---------------------------------------------------------------------------

class Bundle {
 public:
  struct Entry {
    RelationId relation = kInvalidRelation;
    std::string name;
    std::size_t train_facts = 0;
    std::string model_file;  // empty when the relation was skipped
  };

  PipelineConfig config;
  FeatureSet features;
  std::uint64_t kb_hash = 0;
  std::vector<Entry> entries;

  const MlpModel* model(RelationId rel) const {
    auto it = models_.find(rel);
    return it == models_.end() ? nullptr : &it->second;
  }

  void put_model(RelationId rel, MlpModel m) { models_[rel] = std::move(m); }

  std::size_t num_models() const { return models_.size(); }

  // --- persistence ---------------------------------------------------------

  void save(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "models");
    {
      std::ofstream f(dir / "features.txt");
      if (!f) throw Error("cannot write " + (dir / "features.txt").string());
      features.write(f);
    }
    std::string manifest = manifest_text();
    for (const auto& e : entries) {
      if (e.model_file.empty()) continue;
      auto it = models_.find(e.relation);
      if (it == models_.end()) throw Error("missing model for relation " + e.name);
      it->second.save((dir / e.model_file).string());
    }
    std::ofstream f(dir / "manifest.txt");
    if (!f) throw Error("cannot write " + (dir / "manifest.txt").string());
    f << manifest;
  }

  static Bundle load(const std::filesystem::path& dir, const KnowledgeBase& kb) {
    namespace fs = std::filesystem;
    Bundle b;
    std::ifstream mf(dir / "manifest.txt");
    if (!mf) throw Error("cannot open bundle manifest '" + (dir / "manifest.txt").string() + "'");
    std::string line;
    if (!std::getline(mf, line) || line != "GAIFBUNDLE1")
      throw Error("not a bundle manifest (missing GAIFBUNDLE1 header)");
    auto next = [&](const char* key) {
      if (!std::getline(mf, line)) throw Error("truncated bundle manifest");
      return detail::header_value(line, key);
    };
    b.kb_hash = detail::parse_u64(next("kb_hash"));
    const std::uint64_t feature_hash = detail::parse_u64(next("feature_hash"));
    b.config.sampler.radius = static_cast<int>(detail::parse_u64(next("r")));
    std::string kval = next("k");
    b.config.sampler.k =
        kval == "inf" ? kUnboundedK : static_cast<std::uint32_t>(detail::parse_u64(kval));
    b.config.sampler.samples_per_tuple = static_cast<int>(detail::parse_u64(next("w")));
    b.config.sampler.negatives_per_tuple = static_cast<int>(detail::parse_u64(next("neg")));
    b.config.infer_samples = static_cast<int>(detail::parse_u64(next("n")));
    b.config.transform = transform_from_name(next("transform"));
    b.config.sampler.seed = detail::parse_u64(next("seed"));
    b.config.mlp.hidden = parse_hidden_spec(next("mlp_hidden"));
    b.config.mlp.input_dropout = std::stod(next("mlp_dropout"));
    b.config.mlp.learning_rate = std::stod(next("mlp_lr"));
    b.config.mlp.beta1 = std::stod(next("mlp_beta1"));
    b.config.mlp.beta2 = std::stod(next("mlp_beta2"));
    b.config.mlp.epsilon = std::stod(next("mlp_epsilon"));
    b.config.mlp.batch_size = static_cast<std::uint32_t>(detail::parse_u64(next("mlp_batch")));
    b.config.mlp.epochs = static_cast<std::uint32_t>(detail::parse_u64(next("mlp_epochs")));
    const std::size_t n_entries = detail::parse_u64(next("relations"));
    if (!std::getline(mf, line) || line != "END")
      throw Error("malformed bundle manifest: missing END");

    if (b.kb_hash != kb.content_hash())
      throw Error("bundle was trained on a different knowledge base (hash mismatch)");

    {
      std::ifstream ff(dir / "features.txt");
      if (!ff) throw Error("cannot open bundle features '" + (dir / "features.txt").string() + "'");
      b.features = load_feature_set(ff, &kb);
    }
    if (b.features.content_hash() != feature_hash)
      throw Error("bundle feature set does not match its manifest (hash mismatch)");
    b.config.mlp.input_dim = static_cast<std::uint32_t>(b.features.size());

    for (std::size_t i = 0; i < n_entries; ++i) {
      if (!std::getline(mf, line)) throw Error("truncated bundle manifest entries");
      auto fields = detail::split_tabs(line);
      if (fields.size() != 4) throw Error("malformed bundle manifest entry");
      Entry e;
      e.relation = static_cast<RelationId>(detail::parse_u64(std::string(fields[0])));
      e.name = std::string(fields[1]);
      e.train_facts = detail::parse_u64(std::string(fields[2]));
      e.model_file = fields[3] == "-" ? "" : std::string(fields[3]);
      if (e.relation >= kb.num_relations() || kb.relation_name(e.relation) != e.name)
        throw Error("bundle relation table does not match the knowledge base");
      if (!e.model_file.empty()) {
        MlpModel m = MlpModel::load((dir / e.model_file).string());
        if (m.feature_hash != feature_hash)
          throw Error("model for relation '" + e.name + "' was trained on a different feature set");
        b.models_[e.relation] = std::move(m);
      }
      b.entries.push_back(std::move(e));
    }
    return b;
  }

  std::string manifest_text() const {
    std::string out = "GAIFBUNDLE1\n";
    out += "kb_hash=" + std::to_string(kb_hash) + "\n";
    out += "feature_hash=" + std::to_string(features.content_hash()) + "\n";
    out += "r=" + std::to_string(config.sampler.radius) + "\n";
    out += "k=" + (config.sampler.unbounded() ? std::string("inf")
                                              : std::to_string(config.sampler.k)) + "\n";
    out += "w=" + std::to_string(config.sampler.samples_per_tuple) + "\n";
    out += "neg=" + std::to_string(config.sampler.negatives_per_tuple) + "\n";
    out += "n=" + std::to_string(config.infer_samples) + "\n";
    out += "transform=" + std::string(transform_name(config.transform)) + "\n";
    out += "seed=" + std::to_string(config.sampler.seed) + "\n";
    out += "mlp_hidden=" + config.mlp.hidden_spec() + "\n";
    out += "mlp_dropout=" + format_double(config.mlp.input_dropout) + "\n";
    out += "mlp_lr=" + format_double(config.mlp.learning_rate) + "\n";
    out += "mlp_beta1=" + format_double(config.mlp.beta1) + "\n";
    out += "mlp_beta2=" + format_double(config.mlp.beta2) + "\n";
    out += "mlp_epsilon=" + format_double(config.mlp.epsilon) + "\n";
    out += "mlp_batch=" + std::to_string(config.mlp.batch_size) + "\n";
    out += "mlp_epochs=" + std::to_string(config.mlp.epochs) + "\n";
    out += "relations=" + std::to_string(entries.size()) + "\n";
    out += "END\n";
    for (const auto& e : entries) {
      out += std::to_string(e.relation) + "\t" + e.name + "\t" + std::to_string(e.train_facts) +
             "\t" + (e.model_file.empty() ? "-" : e.model_file) + "\n";
    }
    return out;
  }

 private:
  std::map<RelationId, MlpModel> models_;
};

struct TrainAllOptions {
  /// Train only these relation ids (empty = all binary relations).
  std::vector<RelationId> relations;
  /// Persist per-relation datasets and training logs next to the models.
  bool keep_datasets = true;
  std::filesystem::path out_dir;  // empty = in-memory bundle only
  std::ostream* log = nullptr;    // warnings and progress notes
  ProgressFn progress;            // per-relation tuple progress
};

/// Trains one classifier per relation on its own facts as positives:
/// the target query r(s1, s2) instantiated for each relation in turn.
/// Relations with no training facts are skipped with a warning.
inline Bundle train_all(const KnowledgeBase& kb, const GaifmanGraph& graph,
                        const FeatureSet& features, const PipelineConfig& config,
                        const TrainAllOptions& opts = {}) {
  namespace fs = std::filesystem;
  Bundle bundle;
  bundle.config = config;
  bundle.features = features;
  bundle.kb_hash = kb.content_hash();
  bundle.config.mlp.input_dim = static_cast<std::uint32_t>(features.size());

  const bool persist = !opts.out_dir.empty();
  if (persist && opts.keep_datasets) {
    fs::create_directories(opts.out_dir / "datasets");
    fs::create_directories(opts.out_dir / "logs");
  }

  std::vector<RelationId> todo = opts.relations;
  if (todo.empty())
    for (RelationId r = 0; r < kb.num_relations(); ++r) todo.push_back(r);

  for (RelationId rel = 0; rel < kb.num_relations(); ++rel) {
    Bundle::Entry entry;
    entry.relation = rel;
    entry.name = kb.relation_name(rel);
    entry.train_facts = kb.num_facts(rel);
    bundle.entries.push_back(entry);
  }

  SplitRng seeds(config.sampler.seed);
  char file[64];
  for (RelationId rel : todo) {
    Bundle::Entry& entry = bundle.entries.at(rel);
    if (kb.arity(rel) != 2) {
      if (opts.log)
        *opts.log << "skipping relation '" << entry.name << "': arity "
                  << kb.arity(rel) << " (entity prediction trains on pairs)\n";
      continue;
    }
    if (entry.train_facts == 0) {
      if (opts.log) *opts.log << "skipping relation '" << entry.name << "': no training facts\n";
      continue;
    }
    SamplerConfig scfg = config.sampler;
    scfg.seed = seeds.derive(0xDA7A, rel).next_u64();
    BuildOptions bopts;
    bopts.transform = config.transform;
    bopts.corruption = config.corruption;
    bopts.jobs = config.jobs;
    bopts.progress = opts.progress;
    Dataset ds = build_dataset(kb, graph, relation_query(kb, rel), features, scfg, bopts);

    MlpConfig mcfg = config.mlp;
    mcfg.input_dim = static_cast<std::uint32_t>(features.size());
    mcfg.seed = seeds.derive(0x317A, rel).next_u64();
    MlpModel::TrainLog tlog;
    MlpModel model = MlpModel::train(mcfg, ds, &tlog);
    model.relation_name = entry.name;
    if (opts.log) {
      for (const auto& w : tlog.warnings) *opts.log << "relation '" << entry.name << "': " << w << "\n";
      if (!tlog.rows.empty())
        *opts.log << "relation '" << entry.name << "': " << ds.rows() << " examples, final loss "
                  << format_fixed(tlog.rows.back().loss, 4) << ", accuracy "
                  << format_fixed(tlog.rows.back().accuracy, 4) << "\n";
    }
    std::snprintf(file, sizeof(file), "%05u", rel);
    entry.model_file = "models/model_" + std::string(file) + ".bin";
    if (persist && opts.keep_datasets) {
      save_dataset(ds, (opts.out_dir / "datasets" / ("ds_" + std::string(file) + ".bin")).string());
      std::ofstream lf(opts.out_dir / "logs" / ("train_" + std::string(file) + ".csv"));
      lf << tlog.to_csv();
    }
    bundle.put_model(rel, std::move(model));
  }
  if (persist) bundle.save(opts.out_dir);
  return bundle;
}

// ---------------------------------------------------------------------------
// Probabilistic query answering
// ---------------------------------------------------------------------------

/// Mean positive-class probability over N freshly sampled (r,k)-neighborhood
/// feature vectors of the tuple, using the training KB's Gaifman graph.
inline double query_prob(const Bundle& bundle, const KnowledgeBase& kb, const GaifmanGraph& graph,
                         std::span<const ObjectId> tuple, RelationId relation, int n_samples,
                         std::optional<std::uint64_t> eval_seed = std::nullopt,
                         BfsScratch* scratch = nullptr) {
  const MlpModel* model = bundle.model(relation);
  if (model == nullptr)
    throw Error("no trained model for relation '" + kb.relation_name(relation) + "'");
  if (n_samples < 1) throw Error("inference sample count N must be >= 1");
  SamplerConfig scfg = bundle.config.sampler;
  scfg.samples_per_tuple = n_samples;
  scfg.negatives_per_tuple = 0;
  scfg.seed = eval_seed.value_or(bundle.config.eval_seed());
  double total = 0.0;
  std::vector<double> row;
  for (const auto& nb : gen_neighs(graph, tuple, scfg, Label::Unlabeled, scratch)) {
    Substructure sub = induce(kb, nb.members);
    featurize_into(sub, nb.tuple, bundle.features, bundle.config.transform, row);
    total += model->forward(row);
  }
  return total / static_cast<double>(n_samples);
}

// ---------------------------------------------------------------------------
// Entity-prediction evaluation
// ---------------------------------------------------------------------------

enum class EvalMode { Raw, Filtered };
enum class TieBreak { Average, Optimistic, Pessimistic };

struct EvalOptions {
  EvalMode mode = EvalMode::Filtered;
  std::size_t candidate_sample = 0;  // 0 = score every object
  int infer_samples = 1;             // N
  TieBreak ties = TieBreak::Average;
  std::size_t limit = 0;             // 0 = evaluate every test triple
  unsigned jobs = 1;
  std::optional<std::uint64_t> eval_seed;
};

struct DirectionStats {
  std::size_t count = 0;
  double mean_rank = 0.0;
  double hits_at_10 = 0.0;  // percent
  double hits_at_1 = 0.0;   // percent
};

struct EvalReport {
  DirectionStats head;  // ranks from replacing d1
  DirectionStats tail;  // ranks from replacing d2
  DirectionStats overall;
  std::string mode;
  std::string candidates;
  int infer_samples = 1;
  std::size_t triples_evaluated = 0;
  std::size_t skipped_no_model = 0;
  std::size_t skipped_total = 0;
  double seconds = 0.0;  // wall clock; reported in the human table only

  std::string to_csv() const {
    auto row = [](const char* dir, const DirectionStats& s) {
      return std::string(dir) + "," + std::to_string(s.count) + "," +
             format_fixed(s.mean_rank, 4) + "," + format_fixed(s.hits_at_10, 4) + "," +
             format_fixed(s.hits_at_1, 4) + "\n";
    };
    std::string out = "direction,count,mean_rank,hits_at_10,hits_at_1\n";
    out += row("head", head);
    out += row("tail", tail);
    out += row("overall", overall);
    out += "mode,," + mode + ",,\n";
    out += "candidates,," + candidates + ",,\n";
    out += "n,," + std::to_string(infer_samples) + ",,\n";
    out += "skipped,," + std::to_string(skipped_total) + ",,\n";
    return out;
  }

  std::string to_table() const {
    auto line = [](const char* dir, const DirectionStats& s) {
      return std::string(dir) + ": n=" + std::to_string(s.count) +
             " mean_rank=" + format_fixed(s.mean_rank, 2) +
             " hits@10=" + format_fixed(s.hits_at_10, 1) +
             " hits@1=" + format_fixed(s.hits_at_1, 1) + "\n";
    };
    std::string out;
    out += "entity prediction (" + mode + ", candidates=" + candidates +
           ", N=" + std::to_string(infer_samples) + ")\n";
    out += line("  head   ", head);
    out += line("  tail   ", tail);
    out += line("  overall", overall);
    out += "  skipped=" + std::to_string(skipped_total) + " (" +
           std::to_string(skipped_no_model) + " without a model)  time=" +
           format_fixed(seconds, 2) + "s\n";
    return out;
  }
};

namespace detail {

inline DirectionStats summarize_ranks(std::span<const double> ranks) {
  DirectionStats s;
  s.count = ranks.size();
  if (ranks.empty()) return s;
  double sum = 0.0;
  std::size_t h10 = 0, h1 = 0;
  for (double r : ranks) {
    sum += r;
    if (r <= 10.0) ++h10;
    if (r <= 1.0) ++h1;
  }
  s.mean_rank = sum / static_cast<double>(ranks.size());
  s.hits_at_10 = 100.0 * static_cast<double>(h10) / static_cast<double>(ranks.size());
  s.hits_at_1 = 100.0 * static_cast<double>(h1) / static_cast<double>(ranks.size());
  return s;
}

/// Rank of the true candidate among scores: ties share the average rank of
/// their block (optimistic/pessimistic variants for comparability studies).
inline double rank_of_true(double true_score, std::span<const double> other_scores,
                           TieBreak ties) {
  std::size_t above = 0, tied = 0;
  for (double s : other_scores) {
    if (s > true_score) ++above;
    else if (s == true_score) ++tied;
  }
  switch (ties) {
    case TieBreak::Optimistic: return static_cast<double>(above + 1);
    case TieBreak::Pessimistic: return static_cast<double>(above + tied + 1);
    case TieBreak::Average: default:
      return static_cast<double>(above) + 1.0 + static_cast<double>(tied) / 2.0;
  }
}

/// Exact membership store for known triples, used by the filtered protocol.
class TripleSet {
 public:
  void insert(const Triple& t) {
    set_[t.relation].insert(pack(t.head, t.tail));
  }
  bool contains(RelationId r, ObjectId h, ObjectId t) const {
    auto it = set_.find(r);
    return it != set_.end() && it->second.count(pack(h, t)) > 0;
  }

 private:
  static std::uint64_t pack(ObjectId h, ObjectId t) {
    return (static_cast<std::uint64_t>(h) << 32) | t;
  }
  std::unordered_map<RelationId, std::unordered_set<std::uint64_t>> set_;
};

}  // namespace detail

/// Per-worker scorer: returns the model score for a (relation, head, tail)
/// statement. evaluate_with_scorer exists so the ranking protocol can be
/// exercised with oracle/constant/heuristic scorers in tests and baselines.
using Scorer = std::function<double(RelationId, ObjectId, ObjectId)>;
using ScorerFactory = std::function<Scorer()>;

inline EvalReport evaluate_with_scorer(const KnowledgeBase& kb,
                                       std::span<const Triple> test_triples,
                                       const detail::TripleSet& known,
                                       const std::function<bool(RelationId)>& has_model,
                                       const ScorerFactory& make_scorer, const EvalOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t total =
      opts.limit == 0 ? test_triples.size() : std::min(opts.limit, test_triples.size());
  const std::uint64_t eval_seed = opts.eval_seed.value_or(0);
  const std::size_t num_objects = kb.num_objects();

  struct Slot {
    double head_rank = -1.0;
    double tail_rank = -1.0;
    bool skipped_no_model = false;
  };
  std::vector<Slot> slots(total);

  parallel_for(opts.jobs, total, [&](std::size_t i) {
    const Triple& triple = test_triples[i];
    if (!has_model(triple.relation)) {
      slots[i].skipped_no_model = true;
      return;
    }
    Scorer score = make_scorer();
    std::vector<ObjectId> candidates;
    std::vector<double> other_scores;
    for (int dir = 0; dir < 2; ++dir) {
      const bool replace_tail = dir == 0;
      const ObjectId truth = replace_tail ? triple.tail : triple.head;
      candidates.clear();
      if (opts.candidate_sample == 0 || opts.candidate_sample >= num_objects) {
        candidates.resize(num_objects);
        for (ObjectId o = 0; o < num_objects; ++o) candidates[o] = o;
      } else {
        SplitRng rng = SplitRng(eval_seed).derive(0xCA2D, i, static_cast<std::uint64_t>(dir));
        std::unordered_set<ObjectId> picked;
        picked.insert(truth);  // the true object always competes
        while (picked.size() < opts.candidate_sample)
          picked.insert(static_cast<ObjectId>(rng.below(num_objects)));
        candidates.assign(picked.begin(), picked.end());
        std::sort(candidates.begin(), candidates.end());
      }
      other_scores.clear();
      double true_score = 0.0;
      for (ObjectId c : candidates) {
        const ObjectId h = replace_tail ? triple.head : c;
        const ObjectId t = replace_tail ? c : triple.tail;
        if (c == truth) {
          true_score = score(triple.relation, h, t);
          continue;
        }
        if (opts.mode == EvalMode::Filtered && known.contains(triple.relation, h, t))
          continue;  // a competing statement known to be true is not an error
        other_scores.push_back(score(triple.relation, h, t));
      }
      const double rank = detail::rank_of_true(true_score, other_scores, opts.ties);
      (replace_tail ? slots[i].tail_rank : slots[i].head_rank) = rank;
    }
  });

  std::vector<double> head_ranks, tail_ranks, all_ranks;
  EvalReport report;
  for (const Slot& s : slots) {
    if (s.skipped_no_model) {
      ++report.skipped_no_model;
      continue;
    }
    head_ranks.push_back(s.head_rank);
    tail_ranks.push_back(s.tail_rank);
    all_ranks.push_back(s.head_rank);
    all_ranks.push_back(s.tail_rank);
  }
  report.head = detail::summarize_ranks(head_ranks);
  report.tail = detail::summarize_ranks(tail_ranks);
  report.overall = detail::summarize_ranks(all_ranks);
  report.mode = opts.mode == EvalMode::Filtered ? "filtered" : "raw";
  report.candidates = opts.candidate_sample == 0
                          ? "all"
                          : "sample(" + std::to_string(opts.candidate_sample) + ")";
  report.infer_samples = opts.infer_samples;
  report.triples_evaluated = total - report.skipped_no_model;
  report.skipped_total = report.skipped_no_model + (test_triples.size() - total);
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/// Builds the known-triple store for the filtered protocol: all training
/// facts plus any extra triple lists (validation and test sets).
inline detail::TripleSet known_triples(const KnowledgeBase& kb,
                                       std::initializer_list<std::span<const Triple>> extra = {}) {
  detail::TripleSet known;
  for (RelationId r = 0; r < kb.num_relations(); ++r) {
    if (kb.arity(r) != 2) continue;
    const std::size_t count = kb.num_facts(r);
    for (std::uint32_t i = 0; i < count; ++i) {
      auto row = kb.row(r, i);
      known.insert({row[0], r, row[1]});
    }
  }
  for (auto span : extra)
    for (const Triple& t : span) known.insert(t);
  return known;
}

/// Entity prediction over a test set: for each triple, the tail and then the
/// head is replaced by every candidate object, candidates are ranked by model
/// score, and the true object's rank (average-tie convention) feeds mean
/// rank / hits@10 / hits@1, per direction and overall.
inline EvalReport evaluate(const Bundle& bundle, const KnowledgeBase& kb,
                           const GaifmanGraph& graph, std::span<const Triple> test_triples,
                           const detail::TripleSet& known, const EvalOptions& opts) {
  EvalOptions o = opts;
  if (!o.eval_seed) o.eval_seed = bundle.config.eval_seed();
  auto factory = [&]() -> Scorer {
    auto scratch = std::make_shared<BfsScratch>();
    return [&, scratch](RelationId rel, ObjectId h, ObjectId t) {
      const ObjectId tuple[2] = {h, t};
      return query_prob(bundle, kb, graph, tuple, rel, o.infer_samples, o.eval_seed,
                        scratch.get());
    };
  };
  auto has_model = [&](RelationId r) { return bundle.model(r) != nullptr; };
  return evaluate_with_scorer(kb, test_triples, known, has_model, factory, o);
}

// ---------------------------------------------------------------------------
// Throughput benchmark
// ---------------------------------------------------------------------------

struct BenchRow {
  std::uint32_t k;
  double answers_per_sec;  // averaged over relation types
  std::size_t answers;
};

/// Wall-clock answers/second for each size bound in the grid, averaged over
/// relation types. One answer = neighborhood generation + featurization +
/// network inference for a single (head, relation, tail) statement; models
/// are shared across the grid since the feature space does not change with k.
inline std::vector<BenchRow> bench(const Bundle& bundle, const KnowledgeBase& kb,
                                   const GaifmanGraph& graph, std::span<const Triple> pairs,
                                   std::span<const std::uint32_t> k_grid, std::size_t limit = 0) {
  std::map<RelationId, std::vector<const Triple*>> by_relation;
  std::size_t taken = 0;
  for (const Triple& t : pairs) {
    if (bundle.model(t.relation) == nullptr) continue;
    by_relation[t.relation].push_back(&t);
    if (limit != 0 && ++taken >= limit) break;
  }
  if (by_relation.empty()) throw Error("benchmark needs test pairs covered by trained models");

  std::vector<BenchRow> rows;
  for (std::uint32_t k : k_grid) {
    SamplerConfig scfg = bundle.config.sampler;
    scfg.k = k;
    scfg.samples_per_tuple = 1;
    scfg.negatives_per_tuple = 0;
    scfg.seed = bundle.config.eval_seed();
    BfsScratch scratch;
    std::vector<double> row;
    double rate_sum = 0.0;
    std::size_t total_answers = 0;
    for (const auto& [rel, triples] : by_relation) {
      const MlpModel* model = bundle.model(rel);
      // one warmup answer, untimed
      {
        const Triple& t = *triples.front();
        const ObjectId tuple[2] = {t.head, t.tail};
        for (const auto& nb : gen_neighs(graph, tuple, scfg, Label::Unlabeled, &scratch)) {
          Substructure sub = induce(kb, nb.members);
          featurize_into(sub, nb.tuple, bundle.features, bundle.config.transform, row);
          (void)model->forward(row);
        }
      }
      const auto t0 = std::chrono::steady_clock::now();
      for (const Triple* tp : triples) {
        const ObjectId tuple[2] = {tp->head, tp->tail};
        for (const auto& nb : gen_neighs(graph, tuple, scfg, Label::Unlabeled, &scratch)) {
          Substructure sub = induce(kb, nb.members);
          featurize_into(sub, nb.tuple, bundle.features, bundle.config.transform, row);
          (void)model->forward(row);
        }
      }
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rate_sum += static_cast<double>(triples.size()) / std::max(secs, 1e-9);
      total_answers += triples.size();
    }
    rows.push_back({k, rate_sum / static_cast<double>(by_relation.size()), total_answers});
  }
  return rows;
}

inline std::string bench_csv(std::span<const BenchRow> rows) {
  std::string out = "k,answers_per_sec\n";
  for (const BenchRow& r : rows)
    out += (r.k == kUnboundedK ? std::string("inf") : std::to_string(r.k)) + "," +
           format_fixed(r.answers_per_sec, 2) + "\n";
  return out;
}

}  // namespace gaifman
