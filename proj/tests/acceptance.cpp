// Acceptance suite: one self-contained check per release criterion, each
// printing a single [PASS]/[FAIL] line. The process exit code is the number
// of failed criteria.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gaifman/cli.hpp"
#include "gaifman/featurizer.hpp"
#include "gaifman/graph.hpp"
#include "gaifman/kb.hpp"
#include "gaifman/logic.hpp"
#include "gaifman/mlp.hpp"
#include "gaifman/pipeline.hpp"
#include "gaifman/sampler.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace gaifman;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t hash_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot hash missing file " + p.string());
  Fnv64 h;
  char buf[1 << 15];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h.add_bytes(buf, static_cast<std::size_t>(in.gcount()));
  return h.value();
}

std::uint64_t hash_tree(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Fnv64 h;
  for (const auto& f : files) {
    h.add_string(fs::relative(f, dir).string());
    h.add_u64(hash_file(f));
  }
  return h.value();
}

// ---------------------------------------------------------------------------
// Criterion 1: property-based oracle equivalence on >= 1000 random KBs.
// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  SplitRng rng(101);
  std::size_t kbs = 0, graph_checks = 0, ball_checks = 0, formula_checks = 0, mismatches = 0;
  for (int iter = 0; iter < 1000; ++iter) {
    auto kb = testutil::random_kb(rng);
    ++kbs;
    auto graph = build_gaifman_graph(kb);

    // (a) edges match brute-force pairwise co-occurrence
    auto edges = testutil::cooccurrence_edges(kb);
    std::size_t listed = 0;
    for (ObjectId v = 0; v < kb.num_objects(); ++v)
      for (ObjectId w : graph.neighbors(v)) {
        if (edges.count({v, w}) == 0) ++mismatches;
        ++listed;
      }
    if (listed != edges.size()) ++mismatches;
    ++graph_checks;

    // (b) truncated BFS equals Floyd-Warshall distances
    auto dist = testutil::floyd_warshall(kb);
    BfsScratch scratch;
    for (int r = 0; r <= 2; ++r) {
      ObjectId v = static_cast<ObjectId>(rng.below(kb.num_objects()));
      auto ball = graph.ball(v, r, &scratch);
      std::vector<ObjectId> expect;
      for (ObjectId w = 0; w < kb.num_objects(); ++w)
        if (dist[v][w] <= r) expect.push_back(w);
      if (ball != expect) ++mismatches;
      ++ball_checks;
    }

    // (c) evaluation and counting equal exhaustive grounding
    auto carrier = testutil::random_carrier(rng, kb, 8);
    auto sub = induce(kb, carrier);
    auto oracle = testutil::oracle_induce(kb, carrier);
    testutil::FormulaGenOptions fopt;
    fopt.allow_counting = iter % 2 == 0;
    for (int j = 0; j < 3; ++j) {
      std::string text = testutil::random_formula_text(rng, kb, fopt);
      Formula f = parse(text, &kb);
      const ObjectId binding[2] = {static_cast<ObjectId>(rng.below(kb.num_objects())),
                                   static_cast<ObjectId>(rng.below(kb.num_objects()))};
      if (analyze(f).is_counting()) {
        if (count(sub, f, binding) != testutil::oracle_count(oracle, f, binding)) ++mismatches;
      } else {
        if (evaluate(sub, f, binding) != testutil::oracle_evaluate(oracle, f, binding))
          ++mismatches;
      }
      ++formula_checks;
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mismatches == 0 && secs < 120.0;
  o.detail = std::to_string(kbs) + " KBs, " + std::to_string(graph_checks) + " graph + " +
             std::to_string(ball_checks) + " distance + " + std::to_string(formula_checks) +
             " evaluation checks, " + std::to_string(mismatches) + " mismatches, " +
             format_fixed(secs, 1) + "s (budget 120s)";
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 2: locality; relativized evaluation over the full KB agrees with
// evaluation on the induced r-neighborhood substructure.
// ---------------------------------------------------------------------------

Outcome criterion2() {
  SplitRng rng(202);
  std::size_t cases = 0, mismatches = 0;
  while (cases < 1000) {
    auto kb = testutil::random_kb(rng);
    auto graph = build_gaifman_graph(kb);
    testutil::FormulaGenOptions fopt;
    BfsScratch scratch;
    for (int j = 0; j < 10 && cases < 1000; ++j) {
      Formula f = parse(testutil::random_formula_text(rng, kb, fopt), &kb);
      const int r = static_cast<int>(rng.below(4));
      const ObjectId binding[2] = {static_cast<ObjectId>(rng.below(kb.num_objects())),
                                   static_cast<ObjectId>(rng.below(kb.num_objects()))};
      auto members = graph.ball(binding, r, &scratch);
      const bool local = evaluate(induce(kb, members), f, binding);
      const bool relativized = relativized_evaluate(kb, graph, f, binding, r, &scratch);
      if (local != relativized) ++mismatches;
      ++cases;
    }
  }
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = std::to_string(cases) + " (formula, tuple, r) cases, " +
             std::to_string(mismatches) + " mismatches";
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 3: neighborhood-generation contracts over 10,000 invocations,
// plus the statistical balance check on the star fixture.
// ---------------------------------------------------------------------------

std::uint64_t run_sampling_block(std::size_t invocations) {
  SplitRng rng(303);
  Fnv64 artifact;
  std::size_t done = 0;
  while (done < invocations) {
    auto kb = testutil::random_kb(rng);
    auto graph = build_gaifman_graph(kb);
    BfsScratch scratch;
    for (int j = 0; j < 100 && done < invocations; ++j, ++done) {
      SamplerConfig cfg;
      cfg.radius = 1 + static_cast<int>(rng.below(2));
      cfg.k = 2 + static_cast<std::uint32_t>(rng.below(14));
      cfg.samples_per_tuple = 1 + static_cast<int>(rng.below(3));
      cfg.seed = rng.next_u64();
      const ObjectId tuple[2] = {static_cast<ObjectId>(rng.below(kb.num_objects())),
                                 static_cast<ObjectId>(rng.below(kb.num_objects()))};
      auto full = graph.ball(tuple, cfg.radius, &scratch);
      auto samples = gen_neighs(graph, tuple, cfg, Label::Positive, &scratch);
      auto again = gen_neighs(graph, tuple, cfg, Label::Positive, &scratch);
      if (samples.size() != static_cast<std::size_t>(cfg.samples_per_tuple))
        throw Error("criterion 3: wrong sample count");
      for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto& nb = samples[s];
        if (nb.members.size() > cfg.k) throw Error("criterion 3: size bound violated");
        if (full.size() >= cfg.k && nb.members.size() != cfg.k)
          throw Error("criterion 3: underfull sample despite a large neighborhood");
        if (full.size() <= cfg.k && nb.members != full)
          throw Error("criterion 3: small neighborhood not returned whole");
        if (!std::includes(full.begin(), full.end(), nb.members.begin(), nb.members.end()))
          throw Error("criterion 3: member outside the r-neighborhood");
        for (ObjectId d : tuple)
          if (!std::binary_search(nb.members.begin(), nb.members.end(), d))
            throw Error("criterion 3: tuple element missing from its sample");
        if (nb.members != again[s].members) throw Error("criterion 3: nondeterministic output");
        for (ObjectId m : nb.members) artifact.add_u32(m);
        artifact.add_u32(kInvalidObject);
      }
    }
  }
  return artifact.value();
}

Outcome criterion3(std::uint64_t* artifact_hash) {
  const std::size_t invocations = 10000;
  Outcome o;
  try {
    *artifact_hash = run_sampling_block(invocations);
  } catch (const Error& e) {
    o.pass = false;
    o.detail = e.what();
    return o;
  }

  // star fixture: center with 40 leaves, k=20, w=10000; every leaf should be
  // drawn in about 19/40 of the samples, within 3 sigma binomial bounds
  auto kb = testutil::star_kb(40);
  auto graph = build_gaifman_graph(kb);
  SamplerConfig cfg;
  cfg.radius = 1;
  cfg.k = 20;
  cfg.samples_per_tuple = 10000;
  cfg.seed = 42;
  const ObjectId center[1] = {0};
  std::vector<std::size_t> hits(kb.num_objects(), 0);
  for (const auto& nb : gen_neighs(graph, center, cfg))
    for (ObjectId m : nb.members) ++hits[m];
  const double p = 19.0 / 40.0;
  const double sigma = std::sqrt(10000.0 * p * (1.0 - p));
  double worst = 0.0;
  for (ObjectId leaf = 1; leaf < kb.num_objects(); ++leaf)
    worst = std::max(worst, std::abs(static_cast<double>(hits[leaf]) - 10000.0 * p) / sigma);

  o.pass = worst <= 3.0;
  o.detail = std::to_string(invocations) + " sampled invocations with all contracts holding; " +
             "star balance worst deviation " + format_fixed(worst, 2) + " sigma (limit 3)";
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 4: the r=0, k=2 configuration with pair-membership features
// reduces feature vectors to exact relation-membership indicators.
// ---------------------------------------------------------------------------

Outcome criterion4() {
  SplitRng rng(404);
  std::size_t kbs = 0, vectors = 0, mismatches = 0;
  testutil::RandomKbOptions kopt;
  kopt.max_objects = 16;
  kopt.max_arity = 2;
  for (int iter = 0; iter < 100; ++iter) {
    auto kb = testutil::random_kb(rng, kopt);
    ++kbs;
    auto graph = build_gaifman_graph(kb);
    FeatureSet fs;
    for (RelationId r = 0; r < kb.num_relations(); ++r) {
      fs.add(parse(kb.relation_name(r) + "(s1, s2)", &kb));
      fs.add(parse(kb.relation_name(r) + "(s2, s1)", &kb));
    }
    SamplerConfig cfg;
    cfg.radius = 0;
    cfg.k = 2;
    cfg.samples_per_tuple = 1;
    BfsScratch scratch;
    std::vector<double> row;
    for (ObjectId d1 = 0; d1 < kb.num_objects(); ++d1)
      for (ObjectId d2 = 0; d2 < kb.num_objects(); ++d2) {
        const ObjectId tuple[2] = {d1, d2};
        auto samples = gen_neighs(graph, tuple, cfg, Label::Positive, &scratch);
        auto sub = induce(kb, samples[0].members);
        featurize_into(sub, tuple, fs, Transform::Raw, row);
        for (RelationId r = 0; r < kb.num_relations(); ++r) {
          const ObjectId fwd[2] = {d1, d2};
          const ObjectId bwd[2] = {d2, d1};
          if (row[2 * r] != (kb.holds(r, fwd) ? 1.0 : 0.0)) ++mismatches;
          if (row[2 * r + 1] != (kb.holds(r, bwd) ? 1.0 : 0.0)) ++mismatches;
        }
        ++vectors;
      }
  }
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = std::to_string(kbs) + " KBs, " + std::to_string(vectors) +
             " pair vectors checked exactly, " + std::to_string(mismatches) + " mismatches";
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 5: analytic gradients vs central finite differences.
// ---------------------------------------------------------------------------

Outcome criterion5() {
  SplitRng rng(505);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    MlpConfig cfg;
    cfg.input_dim = 2 + static_cast<std::uint32_t>(rng.below(8));
    cfg.hidden.clear();
    const int layers = static_cast<int>(rng.below(3));
    for (int l = 0; l < layers; ++l)
      cfg.hidden.push_back(2 + static_cast<std::uint32_t>(rng.below(6)));
    cfg.seed = rng.next_u64();
    Dataset batch;
    batch.num_features = cfg.input_dim;
    batch.tuple_arity = 1;
    const std::size_t rows = 1 + rng.below(8);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::uint32_t d = 0; d < cfg.input_dim; ++d) {
        const double roll = rng.next_double();
        batch.values.push_back(roll < 0.25 ? 0.0 : roll < 0.6 ? 1.0 : rng.next_double() * 5.0);
      }
      batch.labels.push_back(rng.below(2) == 0 ? Label::Negative : Label::Positive);
      batch.tuples.push_back(0);
    }
    worst = std::max(worst, MlpModel::gradient_check(cfg, batch));
  }
  Outcome o;
  o.pass = worst < 1e-4;
  o.detail = "100 random model/batch configurations, max relative error " +
             format_double(worst) + " (limit 1e-4)";
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 6: planted-rule end-to-end. r3(x,z) holds exactly when some y
// links x to z through r1 and r2; a tenth of r3 is held out and must be
// recovered by entity prediction.
// ---------------------------------------------------------------------------

struct PlantedData {
  KnowledgeBase kb;  // train: r1, r2, 90% of r3
  std::vector<Triple> test;
  RelationId r3 = kInvalidRelation;
};

PlantedData make_planted(std::uint64_t seed) {
  PlantedData d;
  const int n = 200;
  const double density = 0.02;
  d.kb.add_relation("r1", 2);
  d.kb.add_relation("r2", 2);
  d.r3 = d.kb.add_relation("r3", 2);
  for (int i = 0; i < n; ++i) d.kb.add_object("e" + std::to_string(i));

  SplitRng rng(seed);
  std::vector<std::vector<ObjectId>> r1_out(n), r2_out(n);
  for (RelationId rel = 0; rel < 2; ++rel)
    for (ObjectId x = 0; x < static_cast<ObjectId>(n); ++x)
      for (ObjectId z = 0; z < static_cast<ObjectId>(n); ++z) {
        if (x == z) continue;
        if (rng.next_double() < density) {
          const ObjectId args[2] = {x, z};
          d.kb.add_fact(rel, args);
          (rel == 0 ? r1_out : r2_out)[x].push_back(z);
        }
      }

  std::vector<std::pair<ObjectId, ObjectId>> r3_pairs;
  for (ObjectId x = 0; x < static_cast<ObjectId>(n); ++x) {
    std::set<ObjectId> reached;
    for (ObjectId y : r1_out[x])
      for (ObjectId z : r2_out[y]) reached.insert(z);
    for (ObjectId z : reached) r3_pairs.emplace_back(x, z);
  }
  rng.shuffle(r3_pairs);
  const std::size_t held_out = r3_pairs.size() / 10;
  for (std::size_t i = 0; i < r3_pairs.size(); ++i) {
    if (i < held_out) {
      d.test.push_back({r3_pairs[i].first, d.r3, r3_pairs[i].second});
    } else {
      const ObjectId args[2] = {r3_pairs[i].first, r3_pairs[i].second};
      d.kb.add_fact(d.r3, args);
    }
  }
  d.kb.finalize();
  return d;
}

FeatureSet planted_features(const KnowledgeBase& kb) {
  FeatureSet fs = default_feature_set(kb);
  // cross-relation length-2 paths; the built-in set only chains a relation
  // with itself, and the planted rule is a two-relation composition
  for (RelationId a = 0; a < kb.num_relations(); ++a)
    for (RelationId b = 0; b < kb.num_relations(); ++b) {
      if (a == b) continue;
      fs.add(parse("exists x . " + kb.relation_name(a) + "(s1, x) & " + kb.relation_name(b) +
                       "(x, s2)",
                   &kb));
      fs.add(parse("exists x . " + kb.relation_name(a) + "(s2, x) & " + kb.relation_name(b) +
                       "(x, s1)",
                   &kb));
    }
  return fs;
}

struct PlantedRun {
  EvalReport report;
  std::uint64_t artifact_hash = 0;
  double seconds = 0.0;
};

PlantedRun run_planted(const fs::path& out_dir, std::uint32_t k) {
  const auto t0 = std::chrono::steady_clock::now();
  PlantedData data = make_planted(606);
  auto graph = build_gaifman_graph(data.kb);
  FeatureSet features = planted_features(data.kb);

  PipelineConfig cfg;
  cfg.sampler.radius = 1;
  cfg.sampler.k = k;
  cfg.sampler.samples_per_tuple = 2;
  cfg.sampler.negatives_per_tuple = 4;
  cfg.sampler.seed = 4242;
  cfg.infer_samples = 1;
  cfg.jobs = 1;  // single-threaded by requirement

  TrainAllOptions topts;
  topts.out_dir = out_dir;
  topts.relations = {data.r3};
  Bundle bundle = train_all(data.kb, graph, features, cfg, topts);

  EvalOptions eopts;
  eopts.mode = EvalMode::Filtered;
  eopts.candidate_sample = 0;  // every object competes
  eopts.infer_samples = 1;
  eopts.jobs = 1;
  auto known = known_triples(data.kb, {std::span<const Triple>(data.test)});
  PlantedRun run;
  run.report = evaluate(bundle, data.kb, graph, data.test, known, eopts);
  {
    std::ofstream rf(out_dir / "report.csv");
    rf << run.report.to_csv();
  }
  run.artifact_hash = hash_tree(out_dir);
  run.seconds = seconds_since(t0);
  return run;
}

Outcome criterion6(const fs::path& tmp, std::uint64_t* artifact_hash, std::string* diag) {
  PlantedRun run = run_planted(tmp / "c6", 10);
  *artifact_hash = run.artifact_hash;
  const double hits1 = run.report.overall.hits_at_1;
  const double mean_rank = run.report.overall.mean_rank;
  Outcome o;
  o.pass = hits1 >= 90.0 && mean_rank <= 3.0 && run.seconds < 300.0;
  o.detail = "r=1 k=10 w=2 neg=4 N=1: filtered hits@1=" + format_fixed(hits1, 1) +
             "% (need >= 90), mean rank=" + format_fixed(mean_rank, 2) + " (need <= 3), " +
             format_fixed(run.seconds, 1) + "s (budget 300s), " +
             std::to_string(run.report.overall.count) + " ranked cases";

  // diagnostic: identical pipeline with the size bound lifted, to separate
  // "pipeline broken" from "k too small to keep the rule's witness visible"
  PlantedRun full = run_planted(tmp / "c6_diag", kUnboundedK);
  *diag = "planted-rule diagnostic with k=inf: hits@1=" +
          format_fixed(full.report.overall.hits_at_1, 1) +
          "%, mean rank=" + format_fixed(full.report.overall.mean_rank, 2) + ", " +
          format_fixed(full.seconds, 1) + "s";
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 7: throughput on a degree-skewed KB at FB15k-like scale.
// ---------------------------------------------------------------------------

KnowledgeBase skewed_kb(std::uint64_t seed, int objects, int relations, int draws) {
  KnowledgeBase kb;
  for (int r = 0; r < relations; ++r) kb.add_relation("rel" + std::to_string(r), 2);
  for (int i = 0; i < objects; ++i) kb.add_object("n" + std::to_string(i));

  std::vector<double> obj_cdf(objects), rel_cdf(relations);
  double acc = 0.0;
  for (int i = 0; i < objects; ++i) {
    acc += 1.0 / std::pow(static_cast<double>(i + 10), 0.85);
    obj_cdf[i] = acc;
  }
  for (double& x : obj_cdf) x /= acc;
  acc = 0.0;
  for (int j = 0; j < relations; ++j) {
    acc += 1.0 / static_cast<double>(j + 3);
    rel_cdf[j] = acc;
  }
  for (double& x : rel_cdf) x /= acc;

  SplitRng rng(seed);
  auto draw = [&](const std::vector<double>& cdf) {
    return static_cast<std::size_t>(
        std::upper_bound(cdf.begin(), cdf.end(), rng.next_double()) - cdf.begin());
  };
  for (int i = 0; i < draws; ++i) {
    const ObjectId h = static_cast<ObjectId>(draw(obj_cdf));
    const ObjectId t = static_cast<ObjectId>(draw(obj_cdf));
    if (h == t) continue;
    const RelationId r = static_cast<RelationId>(draw(rel_cdf));
    const ObjectId args[2] = {h, t};
    kb.add_fact(r, args);
  }
  kb.finalize();
  return kb;
}

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  auto kb = skewed_kb(707, 15000, 200, 400000);
  auto graph = build_gaifman_graph(kb);
  auto features = default_feature_set(kb);

  // mid-sized relations keep bundle training cheap; throughput only needs
  // trained scorers, not strong ones
  std::vector<RelationId> picks;
  for (RelationId r = 0; r < kb.num_relations() && picks.size() < 6; ++r)
    if (kb.num_facts(r) >= 400 && kb.num_facts(r) <= 1500) picks.push_back(r);

  PipelineConfig cfg;
  cfg.sampler.radius = 1;
  cfg.sampler.k = 10;
  cfg.sampler.samples_per_tuple = 1;
  cfg.sampler.negatives_per_tuple = 1;
  cfg.sampler.seed = 7007;
  cfg.mlp.epochs = 4;
  cfg.jobs = 1;
  TrainAllOptions topts;
  topts.relations = picks;
  Bundle bundle = train_all(kb, graph, features, cfg, topts);

  std::vector<Triple> pairs;
  for (RelationId r : picks)
    for (std::uint32_t i = 0; i < std::min<std::size_t>(kb.num_facts(r), 100); ++i) {
      auto row = kb.row(r, i);
      pairs.push_back({row[0], r, row[1]});
    }

  const std::uint32_t grid[2] = {10, 50};
  auto rows = bench(bundle, kb, graph, pairs, grid);
  const double rate10 = rows[0].answers_per_sec;
  const double rate50 = rows[1].answers_per_sec;
  Outcome o;
  o.pass = rate10 >= rate50 && rate10 >= 500.0;
  o.detail = "|D|=" + std::to_string(kb.num_objects()) + " |facts|=" +
             std::to_string(kb.num_facts()) + " |features|=" + std::to_string(features.size()) +
             ": k=10 -> " + format_fixed(rate10, 0) + " answers/s (need >= 500), k=50 -> " +
             format_fixed(rate50, 0) + " answers/s (need <= k=10 rate), total " +
             format_fixed(seconds_since(t0), 1) + "s";
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 8: directional entity-prediction check. Runs on WN18 when
// GAIFMAN_WN18_DIR points at train.txt/test.txt; otherwise on a synthetic
// stand-in with WN18-like inverse-relation structure. The exhaustive
// protocol stays available as `gaifman eval --candidates all`.
// ---------------------------------------------------------------------------

struct Wn18Data {
  KnowledgeBase kb;
  std::vector<Triple> test;
  std::vector<Triple> valid;
  std::string label;
};

Wn18Data wn18_like(std::uint64_t seed) {
  Wn18Data d;
  d.label = "synthetic WN18-like surrogate";
  const int objects = 6000;
  const int pair_sizes[9] = {4000, 2500, 1500, 800, 500, 300, 200, 150, 100};
  for (int p = 0; p < 9; ++p) {
    d.kb.add_relation("p" + std::to_string(p), 2);
    d.kb.add_relation("p" + std::to_string(p) + "_inv", 2);
  }
  for (int i = 0; i < objects; ++i) d.kb.add_object("w" + std::to_string(i));

  SplitRng rng(seed);
  std::vector<Triple> all;
  for (int p = 0; p < 9; ++p) {
    const RelationId fwd = static_cast<RelationId>(2 * p);
    const RelationId inv = static_cast<RelationId>(2 * p + 1);
    for (int i = 0; i < pair_sizes[p]; ++i) {
      const ObjectId a = static_cast<ObjectId>(rng.below(objects));
      const ObjectId b = static_cast<ObjectId>(rng.below(objects));
      if (a == b) continue;
      all.push_back({a, fwd, b});
      all.push_back({b, inv, a});
    }
  }
  rng.shuffle(all);
  const std::size_t held_out = all.size() / 20;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i < held_out) {
      d.test.push_back(all[i]);
    } else {
      const ObjectId args[2] = {all[i].head, all[i].tail};
      d.kb.add_fact(all[i].relation, args);
    }
  }
  d.kb.finalize();
  return d;
}

Wn18Data load_wn18(const fs::path& dir) {
  Wn18Data d;
  d.label = "WN18 (" + dir.string() + ")";
  {
    std::ifstream in(dir / "train.txt");
    if (!in) throw Error("missing " + (dir / "train.txt").string());
    d.kb = load_triples(in);
    d.kb.finalize();
  }
  {
    std::ifstream in(dir / "test.txt");
    if (!in) throw Error("missing " + (dir / "test.txt").string());
    d.test = load_triples_against(in, d.kb);
  }
  if (fs::exists(dir / "valid.txt")) {
    std::ifstream in(dir / "valid.txt");
    d.valid = load_triples_against(in, d.kb);
  }
  return d;
}

struct DirectionalRun {
  double baseline_hits10 = 0.0;
  double hits10[3] = {0, 0, 0};
  std::uint64_t artifact_hash = 0;
  std::string label;
};

DirectionalRun run_directional(const fs::path& out_dir) {
  Wn18Data data;
  if (const char* env = std::getenv("GAIFMAN_WN18_DIR"))
    data = load_wn18(env);
  else
    data = wn18_like(808);

  auto graph = build_gaifman_graph(data.kb);
  auto features = default_feature_set(data.kb);

  PipelineConfig cfg;
  cfg.sampler.radius = 1;
  cfg.sampler.k = 20;
  cfg.sampler.samples_per_tuple = 2;
  cfg.sampler.negatives_per_tuple = 4;
  cfg.sampler.seed = 818;
  cfg.mlp.epochs = 12;
  cfg.jobs = 1;
  TrainAllOptions topts;
  topts.out_dir = out_dir;
  topts.keep_datasets = false;  // models and reports are the artifacts here
  Bundle bundle = train_all(data.kb, graph, features, cfg, topts);

  auto known = known_triples(
      data.kb, {std::span<const Triple>(data.test), std::span<const Triple>(data.valid)});

  EvalOptions eopts;
  eopts.mode = EvalMode::Filtered;
  eopts.candidate_sample = 500;
  eopts.limit = 300;
  eopts.jobs = 1;
  eopts.eval_seed = 33;

  DirectionalRun run;
  run.label = data.label;
  for (int n = 1; n <= 3; ++n) {
    eopts.infer_samples = n;
    EvalReport rep = evaluate(bundle, data.kb, graph, data.test, known, eopts);
    run.hits10[n - 1] = rep.overall.hits_at_10;
    std::ofstream rf(out_dir / ("report_n" + std::to_string(n) + ".csv"));
    rf << rep.to_csv();
  }

  // degree-heuristic baseline: score a statement by its candidate's Gaifman
  // degree; adding the fixed element's degree shifts every score equally and
  // leaves ranks unchanged, so one scorer serves both directions
  auto factory = [&]() -> Scorer {
    return [&](RelationId, ObjectId h, ObjectId t) {
      return static_cast<double>(graph.degree(h) + graph.degree(t));
    };
  };
  auto has_model = [&](RelationId r) { return bundle.model(r) != nullptr; };
  EvalReport base = evaluate_with_scorer(data.kb, data.test, known, has_model, factory, eopts);
  run.baseline_hits10 = base.overall.hits_at_10;
  {
    std::ofstream rf(out_dir / "report_baseline.csv");
    rf << base.to_csv();
  }
  run.artifact_hash = hash_tree(out_dir);
  return run;
}

Outcome criterion8(const fs::path& tmp, std::uint64_t* artifact_hash) {
  DirectionalRun run = run_directional(tmp / "c8");
  *artifact_hash = run.artifact_hash;
  const double margin =
      std::min({run.hits10[0], run.hits10[1], run.hits10[2]}) - run.baseline_hits10;
  const bool trend = run.hits10[1] >= run.hits10[0] - 1.0 && run.hits10[2] >= run.hits10[1] - 1.0;
  Outcome o;
  o.pass = margin >= 20.0 && trend;
  o.detail = run.label + ", filtered, candidates=sample(500): hits@10 by N = {" +
             format_fixed(run.hits10[0], 1) + ", " + format_fixed(run.hits10[1], 1) + ", " +
             format_fixed(run.hits10[2], 1) + "}, degree baseline " +
             format_fixed(run.baseline_hits10, 1) + " (margin " + format_fixed(margin, 1) +
             " >= 20), trend non-decreasing within 1 point: " + (trend ? "yes" : "no") +
             "; full-candidate protocol: `gaifman eval --candidates all`";
  return o;
}

// ---------------------------------------------------------------------------
// Criterion 9: re-running the pipelines of criteria 3, 6 and 8 with the same
// seeds reproduces byte-identical artifacts.
// ---------------------------------------------------------------------------

Outcome criterion9(const fs::path& tmp, std::uint64_t c3_hash, std::uint64_t c6_hash,
                   std::uint64_t c8_hash) {
  const std::uint64_t c3_again = run_sampling_block(10000);
  const std::uint64_t c6_again = run_planted(tmp / "c6_rerun", 10).artifact_hash;
  const std::uint64_t c8_again = run_directional(tmp / "c8_rerun").artifact_hash;
  const bool ok3 = c3_again == c3_hash;
  const bool ok6 = c6_again == c6_hash;
  const bool ok8 = c8_again == c8_hash;
  Outcome o;
  o.pass = ok3 && ok6 && ok8;
  o.detail = std::string("byte-identical re-runs: sampling block ") + (ok3 ? "yes" : "NO") +
             ", planted-rule artifacts (datasets+models+reports) " + (ok6 ? "yes" : "NO") +
             ", directional-check artifacts " + (ok8 ? "yes" : "NO");
  return o;
}

}  // namespace

int main() {
  fs::path tmp =
      fs::temp_directory_path() / ("gaifman_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(tmp);

  int failures = 0;
  std::string diag6;
  std::uint64_t c3_hash = 0, c6_hash = 0, c8_hash = 0;

  struct Row {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Row> rows = {
      {1, "oracle equivalence (graph, distances, evaluation)", [&] { return criterion1(); }},
      {2, "locality of relativized evaluation", [&] { return criterion2(); }},
      {3, "neighborhood sampling contracts and balance", [&] { return criterion3(&c3_hash); }},
      {4, "pair-membership reduction at r=0, k=2", [&] { return criterion4(); }},
      {5, "gradient correctness", [&] { return criterion5(); }},
      {6, "planted-rule end-to-end entity prediction",
       [&] { return criterion6(tmp, &c6_hash, &diag6); }},
      {7, "query-answering throughput across size bounds", [&] { return criterion7(); }},
      {8, "directional entity-prediction check", [&] { return criterion8(tmp, &c8_hash); }},
      {9, "seeded re-runs are byte-identical",
       [&] { return criterion9(tmp, c3_hash, c6_hash, c8_hash); }},
  };

  for (const auto& row : rows) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = row.fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    std::printf("[%s] criterion %d: %s -- %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", row.id,
                row.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (row.id == 6 && !diag6.empty()) {
      std::printf("[info] %s\n", diag6.c_str());
      std::fflush(stdout);
    }
    if (!o.pass) ++failures;
  }

  std::error_code ec;
  fs::remove_all(tmp, ec);
  std::printf("%d/9 criteria passed\n", 9 - failures);
  return failures;
}
