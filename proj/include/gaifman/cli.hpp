#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gaifman/common.hpp"
#include "gaifman/featurizer.hpp"
#include "gaifman/graph.hpp"
#include "gaifman/kb.hpp"
#include "gaifman/logic.hpp"
#include "gaifman/mlp.hpp"
#include "gaifman/pipeline.hpp"
#include "gaifman/sampler.hpp"

namespace gaifman::cli {

inline constexpr const char* kVersion = "gaifman 1.0.0";

namespace detail {

inline KnowledgeBase load_kb_file(const std::string& path, bool nary) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open knowledge base '" + path + "'");
  KnowledgeBase kb = nary ? load_nary(in) : load_triples(in);
  kb.finalize();
  return kb;
}

inline std::vector<Triple> load_triple_file(const std::string& path, const KnowledgeBase& kb,
                                            std::size_t* dropped = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open triple file '" + path + "'");
  return load_triples_against(in, kb, dropped);
}

inline Triple parse_triple_arg(const std::string& text, const KnowledgeBase& kb) {
  std::istringstream ss(text);
  std::string h, r, t, extra;
  if (!(ss >> h >> r >> t) || (ss >> extra))
    throw Error("expected --triple \"head relation tail\", got '" + text + "'");
  ObjectId head = kb.find_object(h);
  if (head == kInvalidObject) throw Error("unknown object '" + h + "'");
  RelationId rel = kb.find_relation(r);
  if (rel == kInvalidRelation) throw Error("unknown relation '" + r + "'");
  ObjectId tail = kb.find_object(t);
  if (tail == kInvalidObject) throw Error("unknown object '" + t + "'");
  return {head, rel, tail};
}

inline std::uint32_t parse_k(const std::string& s) {
  if (s == "inf" || s == "INF" || s == "infinity") return kUnboundedK;
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw Error("bad value for k: '" + s + "' (number or 'inf')");
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
  }
  if (v == 0 || v >= kUnboundedK) throw Error("bad value for k: '" + s + "'");
  return static_cast<std::uint32_t>(v);
}

inline FeatureSet load_features(const std::string& path, const KnowledgeBase& kb,
                                int max_targets = 2) {
  if (path.empty()) return default_feature_set(kb);
  std::ifstream in(path);
  if (!in) throw Error("cannot open feature file '" + path + "'");
  return load_feature_set(in, &kb, max_targets);
}

/// Periodic progress line with ETA, for long-running stages.
inline ProgressFn stderr_progress(const char* what) {
  auto start = std::chrono::steady_clock::now();
  auto mtx = std::make_shared<std::mutex>();
  std::string label = what;
  return [start, mtx, label](std::size_t done, std::size_t total) {
    std::lock_guard<std::mutex> lock(*mtx);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double eta = done == 0 ? 0.0 : elapsed / static_cast<double>(done) *
                                             static_cast<double>(total - done);
    std::fprintf(stderr, "\r%s: %zu/%zu (eta %.0fs)   ", label.c_str(), done, total, eta);
    if (done == total) std::fprintf(stderr, "\n");
    std::fflush(stderr);
  };
}

struct CommonModelArgs {
  std::string kb_path;
  int radius = 1;
  std::string k_text = "20";
  int w = 1;
  int neg = 0;
  int n = 1;
  std::uint64_t seed = 42;
  bool raw_counts = false;
  bool allow_false_negatives = false;
  unsigned jobs = 1;

  PipelineConfig to_config() const {
    PipelineConfig cfg;
    cfg.sampler.radius = radius;
    cfg.sampler.k = parse_k(k_text);
    cfg.sampler.samples_per_tuple = w;
    cfg.sampler.negatives_per_tuple = neg;
    cfg.sampler.seed = seed;
    cfg.infer_samples = n;
    cfg.transform = raw_counts ? Transform::Raw : Transform::Log1p;
    cfg.corruption.reject_known_true = !allow_false_negatives;
    cfg.jobs = jobs;
    return cfg;
  }
};

}  // namespace detail

/// Entry point behind the `gaifman` binary. Returns 0 on success, 1 on usage
/// errors, 2 on data/validation errors.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"Gaifman neighborhood models: knowledge-base completion via bounded-size "
               "neighborhood sampling, relational features and per-relation classifiers"};
  app.set_version_flag("--version", std::string(kVersion) + " (" + __DATE__ + ")");
  app.set_config("--config", "", "plain key=value config file; flags override file values");
  app.require_subcommand(1);

  // --- stats ---------------------------------------------------------------
  auto* stats = app.add_subcommand("stats", "knowledge base and Gaifman graph statistics");
  struct {
    std::string kb;
    bool nary = false;
    int radius = -1;
    std::string hist_out;
    unsigned jobs = 1;
  } stats_args;
  stats->add_option("--kb", stats_args.kb, "training triples (TSV)")->required();
  stats->add_flag("--nary", stats_args.nary, "KB file is in n-ary format");
  stats->add_option("--r", stats_args.radius, "also report the largest r-neighborhood size");
  stats->add_option("--hist", stats_args.hist_out, "write degree histogram CSV here (default stdout)");
  stats->add_option("--jobs", stats_args.jobs, "worker threads");

  // --- features --------------------------------------------------------------
  auto* features_cmd = app.add_subcommand("features", "print the built-in relational feature set");
  struct {
    std::string kb;
    std::string out;
  } feat_args;
  features_cmd->add_option("--kb", feat_args.kb, "training triples (TSV)")->required();
  features_cmd->add_option("--out", feat_args.out, "write features here (default stdout)");

  // --- sample ----------------------------------------------------------------
  auto* sample = app.add_subcommand("sample", "dump sampled neighborhoods for one tuple");
  struct {
    std::string kb;
    std::string triple;
    int radius = 1;
    std::string k = "20";
    int w = 1;
    std::uint64_t seed = 42;
  } sample_args;
  sample->add_option("--kb", sample_args.kb, "training triples (TSV)")->required();
  sample->add_option("--triple", sample_args.triple, "\"head relation tail\"")->required();
  sample->add_option("--r", sample_args.radius, "neighborhood depth");
  sample->add_option("--k", sample_args.k, "size bound (number or 'inf')");
  sample->add_option("--w", sample_args.w, "number of neighborhoods");
  sample->add_option("--seed", sample_args.seed, "RNG seed");

  // --- build-dataset -----------------------------------------------------------
  auto* build = app.add_subcommand("build-dataset", "materialize a labelled training set");
  detail::CommonModelArgs build_common;
  struct {
    std::string relation;
    std::string query;
    std::string features;
    std::string out;
  } build_args;
  build->add_option("--kb", build_common.kb_path, "training triples (TSV)")->required();
  build->add_option("--out", build_args.out, "output dataset file")->required();
  build->add_option("--relation", build_args.relation, "target relation name (query r(s1,s2))");
  build->add_option("--query", build_args.query, "target query in the formula DSL");
  build->add_option("--features", build_args.features, "feature file (default: built-in set)");
  build->add_option("--r", build_common.radius, "neighborhood depth");
  build->add_option("--k", build_common.k_text, "size bound (number or 'inf')");
  build->add_option("--w", build_common.w, "positive samples per tuple");
  build->add_option("--neg", build_common.neg, "negative samples per tuple");
  build->add_option("--seed", build_common.seed, "RNG seed");
  build->add_flag("--raw-counts", build_common.raw_counts, "disable log(1+v) on counting features");
  build->add_flag("--allow-false-negatives", build_common.allow_false_negatives,
                  "do not filter corrupted tuples that are known facts");
  build->add_option("--jobs", build_common.jobs, "worker threads");

  // --- train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train one classifier per relation");
  detail::CommonModelArgs train_common;
  struct {
    std::string out;
    std::string features;
    std::string relations;
    std::uint32_t epochs = 100;
    std::uint32_t batch = 128;
    double lr = 1e-3;
    std::string hidden = "100,100";
    double dropout = 0.2;
    bool no_datasets = false;
  } train_args;
  train->add_option("--kb", train_common.kb_path, "training triples (TSV)")->required();
  train->add_option("--out", train_args.out, "output bundle directory")->required();
  train->add_option("--features", train_args.features, "feature file (default: built-in set)");
  train->add_option("--relations", train_args.relations, "comma-separated relation names to train");
  train->add_option("--r", train_common.radius, "neighborhood depth");
  train->add_option("--k", train_common.k_text, "size bound (number or 'inf')");
  train->add_option("--w", train_common.w, "positive samples per tuple");
  train->add_option("--neg", train_common.neg, "negative samples per tuple");
  train->add_option("--n", train_common.n, "inference samples N (recorded in the bundle)");
  train->add_option("--seed", train_common.seed, "RNG seed");
  train->add_option("--epochs", train_args.epochs, "training epochs");
  train->add_option("--batch", train_args.batch, "mini-batch size");
  train->add_option("--lr", train_args.lr, "Adam step size");
  train->add_option("--hidden", train_args.hidden, "hidden layer widths, e.g. 100,100");
  train->add_option("--dropout", train_args.dropout, "input dropout probability");
  train->add_flag("--raw-counts", train_common.raw_counts, "disable log(1+v) on counting features");
  train->add_flag("--allow-false-negatives", train_common.allow_false_negatives,
                  "do not filter corrupted tuples that are known facts");
  train->add_flag("--no-datasets", train_args.no_datasets, "do not persist per-relation datasets");
  train->add_option("--jobs", train_common.jobs, "worker threads");

  // --- predict ---------------------------------------------------------------
  auto* predict = app.add_subcommand("predict", "probability of one statement");
  struct {
    std::string bundle;
    std::string kb;
    std::string triple;
    int n = 0;  // 0 = use the bundle's N
    std::optional<std::uint64_t> seed;
  } predict_args;
  predict->add_option("--bundle", predict_args.bundle, "trained bundle directory")->required();
  predict->add_option("--kb", predict_args.kb, "training triples (TSV)")->required();
  predict->add_option("--triple", predict_args.triple, "\"head relation tail\"")->required();
  predict->add_option("--n", predict_args.n, "inference samples N");
  predict->add_option("--seed", predict_args.seed, "evaluation RNG seed");

  // --- eval ------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "entity-prediction metrics on a test set");
  struct {
    std::string bundle;
    std::string kb;
    std::string test;
    std::string valid;
    std::string mode = "filtered";
    std::string candidates = "sample(500)";
    std::string ties = "average";
    int n = 0;
    std::size_t limit = 0;
    unsigned jobs = 1;
    std::string out;
    std::optional<std::uint64_t> seed;
  } eval_args;
  eval->add_option("--bundle", eval_args.bundle, "trained bundle directory")->required();
  eval->add_option("--kb", eval_args.kb, "training triples (TSV)")->required();
  eval->add_option("--test", eval_args.test, "test triples (TSV)")->required();
  eval->add_option("--valid", eval_args.valid, "validation triples, added to the filter set");
  eval->add_option("--mode", eval_args.mode, "raw | filtered");
  eval->add_option("--candidates", eval_args.candidates, "all, or a sample size m");
  eval->add_option("--ties", eval_args.ties, "average | optimistic | pessimistic");
  eval->add_option("--n", eval_args.n, "inference samples N (default: bundle's N)");
  eval->add_option("--limit", eval_args.limit, "evaluate only the first T test triples");
  eval->add_option("--jobs", eval_args.jobs, "worker threads");
  eval->add_option("--out", eval_args.out, "write the CSV report here");
  eval->add_option("--seed", eval_args.seed, "evaluation RNG seed");

  // --- bench -----------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "query answering throughput across size bounds");
  struct {
    std::string bundle;
    std::string kb;
    std::string test;
    std::string k_grid = "5,10,20,50";
    std::size_t limit = 0;
    std::string out;
  } bench_args;
  bench_cmd->add_option("--bundle", bench_args.bundle, "trained bundle directory")->required();
  bench_cmd->add_option("--kb", bench_args.kb, "training triples (TSV)")->required();
  bench_cmd->add_option("--test", bench_args.test, "test triples (TSV)")->required();
  bench_cmd->add_option("--k-grid", bench_args.k_grid, "comma-separated size bounds");
  bench_cmd->add_option("--limit", bench_args.limit, "max statements per grid point");
  bench_cmd->add_option("--out", bench_args.out, "write the CSV here (default stdout)");

  // --- inspect ---------------------------------------------------------------
  auto* inspect = app.add_subcommand("inspect", "print the header of a model/dataset/bundle file");
  struct {
    std::string path;
    bool csv = false;
  } inspect_args;
  inspect->add_option("--path", inspect_args.path, "file to inspect")->required();
  inspect->add_flag("--csv", inspect_args.csv, "dump dataset records as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  // every run logs its fully resolved configuration
  std::cerr << "# " << kVersion << "\n# resolved config:\n";
  {
    std::istringstream cfg(app.config_to_str(true, false));
    std::string line;
    while (std::getline(cfg, line))
      if (!line.empty()) std::cerr << "#   " << line << "\n";
  }

  try {
    if (*stats) {
      KnowledgeBase kb = detail::load_kb_file(stats_args.kb, stats_args.nary);
      std::cout << kb.stats_line() << "\n";
      GaifmanGraph g = build_gaifman_graph(kb);
      std::string csv = degree_histogram_csv(g);
      if (stats_args.hist_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(stats_args.hist_out);
        if (!out) throw Error("cannot write '" + stats_args.hist_out + "'");
        out << csv;
      }
      if (stats_args.radius >= 0) {
        std::size_t d = max_r_neighborhood_size(g, stats_args.radius, stats_args.jobs);
        std::cout << "max_neighborhood r=" << stats_args.radius << " size=" << d << "\n";
      }
      return 0;
    }

    if (*features_cmd) {
      KnowledgeBase kb = detail::load_kb_file(feat_args.kb, false);
      FeatureSet fs = default_feature_set(kb);
      if (feat_args.out.empty()) {
        fs.write(std::cout);
      } else {
        std::ofstream out(feat_args.out);
        if (!out) throw Error("cannot write '" + feat_args.out + "'");
        fs.write(out);
      }
      std::cerr << "# " << fs.size() << " features\n";
      return 0;
    }

    if (*sample) {
      KnowledgeBase kb = detail::load_kb_file(sample_args.kb, false);
      GaifmanGraph g = build_gaifman_graph(kb);
      Triple t = detail::parse_triple_arg(sample_args.triple, kb);
      SamplerConfig cfg;
      cfg.radius = sample_args.radius;
      cfg.k = detail::parse_k(sample_args.k);
      cfg.samples_per_tuple = sample_args.w;
      cfg.seed = sample_args.seed;
      const ObjectId tuple[2] = {t.head, t.tail};
      for (const auto& nb : gen_neighs(g, tuple, cfg, Label::Positive)) {
        nlohmann::json rec;
        rec["tuple"] = {kb.object_name(t.head), kb.object_name(t.tail)};
        rec["label"] = "positive";
        auto members = nlohmann::json::array();
        for (ObjectId o : nb.members) members.push_back(kb.object_name(o));
        rec["members"] = std::move(members);
        std::cout << rec.dump() << "\n";
      }
      return 0;
    }

    if (*build) {
      KnowledgeBase kb = detail::load_kb_file(build_common.kb_path, false);
      GaifmanGraph g = build_gaifman_graph(kb);
      PipelineConfig cfg = build_common.to_config();
      TargetQuery q = [&] {
        if (!build_args.relation.empty()) {
          RelationId rel = kb.find_relation(build_args.relation);
          if (rel == kInvalidRelation)
            throw Error("unknown relation '" + build_args.relation + "'");
          return relation_query(kb, rel);
        }
        if (!build_args.query.empty()) return make_target_query(parse(build_args.query, &kb));
        throw Error("build-dataset needs --relation or --query");
      }();
      FeatureSet fs = detail::load_features(build_args.features, kb, q.num_targets);
      BuildOptions bopts;
      bopts.transform = cfg.transform;
      bopts.corruption = cfg.corruption;
      bopts.jobs = cfg.jobs;
      bopts.progress = detail::stderr_progress("featurizing");
      Dataset ds = build_dataset(kb, g, q, fs, cfg.sampler, bopts);
      save_dataset(ds, build_args.out);
      std::cerr << "# wrote " << ds.rows() << " records (" << ds.count_label(Label::Positive)
                << " positive, " << ds.count_label(Label::Negative) << " negative) to "
                << build_args.out << "\n";
      return 0;
    }

    if (*train) {
      KnowledgeBase kb = detail::load_kb_file(train_common.kb_path, false);
      GaifmanGraph g = build_gaifman_graph(kb);
      PipelineConfig cfg = train_common.to_config();
      cfg.mlp.hidden = parse_hidden_spec(train_args.hidden);
      cfg.mlp.input_dropout = train_args.dropout;
      cfg.mlp.learning_rate = train_args.lr;
      cfg.mlp.batch_size = train_args.batch;
      cfg.mlp.epochs = train_args.epochs;
      FeatureSet fs = detail::load_features(train_args.features, kb);
      TrainAllOptions topts;
      topts.out_dir = train_args.out;
      topts.keep_datasets = !train_args.no_datasets;
      topts.log = &std::cerr;
      topts.progress = detail::stderr_progress("featurizing");
      if (!train_args.relations.empty()) {
        std::istringstream ss(train_args.relations);
        std::string name;
        while (std::getline(ss, name, ',')) {
          RelationId rel = kb.find_relation(name);
          if (rel == kInvalidRelation) throw Error("unknown relation '" + name + "'");
          topts.relations.push_back(rel);
        }
      }
      Bundle bundle = train_all(kb, g, fs, cfg, topts);
      std::cerr << "# trained " << bundle.num_models() << " models into " << train_args.out << "\n";
      return 0;
    }

    if (*predict) {
      KnowledgeBase kb = detail::load_kb_file(predict_args.kb, false);
      GaifmanGraph g = build_gaifman_graph(kb);
      Bundle bundle = Bundle::load(predict_args.bundle, kb);
      Triple t = detail::parse_triple_arg(predict_args.triple, kb);
      const int n = predict_args.n > 0 ? predict_args.n : bundle.config.infer_samples;
      const ObjectId tuple[2] = {t.head, t.tail};
      double p = query_prob(bundle, kb, g, tuple, t.relation, n, predict_args.seed);
      std::cout << format_double(p) << "\n";
      return 0;
    }

    if (*eval) {
      KnowledgeBase kb = detail::load_kb_file(eval_args.kb, false);
      GaifmanGraph g = build_gaifman_graph(kb);
      Bundle bundle = Bundle::load(eval_args.bundle, kb);
      std::size_t dropped_test = 0, dropped_valid = 0;
      std::vector<Triple> test = detail::load_triple_file(eval_args.test, kb, &dropped_test);
      std::vector<Triple> valid;
      if (!eval_args.valid.empty())
        valid = detail::load_triple_file(eval_args.valid, kb, &dropped_valid);
      EvalOptions opts;
      if (eval_args.mode == "raw") opts.mode = EvalMode::Raw;
      else if (eval_args.mode == "filtered") opts.mode = EvalMode::Filtered;
      else throw Error("bad --mode '" + eval_args.mode + "' (raw | filtered)");
      if (eval_args.candidates == "all") {
        opts.candidate_sample = 0;
      } else {
        std::string c = eval_args.candidates;
        if (c.rfind("sample(", 0) == 0 && c.back() == ')') c = c.substr(7, c.size() - 8);
        opts.candidate_sample = gaifman::detail::parse_u64(c);
        if (opts.candidate_sample < 2) throw Error("candidate sample must be >= 2");
      }
      if (eval_args.ties == "average") opts.ties = TieBreak::Average;
      else if (eval_args.ties == "optimistic") opts.ties = TieBreak::Optimistic;
      else if (eval_args.ties == "pessimistic") opts.ties = TieBreak::Pessimistic;
      else throw Error("bad --ties '" + eval_args.ties + "'");
      opts.infer_samples = eval_args.n > 0 ? eval_args.n : bundle.config.infer_samples;
      opts.limit = eval_args.limit;
      opts.jobs = eval_args.jobs;
      opts.eval_seed = eval_args.seed;
      auto known = known_triples(kb, {std::span<const Triple>(test),
                                      std::span<const Triple>(valid)});
      EvalReport report = evaluate(bundle, kb, g, test, known, opts);
      if (dropped_test + dropped_valid > 0)
        std::cerr << "# dropped " << dropped_test + dropped_valid
                  << " triples naming entities or relations absent from training\n";
      std::cout << report.to_table();
      if (!eval_args.out.empty()) {
        std::ofstream out(eval_args.out);
        if (!out) throw Error("cannot write '" + eval_args.out + "'");
        out << report.to_csv();
      } else {
        std::cout << report.to_csv();
      }
      return 0;
    }

    if (*bench_cmd) {
      KnowledgeBase kb = detail::load_kb_file(bench_args.kb, false);
      GaifmanGraph g = build_gaifman_graph(kb);
      Bundle bundle = Bundle::load(bench_args.bundle, kb);
      std::vector<Triple> test = detail::load_triple_file(bench_args.test, kb);
      std::vector<std::uint32_t> grid;
      std::istringstream ss(bench_args.k_grid);
      std::string part;
      while (std::getline(ss, part, ',')) grid.push_back(detail::parse_k(part));
      if (grid.empty()) throw Error("empty --k-grid");
      auto rows = bench(bundle, kb, g, test, grid, bench_args.limit);
      std::string csv = bench_csv(rows);
      if (bench_args.out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(bench_args.out);
        if (!out) throw Error("cannot write '" + bench_args.out + "'");
        out << csv;
      }
      return 0;
    }

    if (*inspect) {
      std::ifstream in(inspect_args.path, std::ios::binary);
      if (!in) throw Error("cannot open '" + inspect_args.path + "'");
      std::string magic;
      std::getline(in, magic);
      in.seekg(0);
      if (magic == "GAIFMLP1") {
        MlpModel m = MlpModel::load(in);
        std::cout << m.header_summary() << "\n";
        std::cout << "parameters=" << m.num_parameters() << "\n";
      } else if (magic == "GAIFDS1") {
        Dataset ds = load_dataset(in);
        std::cout << "dataset rows=" << ds.rows() << " arity=" << ds.tuple_arity
                  << " features=" << ds.num_features << " positives="
                  << ds.count_label(Label::Positive) << " negatives="
                  << ds.count_label(Label::Negative) << "\n";
        std::cout << "feature_hash=" << ds.feature_hash << " kb_hash=" << ds.kb_hash
                  << " seed=" << ds.seed << " transform=" << transform_name(ds.transform) << "\n";
        std::cout << "config=" << ds.config << "\n";
        if (inspect_args.csv) dump_dataset_csv(ds, nullptr, std::cout);
      } else if (magic == "GAIFBUNDLE1") {
        std::string line;
        while (std::getline(in, line)) std::cout << line << "\n";
      } else {
        throw Error("unrecognized file format (expected GAIFMLP1, GAIFDS1 or GAIFBUNDLE1)");
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("gaifman");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace gaifman::cli
