#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "gaifman/mlp.hpp"
#include "test_util.hpp"

using namespace gaifman;

namespace {

/// Two separable Gaussian-ish blobs in feature space.
Dataset blob_dataset(std::size_t per_class, std::uint32_t dims, double separation,
                     std::uint64_t seed) {
  Dataset ds;
  ds.num_features = dims;
  ds.tuple_arity = 2;
  SplitRng rng(seed);
  auto noise = [&]() { return (rng.next_double() * 2.0 - 1.0); };
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const bool positive = i % 2 == 0;
    for (std::uint32_t d = 0; d < dims; ++d)
      ds.values.push_back((positive ? separation : -separation) + noise());
    ds.labels.push_back(positive ? Label::Positive : Label::Negative);
    ds.tuples.push_back(0);
    ds.tuples.push_back(1);
  }
  ds.feature_hash = 1;
  return ds;
}

Dataset random_batch(SplitRng& rng, std::uint32_t dims, std::size_t rows) {
  Dataset ds;
  ds.num_features = dims;
  ds.tuple_arity = 2;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::uint32_t d = 0; d < dims; ++d) {
      // mix of boolean-ish and count-ish magnitudes, with some exact zeros
      const double roll = rng.next_double();
      ds.values.push_back(roll < 0.3 ? 0.0 : roll < 0.7 ? 1.0 : rng.next_double() * 4.0);
    }
    ds.labels.push_back(rng.below(2) == 0 ? Label::Negative : Label::Positive);
    ds.tuples.push_back(0);
    ds.tuples.push_back(1);
  }
  ds.feature_hash = 1;
  return ds;
}

}  // namespace

TEST_CASE("forward pass basics") {
  MlpConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden = {4};
  cfg.seed = 5;

  SECTION("probabilities are strictly inside (0,1) and repeatable") {
    auto m = MlpModel::init(cfg);
    std::vector<double> x{1.0, 0.0, 2.0};
    const double p1 = m.forward(x);
    const double p2 = m.forward(x);
    REQUIRE(p1 == p2);
    REQUIRE(p1 > 0.0);
    REQUIRE(p1 < 1.0);
  }

  SECTION("dimension mismatch is an error") {
    auto m = MlpModel::init(cfg);
    std::vector<double> bad{1.0};
    REQUIRE_THROWS_AS(m.forward(bad), Error);
  }

  SECTION("an untrained symmetric model answers one half") {
    // all-zero weights: softmax over equal logits
    MlpConfig zcfg = cfg;
    zcfg.seed = 9;
    auto m = MlpModel::init(zcfg);
    // overwrite by saving/loading a zeroed clone through the binary format
    std::ostringstream buf(std::ios::binary);
    m.save(buf);
    std::string bytes = buf.str();
    const std::size_t header_end = bytes.find("END\n") + 4;
    for (std::size_t i = header_end; i + 7 < bytes.size(); i += 8) {
      double zero = 0.0;
      std::memcpy(&bytes[i], &zero, 8);
    }
    std::istringstream back(bytes, std::ios::binary);
    auto zm = MlpModel::load(back);
    std::vector<double> x{0.3, 1.0, -2.0};
    REQUIRE(zm.forward(x) == Catch::Approx(0.5).margin(1e-12));
  }
}

TEST_CASE("loss arithmetic") {
  MlpConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden = {};
  auto m = MlpModel::init(cfg);

  SECTION("balanced coin flips cost 2 ln 2") {
    // zero the parameters so every probability is exactly one half
    std::ostringstream buf(std::ios::binary);
    m.save(buf);
    std::string bytes = buf.str();
    for (std::size_t i = bytes.find("END\n") + 4; i + 7 < bytes.size(); i += 8) {
      double zero = 0.0;
      std::memcpy(&bytes[i], &zero, 8);
    }
    std::istringstream back(bytes, std::ios::binary);
    auto zm = MlpModel::load(back);

    Dataset two;
    two.num_features = 2;
    two.tuple_arity = 1;
    two.values = {1.0, 0.0, 0.0, 1.0};
    two.labels = {Label::Positive, Label::Negative};
    two.tuples = {0, 1};
    REQUIRE(zm.loss(two) == Catch::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  }

  SECTION("the clamp keeps the loss finite") {
    Dataset one;
    one.num_features = 2;
    one.tuple_arity = 1;
    one.values = {1e6, -1e6};
    one.labels = {Label::Positive};
    one.tuples = {0};
    const double l = m.loss(one);
    REQUIRE(std::isfinite(l));
    REQUIRE(l <= -std::log(1e-12) + 1e-6);
  }
}

TEST_CASE("training") {
  SECTION("separable blobs reach 99 percent training accuracy within 50 epochs") {
    auto ds = blob_dataset(200, 4, 1.5, 31);
    MlpConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden = {16};
    cfg.input_dropout = 0.0;
    cfg.epochs = 50;
    cfg.seed = 11;
    MlpModel::TrainLog log;
    auto m = MlpModel::train(cfg, ds, &log);
    REQUIRE(log.rows.back().accuracy >= 0.99);
  }

  SECTION("epoch-zero loss on balanced data is about ln 2 per example") {
    auto ds = blob_dataset(128, 6, 1.0, 32);
    MlpConfig cfg;
    cfg.input_dim = 6;
    cfg.epochs = 1;
    MlpModel::TrainLog log;
    MlpModel::train(cfg, ds, &log);
    REQUIRE(log.rows.front().epoch == 0);
    REQUIRE(log.rows.front().loss == Catch::Approx(std::log(2.0)).margin(0.08));
  }

  SECTION("same seed, same weights; different seed, different weights") {
    auto ds = blob_dataset(64, 3, 1.0, 33);
    MlpConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = {8};
    cfg.epochs = 5;
    cfg.seed = 21;
    auto m1 = MlpModel::train(cfg, ds);
    auto m2 = MlpModel::train(cfg, ds);
    REQUIRE(m1.same_parameters(m2));
    cfg.seed = 22;
    auto m3 = MlpModel::train(cfg, ds);
    REQUIRE_FALSE(m1.same_parameters(m3));
  }

  SECTION("training without positives is an error; without negatives, a warning") {
    Dataset ds = blob_dataset(8, 2, 1.0, 34);
    for (auto& l : ds.labels) l = Label::Negative;
    MlpConfig cfg;
    cfg.input_dim = 2;
    cfg.epochs = 1;
    REQUIRE_THROWS_AS(MlpModel::train(cfg, ds), Error);

    for (auto& l : ds.labels) l = Label::Positive;
    MlpModel::TrainLog log;
    MlpModel::train(cfg, ds, &log);
    REQUIRE_FALSE(log.warnings.empty());
  }

  SECTION("divergence aborts with a diagnostic") {
    auto ds = blob_dataset(32, 2, 1.0, 35);
    MlpConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden = {4};
    cfg.epochs = 50;
    // Adam updates are bounded by the step size, so only an overflowing step
    // size can push parameters out of the finite range
    cfg.learning_rate = 1e308;
    REQUIRE_THROWS_WITH(MlpModel::train(cfg, ds),
                        Catch::Matchers::ContainsSubstring("diverged"));
  }

  SECTION("full-batch loss is non-increasing through a 5-epoch window") {
    auto ds = blob_dataset(64, 3, 1.2, 36);
    MlpConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = {8};
    cfg.input_dropout = 0.0;
    cfg.batch_size = 1024;  // full batch
    cfg.epochs = 60;
    MlpModel::TrainLog log;
    MlpModel::train(cfg, ds, &log);
    auto window_min = [&](std::size_t end) {
      double best = log.rows[end - 1].loss;
      for (std::size_t i = end >= 5 ? end - 5 : 0; i < end; ++i)
        best = std::min(best, log.rows[i].loss);
      return best;
    };
    for (std::size_t e = 6; e < log.rows.size(); ++e)
      REQUIRE(window_min(e + 1) <= window_min(e) + 1e-6);
  }
}

TEST_CASE("gradient check") {
  SECTION("random small models agree with finite differences") {
    SplitRng rng(1616);
    MlpConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden = {4, 3};
    for (int i = 0; i < 10; ++i) {
      cfg.seed = rng.next_u64();
      auto batch = random_batch(rng, cfg.input_dim, 6);
      REQUIRE(MlpModel::gradient_check(cfg, batch) < 1e-4);
    }
  }

  SECTION("doubling the step roughly quadruples the finite-difference error") {
    // central differences are second order: probing a single coordinate at
    // growing h should show error ~ h^2 against the analytic value
    SplitRng rng(1717);
    MlpConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = {4};
    cfg.seed = 3;
    auto batch = random_batch(rng, cfg.input_dim, 4);
    const double e1 = MlpModel::gradient_check(cfg, batch, 1e-3);
    const double e2 = MlpModel::gradient_check(cfg, batch, 2e-3);
    const double e4 = MlpModel::gradient_check(cfg, batch, 4e-3);
    REQUIRE(e2 / std::max(e1, 1e-300) == Catch::Approx(4.0).margin(2.0));
    REQUIRE(e4 / std::max(e2, 1e-300) == Catch::Approx(4.0).margin(2.0));
  }
}

TEST_CASE("save and load") {
  MlpConfig cfg;
  cfg.input_dim = 7;
  cfg.hidden = {5, 4};
  cfg.seed = 99;
  auto ds = blob_dataset(32, 7, 1.0, 37);
  cfg.epochs = 3;
  auto m = MlpModel::train(cfg, ds);
  m.feature_hash = 0xFEED;
  m.relation_name = "r";

  std::ostringstream buf(std::ios::binary);
  m.save(buf);

  SECTION("round trip reproduces the forward pass exactly") {
    std::istringstream back(buf.str(), std::ios::binary);
    auto loaded = MlpModel::load(back);
    REQUIRE(loaded.same_parameters(m));
    REQUIRE(loaded.feature_hash == 0xFEED);
    REQUIRE(loaded.relation_name == "r");
    SplitRng rng(4);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> x(7);
      for (auto& v : x) v = rng.next_double() * 3.0;
      REQUIRE(m.forward(x) == loaded.forward(x));
    }
  }

  SECTION("truncation is detected") {
    std::string bytes = buf.str();
    bytes.resize(bytes.size() - 16);
    std::istringstream back(bytes, std::ios::binary);
    REQUIRE_THROWS_WITH(MlpModel::load(back), Catch::Matchers::ContainsSubstring("truncated"));
  }

  SECTION("trailing bytes are detected") {
    std::string bytes = buf.str() + "garbage";
    std::istringstream back(bytes, std::ios::binary);
    REQUIRE_THROWS_AS(MlpModel::load(back), Error);
  }

  SECTION("the header summary is printable") {
    REQUIRE_THAT(m.header_summary(), Catch::Matchers::ContainsSubstring("hidden=5,4"));
  }
}

TEST_CASE("softmax outputs always sum to one") {
  SplitRng rng(1818);
  MlpConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden = {6};
  for (int i = 0; i < 50; ++i) {
    cfg.seed = rng.next_u64();
    auto m = MlpModel::init(cfg);
    std::vector<double> x(4);
    for (auto& v : x) v = rng.next_double() * 10.0 - 5.0;
    const double p = m.forward(x);
    // the two-way softmax is computed jointly, so p and 1-p partition one
    REQUIRE(p >= 0.0);
    REQUIRE(p <= 1.0);
  }
}
