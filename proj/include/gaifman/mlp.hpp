#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gaifman/common.hpp"
#include "gaifman/featurizer.hpp"

namespace gaifman {

struct MlpConfig {
  std::uint32_t input_dim = 0;
  std::vector<std::uint32_t> hidden = {100, 100};  // sigmoid units per hidden layer
  double input_dropout = 0.2;                      // inverted dropout, train mode only
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint32_t batch_size = 128;
  std::uint32_t epochs = 100;
  std::uint64_t seed = 42;

  void validate() const {
    if (input_dim == 0) throw Error("input dimension must be positive");
    for (std::uint32_t h : hidden)
      if (h == 0) throw Error("hidden layer widths must be positive");
    if (!(input_dropout >= 0.0 && input_dropout < 1.0))
      throw Error("input dropout must lie in [0, 1)");
    if (!(std::isfinite(learning_rate) && learning_rate > 0)) throw Error("bad learning rate");
    if (batch_size == 0) throw Error("batch size must be positive");
  }

  std::string hidden_spec() const {
    std::string s;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(hidden[i]);
    }
    return s;
  }
};

inline std::vector<std::uint32_t> parse_hidden_spec(std::string_view s) {
  std::vector<std::uint32_t> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t comma = s.find(',', start);
    std::string_view part = s.substr(start, comma == std::string_view::npos ? s.size() - start
                                                                            : comma - start);
    std::uint32_t v = 0;
    if (part.empty()) throw Error("bad hidden layer spec '" + std::string(s) + "'");
    for (char c : part) {
      if (c < '0' || c > '9') throw Error("bad hidden layer spec '" + std::string(s) + "'");
      v = v * 10 + static_cast<std::uint32_t>(c - '0');
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

enum class Mode { Infer, Train };

/// Feed-forward classifier: sigmoid hidden layers, two-unit softmax output.
/// The returned probability is the positive-class coordinate of the softmax.
class MlpModel {
 public:
  MlpModel() = default;

  /// Fresh model with uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.
  static MlpModel init(const MlpConfig& config) {
    config.validate();
    MlpModel m;
    m.config_ = config;
    m.dims_.push_back(config.input_dim);
    for (std::uint32_t h : config.hidden) m.dims_.push_back(h);
    m.dims_.push_back(2);
    SplitRng rng = SplitRng(config.seed).derive(0x1417);
    for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) {
      const std::size_t fan_in = m.dims_[l], fan_out = m.dims_[l + 1];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::vector<double> w(fan_in * fan_out);
      for (double& x : w) x = (rng.next_double() * 2.0 - 1.0) * bound;
      m.weights_.push_back(std::move(w));
      m.biases_.push_back(std::vector<double>(fan_out, 0.0));
    }
    return m;
  }

  const MlpConfig& config() const { return config_; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t num_layers() const { return weights_.size(); }
  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  std::uint64_t feature_hash = 0;
  Transform transform = Transform::Log1p;
  std::string relation_name;  // metadata only

  /// Positive-class probability. Infer mode is deterministic; train mode
  /// applies inverted input dropout driven by the supplied stream.
  double forward(std::span<const double> x, Mode mode = Mode::Infer,
                 SplitRng* dropout_rng = nullptr) const {
    Workspace ws;
    return forward_impl(x, mode, dropout_rng, ws);
  }

  /// Cross-entropy of a labelled batch, summed (not averaged):
  ///   -[sum over positives log p + sum over negatives log (1-p)],
  /// with log clamped at 1e-12.
  double loss(const Dataset& batch) const {
    double total = 0.0;
    Workspace ws;
    for (std::size_t i = 0; i < batch.rows(); ++i) {
      const double p = forward_impl(batch.row(i), Mode::Infer, nullptr, ws);
      total -= std::log(std::max(batch.labels[i] == Label::Positive ? p : 1.0 - p, 1e-12));
    }
    return total;
  }

  // --- training ------------------------------------------------------------

  struct TrainLog {
    struct Row {
      std::uint32_t epoch;  // 0 = before any update
      double loss;          // mean per-example cross-entropy
      double accuracy;
    };
    std::vector<Row> rows;
    std::vector<std::string> warnings;

    std::string to_csv() const {
      std::string out = "epoch,loss,accuracy\n";
      for (const Row& r : rows)
        out += std::to_string(r.epoch) + "," + format_double(r.loss) + "," +
               format_double(r.accuracy) + "\n";
      return out;
    }
  };

  /// Shuffled mini-batch Adam training. Deterministic given config.seed (fixed
  /// shuffle and dropout streams). Aborts with an error if the loss or any
  /// parameter becomes non-finite.
  static MlpModel train(const MlpConfig& config, const Dataset& data, TrainLog* log = nullptr) {
    if (data.rows() == 0) throw Error("cannot train on an empty dataset");
    if (data.num_features != config.input_dim)
      throw Error("dataset has " + std::to_string(data.num_features) +
                  " features but the model expects " + std::to_string(config.input_dim));
    const std::size_t n_pos = data.count_label(Label::Positive);
    const std::size_t n_neg = data.count_label(Label::Negative);
    if (n_pos == 0) throw Error("cannot train without positive examples");
    if (log && n_neg == 0)
      log->warnings.push_back("dataset has no negative examples; the classifier will saturate");

    MlpModel m = init(config);
    m.feature_hash = data.feature_hash;
    m.transform = data.transform;

    Adam opt(m);
    Workspace ws;
    Gradients grads(m);
    SplitRng root(config.seed);

    if (log) {
      auto [l, a] = m.dataset_stats(data, ws);
      log->rows.push_back({0, l, a});
    }

    std::vector<std::size_t> order(data.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
      SplitRng shuffle_rng = root.derive(0x5u, epoch);
      shuffle_rng.shuffle(order);
      double epoch_loss = 0.0;
      std::size_t epoch_correct = 0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        grads.zero();
        double batch_loss = 0.0;
        for (std::size_t idx = start; idx < end; ++idx) {
          const std::size_t row = order[idx];
          SplitRng dropout_rng = root.derive(0xD0u, epoch, row);
          const bool positive = data.labels[row] == Label::Positive;
          const double p = m.forward_impl(data.row(row), Mode::Train, &dropout_rng, ws);
          batch_loss -= std::log(std::max(positive ? p : 1.0 - p, 1e-12));
          if ((p >= 0.5) == positive) ++epoch_correct;
          m.backward(data.row(row), positive, ws, grads);
        }
        if (!std::isfinite(batch_loss))
          throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
        grads.scale(1.0 / static_cast<double>(end - start));
        opt.step(m, grads);
        m.check_finite(epoch);
        epoch_loss += batch_loss;
      }
      if (log)
        log->rows.push_back({epoch, epoch_loss / static_cast<double>(order.size()),
                             static_cast<double>(epoch_correct) /
                                 static_cast<double>(order.size())});
    }
    return m;
  }

  // --- gradient verification -----------------------------------------------

  /// Maximum relative disagreement between analytic gradients and central
  /// finite differences (step h) of the summed loss over the batch, across
  /// all parameters. Dropout is forced off.
  static double gradient_check(MlpConfig config, const Dataset& batch, double h = 1e-5) {
    config.input_dropout = 0.0;
    MlpModel m = init(config);
    Workspace ws;
    Gradients analytic(m);
    analytic.zero();
    for (std::size_t i = 0; i < batch.rows(); ++i) {
      m.forward_impl(batch.row(i), Mode::Train, nullptr, ws);
      m.backward(batch.row(i), batch.labels[i] == Label::Positive, ws, analytic);
    }
    double worst = 0.0;
    auto probe = [&](double& param, double g_analytic) {
      const double saved = param;
      param = saved + h;
      const double up = m.loss(batch);
      param = saved - h;
      const double down = m.loss(batch);
      param = saved;
      const double g_numeric = (up - down) / (2.0 * h);
      const double denom = std::max(std::abs(g_analytic) + std::abs(g_numeric), 1e-8);
      worst = std::max(worst, std::abs(g_analytic - g_numeric) / denom);
    };
    for (std::size_t l = 0; l < m.weights_.size(); ++l) {
      for (std::size_t i = 0; i < m.weights_[l].size(); ++i)
        probe(m.weights_[l][i], analytic.w[l][i]);
      for (std::size_t i = 0; i < m.biases_[l].size(); ++i) probe(m.biases_[l][i], analytic.b[l][i]);
    }
    return worst;
  }

  // --- serialization ---------------------------------------------------------

  void save(std::ostream& out) const {
    out << "GAIFMLP1\n";
    out << "input_dim=" << config_.input_dim << "\n";
    out << "hidden=" << config_.hidden_spec() << "\n";
    out << "dropout=" << format_double(config_.input_dropout) << "\n";
    out << "learning_rate=" << format_double(config_.learning_rate) << "\n";
    out << "beta1=" << format_double(config_.beta1) << "\n";
    out << "beta2=" << format_double(config_.beta2) << "\n";
    out << "epsilon=" << format_double(config_.epsilon) << "\n";
    out << "batch_size=" << config_.batch_size << "\n";
    out << "epochs=" << config_.epochs << "\n";
    out << "seed=" << config_.seed << "\n";
    out << "feature_hash=" << feature_hash << "\n";
    out << "transform=" << transform_name(transform) << "\n";
    out << "relation=" << (relation_name.empty() ? "-" : relation_name) << "\n";
    out << "END\n";
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      write_f64(out, weights_[l]);
      write_f64(out, biases_[l]);
    }
    if (!out) throw Error("failed to write model");
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    save(out);
  }

  static MlpModel load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "GAIFMLP1")
      throw Error("not a model file (missing GAIFMLP1 header)");
    MlpConfig cfg;
    std::uint64_t fhash = 0;
    Transform tf = Transform::Log1p;
    std::string rel;
    auto next = [&](const char* key) {
      if (!std::getline(in, line)) throw Error("truncated model header");
      return detail::header_value(line, key);
    };
    cfg.input_dim = static_cast<std::uint32_t>(detail::parse_u64(next("input_dim")));
    cfg.hidden = parse_hidden_spec(next("hidden"));
    cfg.input_dropout = std::stod(next("dropout"));
    cfg.learning_rate = std::stod(next("learning_rate"));
    cfg.beta1 = std::stod(next("beta1"));
    cfg.beta2 = std::stod(next("beta2"));
    cfg.epsilon = std::stod(next("epsilon"));
    cfg.batch_size = static_cast<std::uint32_t>(detail::parse_u64(next("batch_size")));
    cfg.epochs = static_cast<std::uint32_t>(detail::parse_u64(next("epochs")));
    cfg.seed = detail::parse_u64(next("seed"));
    fhash = detail::parse_u64(next("feature_hash"));
    tf = transform_from_name(next("transform"));
    rel = next("relation");
    if (!std::getline(in, line) || line != "END") throw Error("malformed model header: missing END");

    MlpModel m = init(cfg);
    m.feature_hash = fhash;
    m.transform = tf;
    m.relation_name = rel == "-" ? "" : rel;
    for (std::size_t l = 0; l < m.weights_.size(); ++l) {
      read_f64(in, m.weights_[l]);
      read_f64(in, m.biases_[l]);
    }
    if (!in) throw Error("truncated model file");
    in.peek();
    if (!in.eof()) throw Error("trailing bytes after model parameters");
    return m;
  }

  static MlpModel load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model '" + path + "'");
    return load(in);
  }

  std::string header_summary() const {
    return "mlp input_dim=" + std::to_string(config_.input_dim) + " hidden=" +
           config_.hidden_spec() + " dropout=" + format_double(config_.input_dropout) +
           " feature_hash=" + std::to_string(feature_hash) + " transform=" +
           transform_name(transform) + (relation_name.empty() ? "" : " relation=" + relation_name);
  }

  bool same_parameters(const MlpModel& other) const {
    return dims_ == other.dims_ && weights_ == other.weights_ && biases_ == other.biases_;
  }

 private:
  struct Workspace {
    std::vector<std::vector<double>> acts;  // acts[0] = (possibly masked) input
    std::vector<double> probs;              // softmax output (2)
    std::vector<std::vector<double>> delta;
  };

  struct Gradients {
    std::vector<std::vector<double>> w, b;
    explicit Gradients(const MlpModel& m) {
      for (std::size_t l = 0; l < m.weights_.size(); ++l) {
        w.emplace_back(m.weights_[l].size());
        b.emplace_back(m.biases_[l].size());
      }
    }
    void zero() {
      for (auto& v : w) std::fill(v.begin(), v.end(), 0.0);
      for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
    }
    void scale(double s) {
      for (auto& v : w)
        for (double& x : v) x *= s;
      for (auto& v : b)
        for (double& x : v) x *= s;
    }
  };

  struct Adam {
    std::vector<std::vector<double>> mw, vw, mb, vb;
    std::uint64_t t = 0;
    explicit Adam(const MlpModel& m) {
      for (std::size_t l = 0; l < m.weights_.size(); ++l) {
        mw.emplace_back(m.weights_[l].size(), 0.0);
        vw.emplace_back(m.weights_[l].size(), 0.0);
        mb.emplace_back(m.biases_[l].size(), 0.0);
        vb.emplace_back(m.biases_[l].size(), 0.0);
      }
    }
    void step(MlpModel& m, const Gradients& g) {
      ++t;
      const MlpConfig& c = m.config_;
      const double c1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
      auto update = [&](std::vector<double>& param, const std::vector<double>& grad,
                        std::vector<double>& mom, std::vector<double>& vel) {
        for (std::size_t i = 0; i < param.size(); ++i) {
          mom[i] = c.beta1 * mom[i] + (1.0 - c.beta1) * grad[i];
          vel[i] = c.beta2 * vel[i] + (1.0 - c.beta2) * grad[i] * grad[i];
          param[i] -= c.learning_rate * (mom[i] / c1) / (std::sqrt(vel[i] / c2) + c.epsilon);
        }
      };
      for (std::size_t l = 0; l < m.weights_.size(); ++l) {
        update(m.weights_[l], g.w[l], mw[l], vw[l]);
        update(m.biases_[l], g.b[l], mb[l], vb[l]);
      }
    }
  };

  static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

  double forward_impl(std::span<const double> x, Mode mode, SplitRng* dropout_rng,
                      Workspace& ws) const {
    if (x.size() != dims_[0])
      throw Error("input has " + std::to_string(x.size()) + " features, model expects " +
                  std::to_string(dims_[0]));
    ws.acts.resize(dims_.size());
    ws.acts[0].assign(x.begin(), x.end());
    if (mode == Mode::Train && config_.input_dropout > 0.0) {
      if (dropout_rng == nullptr) throw Error("train-mode forward needs a dropout stream");
      const double keep = 1.0 - config_.input_dropout;
      for (double& v : ws.acts[0])
        v = dropout_rng->next_double() < keep ? v / keep : 0.0;
    }
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const std::size_t in = dims_[l], out = dims_[l + 1];
      auto& a = ws.acts[l + 1];
      a.assign(out, 0.0);
      const double* w = weights_[l].data();
      const auto& src = ws.acts[l];
      for (std::size_t i = 0; i < in; ++i) {
        const double xi = src[i];
        if (xi == 0.0) continue;  // feature vectors are mostly zeros
        const double* wrow = w + i * out;
        for (std::size_t j = 0; j < out; ++j) a[j] += xi * wrow[j];
      }
      const auto& bias = biases_[l];
      if (l + 1 < weights_.size()) {
        for (std::size_t j = 0; j < out; ++j) a[j] = sigmoid(a[j] + bias[j]);
      } else {
        for (std::size_t j = 0; j < out; ++j) a[j] += bias[j];
      }
    }
    // stable two-way softmax
    auto& logits = ws.acts.back();
    const double mx = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
    ws.probs.assign({e0 / (e0 + e1), e1 / (e0 + e1)});
    return ws.probs[1];
  }

  /// Accumulates gradients of the per-sample cross-entropy into grads; relies
  /// on the activations left in ws by the preceding forward_impl call.
  void backward(std::span<const double>, bool positive, Workspace& ws, Gradients& grads) const {
    const std::size_t layers = weights_.size();
    ws.delta.resize(layers);
    // output layer: softmax + cross-entropy
    ws.delta[layers - 1].assign(2, 0.0);
    ws.delta[layers - 1][0] = ws.probs[0] - (positive ? 0.0 : 1.0);
    ws.delta[layers - 1][1] = ws.probs[1] - (positive ? 1.0 : 0.0);
    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t in = dims_[l], out = dims_[l + 1];
      const auto& dz = ws.delta[l];
      const auto& a = ws.acts[l];
      auto& gw = grads.w[l];
      auto& gb = grads.b[l];
      for (std::size_t j = 0; j < out; ++j) gb[j] += dz[j];
      for (std::size_t i = 0; i < in; ++i) {
        const double ai = a[i];
        if (ai == 0.0) continue;
        double* grow = gw.data() + i * out;
        for (std::size_t j = 0; j < out; ++j) grow[j] += ai * dz[j];
      }
      if (l == 0) break;
      auto& prev = ws.delta[l - 1];
      prev.assign(in, 0.0);
      const double* w = weights_[l].data();
      for (std::size_t i = 0; i < in; ++i) {
        const double* wrow = w + i * out;
        double s = 0.0;
        for (std::size_t j = 0; j < out; ++j) s += wrow[j] * dz[j];
        const double ai = ws.acts[l][i];
        prev[i] = s * ai * (1.0 - ai);  // sigmoid'
      }
    }
  }

  std::pair<double, double> dataset_stats(const Dataset& data, Workspace& ws) const {
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      const bool positive = data.labels[i] == Label::Positive;
      const double p = forward_impl(data.row(i), Mode::Infer, nullptr, ws);
      total -= std::log(std::max(positive ? p : 1.0 - p, 1e-12));
      if ((p >= 0.5) == positive) ++correct;
    }
    return {total / static_cast<double>(data.rows()),
            static_cast<double>(correct) / static_cast<double>(data.rows())};
  }

  void check_finite(std::uint32_t epoch) const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (double x : weights_[l])
        if (!std::isfinite(x))
          throw Error("training diverged: non-finite weight at epoch " + std::to_string(epoch));
      for (double x : biases_[l])
        if (!std::isfinite(x))
          throw Error("training diverged: non-finite bias at epoch " + std::to_string(epoch));
    }
  }

  static void write_f64(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  static void read_f64(std::istream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

  MlpConfig config_;
  std::vector<std::size_t> dims_;
  std::vector<std::vector<double>> weights_;  // [layer][in*out], row-major by input
  std::vector<std::vector<double>> biases_;
};

}  // namespace gaifman
