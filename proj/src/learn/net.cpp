#include "grunt/learn/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace grunt {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

std::string_view to_string(Architecture a) { return a == Architecture::crnn ? "crnn" : "lstm_rnn"; }

Architecture parse_architecture(std::string_view s) {
  if (s == "crnn") return Architecture::crnn;
  if (s == "lstm_rnn") return Architecture::lstm_rnn;
  throw ArgumentError("unknown architecture '" + std::string(s) + "'");
}

std::string_view to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd"; }

// ---------------------------------------------------------------------------
// Configuration

int NetConfig::recurrent_steps() const {
  int t = time_steps;
  for (const auto& b : conv_blocks) t = pooled_length(t, b.pool);
  return t;
}

void NetConfig::validate() const {
  if (time_steps < 1 || features < 1) throw ArgumentError("net config: input shape must be positive");
  if (n_classes < 2) throw ArgumentError("net config: need at least two classes");
  if (lstm_hidden < 1) throw ArgumentError("net config: lstm_hidden must be positive");
  if (lstm_layers != 2) throw ArgumentError("net config: exactly two stacked LSTM layers are supported");
  if (architecture == Architecture::crnn) {
    if (conv_blocks.size() != 3) throw ArgumentError("net config: crnn needs exactly three conv blocks");
    if (!bidirectional) throw ArgumentError("net config: crnn uses bidirectional LSTMs");
    for (const auto& b : conv_blocks) {
      if (b.filters < 1 || b.kernel < 1) throw ArgumentError("net config: conv filters and kernel must be positive");
      if (b.pool != 2) throw ArgumentError("net config: conv blocks pool with size 2");
      if (b.dropout != 0.5) throw ArgumentError("net config: conv blocks use dropout 0.5");
    }
    if (recurrent_steps() < 1) {
      throw ArgumentError("net config: input of " + std::to_string(time_steps) +
                          " steps is too short for three pooling stages");
    }
  } else {
    if (!conv_blocks.empty()) throw ArgumentError("net config: lstm_rnn has no conv blocks");
    if (bidirectional) throw ArgumentError("net config: lstm_rnn is unidirectional");
  }
}

NetConfig crnn_config(SequenceFeature feature, int time_steps, int features, int lstm_hidden) {
  NetConfig c;
  c.architecture = Architecture::crnn;
  c.time_steps = time_steps;
  c.features = features;
  c.lstm_hidden = lstm_hidden;
  c.bidirectional = true;
  if (feature == SequenceFeature::lld) {
    c.conv_blocks = {{30, 10}, {30, 8}, {40, 10}};
  } else {
    c.conv_blocks = {{10, 6}, {20, 8}, {40, 10}};
  }
  c.validate();
  return c;
}

NetConfig lstm_rnn_config(int time_steps, int features, int lstm_hidden) {
  NetConfig c;
  c.architecture = Architecture::lstm_rnn;
  c.time_steps = time_steps;
  c.features = features;
  c.lstm_hidden = lstm_hidden;
  c.bidirectional = false;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

int directions(const NetConfig& c) { return c.bidirectional ? 2 : 1; }
const char* dir_name(int d) { return d == 0 ? "fw" : "bw"; }

}  // namespace

NetParams::NetParams(const NetConfig& config) : config_(config) {
  config_.validate();
  Eigen::Index offset = 0;
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    slots_.push_back({std::move(name), rows, cols, offset});
    offset += rows * cols;
  };
  int channels = config.features;
  for (std::size_t b = 0; b < config.conv_blocks.size(); ++b) {
    const auto& blk = config.conv_blocks[b];
    add("conv" + std::to_string(b) + ".w", static_cast<Eigen::Index>(blk.kernel) * channels, blk.filters);
    add("conv" + std::to_string(b) + ".b", 1, blk.filters);
    channels = blk.filters;
  }
  const int h = config.lstm_hidden;
  int in = channels;
  for (int l = 0; l < config.lstm_layers; ++l) {
    for (int d = 0; d < directions(config); ++d) {
      const std::string p = "lstm" + std::to_string(l) + "." + dir_name(d);
      add(p + ".wx", in, 4 * h);
      add(p + ".wh", h, 4 * h);
      add(p + ".b", 1, 4 * h);
    }
    in = h * directions(config);
  }
  add("dense.w", in, config.n_classes);
  add("dense.b", 1, config.n_classes);
  data_ = Vector::Zero(offset);
}

Eigen::Map<MatrixXd> NetParams::tensor(std::size_t i) {
  const auto& s = slots_.at(i);
  return {data_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<const MatrixXd> NetParams::tensor(std::size_t i) const {
  const auto& s = slots_.at(i);
  return {data_.data() + s.offset, s.rows, s.cols};
}

std::size_t NetParams::slot_index(std::string_view name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].name == name) return i;
  }
  throw ArgumentError("no parameter tensor named '" + std::string(name) + "'");
}

NetParams NetParams::zeros_like() const {
  NetParams z = *this;
  z.data_.setZero();
  return z;
}

NetParams net_init(const NetConfig& config, std::uint64_t seed) {
  NetParams p(config);
  Rng rng(seed);
  auto fill_uniform = [&](std::size_t slot, double limit) {
    auto t = p.tensor(slot);
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = rng.uniform(-limit, limit);
    }
  };
  int channels = config.features;
  for (std::size_t b = 0; b < config.conv_blocks.size(); ++b) {
    const auto& blk = config.conv_blocks[b];
    const double fan_in = static_cast<double>(blk.kernel) * channels;
    const double fan_out = static_cast<double>(blk.kernel) * blk.filters;
    fill_uniform(p.slot_index("conv" + std::to_string(b) + ".w"), std::sqrt(6.0 / (fan_in + fan_out)));
    channels = blk.filters;
  }
  const int h = config.lstm_hidden;
  for (int l = 0; l < config.lstm_layers; ++l) {
    for (int d = 0; d < directions(config); ++d) {
      const std::string prefix = "lstm" + std::to_string(l) + "." + dir_name(d);
      const double limit = 1.0 / std::sqrt(static_cast<double>(h));
      fill_uniform(p.slot_index(prefix + ".wx"), limit);
      fill_uniform(p.slot_index(prefix + ".wh"), limit);
      p.tensor(p.slot_index(prefix + ".b")).middleCols(h, h).setConstant(1.0);
    }
  }
  const auto dense = p.slot_index("dense.w");
  const auto& s = p.slots()[dense];
  fill_uniform(dense, std::sqrt(6.0 / static_cast<double>(s.rows + s.cols)));
  return p;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  return h;
}

/// im2col for a 'same'-padded 1-D convolution over rows.
MatrixXd im2col(const MatrixXd& in, int kernel) {
  const Eigen::Index t_count = in.rows();
  const Eigen::Index c = in.cols();
  const int pad_left = (kernel - 1) / 2;
  MatrixXd patches = MatrixXd::Zero(t_count, kernel * c);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad_left;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(t_count, t_count - shift);
    if (hi > lo) patches.block(lo, k * c, hi - lo, c) = in.middleRows(lo + shift, hi - lo);
  }
  return patches;
}

void col2im_add(const MatrixXd& dpatches, int kernel, MatrixXd& din) {
  const Eigen::Index t_count = din.rows();
  const Eigen::Index c = din.cols();
  const int pad_left = (kernel - 1) / 2;
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad_left;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(t_count, t_count - shift);
    if (hi > lo) din.middleRows(lo + shift, hi - lo) += dpatches.block(lo, k * c, hi - lo, c);
  }
}

/// Runs one LSTM direction over `input` (processing order). Returns hidden
/// states (T + 1) x H with row 0 the zero initial state.
void lstm_run(const MatrixXd& input, Eigen::Map<const MatrixXd> wx, Eigen::Map<const MatrixXd> wh,
              Eigen::Map<const MatrixXd> b, ForwardCache::Lstm& st) {
  const Eigen::Index t_count = input.rows();
  const Eigen::Index h = wh.rows();
  st.input = input;
  st.gates.resize(t_count, 4 * h);
  st.gates.noalias() = input * wx;
  st.gates.rowwise() += b.row(0);
  st.cells = MatrixXd::Zero(t_count + 1, h);
  st.hidden = MatrixXd::Zero(t_count + 1, h);
  RowVectorXd z(4 * h);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    z.noalias() = st.gates.row(t) + st.hidden.row(t) * wh;
    for (Eigen::Index j = 0; j < h; ++j) {
      const double i = sigmoid(z(j));
      const double f = sigmoid(z(h + j));
      const double g = std::tanh(z(2 * h + j));
      const double o = sigmoid(z(3 * h + j));
      const double c = f * st.cells(t, j) + i * g;
      st.cells(t + 1, j) = c;
      st.hidden(t + 1, j) = o * std::tanh(c);
      st.gates(t, j) = i;
      st.gates(t, h + j) = f;
      st.gates(t, 2 * h + j) = g;
      st.gates(t, 3 * h + j) = o;
    }
  }
}

}  // namespace

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

double cross_entropy(const Vector& logits, int label) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(label);
}

int predict_class(const Vector& logits) {
  int best = 0;
  for (int k = 1; k < logits.size(); ++k) {
    if (logits(k) > logits(best)) best = k;
  }
  return best;
}

Vector net_forward(const NetParams& params, const RowMatrix& x, Mode mode, std::uint64_t dropout_seed,
                   ForwardCache* cache) {
  const NetConfig& cfg = params.config();
  if (x.rows() != cfg.time_steps || x.cols() != cfg.features) {
    throw ArgumentError("net_forward: expected input " + std::to_string(cfg.time_steps) + "x" +
                        std::to_string(cfg.features) + ", got " + std::to_string(x.rows()) + "x" +
                        std::to_string(x.cols()));
  }
  ForwardCache local;
  ForwardCache& st = cache ? *cache : local;
  st = ForwardCache{};
  Rng drop_rng(dropout_seed);
  std::uint64_t sig = 0;

  MatrixXd a = x;
  std::size_t slot = 0;
  for (const auto& blk : cfg.conv_blocks) {
    ForwardCache::Conv cv;
    cv.in_rows = static_cast<int>(a.rows());
    cv.in_cols = static_cast<int>(a.cols());
    cv.patches = im2col(a, blk.kernel);
    const auto w = params.tensor(slot++);
    const auto b = params.tensor(slot++);
    cv.pre.noalias() = cv.patches * w;
    cv.pre.rowwise() += b.row(0);
    const Eigen::Index t_out = pooled_length(static_cast<int>(cv.pre.rows()), blk.pool);
    MatrixXd pooled(t_out, blk.filters);
    cv.argmax.resize(static_cast<std::size_t>(t_out * blk.filters));
    for (Eigen::Index f = 0; f < blk.filters; ++f) {
      for (Eigen::Index t = 0; t < t_out; ++t) {
        Eigen::Index best = t * blk.pool;
        double best_v = std::max(0.0, cv.pre(best, f));
        for (int k = 1; k < blk.pool; ++k) {
          const double v = std::max(0.0, cv.pre(t * blk.pool + k, f));
          if (v > best_v) {
            best_v = v;
            best = t * blk.pool + k;
          }
        }
        pooled(t, f) = best_v;
        cv.argmax[static_cast<std::size_t>(t * blk.filters + f)] = static_cast<int>(best);
        sig = mix(sig, static_cast<std::uint64_t>(best));
      }
    }
    for (Eigen::Index i = 0; i < cv.pre.size(); ++i) sig = mix(sig, cv.pre.data()[i] > 0.0 ? 1u : 0u);
    if (mode == Mode::train && blk.dropout > 0.0) {
      const double keep = 1.0 - blk.dropout;
      cv.dropout.resize(t_out, blk.filters);
      for (Eigen::Index i = 0; i < cv.dropout.size(); ++i) {
        cv.dropout.data()[i] = drop_rng.uniform() < keep ? 1.0 / keep : 0.0;
      }
      pooled.array() *= cv.dropout.array();
    }
    a = std::move(pooled);
    st.conv.push_back(std::move(cv));
  }

  const int dirs = directions(cfg);
  const Eigen::Index h = cfg.lstm_hidden;
  const Eigen::Index t_count = a.rows();
  st.lstm.resize(static_cast<std::size_t>(cfg.lstm_layers));
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    auto& layer = st.lstm[static_cast<std::size_t>(l)];
    layer.resize(static_cast<std::size_t>(dirs));
    MatrixXd out(t_count, h * dirs);
    for (int d = 0; d < dirs; ++d) {
      const auto wx = params.tensor(slot++);
      const auto wh = params.tensor(slot++);
      const auto b = params.tensor(slot++);
      auto& run = layer[static_cast<std::size_t>(d)];
      if (d == 0) {
        lstm_run(a, wx, wh, b, run);
        out.middleCols(0, h) = run.hidden.bottomRows(t_count);
      } else {
        lstm_run(a.colwise().reverse(), wx, wh, b, run);
        out.middleCols(h, h) = run.hidden.bottomRows(t_count).colwise().reverse();
      }
    }
    a = std::move(out);
  }

  // Final representation: last state of each direction of the top layer.
  const auto& top = st.lstm.back();
  st.representation.resize(h * dirs);
  for (int d = 0; d < dirs; ++d) {
    st.representation.segment(d * h, h) = top[static_cast<std::size_t>(d)].hidden.row(t_count).transpose();
  }
  const auto dw = params.tensor(slot++);
  const auto db = params.tensor(slot++);
  st.logits = dw.transpose() * st.representation + db.row(0).transpose();
  st.probs = softmax(st.logits);
  st.signature = sig;
  st.valid = mode == Mode::train || cache != nullptr;
  return st.logits;
}

// ---------------------------------------------------------------------------
// Backward

namespace {

/// BPTT through one direction. `dh_out` is the gradient w.r.t. each hidden
/// output in processing order. Accumulates weight gradients, returns dInput.
MatrixXd lstm_backward(const ForwardCache::Lstm& st, const MatrixXd& dh_out, Eigen::Map<const MatrixXd> wx,
                       Eigen::Map<const MatrixXd> wh, Eigen::Map<MatrixXd> gwx, Eigen::Map<MatrixXd> gwh,
                       Eigen::Map<MatrixXd> gb) {
  const Eigen::Index t_count = st.input.rows();
  const Eigen::Index h = wh.rows();
  MatrixXd dz(t_count, 4 * h);
  RowVectorXd dh_next = RowVectorXd::Zero(h);
  RowVectorXd dc_next = RowVectorXd::Zero(h);
  for (Eigen::Index t = t_count - 1; t >= 0; --t) {
    for (Eigen::Index j = 0; j < h; ++j) {
      const double i = st.gates(t, j);
      const double f = st.gates(t, h + j);
      const double g = st.gates(t, 2 * h + j);
      const double o = st.gates(t, 3 * h + j);
      const double tc = std::tanh(st.cells(t + 1, j));
      const double dh = dh_out(t, j) + dh_next(j);
      const double dc = dc_next(j) + dh * o * (1.0 - tc * tc);
      dz(t, j) = dc * g * i * (1.0 - i);
      dz(t, h + j) = dc * st.cells(t, j) * f * (1.0 - f);
      dz(t, 2 * h + j) = dc * i * (1.0 - g * g);
      dz(t, 3 * h + j) = dh * tc * o * (1.0 - o);
      dc_next(j) = dc * f;
    }
    dh_next.noalias() = dz.row(t) * wh.transpose();
  }
  gwx.noalias() += st.input.transpose() * dz;
  gwh.noalias() += st.hidden.topRows(t_count).transpose() * dz;
  gb.row(0) += dz.colwise().sum();
  return dz * wx.transpose();
}

}  // namespace

NetParams net_backward(const NetParams& params, const ForwardCache& cache, int label) {
  if (!cache.valid) throw ArgumentError("net_backward: no cached forward pass");
  const NetConfig& cfg = params.config();
  if (label < 0 || label >= cfg.n_classes) throw ArgumentError("net_backward: label out of range");
  NetParams grad = params.zeros_like();
  const int dirs = directions(cfg);
  const Eigen::Index h = cfg.lstm_hidden;
  const std::size_t n_conv = cfg.conv_blocks.size();

  auto lstm_slot = [&](int layer, int dir) { return n_conv * 2 + static_cast<std::size_t>((layer * dirs + dir) * 3); };
  const std::size_t dense_slot = lstm_slot(cfg.lstm_layers, 0);

  Vector dlogits = cache.probs;
  dlogits(label) -= 1.0;
  grad.tensor(dense_slot).noalias() += cache.representation * dlogits.transpose();
  grad.tensor(dense_slot + 1).row(0) += dlogits.transpose();
  const Vector drep = params.tensor(dense_slot) * dlogits;

  const Eigen::Index t_count = cache.lstm.front().front().input.rows();
  MatrixXd dout = MatrixXd::Zero(t_count, h * dirs);  // gradient w.r.t. the layer output sequence
  for (int l = cfg.lstm_layers - 1; l >= 0; --l) {
    const auto& layer = cache.lstm[static_cast<std::size_t>(l)];
    MatrixXd din;
    for (int d = 0; d < dirs; ++d) {
      MatrixXd dh = d == 0 ? MatrixXd(dout.middleCols(0, h)) : MatrixXd(dout.middleCols(h, h).colwise().reverse());
      if (l == cfg.lstm_layers - 1) dh.row(t_count - 1) += drep.segment(d * h, h).transpose();
      const std::size_t s = lstm_slot(l, d);
      MatrixXd dx = lstm_backward(layer[static_cast<std::size_t>(d)], dh, params.tensor(s), params.tensor(s + 1),
                                  grad.tensor(s), grad.tensor(s + 1), grad.tensor(s + 2));
      if (d == 1) dx = dx.colwise().reverse().eval();
      if (din.size() == 0) {
        din = std::move(dx);
      } else {
        din += dx;
      }
    }
    dout = std::move(din);
  }

  // dout is now the gradient w.r.t. the conv stack output (or the raw input).
  for (std::size_t bi = n_conv; bi-- > 0;) {
    const auto& blk = cfg.conv_blocks[bi];
    const auto& cv = cache.conv[bi];
    if (cv.dropout.size() > 0) dout.array() *= cv.dropout.array();
    MatrixXd dpre = MatrixXd::Zero(cv.pre.rows(), cv.pre.cols());
    for (Eigen::Index f = 0; f < blk.filters; ++f) {
      for (Eigen::Index t = 0; t < dout.rows(); ++t) {
        const int src = cv.argmax[static_cast<std::size_t>(t * blk.filters + f)];
        if (cv.pre(src, f) > 0.0) dpre(src, f) += dout(t, f);
      }
    }
    grad.tensor(2 * bi).noalias() += cv.patches.transpose() * dpre;
    grad.tensor(2 * bi + 1).row(0) += dpre.colwise().sum();
    if (bi > 0) {
      const MatrixXd dpatches = dpre * params.tensor(2 * bi).transpose();
      MatrixXd din = MatrixXd::Zero(cv.in_rows, cv.in_cols);
      col2im_add(dpatches, blk.kernel, din);
      dout = std::move(din);
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Training

TrainResult net_train(const NetConfig& config, const TrainConfig& train, std::span<const RowMatrix> inputs,
                      std::span<const int> labels, const std::function<void(int, double)>& on_epoch) {
  if (inputs.empty()) throw ArgumentError("net_train: empty training data");
  if (inputs.size() != labels.size()) throw ArgumentError("net_train: inputs and labels differ in length");
  if (train.batch_size < 1 || train.epochs < 0) throw ArgumentError("net_train: invalid batch size or epochs");
  if (!(train.learning_rate >= 0.0)) throw ArgumentError("net_train: learning rate must be >= 0");
  std::vector<bool> seen(static_cast<std::size_t>(config.n_classes), false);
  for (int l : labels) {
    if (l < 0 || l >= config.n_classes) throw ArgumentError("net_train: label out of range");
    seen[static_cast<std::size_t>(l)] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ArgumentError("net_train: every class needs at least one sample");
  }

  TrainResult result;
  result.params = net_init(config, train.seed);
  Vector& theta = result.params.flat();
  Vector m = Vector::Zero(theta.size());
  Vector v = Vector::Zero(theta.size());
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  std::uint64_t step = 0;

  Rng rng(train.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(inputs.size());
  ForwardCache cache;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    Rng drop_rng = rng.fork(static_cast<std::uint64_t>(epoch));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(train.batch_size));
      Vector g = Vector::Zero(theta.size());
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        net_forward(result.params, inputs[i], Mode::train, drop_rng.next(), &cache);
        const double loss = cross_entropy(cache.logits, labels[i]);
        if (!std::isfinite(loss)) {
          std::ostringstream os;
          os << "net_train: non-finite loss at epoch " << epoch << ", sample " << i << " (logits "
             << cache.logits.transpose() << ", |theta| " << theta.norm() << ")";
          throw Error(os.str());
        }
        epoch_loss += loss;
        g += net_backward(result.params, cache, labels[i]).flat();
      }
      g /= static_cast<double>(end - start);
      if (train.clip_norm > 0.0) {
        const double norm = g.norm();
        if (norm > train.clip_norm) g *= train.clip_norm / norm;
      }
      ++step;
      if (train.optimizer == Optimizer::adam) {
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseAbs2();
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
        theta.array() -= train.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kEps);
      } else {
        theta -= train.learning_rate * g;
      }
    }
    const double mean_loss = epoch_loss / static_cast<double>(inputs.size());
    result.loss_history.push_back(mean_loss);
    if (!theta.allFinite()) throw Error("net_train: parameters became non-finite at epoch " + std::to_string(epoch));
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport grad_check(const NetConfig& config, int n_trials, std::uint64_t seed, const GradCheckOptions& o) {
  config.validate();
  GradCheckReport report;
  report.trials = n_trials;
  double sum = 0.0;
  ForwardCache cache;
  ForwardCache probe;
  for (int trial = 0; trial < n_trials; ++trial) {
    Rng rng = Rng(seed).fork(static_cast<std::uint64_t>(trial));
    NetParams params(config);
    for (Eigen::Index j = 0; j < params.size(); ++j) params.flat()(j) = rng.uniform(-0.5, 0.5);
    RowMatrix x(config.time_steps, config.features);
    if (trial == 0 && o.include_zero_input) {
      x.setZero();
    } else {
      for (Eigen::Index j = 0; j < x.size(); ++j) x.data()[j] = rng.normal();
    }
    const int label = trial % config.n_classes;
    const std::uint64_t drop_seed = rng.next();

    net_forward(params, x, Mode::train, drop_seed, &cache);
    const Vector analytic = net_backward(params, cache, label).flat();
    for (Eigen::Index j = 0; j < params.size(); ++j) {
      const double saved = params.flat()(j);
      params.flat()(j) = saved + o.step;
      net_forward(params, x, Mode::train, drop_seed, &probe);
      const double up = cross_entropy(probe.logits, label);
      const std::uint64_t sig_up = probe.signature;
      params.flat()(j) = saved - o.step;
      net_forward(params, x, Mode::train, drop_seed, &probe);
      const double down = cross_entropy(probe.logits, label);
      const std::uint64_t sig_down = probe.signature;
      params.flat()(j) = saved;
      if (sig_up != cache.signature || sig_down != cache.signature) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (up - down) / (2.0 * o.step);
      const double a = analytic(j);
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        report.finite = false;
        continue;
      }
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), o.floor});
      report.max_rel_error = std::max(report.max_rel_error, rel);
      sum += rel;
      ++report.checked;
    }
  }
  report.mean_rel_error = report.checked ? sum / static_cast<double>(report.checked) : 0.0;
  return report;
}

}  // namespace grunt
