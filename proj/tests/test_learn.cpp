#include <doctest.h>

#include <cmath>
#include <numeric>

#include "grunt/features.hpp"
#include "grunt/learn/checkpoint.hpp"
#include "grunt/learn/net.hpp"
#include "grunt/learn/standardize.hpp"
#include "grunt/learn/svm.hpp"
#include "support.hpp"

using namespace grunt;

namespace {

struct Blobs {
  RowMatrix x;
  std::vector<int> y;
};

Blobs blobs(int n, int d, double separation, std::uint64_t seed) {
  grunt::Rng rng(seed);
  Blobs b;
  b.x.resize(n, d);
  b.y.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    b.y[std::size_t(i)] = label;
    for (int j = 0; j < d; ++j) b.x(i, j) = rng.normal() + (j == 0 ? (label ? separation : -separation) : 0.0);
  }
  return b;
}

/// Plain Pegasos with an explicit weight vector and the same sample order.
std::pair<Vector, double> naive_pegasos(const RowMatrix& x, const std::vector<int>& labels, double c, int epochs,
                                        std::uint64_t seed) {
  const auto n = x.rows();
  const double lambda = 1.0 / (c * double(n));
  Vector w = Vector::Zero(x.cols());
  double b = 0.0;
  grunt::Rng rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  double t = 0.0;
  for (int e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng.shuffle(order);
    for (auto i : order) {
      t += 1.0;
      const double y = labels[std::size_t(i)] == 1 ? 1.0 : -1.0;
      const double margin = y * (x.row(i).dot(w) + b);
      w *= 1.0 - 1.0 / t;
      b *= 1.0 - 1.0 / t;
      if (margin < 1.0) {
        w += (y / (lambda * t)) * x.row(i).transpose();
        b += y / (lambda * t);
      }
      const double norm = std::sqrt(w.squaredNorm() + b * b);
      if (norm > 1.0 / std::sqrt(lambda)) {
        w *= 1.0 / (std::sqrt(lambda) * norm);
        b *= 1.0 / (std::sqrt(lambda) * norm);
      }
    }
  }
  return {w, b};
}

NetConfig tiny_crnn() {
  NetConfig c;
  c.architecture = Architecture::crnn;
  c.time_steps = 8;
  c.features = 3;
  c.conv_blocks = {{2, 3}, {2, 3}, {2, 3}};
  c.lstm_hidden = 4;
  return c;
}

RowMatrix random_input(int t, int d, std::uint64_t seed) {
  grunt::Rng rng(seed);
  RowMatrix x(t, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

}  // namespace

TEST_SUITE("standardizer") {
  TEST_CASE("two-row example") {
    RowMatrix x(2, 2);
    x << 1, 2, 3, 6;
    const auto s = standardize_fit(x);
    CHECK(s.mean(0) == 2.0);
    CHECK(s.mean(1) == 4.0);
    CHECK(s.std(0) == 1.0);
    CHECK(s.std(1) == 2.0);
    const auto z = s.apply(x);
    CHECK(z(0, 0) == -1.0);
    CHECK(z(1, 1) == 1.0);
  }

  TEST_CASE("constant column uses the floor and maps to zero") {
    RowMatrix x(3, 2);
    x << 5, 1, 5, 2, 5, 3;
    const auto s = standardize_fit(x);
    CHECK(s.std(0) == kStdFloor);
    CHECK(s.apply(x).col(0).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("standardized training data has zero mean and unit population std") {
    const RowMatrix x = random_input(50, 6, 1) * 3.0;
    const auto z = standardize_fit(x).apply(x);
    for (Eigen::Index c = 0; c < 6; ++c) {
      CHECK(std::abs(z.col(c).mean()) < 1e-12);
      CHECK(std::sqrt(z.col(c).array().square().mean()) == doctest::Approx(1.0));
    }
  }

  TEST_CASE("frame pooling equals a fit on stacked frames") {
    std::vector<RowMatrix> seqs = {random_input(5, 3, 2), random_input(7, 3, 3)};
    RowMatrix stacked(12, 3);
    stacked << seqs[0], seqs[1];
    const auto a = standardize_fit_frames(seqs);
    const auto b = standardize_fit(stacked);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.std - b.std).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("empty standardizer is the identity and errors") {
    const auto x = random_input(4, 2, 4);
    CHECK(Standardizer{}.apply(x) == x);
    CHECK_THROWS_AS(standardize_fit(random_input(1, 2, 5)), ArgumentError);
    const auto s = standardize_fit(x);
    CHECK_THROWS_AS(s.apply(random_input(4, 3, 6)), ArgumentError);
  }
}

TEST_SUITE("svm") {
  TEST_CASE("separable blobs are classified perfectly") {
    const auto b = blobs(80, 5, 4.0, 7);
    const auto model = svm_train(b.x, b.y, 1.0, 200, 1);
    CHECK(svm_predict(model, b.x).labels == b.y);
    const auto test = blobs(80, 5, 4.0, 8);
    CHECK(svm_predict(model, test.x).labels == test.y);
  }

  TEST_CASE("matches a plain Pegasos implementation") {
    const auto b = blobs(40, 4, 1.0, 9);
    for (double c : {1e-3, 1e-1, 10.0}) {
      const auto model = svm_train(b.x, b.y, c, 50, 3);
      const auto [w, bias] = naive_pegasos(b.x, b.y, c, 50, 3);
      CHECK((model.weights - w).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + w.cwiseAbs().maxCoeff()));
      CHECK(model.bias == doctest::Approx(bias).epsilon(1e-8));
    }
  }

  TEST_CASE("vanishing C drives the weights to zero") {
    const auto b = blobs(40, 4, 2.0, 10);
    const auto model = svm_train(b.x, b.y, 1e-12, 20, 1);
    CHECK(model.weights.norm() < 1e-9);
    CHECK(std::abs(model.bias) < 1e-9);
  }

  TEST_CASE("same seed gives identical models and flipped labels negate them") {
    const auto b = blobs(30, 3, 1.0, 11);
    const auto m1 = svm_train(b.x, b.y, 0.1, 30, 5);
    const auto m2 = svm_train(b.x, b.y, 0.1, 30, 5);
    CHECK(m1.weights == m2.weights);
    CHECK(m1.bias == m2.bias);
    CHECK(svm_train(b.x, b.y, 0.1, 30, 6).weights != m1.weights);

    std::vector<int> flipped(b.y.size());
    for (std::size_t i = 0; i < b.y.size(); ++i) flipped[i] = 1 - b.y[i];
    const auto mf = svm_train(b.x, flipped, 0.1, 30, 5);
    CHECK((mf.weights + m1.weights).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(mf.bias + m1.bias) < 1e-12);
  }

  TEST_CASE("a zero margin predicts class 0") {
    SvmModel m;
    m.weights = Vector::Zero(3);
    m.bias = 0.0;
    const auto p = svm_predict(m, random_input(5, 3, 1));
    for (int l : p.labels) CHECK(l == 0);
    m.bias = 1e-300;
    for (int l : svm_predict(m, random_input(5, 3, 1)).labels) CHECK(l == 1);
  }

  TEST_CASE("objective closed form and training trend") {
    SvmModel m;
    m.weights = Vector::Zero(2);
    m.weights(0) = 1.0;
    m.c_value = 1.0;
    RowMatrix x(2, 2);
    x << 2, 0, -0.5, 0;
    const std::vector<int> y = {1, 1};
    // lambda = 1 / (C N) = 0.5; hinge terms 0 and 1.5.
    CHECK_THROWS_AS(svm_objective(m, x, y), ArgumentError);  // one class only
    const std::vector<int> y2 = {1, 0};
    // margins 2 and -0.5 for labels +1 and -1: hinge 0 and 0.5.
    CHECK(svm_objective(m, x, y2) == doctest::Approx(0.25 * 1.0 + 0.25));

    const auto b = blobs(60, 4, 0.5, 12);
    const double early = svm_objective(svm_train(b.x, b.y, 0.1, 2, 1), b.x, b.y);
    const double late = svm_objective(svm_train(b.x, b.y, 0.1, 300, 1), b.x, b.y);
    CHECK(late <= early + 1e-9);
  }

  TEST_CASE("errors") {
    const auto b = blobs(10, 2, 1.0, 13);
    CHECK_THROWS_AS(svm_train(b.x, b.y, 0.0, 10), ArgumentError);
    CHECK_THROWS_AS(svm_train(b.x, b.y, 1.0, 0), ArgumentError);
    std::vector<int> bad = b.y;
    bad[0] = 2;
    CHECK_THROWS_AS(svm_train(b.x, bad, 1.0, 10), ArgumentError);
    CHECK_THROWS_AS(svm_train(b.x, std::vector<int>(10, 1), 1.0, 10), ArgumentError);
    CHECK_THROWS_AS(svm_predict(svm_train(b.x, b.y, 1.0, 10), random_input(2, 3, 1)), ArgumentError);
  }
}

TEST_SUITE("net shapes") {
  TEST_CASE("spectrogram CRNN shape chain") {
    const auto c = crnn_config(SequenceFeature::spectrogram, 227, 227);
    CHECK(c.recurrent_steps() == 28);  // 227 -> 113 -> 56 -> 28
    const NetParams p(c);
    CHECK(p.tensor(p.slot_index("conv0.w")).rows() == 6 * 227);
    CHECK(p.tensor(p.slot_index("conv0.w")).cols() == 10);
    CHECK(p.tensor(p.slot_index("conv1.w")).rows() == 8 * 10);
    CHECK(p.tensor(p.slot_index("conv2.w")).rows() == 10 * 20);
    CHECK(p.tensor(p.slot_index("conv2.w")).cols() == 40);
    CHECK(p.tensor(p.slot_index("lstm0.fw.wx")).rows() == 40);
    CHECK(p.tensor(p.slot_index("lstm0.bw.wx")).cols() == 256);
    CHECK(p.tensor(p.slot_index("lstm1.fw.wx")).rows() == 128);
    CHECK(p.tensor(p.slot_index("dense.w")).rows() == 128);
    CHECK(p.tensor(p.slot_index("dense.w")).cols() == 2);
  }

  TEST_CASE("published convolution stacks") {
    struct Row {
      SequenceFeature f;
      int t, d;
      std::vector<ConvBlock> blocks;
      int steps;
    };
    for (const auto& r : {Row{SequenceFeature::mfcc, 44, 40, {{10, 6}, {20, 8}, {40, 10}}, 5},
                          Row{SequenceFeature::spectrogram, 227, 227, {{10, 6}, {20, 8}, {40, 10}}, 28},
                          Row{SequenceFeature::lld, 100, 130, {{30, 10}, {30, 8}, {40, 10}}, 12}}) {
      const auto c = crnn_config(r.f, r.t, r.d);
      CHECK(c.conv_blocks == r.blocks);
      CHECK(c.recurrent_steps() == r.steps);
      CHECK(c.bidirectional);
      CHECK(c.lstm_layers == 2);
    }
    const auto l = lstm_rnn_config(100, 130);
    CHECK(l.conv_blocks.empty());
    CHECK_FALSE(l.bidirectional);
    CHECK(l.recurrent_steps() == 100);
    const NetParams p(l);
    CHECK(p.tensor(p.slot_index("dense.w")).rows() == 64);
  }

  TEST_CASE("parameter count matches the layer formulas") {
    const auto c = crnn_config(SequenceFeature::mfcc, 44, 40, 16);
    const NetParams p(c);
    long expected = 0;
    int ch = 40;
    for (const auto& b : c.conv_blocks) {
      expected += long(b.kernel) * ch * b.filters + b.filters;
      ch = b.filters;
    }
    const int h = 16;
    expected += 2 * (long(ch) * 4 * h + long(h) * 4 * h + 4 * h);
    expected += 2 * (long(2 * h) * 4 * h + long(h) * 4 * h + 4 * h);
    expected += 2L * h * 2 + 2;
    CHECK(p.size() == expected);
    Eigen::Index covered = 0;
    for (const auto& s : p.slots()) {
      CHECK(s.offset == covered);
      covered += s.rows * s.cols;
    }
    CHECK(covered == p.size());
  }

  TEST_CASE("initialization") {
    const auto c = crnn_config(SequenceFeature::mfcc, 44, 40);
    const auto p = net_init(c, 3);
    CHECK(p.flat() == net_init(c, 3).flat());
    CHECK(p.flat() != net_init(c, 4).flat());
    const auto b = p.tensor(p.slot_index("lstm0.fw.b"));
    const int h = c.lstm_hidden;
    for (int j = 0; j < 4 * h; ++j) CHECK(b(0, j) == (j >= h && j < 2 * h ? 1.0 : 0.0));
    const auto w = p.tensor(p.slot_index("conv0.w"));
    const double limit = std::sqrt(6.0 / double(w.rows() + w.cols()));
    CHECK(w.cwiseAbs().maxCoeff() <= limit);
    CHECK(p.tensor(p.slot_index("dense.b")).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("invalid configurations") {
    auto c = crnn_config(SequenceFeature::mfcc, 44, 40);
    c.time_steps = 7;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = crnn_config(SequenceFeature::mfcc, 44, 40);
    c.conv_blocks.pop_back();
    CHECK_THROWS_AS(NetParams{c}, ArgumentError);
    auto l = lstm_rnn_config(10, 3);
    l.bidirectional = true;
    CHECK_THROWS_AS(l.validate(), ArgumentError);
  }
}

TEST_SUITE("net forward and backward") {
  TEST_CASE("zero parameters give zero logits for any input") {
    for (const auto& c : {tiny_crnn(), lstm_rnn_config(8, 3, 4)}) {
      const NetParams zero(c);
      const auto logits = net_forward(zero, random_input(8, 3, 1), Mode::eval);
      CHECK(logits(0) == 0.0);
      CHECK(logits(1) == 0.0);
      CHECK(cross_entropy(logits, 1) == doctest::Approx(std::log(2.0)));
    }
  }

  TEST_CASE("eval mode is deterministic and dropout seeds only matter in training") {
    const auto c = crnn_config(SequenceFeature::mfcc, 44, 40, 8);
    const auto p = net_init(c, 1);
    const auto x = random_input(44, 40, 2);
    CHECK(net_forward(p, x, Mode::eval, 1) == net_forward(p, x, Mode::eval, 2));
    CHECK(net_forward(p, x, Mode::train, 5) == net_forward(p, x, Mode::train, 5));
    CHECK(net_forward(p, x, Mode::train, 5) != net_forward(p, x, Mode::train, 6));
  }

  TEST_CASE("dropout masks keep half the units scaled by two") {
    const auto c = crnn_config(SequenceFeature::mfcc, 44, 40, 8);
    const auto p = net_init(c, 1);
    const auto x = random_input(44, 40, 3);
    double kept = 0.0, total = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
      ForwardCache cache;
      net_forward(p, x, Mode::train, s, &cache);
      for (const auto& conv : cache.conv) {
        for (Eigen::Index i = 0; i < conv.dropout.size(); ++i) {
          const double v = conv.dropout.data()[i];
          CHECK((v == 0.0 || v == 2.0));
          kept += v / 2.0;
          total += 1.0;
        }
      }
    }
    CHECK(std::abs(kept / total - 0.5) < 0.02);
    ForwardCache eval_cache;
    net_forward(p, x, Mode::eval, 0, &eval_cache);
    for (const auto& conv : eval_cache.conv) CHECK(conv.dropout.size() == 0);
  }

  TEST_CASE("softmax and cross-entropy identities") {
    grunt::Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      Vector z(2);
      z << rng.uniform(-20, 20), rng.uniform(-20, 20);
      const auto p = softmax(z);
      CHECK(p.sum() == doctest::Approx(1.0));
      for (int y = 0; y < 2; ++y) CHECK(cross_entropy(z, y) == doctest::Approx(-std::log(p(y))));
      Vector shifted = z.array() + rng.uniform(-100, 100);
      CHECK((softmax(shifted) - p).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(predict_class(shifted) == predict_class(z));
    }
    Vector big(2);
    big << 1000.0, 0.0;
    CHECK(cross_entropy(big, 0) == doctest::Approx(0.0));
    CHECK(cross_entropy(big, 1) == doctest::Approx(1000.0));
    Vector tie = Vector::Zero(2);
    CHECK(predict_class(tie) == 0);
  }

  TEST_CASE("dense bias gradient equals probabilities minus the one-hot label") {
    const auto c = lstm_rnn_config(6, 3, 5);
    const auto p = net_init(c, 2);
    for (int y = 0; y < 2; ++y) {
      ForwardCache cache;
      const auto logits = net_forward(p, random_input(6, 3, 7), Mode::train, 0, &cache);
      const auto g = net_backward(p, cache, y);
      const auto gb = g.tensor(g.slot_index("dense.b"));
      const auto probs = softmax(logits);
      for (int k = 0; k < 2; ++k) CHECK(gb(0, k) == doctest::Approx(probs(k) - (k == y ? 1.0 : 0.0)));
    }
  }

  TEST_CASE("a confident correct prediction has a vanishing gradient") {
    const auto c = lstm_rnn_config(6, 3, 5);
    auto p = net_init(c, 2);
    auto b = p.tensor(p.slot_index("dense.b"));
    b(0, 0) = 60.0;
    b(0, 1) = -60.0;
    ForwardCache cache;
    net_forward(p, random_input(6, 3, 7), Mode::train, 0, &cache);
    CHECK(net_backward(p, cache, 0).flat().cwiseAbs().maxCoeff() < 1e-40);
    CHECK(net_backward(p, cache, 1).flat().cwiseAbs().maxCoeff() > 0.5);
  }

  TEST_CASE("LSTM gradient matches central differences on every parameter") {
    const auto c = lstm_rnn_config(5, 2, 3);
    auto p = net_init(c, 9);
    const auto x = random_input(5, 2, 10);
    ForwardCache cache;
    net_forward(p, x, Mode::train, 0, &cache);
    const auto g = net_backward(p, cache, 1);
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double orig = p.flat()(i);
      p.flat()(i) = orig + h;
      const double up = cross_entropy(net_forward(p, x, Mode::eval), 1);
      p.flat()(i) = orig - h;
      const double down = cross_entropy(net_forward(p, x, Mode::eval), 1);
      p.flat()(i) = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = g.flat()(i);
      worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("library gradient check on the tiny configurations") {
    for (const auto& c : {tiny_crnn(), lstm_rnn_config(8, 3, 4)}) {
      const auto r = grad_check(c, 5, 17);
      CHECK(r.finite);
      CHECK(r.trials == 5);
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_SUITE("net training") {
  TEST_CASE("zero learning rate leaves the initial parameters") {
    const auto c = lstm_rnn_config(6, 2, 4);
    std::vector<RowMatrix> xs = {random_input(6, 2, 1), random_input(6, 2, 2), random_input(6, 2, 3)};
    const std::vector<int> ys = {0, 1, 0};
    for (auto opt : {Optimizer::adam, Optimizer::sgd}) {
      TrainConfig t;
      t.learning_rate = 0.0;
      t.epochs = 3;
      t.batch_size = 2;
      t.seed = 5;
      t.optimizer = opt;
      const auto r = net_train(c, t, xs, ys);
      CHECK(r.params.flat() == net_init(c, 5).flat());
      CHECK(r.loss_history.size() == 3);
      CHECK(r.loss_history[0] == r.loss_history[2]);
    }
  }

  TEST_CASE("training is reproducible and learns a trivial task") {
    const auto c = lstm_rnn_config(6, 2, 6);
    std::vector<RowMatrix> xs;
    std::vector<int> ys;
    grunt::Rng rng(8);
    for (int i = 0; i < 24; ++i) {
      const int y = i % 2;
      RowMatrix x = random_input(6, 2, 100 + std::uint64_t(i)) * 0.2;
      x.col(0).array() += y ? 1.0 : -1.0;
      xs.push_back(x);
      ys.push_back(y);
    }
    TrainConfig t;
    t.learning_rate = 1e-2;
    t.epochs = 30;
    t.batch_size = 4;
    t.seed = 3;
    std::vector<double> seen;
    const auto a = net_train(c, t, xs, ys, [&](int, double loss) { seen.push_back(loss); });
    const auto b = net_train(c, t, xs, ys);
    CHECK(a.loss_history == b.loss_history);
    CHECK(a.params.flat() == b.params.flat());
    CHECK(seen == a.loss_history);
    CHECK(a.loss_history.back() < 0.5 * a.loss_history.front());
    int correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) correct += predict_class(net_forward(a.params, xs[i], Mode::eval)) == ys[i];
    CHECK(correct == 24);
  }

  TEST_CASE("CRNN separates the sexes of a small MFCC corpus") {
    const auto& corpus = test::small_corpus();
    const auto table = extract_features(corpus.manifest, corpus.clips, FeatureKind::mfcc, std::nullopt, 1);
    std::vector<RowMatrix> xs;
    std::vector<int> ys;
    for (const auto& r : corpus.manifest.records) {
      xs.push_back(table.at(r.clip_id()));
      ys.push_back(r.sex == Sex::male ? 1 : 0);
    }
    const auto st = standardize_fit_frames(xs);
    for (auto& x : xs) x = st.apply(x);
    TrainConfig t;
    t.batch_size = 16;
    t.learning_rate = 1e-3;
    t.epochs = 30;
    t.seed = 1;
    const auto r = net_train(crnn_config(SequenceFeature::mfcc, 44, 40), t, xs, ys);
    int hits[2] = {0, 0}, totals[2] = {0, 0};
    for (std::size_t i = 0; i < xs.size(); ++i) {
      ++totals[ys[i]];
      hits[ys[i]] += predict_class(net_forward(r.params, xs[i], Mode::eval)) == ys[i];
    }
    const double uar = 0.5 * (double(hits[0]) / totals[0] + double(hits[1]) / totals[1]);
    CHECK(uar >= 0.95);
  }

  TEST_CASE("duplicating the training set with batch size doubled keeps SGD steps") {
    // Each mini-batch step averages the gradient, so a batch made of two
    // copies of every sample gives the same update as the originals.
    const auto c = lstm_rnn_config(4, 2, 3);
    std::vector<RowMatrix> xs = {random_input(4, 2, 1), random_input(4, 2, 2)};
    std::vector<int> ys = {0, 1};
    TrainConfig t;
    t.learning_rate = 0.05;
    t.epochs = 1;
    t.batch_size = 2;
    t.optimizer = Optimizer::sgd;
    t.clip_norm = 0.0;
    const auto once = net_train(c, t, xs, ys);
    auto xs2 = xs;
    auto ys2 = ys;
    xs2.insert(xs2.end(), xs.begin(), xs.end());
    ys2.insert(ys2.end(), ys.begin(), ys.end());
    t.batch_size = 4;
    const auto twice = net_train(c, t, xs2, ys2);
    CHECK((once.params.flat() - twice.params.flat()).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("errors") {
    const auto c = lstm_rnn_config(4, 2, 3);
    std::vector<RowMatrix> xs = {random_input(4, 2, 1)};
    TrainConfig t;
    CHECK_THROWS_AS(net_train(c, t, xs, std::vector<int>{0, 1}), ArgumentError);
    std::vector<RowMatrix> wrong = {random_input(5, 2, 1)};
    CHECK_THROWS_AS(net_train(c, t, wrong, std::vector<int>{0}), ArgumentError);
  }
}

TEST_SUITE("checkpoints") {
  TEST_CASE("SVM round trip") {
    const auto b = blobs(20, 3, 2.0, 1);
    auto m = svm_train(b.x, b.y, 0.5, 10, 1);
    m.standardizer = standardize_fit(b.x);
    nlohmann::ordered_json extra;
    extra["task"] = "sex";
    const auto ck = svm_checkpoint(m, extra);
    const auto bytes = encode_checkpoint(ck);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "GMDL");
    const auto back = decode_checkpoint(bytes);
    CHECK(back.config["task"] == "sex");
    const auto m2 = svm_from_checkpoint(back);
    CHECK(m2.weights == m.weights);
    CHECK(m2.bias == m.bias);
    CHECK(m2.c_value == m.c_value);
    CHECK(m2.standardizer.mean == m.standardizer.mean);
    CHECK(svm_predict(m2, b.x).margins == svm_predict(m, b.x).margins);
  }

  TEST_CASE("network round trip through a file") {
    NetModel model;
    model.params = net_init(crnn_config(SequenceFeature::mfcc, 44, 40, 8), 2);
    model.standardizer = standardize_fit(random_input(10, 40, 3));
    const auto dir = test::temp_dir("checkpoint");
    save_checkpoint(dir / "m.gmdl", net_checkpoint(model));
    const auto back = net_from_checkpoint(load_checkpoint(dir / "m.gmdl"));
    CHECK(back.params.config() == model.params.config());
    CHECK(back.params.flat() == model.params.flat());
    CHECK(back.standardizer.std == model.standardizer.std);
    const auto x = random_input(44, 40, 4);
    CHECK(net_forward(back.params, x, Mode::eval) == net_forward(model.params, x, Mode::eval));
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    const auto b = blobs(10, 2, 2.0, 1);
    const auto bytes = encode_checkpoint(svm_checkpoint(svm_train(b.x, b.y, 1.0, 5)));
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad[4] = 42;
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  }
}
