#include "grunt/learn/svm.hpp"

#include <cmath>
#include <numeric>

namespace grunt {

namespace {

void check_labels(const RowMatrix& x, std::span<const int> labels) {
  if (x.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw ArgumentError("svm: " + std::to_string(x.rows()) + " samples but " + std::to_string(labels.size()) +
                        " labels");
  }
  bool seen[2] = {false, false};
  for (int l : labels) {
    if (l != 0 && l != 1) throw ArgumentError("svm: labels must be class ids 0 or 1");
    seen[l] = true;
  }
  if (!seen[0] || !seen[1]) throw ArgumentError("svm: training data must contain both classes");
}

}  // namespace

SvmModel svm_train(const RowMatrix& x, std::span<const int> labels, double c, int iterations, std::uint64_t seed) {
  check_labels(x, labels);
  if (!(c > 0.0)) throw ArgumentError("svm: C must be positive");
  if (iterations < 1) throw ArgumentError("svm: need at least one iteration");
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const double lambda = 1.0 / (c * static_cast<double>(n));
  const double radius_sq = 1.0 / lambda;

  // w = scale * v, b = scale * vb
  Vector v = Vector::Zero(d);
  double vb = 0.0;
  double scale = 1.0;
  double v_norm_sq = 0.0;
  Vector sq_norms(n);
  for (Eigen::Index i = 0; i < n; ++i) sq_norms(i) = x.row(i).squaredNorm() + 1.0;

  Rng rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::uint64_t t = 0;
  for (int epoch = 0; epoch < iterations; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng.shuffle(order);
    for (const Eigen::Index i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double y = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
      const double dot = x.row(i).dot(v) + vb;
      const double margin = scale * dot;
      const double shrink = 1.0 - 1.0 / static_cast<double>(t);
      if (shrink <= 0.0) {
        v.setZero();
        vb = 0.0;
        scale = 1.0;
        v_norm_sq = 0.0;
      } else {
        scale *= shrink;
      }
      if (y * margin < 1.0) {
        const double a = eta * y / scale;
        v.noalias() += a * x.row(i).transpose();
        vb += a;
        // dot was taken before a possible reset; after a reset v was zero.
        const double base_dot = shrink <= 0.0 ? 0.0 : dot;
        v_norm_sq += 2.0 * a * base_dot + a * a * sq_norms(i);
      }
      const double w_norm_sq = scale * scale * v_norm_sq;
      if (w_norm_sq > radius_sq) scale *= std::sqrt(radius_sq / w_norm_sq);
      if (scale < 1e-9) {
        v *= scale;
        vb *= scale;
        scale = 1.0;
        v_norm_sq = v.squaredNorm() + vb * vb;
      }
    }
    v_norm_sq = v.squaredNorm() + vb * vb;
  }

  SvmModel model;
  model.weights = scale * v;
  model.bias = scale * vb;
  model.c_value = c;
  return model;
}

SvmPrediction svm_predict(const SvmModel& model, const RowMatrix& x) {
  if (x.cols() != model.weights.size()) {
    throw ArgumentError("svm_predict: model expects " + std::to_string(model.weights.size()) +
                        " features, got " + std::to_string(x.cols()));
  }
  SvmPrediction out;
  if (model.standardizer.empty()) {
    out.margins = x * model.weights;
  } else {
    out.margins = model.standardizer.apply(x) * model.weights;
  }
  out.margins.array() += model.bias;
  out.labels.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.labels[static_cast<std::size_t>(i)] = out.margins(i) > 0.0 ? 1 : 0;
  return out;
}

double svm_objective(const SvmModel& model, const RowMatrix& x, std::span<const int> labels) {
  check_labels(x, labels);
  const auto n = static_cast<double>(x.rows());
  const double lambda = 1.0 / (model.c_value * n);
  const Vector margins = (x * model.weights).array() + model.bias;
  double hinge = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double y = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - y * margins(i));
  }
  return 0.5 * lambda * (model.weights.squaredNorm() + model.bias * model.bias) + hinge / n;
}

}  // namespace grunt
