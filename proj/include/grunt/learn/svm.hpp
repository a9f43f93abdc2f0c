#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grunt/learn/standardize.hpp"

namespace grunt {

/// Linear SVM. Class id 1 is the positive side of the hyperplane; a margin
/// of exactly zero predicts class 0.
struct SvmModel {
  Vector weights;
  double bias = 0.0;
  double c_value = 1.0;
  Standardizer standardizer;  // applied by svm_predict when non-empty
};

/// Pegasos stochastic subgradient descent on
///   (lambda / 2) (|w|^2 + b^2) + (1 / N) sum hinge(y_i, w.x_i + b),
/// lambda = 1 / (C N), step 1 / (lambda t), with projection onto the ball of
/// radius 1 / sqrt(lambda). `iterations` counts epochs; each epoch visits a
/// fresh seeded permutation of the samples. Labels are class ids {0, 1}.
SvmModel svm_train(const RowMatrix& x, std::span<const int> labels, double c, int iterations = 1000,
                   std::uint64_t seed = 0);

struct SvmPrediction {
  std::vector<int> labels;
  Vector margins;
};

SvmPrediction svm_predict(const SvmModel& model, const RowMatrix& x);

/// Training objective of `svm_train` on already standardized data.
double svm_objective(const SvmModel& model, const RowMatrix& x, std::span<const int> labels);

}  // namespace grunt
