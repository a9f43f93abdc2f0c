#include "grunt/learn/standardize.hpp"

namespace grunt {

RowMatrix Standardizer::apply(const RowMatrix& x) const {
  if (empty()) return x;
  if (x.cols() != dims()) {
    throw ArgumentError("standardizer expects " + std::to_string(dims()) + " features, got " +
                        std::to_string(x.cols()));
  }
  return ((x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array()).matrix();
}

Standardizer standardize_fit(const RowMatrix& x) {
  if (x.rows() < 2) throw ArgumentError("standardize_fit: need at least 2 samples");
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  const RowMatrix centered = x.rowwise() - s.mean.transpose();
  s.std = (centered.array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt().transpose();
  s.std = s.std.cwiseMax(kStdFloor);
  return s;
}

Standardizer standardize_fit_frames(std::span<const RowMatrix> sequences) {
  if (sequences.empty()) throw ArgumentError("standardize_fit_frames: no sequences");
  const Eigen::Index d = sequences.front().cols();
  Eigen::Index rows = 0;
  for (const auto& s : sequences) {
    if (s.cols() != d) throw ArgumentError("standardize_fit_frames: inconsistent feature dimension");
    rows += s.rows();
  }
  RowMatrix all(rows, d);
  Eigen::Index at = 0;
  for (const auto& s : sequences) {
    all.middleRows(at, s.rows()) = s;
    at += s.rows();
  }
  return standardize_fit(all);
}

}  // namespace grunt
