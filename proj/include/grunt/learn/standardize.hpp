#pragma once

#include <span>

#include "grunt/common.hpp"

namespace grunt {

/// Per-feature z-scoring. An empty standardizer is the identity.
struct Standardizer {
  Vector mean;
  Vector std;

  bool empty() const { return mean.size() == 0; }
  Eigen::Index dims() const { return mean.size(); }

  /// Rows are samples (or frames).
  RowMatrix apply(const RowMatrix& x) const;
};

inline constexpr double kStdFloor = 1e-8;

/// Column means and population standard deviations (floored at 1e-8) over
/// the rows of x. Needs at least two rows.
Standardizer standardize_fit(const RowMatrix& x);

/// Pools the frames of several T x D sequences into one fit.
Standardizer standardize_fit_frames(std::span<const RowMatrix> sequences);

}  // namespace grunt
