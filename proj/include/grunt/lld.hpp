#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grunt/dsp.hpp"

namespace grunt {

/// Frame-level descriptors at a 10 ms period. Same storage as FrameMatrix;
/// the alias marks matrices whose columns follow `lld_base_names()`.
using LldMatrix = FrameMatrix;

enum class LldLayout {
  /// 29 base descriptors followed by their 29 deltas (D = 58).
  reduced,
  /// `reduced` followed by zero-valued reserved channels up to D = 130.
  padded130,
};

inline constexpr int kLldRate = 16000;
inline constexpr int kLldWindow = 400;       // 25 ms
inline constexpr int kLldHop = 160;          // 10 ms
inline constexpr int kPitchWindow = 640;     // 40 ms, >= 2 * rate / 60 Hz
inline constexpr int kLldPaddedDims = 130;
inline constexpr double kVoicingThreshold = 0.45;

/// Base descriptor names in column order: energy group, spectral group,
/// voice group.
const std::vector<std::string>& lld_base_names();

/// Frames are [t*160, t*160 + 400) samples, zero-padded past the end,
/// T = floor(N / 160). A 1000 ms clip gives 100 frames.
LldMatrix extract_llds(const AudioClip& clip, LldLayout layout = LldLayout::padded130);

struct PitchEstimate {
  double f0 = 0.0;       // Hz, 0 when unvoiced
  double voicing = 0.0;  // peak normalized autocorrelation, 0 when unvoiced
  bool voiced() const { return f0 > 0.0; }
};

struct PitchOptions {
  double f_min = 60.0;
  double f_max = 1200.0;
  double voicing_threshold = kVoicingThreshold;
  /// The shortest-lag peak within this fraction of the best peak wins.
  double octave_ratio = 0.97;
};

/// Normalized autocorrelation pitch estimate over one analysis frame.
PitchEstimate f0_autocorrelation(std::span<const double> frame, double rate,
                                 const PitchOptions& options = {});

/// Median F0 over voiced frames of a clip at any rate (0 if none voiced).
double median_f0(const AudioClip& clip);

/// Regression deltas with half-width 2 and replicated edges; returns the
/// input channels followed by their deltas (suffix "_Δ").
FrameMatrix deltas(const FrameMatrix& m);

/// Centered moving average of odd width with replicated edges.
FrameMatrix smooth_moving_average(const FrameMatrix& m, int width = 3);

struct FunctionalVector {
  Vector values;
  std::vector<std::string> names;  // "<channel>__<functional>"
  std::string schema_version;
};

inline constexpr std::string_view kCompareSchemaVersion = "compare_like/1";
inline constexpr std::string_view kEgemapsSchemaVersion = "egemaps_like/1";

/// Functional names of the ComParE-like battery, in order.
const std::vector<std::string>& compare_functional_names();
/// Functional names of the eGeMAPS-like battery, in order.
const std::vector<std::string>& egemaps_functional_names();
/// Channels the eGeMAPS-like battery reads.
const std::vector<std::string>& egemaps_channels();

/// 17 statistics per channel (T >= 3). Slope and offset are per frame.
FunctionalVector functionals_compare_like(const FrameMatrix& m);

/// 8 statistics over the prosodic / voice-quality channel subset of an
/// already smoothed LLD matrix (T >= 3). Slopes are per second.
FunctionalVector functionals_egemaps_like(const FrameMatrix& smoothed);

/// Published schema: {"schema": version, "dimension": n, "names": [...]}.
std::string functional_schema_json(std::string_view schema_version, const std::vector<std::string>& names);

enum class Aggregation { mean, middle, flat };
std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view s);

struct AggregatedVector {
  Vector values;
  Aggregation aggregation = Aggregation::mean;
  Eigen::Index source_rows = 0;
  Eigen::Index source_cols = 0;
};

AggregatedVector aggregate(const RowMatrix& m, Aggregation kind);
inline AggregatedVector aggregate(const FrameMatrix& m, Aggregation kind) { return aggregate(m.values, kind); }

}  // namespace grunt
