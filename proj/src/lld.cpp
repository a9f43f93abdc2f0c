#include "grunt/lld.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace grunt {

namespace {

constexpr int kFft = 512;
constexpr int kMelBands = 8;
constexpr double kTiny = 1e-12;

std::vector<std::string> make_base_names() {
  std::vector<std::string> n = {
      // energy
      "rms_energy", "log_energy", "zcr", "loudness_proxy",
      // spectral
      "spectral_centroid", "spectral_spread", "spectral_skewness", "spectral_kurtosis",
      "spectral_flux", "spectral_rolloff85", "spectral_entropy", "spectral_flatness",
      "spectral_slope", "band_energy_250_650", "band_energy_1k_4k"};
  for (int i = 0; i < kMelBands; ++i) n.push_back("mel_band_" + std::to_string(i));
  // voice
  for (const char* v : {"f0", "voicing_prob", "jitter_local", "jitter_ddp", "shimmer_local", "hnr_db"}) {
    n.emplace_back(v);
  }
  return n;
}

enum Col : int {
  kRms = 0,
  kLogEnergy,
  kZcr,
  kLoudness,
  kCentroid,
  kSpread,
  kSkewness,
  kKurtosis,
  kFlux,
  kRolloff,
  kEntropy,
  kFlatness,
  kSlope,
  kBandLow,
  kBandHigh,
  kMelFirst,
  kF0 = kMelFirst + kMelBands,
  kVoicing,
  kJitter,
  kJitterDdp,
  kShimmer,
  kHnr,
  kBaseCount
};

// Copies x[begin, begin + n) into out, zero outside the signal.
void copy_frame(std::span<const double> x, long begin, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const long k = begin + static_cast<long>(i);
    out[i] = (k >= 0 && k < static_cast<long>(x.size())) ? x[static_cast<std::size_t>(k)] : 0.0;
  }
}

double relative_change(double a, double b) {
  const double m = 0.5 * (a + b);
  return m > 0.0 ? std::abs(a - b) / m : 0.0;
}

}  // namespace

const std::vector<std::string>& lld_base_names() {
  static const std::vector<std::string> names = make_base_names();
  return names;
}

// ---------------------------------------------------------------------------
// Pitch

PitchEstimate f0_autocorrelation(std::span<const double> frame, double rate, const PitchOptions& o) {
  const auto n = static_cast<long>(frame.size());
  const long lag_min = std::max<long>(1, static_cast<long>(std::floor(rate / o.f_max)));
  const long lag_max = std::min<long>(n - 2, static_cast<long>(std::ceil(rate / o.f_min)));
  if (lag_max <= lag_min + 1) return {};

  std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
  for (long i = 0; i < n; ++i) prefix[static_cast<std::size_t>(i) + 1] = prefix[static_cast<std::size_t>(i)] + frame[static_cast<std::size_t>(i)] * frame[static_cast<std::size_t>(i)];
  if (prefix.back() < 1e-10) return {};

  // r(lag) over lag_min - 1 .. lag_max + 1 so that edge peaks can be tested.
  const long lo = lag_min - 1;
  const long hi = lag_max + 1;
  std::vector<double> r(static_cast<std::size_t>(hi - lo + 1), 0.0);
  for (long lag = lo; lag <= hi; ++lag) {
    const long len = n - lag;
    double acc = 0.0;
    for (long i = 0; i < len; ++i) acc += frame[static_cast<std::size_t>(i)] * frame[static_cast<std::size_t>(i + lag)];
    const double e0 = prefix[static_cast<std::size_t>(len)];
    const double e1 = prefix[static_cast<std::size_t>(n)] - prefix[static_cast<std::size_t>(lag)];
    const double denom = std::sqrt(e0 * e1);
    r[static_cast<std::size_t>(lag - lo)] = denom > kTiny ? acc / denom : 0.0;
  }
  auto at = [&](long lag) { return r[static_cast<std::size_t>(lag - lo)]; };

  std::vector<long> peaks;
  double best = -1.0;
  for (long lag = lag_min; lag <= lag_max; ++lag) {
    if (at(lag) > at(lag - 1) && at(lag) >= at(lag + 1)) {
      peaks.push_back(lag);
      best = std::max(best, at(lag));
    }
  }
  if (peaks.empty() || best < o.voicing_threshold) return {};
  long chosen = peaks.front();
  for (long lag : peaks) {
    if (at(lag) >= o.octave_ratio * best) {
      chosen = lag;
      break;
    }
  }
  // Parabolic refinement of the peak position.
  const double a = at(chosen - 1);
  const double b = at(chosen);
  const double c = at(chosen + 1);
  const double denom = a - 2.0 * b + c;
  double shift = denom < 0.0 ? 0.5 * (a - c) / denom : 0.0;
  shift = std::clamp(shift, -0.5, 0.5);
  PitchEstimate est;
  est.f0 = rate / (static_cast<double>(chosen) + shift);
  est.voicing = std::clamp(b, 0.0, 1.0);
  if (est.voicing < o.voicing_threshold) return {};
  return est;
}

double median_f0(const AudioClip& clip) {
  const int window = ms_to_samples(40.0, clip.sample_rate);
  const int hop = ms_to_samples(10.0, clip.sample_rate);
  std::vector<double> voiced;
  std::vector<double> buf(static_cast<std::size_t>(window));
  for (long start = 0; start + window <= static_cast<long>(clip.samples.size()); start += hop) {
    copy_frame(clip.samples, start, buf);
    const auto est = f0_autocorrelation(buf, clip.sample_rate);
    if (est.voiced()) voiced.push_back(est.f0);
  }
  if (voiced.empty()) return 0.0;
  std::sort(voiced.begin(), voiced.end());
  const std::size_t m = voiced.size() / 2;
  return voiced.size() % 2 ? voiced[m] : 0.5 * (voiced[m - 1] + voiced[m]);
}

// ---------------------------------------------------------------------------
// Frame-level descriptors

LldMatrix extract_llds(const AudioClip& clip, LldLayout layout) {
  if (clip.sample_rate != kLldRate) {
    throw ArgumentError("extract_llds: expected 16 kHz audio, got " + std::to_string(clip.sample_rate));
  }
  const auto n = static_cast<long>(clip.samples.size());
  if (n < kLldWindow) throw ArgumentError("extract_llds: clip shorter than one 25 ms window");
  const long frames = n / kLldHop;
  const int bins = kFft / 2 + 1;

  static const auto window = hann_window(kLldWindow);
  static const auto mel = mel_filterbank(kMelBands, kFft, kLldRate, 0.0, kLldRate / 2.0);

  RowMatrix base = RowMatrix::Zero(frames, kBaseCount);
  std::vector<double> raw(kLldWindow);
  std::vector<double> pitch_buf(kPitchWindow);
  std::vector<std::complex<double>> spec(kFft);
  Vector power(bins);
  Vector mag(bins);
  Vector prev_mag = Vector::Zero(bins);
  std::vector<double> freq(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) freq[static_cast<std::size_t>(k)] = static_cast<double>(k) * kLldRate / kFft;
  double freq_mean_khz = 0.0;
  for (double f : freq) freq_mean_khz += f / 1000.0;
  freq_mean_khz /= bins;
  double freq_var = 0.0;
  for (double f : freq) freq_var += (f / 1000.0 - freq_mean_khz) * (f / 1000.0 - freq_mean_khz);

  std::vector<double> periods(static_cast<std::size_t>(frames), 0.0);
  std::vector<double> amps(static_cast<std::size_t>(frames), 0.0);

  for (long t = 0; t < frames; ++t) {
    const long start = t * kLldHop;
    copy_frame(clip.samples, start, raw);
    auto row = base.row(t);

    // energy group
    double energy = 0.0;
    int crossings = 0;
    for (int i = 0; i < kLldWindow; ++i) {
      energy += raw[static_cast<std::size_t>(i)] * raw[static_cast<std::size_t>(i)];
      if (i > 0 && raw[static_cast<std::size_t>(i - 1)] * raw[static_cast<std::size_t>(i)] < 0.0) ++crossings;
    }
    const double rms = std::sqrt(energy / kLldWindow);
    row(kRms) = rms;
    row(kLogEnergy) = std::log1p(energy);
    row(kZcr) = static_cast<double>(crossings) / kLldWindow;
    row(kLoudness) = std::pow(rms, 0.6);

    // spectral group
    for (int i = 0; i < kFft; ++i) {
      spec[static_cast<std::size_t>(i)] = i < kLldWindow ? raw[static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)] : 0.0;
    }
    fft(spec);
    for (int k = 0; k < bins; ++k) {
      power(k) = std::norm(spec[static_cast<std::size_t>(k)]);
      mag(k) = std::sqrt(power(k));
    }
    const double total = power.sum();
    if (total > kTiny) {
      double centroid = 0.0;
      for (int k = 0; k < bins; ++k) centroid += freq[static_cast<std::size_t>(k)] * power(k);
      centroid /= total;
      double m2 = 0.0, m3 = 0.0, m4 = 0.0, entropy = 0.0, log_sum = 0.0;
      for (int k = 0; k < bins; ++k) {
        const double p = power(k) / total;
        const double d = freq[static_cast<std::size_t>(k)] - centroid;
        m2 += p * d * d;
        m3 += p * d * d * d;
        m4 += p * d * d * d * d;
        if (p > 0.0) entropy -= p * std::log2(p);
        log_sum += std::log(power(k) + kTiny);
      }
      row(kCentroid) = centroid;
      row(kSpread) = std::sqrt(m2);
      row(kSkewness) = m2 > kTiny ? m3 / std::pow(m2, 1.5) : 0.0;
      row(kKurtosis) = m2 > kTiny ? m4 / (m2 * m2) : 0.0;
      row(kEntropy) = entropy / std::log2(static_cast<double>(bins));
      row(kFlatness) = std::exp(log_sum / bins) / (total / bins + kTiny);
      double cumulative = 0.0;
      for (int k = 0; k < bins; ++k) {
        cumulative += power(k);
        if (cumulative >= 0.85 * total) {
          row(kRolloff) = freq[static_cast<std::size_t>(k)];
          break;
        }
      }
      double cov = 0.0;
      double db_mean = 0.0;
      for (int k = 0; k < bins; ++k) db_mean += 10.0 * std::log10(power(k) + kTiny);
      db_mean /= bins;
      for (int k = 0; k < bins; ++k) {
        cov += (freq[static_cast<std::size_t>(k)] / 1000.0 - freq_mean_khz) * (10.0 * std::log10(power(k) + kTiny) - db_mean);
      }
      row(kSlope) = cov / freq_var;  // dB per kHz
    }
    const double mag_sum = mag.sum();
    const Vector mag_norm = mag_sum > kTiny ? Vector(mag / mag_sum) : Vector(Vector::Zero(bins));
    row(kFlux) = t > 0 ? (mag_norm - prev_mag).norm() : 0.0;
    prev_mag = mag_norm;
    double low = 0.0, high = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double f = freq[static_cast<std::size_t>(k)];
      if (f >= 250.0 && f < 650.0) low += power(k);
      if (f >= 1000.0 && f < 4000.0) high += power(k);
    }
    row(kBandLow) = std::log1p(low);
    row(kBandHigh) = std::log1p(high);
    const Vector bands = mel.weights * power;
    for (int b = 0; b < kMelBands; ++b) row(kMelFirst + b) = std::log1p(bands(b));

    // voice group: pitch frame centered on the analysis frame
    copy_frame(clip.samples, start + kLldWindow / 2 - kPitchWindow / 2, pitch_buf);
    const auto est = f0_autocorrelation(pitch_buf, kLldRate);
    if (est.voiced()) {
      row(kF0) = est.f0;
      row(kVoicing) = est.voicing;
      const double r = std::clamp(est.voicing, 1e-4, 1.0 - 1e-4);
      row(kHnr) = 10.0 * std::log10(r / (1.0 - r));
      periods[static_cast<std::size_t>(t)] = 1.0 / est.f0;
      double e = 0.0;
      for (double s : pitch_buf) e += s * s;
      amps[static_cast<std::size_t>(t)] = std::sqrt(e / kPitchWindow);
    }
  }

  // Frame-based jitter / shimmer over consecutive voiced frames.
  for (long t = 1; t < frames; ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (periods[i] > 0.0 && periods[i - 1] > 0.0) {
      base(t, kJitter) = relative_change(periods[i], periods[i - 1]);
      base(t, kShimmer) = relative_change(amps[i], amps[i - 1]);
      if (t + 1 < frames && periods[i + 1] > 0.0) {
        const double mean_p = (periods[i - 1] + periods[i] + periods[i + 1]) / 3.0;
        base(t, kJitterDdp) = std::abs(periods[i + 1] - 2.0 * periods[i] + periods[i - 1]) / mean_p;
      }
    }
  }

  FrameMatrix m;
  m.values = std::move(base);
  m.frame_period_ms = 1000.0 * kLldHop / kLldRate;
  m.descriptor_names = lld_base_names();
  FrameMatrix out = deltas(m);
  if (layout == LldLayout::padded130) {
    const Eigen::Index used = out.values.cols();
    RowMatrix padded = RowMatrix::Zero(out.values.rows(), kLldPaddedDims);
    padded.leftCols(used) = out.values;
    out.values = std::move(padded);
    for (Eigen::Index c = used; c < kLldPaddedDims; ++c) {
      const auto idx = std::to_string(c - used);
      out.descriptor_names.push_back("reserved_" + std::string(2 - std::min<std::size_t>(2, idx.size()), '0') + idx);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contour transforms

FrameMatrix deltas(const FrameMatrix& m) {
  const Eigen::Index t_count = m.values.rows();
  const Eigen::Index d = m.values.cols();
  if (t_count < 2) throw ArgumentError("deltas: need at least 2 frames");
  FrameMatrix out;
  out.frame_period_ms = m.frame_period_ms;
  out.values.resize(t_count, 2 * d);
  out.values.leftCols(d) = m.values;
  auto clamp_row = [&](Eigen::Index t) { return std::clamp<Eigen::Index>(t, 0, t_count - 1); };
  for (Eigen::Index t = 0; t < t_count; ++t) {
    for (Eigen::Index c = 0; c < d; ++c) {
      double acc = 0.0;
      for (int k = 1; k <= 2; ++k) {
        acc += k * (m.values(clamp_row(t + k), c) - m.values(clamp_row(t - k), c));
      }
      out.values(t, d + c) = acc / 10.0;
    }
  }
  out.descriptor_names = m.descriptor_names;
  for (const auto& name : m.descriptor_names) out.descriptor_names.push_back(name + "_Δ");
  return out;
}

FrameMatrix smooth_moving_average(const FrameMatrix& m, int width) {
  if (width < 1 || width % 2 == 0) throw ArgumentError("smooth_moving_average: width must be odd");
  const Eigen::Index t_count = m.values.rows();
  const int half = width / 2;
  FrameMatrix out = m;
  for (Eigen::Index t = 0; t < t_count; ++t) {
    out.values.row(t).setZero();
    for (int k = -half; k <= half; ++k) {
      out.values.row(t) += m.values.row(std::clamp<Eigen::Index>(t + k, 0, t_count - 1));
    }
    out.values.row(t) /= width;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Functionals

namespace {

double percentile_sorted(const std::vector<double>& s, double p) {
  const double pos = p * static_cast<double>(s.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= s.size()) return s.back();
  return s[i] + frac * (s[i + 1] - s[i]);
}

struct Moments {
  double mean = 0.0;
  double std = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;
};

Moments moments(std::span<const double> x) {
  Moments m;
  const auto n = static_cast<double>(x.size());
  for (double v : x) m.mean += v;
  m.mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - m.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  m.std = std::sqrt(m2);
  // Zero-variance contours report zero shape statistics.
  if (m2 > 1e-24 * (1.0 + m.mean * m.mean)) {
    m.skewness = m3 / std::pow(m2, 1.5);
    m.kurtosis = m4 / (m2 * m2);
  }
  return m;
}

/// Least-squares line over frame indices 0..T-1.
std::pair<double, double> regression(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  const double t_mean = (n - 1.0) / 2.0;
  double x_mean = 0.0;
  for (double v : x) x_mean += v;
  x_mean /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double dt = static_cast<double>(t) - t_mean;
    sxy += dt * (x[t] - x_mean);
    sxx += dt * dt;
  }
  const double slope = sxy / sxx;
  return {slope, x_mean - slope * t_mean};
}

struct Peaks {
  std::size_t count = 0;
  double mean_value = 0.0;
};

Peaks find_peaks(std::span<const double> x) {
  Peaks p;
  double sum = 0.0;
  for (std::size_t t = 1; t + 1 < x.size(); ++t) {
    if (x[t] > x[t - 1] && x[t] > x[t + 1]) {
      ++p.count;
      sum += x[t];
    }
  }
  if (p.count > 0) p.mean_value = sum / static_cast<double>(p.count);
  return p;
}

std::vector<double> column(const FrameMatrix& m, Eigen::Index c) {
  std::vector<double> v(static_cast<std::size_t>(m.values.rows()));
  for (Eigen::Index t = 0; t < m.values.rows(); ++t) v[static_cast<std::size_t>(t)] = m.values(t, c);
  return v;
}

void check_functional_input(const FrameMatrix& m, const char* who) {
  if (m.values.rows() < 3) throw ArgumentError(std::string(who) + ": need at least 3 frames");
  if (m.frame_period_ms <= 0.0) throw ArgumentError(std::string(who) + ": frame period must be positive");
  if (static_cast<Eigen::Index>(m.descriptor_names.size()) != m.values.cols()) {
    throw ArgumentError(std::string(who) + ": descriptor names do not match columns");
  }
}

}  // namespace

const std::vector<std::string>& compare_functional_names() {
  static const std::vector<std::string> names = {
      "mean",     "stddev",   "min",      "max",       "range",     "pctl20",
      "pctl50",   "pctl80",   "iqr20_50", "iqr50_80",  "iqr20_80",  "slope",
      "offset",   "skewness", "kurtosis", "peak_rate", "peak_mean"};
  return names;
}

const std::vector<std::string>& egemaps_functional_names() {
  static const std::vector<std::string> names = {"mean",   "stddev",       "pctl20",            "pctl50",
                                                 "pctl80", "slope_per_s", "rising_slope_mean", "peak_rate"};
  return names;
}

const std::vector<std::string>& egemaps_channels() {
  static const std::vector<std::string> names = {"f0",           "loudness_proxy", "jitter_local",
                                                 "shimmer_local", "hnr_db",        "spectral_slope",
                                                 "band_energy_250_650", "band_energy_1k_4k"};
  return names;
}

FunctionalVector functionals_compare_like(const FrameMatrix& m) {
  check_functional_input(m, "functionals_compare_like");
  const auto& fn = compare_functional_names();
  const double seconds = static_cast<double>(m.values.rows()) * m.frame_period_ms / 1000.0;
  FunctionalVector out;
  out.schema_version = std::string(kCompareSchemaVersion);
  out.values.resize(m.values.cols() * static_cast<Eigen::Index>(fn.size()));
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
    const auto x = column(m, c);
    auto sorted = x;
    std::sort(sorted.begin(), sorted.end());
    const auto mo = moments(x);
    const auto [slope, offset] = regression(x);
    const auto peaks = find_peaks(x);
    const double p20 = percentile_sorted(sorted, 0.2);
    const double p50 = percentile_sorted(sorted, 0.5);
    const double p80 = percentile_sorted(sorted, 0.8);
    const double values[] = {mo.mean,    mo.std,      sorted.front(), sorted.back(), sorted.back() - sorted.front(),
                             p20,        p50,         p80,            p50 - p20,     p80 - p50,
                             p80 - p20,  slope,       offset,         mo.skewness,   mo.kurtosis,
                             static_cast<double>(peaks.count) / seconds, peaks.mean_value};
    for (std::size_t f = 0; f < fn.size(); ++f) {
      out.values(k++) = values[f];
      out.names.push_back(m.descriptor_names[static_cast<std::size_t>(c)] + "__" + fn[f]);
    }
  }
  return out;
}

FunctionalVector functionals_egemaps_like(const FrameMatrix& smoothed) {
  check_functional_input(smoothed, "functionals_egemaps_like");
  const auto& fn = egemaps_functional_names();
  const auto& channels = egemaps_channels();
  const double period_s = smoothed.frame_period_ms / 1000.0;
  const double seconds = static_cast<double>(smoothed.values.rows()) * period_s;
  FunctionalVector out;
  out.schema_version = std::string(kEgemapsSchemaVersion);
  out.values.resize(static_cast<Eigen::Index>(channels.size() * fn.size()));
  Eigen::Index k = 0;
  for (const auto& name : channels) {
    const auto it = std::find(smoothed.descriptor_names.begin(), smoothed.descriptor_names.end(), name);
    if (it == smoothed.descriptor_names.end()) {
      throw ArgumentError("functionals_egemaps_like: missing channel '" + name + "'");
    }
    const auto x = column(smoothed, it - smoothed.descriptor_names.begin());
    auto sorted = x;
    std::sort(sorted.begin(), sorted.end());
    const auto mo = moments(x);
    const auto [slope, offset] = regression(x);
    double rising = 0.0;
    std::size_t rising_n = 0;
    for (std::size_t t = 1; t < x.size(); ++t) {
      const double d = x[t] - x[t - 1];
      if (d > 0.0) {
        rising += d / period_s;
        ++rising_n;
      }
    }
    const double values[] = {mo.mean,
                             mo.std,
                             percentile_sorted(sorted, 0.2),
                             percentile_sorted(sorted, 0.5),
                             percentile_sorted(sorted, 0.8),
                             slope / period_s,
                             rising_n ? rising / static_cast<double>(rising_n) : 0.0,
                             static_cast<double>(find_peaks(x).count) / seconds};
    for (std::size_t f = 0; f < fn.size(); ++f) {
      out.values(k++) = values[f];
      out.names.push_back(name + "__" + fn[f]);
    }
  }
  return out;
}

std::string functional_schema_json(std::string_view schema_version, const std::vector<std::string>& names) {
  nlohmann::ordered_json j;
  j["schema"] = schema_version;
  j["dimension"] = names.size();
  j["names"] = names;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Aggregation

std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::mean: return "mean";
    case Aggregation::middle: return "middle";
    case Aggregation::flat: return "flat";
  }
  return "?";
}

Aggregation parse_aggregation(std::string_view s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "middle") return Aggregation::middle;
  if (s == "flat") return Aggregation::flat;
  throw ArgumentError("unknown aggregation '" + std::string(s) + "'");
}

AggregatedVector aggregate(const RowMatrix& m, Aggregation kind) {
  if (m.rows() < 1 || m.cols() < 1) throw ArgumentError("aggregate: empty matrix");
  AggregatedVector out;
  out.aggregation = kind;
  out.source_rows = m.rows();
  out.source_cols = m.cols();
  switch (kind) {
    case Aggregation::mean:
      out.values = m.colwise().mean().transpose();
      break;
    case Aggregation::middle:
      out.values = m.row(m.rows() / 2).transpose();
      break;
    case Aggregation::flat:
      out.values = Eigen::Map<const Vector>(m.data(), m.size());
      break;
  }
  return out;
}

}  // namespace grunt
