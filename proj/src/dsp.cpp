#include "grunt/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace grunt {

using std::numbers::pi;

void FrameMatrix::check() const {
  if (values.rows() < 1 || values.cols() < 1) throw ArgumentError("FrameMatrix: empty matrix");
  if (static_cast<Eigen::Index>(descriptor_names.size()) != values.cols()) {
    throw ArgumentError("FrameMatrix: " + std::to_string(descriptor_names.size()) +
                        " descriptor names for " + std::to_string(values.cols()) + " columns");
  }
  if (!values.allFinite()) throw ArgumentError("FrameMatrix: non-finite values");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void fft(std::span<std::complex<double>> data, bool inverse) {
  const std::size_t n = data.size();
  if (n == 0 || !std::has_single_bit(n)) throw ArgumentError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const double step = sign * 2.0 * pi / static_cast<double>(len);
    for (std::size_t k = 0; k < half; ++k) {
      const std::complex<double> w(std::cos(step * static_cast<double>(k)),
                                   std::sin(step * static_cast<double>(k)));
      for (std::size_t i = k; i < n; i += len) {
        const auto t = w * data[i + half];
        data[i + half] = data[i] - t;
        data[i] += t;
      }
    }
  }
  if (inverse) {
    for (auto& v : data) v /= static_cast<double>(n);
  }
}

std::vector<double> hann_window(int n) {
  if (n < 2) throw ArgumentError("hann_window: length must be >= 2");
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    w[static_cast<std::size_t>(k)] = 0.5 - 0.5 * std::cos(2.0 * pi * k / n);
  }
  return w;
}

int ms_to_samples(double ms, int sample_rate) {
  return static_cast<int>(std::lround(ms * sample_rate / 1000.0));
}

// ---------------------------------------------------------------------------
// Resampling

AudioClip resample(const AudioClip& clip, int target_rate, const ResampleOptions& options) {
  if (clip.samples.empty()) throw ArgumentError("resample: zero-length clip");
  if (target_rate <= 0 || clip.sample_rate <= 0) throw ArgumentError("resample: invalid rate");
  if (target_rate > clip.sample_rate) throw ArgumentError("resample: upsampling is not supported");
  if (target_rate == clip.sample_rate) return clip;

  const long g = std::gcd(static_cast<long>(target_rate), static_cast<long>(clip.sample_rate));
  const long up = target_rate / g;
  const long down = clip.sample_rate / g;
  const int half = options.taps_per_phase / 2;
  // Cutoff relative to the source rate, as a fraction of the source sample rate.
  const double fc = options.cutoff * target_rate / clip.sample_rate;
  const double i0_beta = std::cyl_bessel_i(0.0, options.kaiser_beta);

  // One tap table per fractional phase p/up. Tap j weights input index
  // floor(t) - half + 1 + j for output time t.
  std::vector<double> table(static_cast<std::size_t>(up) * options.taps_per_phase);
  for (long p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    double sum = 0.0;
    double* row = &table[static_cast<std::size_t>(p) * options.taps_per_phase];
    for (int j = 0; j < options.taps_per_phase; ++j) {
      const double u = frac - static_cast<double>(j - half + 1);  // t - k
      const double r = u / half;
      double w = 0.0;
      if (std::abs(r) < 1.0) {
        w = std::cyl_bessel_i(0.0, options.kaiser_beta * std::sqrt(1.0 - r * r)) / i0_beta;
      }
      const double x = 2.0 * fc * u;
      const double sinc = x == 0.0 ? 1.0 : std::sin(pi * x) / (pi * x);
      row[j] = 2.0 * fc * sinc * w;
      sum += row[j];
    }
    for (int j = 0; j < options.taps_per_phase; ++j) row[j] /= sum;
  }

  const auto n_in = static_cast<long>(clip.samples.size());
  const long n_out = (n_in * up + down - 1) / down;
  AudioClip out;
  out.sample_rate = target_rate;
  out.source = clip.source;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long n = 0; n < n_out; ++n) {
    const long num = n * down;
    const long base = num / up;
    const long phase = num % up;
    const double* row = &table[static_cast<std::size_t>(phase) * options.taps_per_phase];
    double acc = 0.0;
    const long first = base - half + 1;
    for (int j = 0; j < options.taps_per_phase; ++j) {
      const long k = first + j;
      if (k >= 0 && k < n_in) acc += row[j] * clip.samples[static_cast<std::size_t>(k)];
    }
    out.samples[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// STFT and spectrogram images

ComplexRowMatrix stft_samples(std::span<const double> x, int window, int hop, int fft_size) {
  if (window < 2 || hop <= 0) throw ArgumentError("stft: invalid window or hop");
  if (window > fft_size || !std::has_single_bit(static_cast<unsigned>(fft_size))) {
    throw ArgumentError("stft: fft_size must be a power of two >= window length");
  }
  if (static_cast<long>(x.size()) < window) throw ArgumentError("stft: clip shorter than one window");
  const auto frames = static_cast<Eigen::Index>((static_cast<long>(x.size()) - window) / hop + 1);
  const Eigen::Index bins = fft_size / 2 + 1;
  const auto w = hann_window(window);
  ComplexRowMatrix out(frames, bins);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(fft_size));
  for (Eigen::Index t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    const std::size_t start = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop);
    for (int i = 0; i < window; ++i) buf[static_cast<std::size_t>(i)] = x[start + i] * w[static_cast<std::size_t>(i)];
    fft(buf);
    for (Eigen::Index f = 0; f < bins; ++f) out(t, f) = buf[static_cast<std::size_t>(f)];
  }
  return out;
}

ComplexRowMatrix stft(const AudioClip& clip, double window_ms, double hop_ms, int fft_size) {
  if (clip.sample_rate <= 0) throw ArgumentError("stft: clip has no sample rate");
  if (hop_ms <= 0.0) throw ArgumentError("stft: hop must be positive");
  if (window_ms > 1000.0 * fft_size / clip.sample_rate) {
    throw ArgumentError("stft: window longer than the FFT");
  }
  return stft_samples(clip.samples, ms_to_samples(window_ms, clip.sample_rate),
                      ms_to_samples(hop_ms, clip.sample_rate), fft_size);
}

RowMatrix resize_bilinear(const RowMatrix& in, int rows, int cols) {
  if (in.rows() < 1 || in.cols() < 1 || rows < 1 || cols < 1) {
    throw ArgumentError("resize_bilinear: empty shape");
  }
  auto coord = [](int i, int n_out, Eigen::Index n_in) {
    if (n_out == 1 || n_in == 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
  };
  RowMatrix out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const double y = coord(r, rows, in.rows());
    const auto y0 = std::min(static_cast<Eigen::Index>(y), in.rows() - 1);
    const auto y1 = std::min(y0 + 1, in.rows() - 1);
    const double fy = y - static_cast<double>(y0);
    for (int c = 0; c < cols; ++c) {
      const double x = coord(c, cols, in.cols());
      const auto x0 = std::min(static_cast<Eigen::Index>(x), in.cols() - 1);
      const auto x1 = std::min(x0 + 1, in.cols() - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = in(y0, x0) * (1.0 - fx) + in(y0, x1) * fx;
      const double bottom = in(y1, x0) * (1.0 - fx) + in(y1, x1) * fx;
      out(r, c) = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

SpectrogramImage spectrogram_image(const AudioClip& clip) {
  constexpr double kWindowMs = 16.0;
  constexpr double kHopMs = 8.0;
  const int window = ms_to_samples(kWindowMs, clip.sample_rate);
  const int fft_size = static_cast<int>(std::bit_ceil(static_cast<unsigned>(std::max(window, 2))));
  const auto spec = stft(clip, kWindowMs, kHopMs, fft_size);
  const RowMatrix logmag = spec.cwiseAbs().array().log1p().matrix();
  RowMatrix img = resize_bilinear(logmag, kImageSide, kImageSide);
  const double lo = img.minCoeff();
  const double hi = img.maxCoeff();
  if (!(hi - lo >= 1e-6)) {
    throw ArgumentError("spectrogram_image: constant image (range " + std::to_string(hi - lo) + ")");
  }
  SpectrogramImage out;
  out.values = (img.array() - lo) / (hi - lo);
  out.source_window_ms = kWindowMs;
  out.source_hop_ms = kHopMs;
  return out;
}

// ---------------------------------------------------------------------------
// Mel filterbank, DCT, MFCC

MelFilterbank mel_filterbank(int n_filters, int fft_size, double sample_rate, double f_min, double f_max) {
  if (n_filters < 1) throw ArgumentError("mel_filterbank: need at least one filter");
  if (f_min >= f_max) throw ArgumentError("mel_filterbank: f_min must be below f_max");
  if (f_min < 0.0 || f_max > sample_rate / 2.0 + 1e-9) {
    throw ArgumentError("mel_filterbank: band must lie within [0, Nyquist]");
  }
  if (fft_size < 2) throw ArgumentError("mel_filterbank: invalid fft size");
  MelFilterbank fb;
  fb.n_filters = n_filters;
  fb.fft_size = fft_size;
  fb.sample_rate = sample_rate;
  fb.f_min = f_min;
  fb.f_max = f_max;
  const int bins = fft_size / 2 + 1;
  const double m_lo = hz_to_mel(f_min);
  const double m_hi = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<std::size_t>(n_filters) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / (n_filters + 1));
  }
  fb.weights = RowMatrix::Zero(n_filters, bins);
  for (int m = 0; m < n_filters; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double right = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = k * sample_rate / fft_size;
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      fb.weights(m, k) = std::max(0.0, std::min(rise, fall));
    }
    if (fb.weights.row(m).sum() <= 0.0) {
      throw ArgumentError("mel_filterbank: filter " + std::to_string(m) +
                          " covers no FFT bin; use fewer filters or a larger FFT");
    }
  }
  return fb;
}

namespace {

RowMatrix dct_basis(Eigen::Index m, Eigen::Index n_out) {
  // basis(j, k) so that coeffs = rows * basis
  RowMatrix basis(m, n_out);
  const double s0 = std::sqrt(1.0 / static_cast<double>(m));
  const double sk = std::sqrt(2.0 / static_cast<double>(m));
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index k = 0; k < n_out; ++k) {
      basis(j, k) = (k == 0 ? s0 : sk) *
                    std::cos(pi * static_cast<double>(k) * (2.0 * static_cast<double>(j) + 1.0) /
                             (2.0 * static_cast<double>(m)));
    }
  }
  return basis;
}

}  // namespace

RowMatrix dct_ii(const RowMatrix& m, int n_out) {
  if (n_out < 1 || n_out > m.cols()) throw ArgumentError("dct_ii: n_out must be in [1, M]");
  return m * dct_basis(m.cols(), n_out);
}

RowMatrix idct_ii(const RowMatrix& coeffs) {
  // The orthonormal basis is orthogonal, so its transpose inverts it.
  return coeffs * dct_basis(coeffs.cols(), coeffs.cols()).transpose();
}

FrameMatrix mfcc(const AudioClip& clip, const MfccOptions& o) {
  if (clip.sample_rate != 44100) {
    throw ArgumentError("mfcc: expected 44100 Hz audio, got " + std::to_string(clip.sample_rate));
  }
  const double dur = clip.duration_ms();
  if (dur < 995.0 || dur > 1005.0) {
    throw ArgumentError("mfcc: expected a 1000 ms clip, got " + std::to_string(dur) + " ms");
  }
  // Centered frames: reflect-pad fft_size / 2 on both sides.
  const int pad = o.fft_size / 2;
  const auto n = static_cast<int>(clip.samples.size());
  std::vector<double> padded(static_cast<std::size_t>(n + 2 * pad));
  for (int i = 0; i < n + 2 * pad; ++i) {
    int src = i - pad;
    if (src < 0) src = -src;
    if (src >= n) src = 2 * (n - 1) - src;
    padded[static_cast<std::size_t>(i)] = clip.samples[static_cast<std::size_t>(src)];
  }
  const auto spec = stft_samples(padded, o.fft_size, o.hop, o.fft_size);
  const RowMatrix power = spec.cwiseAbs2();
  const auto fb = mel_filterbank(o.n_mels, o.fft_size, clip.sample_rate, o.f_min, o.f_max);
  const RowMatrix mel = power * fb.weights.transpose();
  const RowMatrix logmel = mel.array().max(o.log_floor).log().matrix();
  FrameMatrix out;
  out.values = dct_ii(logmel, o.n_mfcc);
  out.frame_period_ms = 1000.0 * o.hop / clip.sample_rate;
  for (int i = 0; i < o.n_mfcc; ++i) out.descriptor_names.push_back("mfcc_" + std::to_string(i));
  return out;
}

}  // namespace grunt
