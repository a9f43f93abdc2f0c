#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "grunt/common.hpp"
#include "grunt/ingest.hpp"

namespace grunt {

using ComplexRowMatrix =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Time-indexed feature contours: T frames x D descriptors.
struct FrameMatrix {
  RowMatrix values;
  double frame_period_ms = 0.0;
  std::vector<std::string> descriptor_names;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }

  /// Throws ArgumentError if the shape, names or values are inconsistent.
  void check() const;
};

inline constexpr int kImageSide = 227;

/// 227 x 227 log-magnitude image, rows = time, columns = frequency.
struct SpectrogramImage {
  RowMatrix values;
  double source_window_ms = 16.0;
  double source_hop_ms = 8.0;
};

struct MelFilterbank {
  int n_filters = 0;
  int fft_size = 0;
  double sample_rate = 0.0;
  double f_min = 0.0;
  double f_max = 0.0;
  RowMatrix weights;  // n_filters x (fft_size / 2 + 1)
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// In-place radix-2 FFT. `data.size()` must be a power of two.
void fft(std::span<std::complex<double>> data, bool inverse = false);

/// Periodic (DFT-even) Hann window of length n.
std::vector<double> hann_window(int n);

/// Rational-ratio Kaiser-windowed sinc resampler.
struct ResampleOptions {
  int taps_per_phase = 64;
  double cutoff = 0.45;  // fraction of the target rate
  double kaiser_beta = 5.65;
};
AudioClip resample(const AudioClip& clip, int target_rate, const ResampleOptions& options = {});

/// Window and hop in samples for a given rate: round(ms * rate / 1000).
int ms_to_samples(double ms, int sample_rate);

/// STFT with a periodic Hann window zero-padded to fft_size. No centering:
/// T = floor((N - W) / H) + 1, F = fft_size / 2 + 1.
ComplexRowMatrix stft(const AudioClip& clip, double window_ms, double hop_ms, int fft_size);

/// Same framing as `stft` but with explicit sample counts.
ComplexRowMatrix stft_samples(std::span<const double> x, int window, int hop, int fft_size);

/// Log-magnitude 16 ms / 8 ms spectrogram bilinearly resized to 227 x 227 and
/// min-max normalized. Throws on a constant image.
SpectrogramImage spectrogram_image(const AudioClip& clip);

/// Bilinear resize with align-corners sampling (corner pixels map to corners).
RowMatrix resize_bilinear(const RowMatrix& in, int rows, int cols);

MelFilterbank mel_filterbank(int n_filters, int fft_size, double sample_rate, double f_min, double f_max);

/// Orthonormal DCT-II along each row, keeping the first n_out coefficients.
RowMatrix dct_ii(const RowMatrix& m, int n_out);

/// Inverse of the full orthonormal DCT-II (i.e. orthonormal DCT-III).
RowMatrix idct_ii(const RowMatrix& coeffs);

struct MfccOptions {
  int fft_size = 2048;
  int hop = 1024;
  int n_mels = 128;
  int n_mfcc = 40;
  double f_min = 0.0;
  double f_max = 22050.0;
  double log_floor = 1e-10;
};

/// 40 MFCCs on 44.1 kHz audio: centered frames (reflect padding), periodic
/// Hann, power spectrum, 128 mel filters, natural log, orthonormal DCT-II.
/// A 1000 ms clip gives 44 x 40.
FrameMatrix mfcc(const AudioClip& clip, const MfccOptions& options = {});

}  // namespace grunt
