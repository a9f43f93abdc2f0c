#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grunt/dsp.hpp"
#include "grunt/lld.hpp"
#include "grunt/synth.hpp"

namespace grunt {

enum class FeatureKind { lld, mfcc, spectrogram, compare_functionals, egemaps_functionals };

std::string_view to_string(FeatureKind k);
FeatureKind parse_feature(std::string_view s);

/// Sequence features (T x D) feed the recurrent models and can be aggregated
/// for the SVM; functional features are already one vector per clip.
bool is_sequence(FeatureKind k);

/// Versioned identifier of what `extract_feature` produces for a kind.
std::string feature_schema_version(FeatureKind k);

/// Feature matrix of one 44.1 kHz clip. Functional features come back as a
/// 1 x N matrix. Shapes for a 1000 ms clip: lld 100 x 130, mfcc 44 x 40,
/// spectrogram 227 x 227, compare_functionals 1 x 986, egemaps 1 x 64.
FrameMatrix extract_feature(const AudioClip& clip, FeatureKind kind);

/// Content hash of a clip: sample rate and 16-bit quantized samples.
std::uint64_t clip_hash(const AudioClip& clip);

using FeatureTable = std::map<std::string, RowMatrix>;  // clip id -> features

// ---------------------------------------------------------------------------
// Binary feature cache.
//
// `<dir>/<feature>.grnt` holds concatenated records
//   "GRNT" | u16 version | u32 rows | u32 cols | rows*cols f64, row-major
// (all little-endian); `<dir>/<feature>.idx.json` maps clip id to offset,
// content hash and feature schema version.

inline constexpr std::uint16_t kCacheVersion = 1;

std::vector<std::uint8_t> encode_feature_record(const RowMatrix& m);
/// Decodes the record starting at `offset`; throws FormatError when corrupt.
RowMatrix decode_feature_record(std::span<const std::uint8_t> bytes, std::size_t offset);

struct CacheEntry {
  std::string clip_id;
  std::uint64_t offset = 0;
  std::uint64_t content_hash = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
};

class FeatureCache {
 public:
  /// Loads the index and data file if present; an absent cache is empty.
  FeatureCache(std::filesystem::path dir, FeatureKind kind);

  FeatureKind kind() const { return kind_; }
  std::size_t size() const { return entries_.size(); }

  /// The cached matrix if the entry exists with a matching content hash.
  std::optional<RowMatrix> lookup(const std::string& clip_id, std::uint64_t content_hash) const;

  /// Stages a (new or replaced) entry; written by `flush`.
  void store(const std::string& clip_id, std::uint64_t content_hash, const RowMatrix& m);

  /// Rewrites data and index atomically (temp file + rename) if anything
  /// was staged. Returns whether files were written.
  bool flush();

  std::filesystem::path data_path() const;
  std::filesystem::path index_path() const;

 private:
  std::filesystem::path dir_;
  FeatureKind kind_;
  std::map<std::string, CacheEntry> entries_;
  std::map<std::string, RowMatrix> values_;
  bool dirty_ = false;
};

struct ExtractStats {
  std::size_t computed = 0;
  std::size_t reused = 0;
};

/// Features for every manifest record, reusing up-to-date cache entries
/// when `cache_dir` is set. Clips are processed by up to `jobs` threads.
FeatureTable extract_features(const DatasetManifest& manifest, const ClipStore& clips, FeatureKind kind,
                              const std::optional<std::filesystem::path>& cache_dir, int jobs = 1,
                              ExtractStats* stats = nullptr);

}  // namespace grunt
