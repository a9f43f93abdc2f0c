#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <shared_mutex>
#include <string>
#include <vector>

#include "grunt/ingest.hpp"

namespace grunt {

/// In-memory clip store keyed by clip id (`<recording_id>_<start_ms>`).
/// Concurrent readers, exclusive writers.
class ClipStore {
 public:
  ClipStore() = default;
  ClipStore(const ClipStore& other);
  ClipStore& operator=(const ClipStore& other);

  void put(const std::string& clip_id, AudioClip clip);
  /// Throws Error if the id is unknown.
  AudioClip get(const std::string& clip_id) const;
  bool contains(const std::string& clip_id) const;
  std::vector<std::string> ids() const;
  std::size_t size() const;

  /// Writes `<dir>/<clip_id>.wav` for every clip.
  void save(const std::filesystem::path& dir) const;
  /// Reads the clip of every manifest record from `<dir>/<clip_id>.wav`.
  static ClipStore load(const std::filesystem::path& dir, const DatasetManifest& manifest);

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, AudioClip> clips_;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
};

struct SyntheticSpec {
  int n_players = 20;
  int clips_per_player = 30;
  Interval f0_range_class_a{400.0, 600.0};  // female players
  Interval f0_range_class_b{150.0, 300.0};  // male players
  double score_amplitude_effect = 0.20;     // scored clips are this much louder
  double score_duration_effect = 0.10;      // and this much longer
  std::uint64_t seed = 7;
  int sample_rate = 44100;
  bool separable = true;

  /// Throws ArgumentError on invalid combinations.
  void validate() const;
};

struct SyntheticCorpus {
  DatasetManifest manifest;
  std::map<std::string, AudioClip> recordings;  // by recording id, one per player
  ClipStore clips;
  std::map<std::string, double> clip_f0;  // generated F0 per clip id
};

/// Deterministic synthetic grunt corpus. Each player gets one peak-normalized
/// recording of clips_per_player consecutive 1000 ms grunts (half scored),
/// quantized to 16-bit PCM so the in-memory store equals its WAV files.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

/// Writes manifest.csv, recordings/<recording_id>.wav and clips/<clip_id>.wav.
void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace grunt
