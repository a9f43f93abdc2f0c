#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grunt/common.hpp"

namespace grunt {

// Class ids follow declaration order: female=0, male=1; scored=0, not_scored=1.
enum class Sex : int { female = 0, male = 1 };
enum class Score : int { scored = 0, not_scored = 1 };

std::string_view to_string(Sex s);
std::string_view to_string(Score s);
Sex parse_sex(std::string_view s);
Score parse_score(std::string_view s);

inline constexpr int kClipDurationMs = 1000;

struct AnnotationRecord {
  std::string recording_id;
  std::string player_id;
  std::int64_t start_ms = 0;
  std::int64_t duration_ms = kClipDurationMs;
  Sex sex = Sex::female;
  Score score = Score::scored;

  /// `<recording_id>_<start_ms>`, also the clip-store file stem.
  std::string clip_id() const;

  bool operator==(const AnnotationRecord&) const = default;
};

struct DatasetManifest {
  std::vector<AnnotationRecord> records;
  std::map<std::string, std::filesystem::path> audio_paths;

  bool operator==(const DatasetManifest&) const = default;
};

inline constexpr std::string_view kManifestHeader =
    "recording_id,player_id,start_ms,duration_ms,sex,score";

/// Parses the line-oriented CSV manifest. Errors carry the 1-based line number.
DatasetManifest parse_manifest(std::string_view text);

/// Canonical form: header, one record per line, LF endings, trailing newline.
std::string serialize_manifest(const DatasetManifest& manifest);

/// Reads a manifest file; recordings resolve to `<manifest dir>/recordings/`.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Maps each recording id to `<dir>/<recording_id>.wav`.
void resolve_audio_paths(DatasetManifest& manifest, const std::filesystem::path& dir);

struct PlayerSummary {
  std::string player_id;
  Sex sex = Sex::female;
  std::size_t clips = 0;
  std::size_t scored = 0;
  std::size_t not_scored = 0;
  std::size_t recordings = 0;
};

struct ValidationReport {
  std::vector<PlayerSummary> players;  // first-appearance order
  std::size_t total_records = 0;
  std::size_t female_players = 0;
  std::size_t male_players = 0;
  std::vector<std::string> violations;
  std::vector<std::string> warnings;

  bool ok() const { return violations.empty(); }
  std::string to_text() const;
};

ValidationReport validate_manifest(const DatasetManifest& manifest);

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;
  std::optional<AnnotationRecord> source;

  double duration_ms() const {
    return sample_rate > 0 ? 1000.0 * static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// RIFF/WAVE linear PCM 16-bit, mono or stereo. Stereo is averaged to mono.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip read_wav(const std::filesystem::path& path);

/// 16-bit mono PCM. Samples are clamped to [-1, 1] and rounded to the nearest
/// integer step of 1/32768.
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Cuts the annotated 1000 ms window out of a full recording.
AudioClip extract_clip(const AudioClip& recording, const AnnotationRecord& record);

/// Scales the clip so that max |sample| == 1. Throws on an all-zero clip.
AudioClip normalize_peak(const AudioClip& clip);

}  // namespace grunt
