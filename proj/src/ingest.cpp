#include "grunt/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace grunt {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string_view to_string(Sex s) { return s == Sex::female ? "female" : "male"; }
std::string_view to_string(Score s) { return s == Score::scored ? "scored" : "not_scored"; }

Sex parse_sex(std::string_view s) {
  if (s == "female") return Sex::female;
  if (s == "male") return Sex::male;
  throw FormatError("unknown sex value '" + std::string(s) + "'");
}

Score parse_score(std::string_view s) {
  if (s == "scored") return Score::scored;
  if (s == "not_scored") return Score::not_scored;
  throw FormatError("unknown score value '" + std::string(s) + "'");
}

std::string AnnotationRecord::clip_id() const {
  return recording_id + "_" + std::to_string(start_ms);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

std::int64_t parse_int(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw FormatError(std::string(what) + " is not an integer: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest manifest;
  std::set<std::pair<std::string, std::int64_t>> seen;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (!header_seen) {
      if (line != kManifestHeader) {
        throw FormatError(where + "expected header '" + std::string(kManifestHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 6) {
      throw FormatError(where + "expected 6 fields, got " + std::to_string(f.size()));
    }
    try {
      AnnotationRecord r;
      r.recording_id = std::string(f[0]);
      r.player_id = std::string(f[1]);
      r.start_ms = parse_int(f[2], "start_ms");
      r.duration_ms = parse_int(f[3], "duration_ms");
      r.sex = parse_sex(f[4]);
      r.score = parse_score(f[5]);
      if (r.recording_id.empty()) throw FormatError("recording_id is empty");
      if (r.player_id.empty()) throw FormatError("player_id is empty");
      if (r.start_ms < 0) throw FormatError("start_ms must be >= 0");
      if (r.duration_ms != kClipDurationMs) throw FormatError("duration must be 1000 ms");
      if (!seen.emplace(r.recording_id, r.start_ms).second) {
        throw FormatError("duplicate record " + r.clip_id());
      }
      manifest.records.push_back(std::move(r));
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    }
  }
  if (!header_seen) throw FormatError("line 1: missing manifest header");
  return manifest;
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& r : manifest.records) {
    out += r.recording_id;
    out += ',';
    out += r.player_id;
    out += ',';
    out += std::to_string(r.start_ms);
    out += ',';
    out += std::to_string(r.duration_ms);
    out += ',';
    out += to_string(r.sex);
    out += ',';
    out += to_string(r.score);
    out += '\n';
  }
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto m = parse_manifest(ss.str());
  resolve_audio_paths(m, path.parent_path() / "recordings");
  return m;
}

void resolve_audio_paths(DatasetManifest& manifest, const std::filesystem::path& dir) {
  manifest.audio_paths.clear();
  for (const auto& r : manifest.records) {
    manifest.audio_paths.emplace(r.recording_id, dir / (r.recording_id + ".wav"));
  }
}

ValidationReport validate_manifest(const DatasetManifest& manifest) {
  ValidationReport report;
  report.total_records = manifest.records.size();
  std::unordered_map<std::string, std::size_t> index;
  std::unordered_map<std::string, std::set<std::string>> recordings;
  for (const auto& r : manifest.records) {
    auto [it, inserted] = index.emplace(r.player_id, report.players.size());
    if (inserted) {
      report.players.push_back({r.player_id, r.sex, 0, 0, 0, 0});
    }
    auto& p = report.players[it->second];
    if (p.sex != r.sex) {
      report.violations.push_back("player " + r.player_id + " has records with both sexes");
    }
    ++p.clips;
    (r.score == Score::scored ? p.scored : p.not_scored) += 1;
    recordings[r.player_id].insert(r.recording_id);
    if (!manifest.audio_paths.empty() && !manifest.audio_paths.contains(r.recording_id)) {
      report.violations.push_back("recording " + r.recording_id + " has no audio path");
    }
  }
  for (auto& p : report.players) {
    p.recordings = recordings[p.player_id].size();
    (p.sex == Sex::female ? report.female_players : report.male_players) += 1;
    if (p.scored != p.not_scored) {
      report.violations.push_back("player " + p.player_id + " has unbalanced score labels (" +
                                  std::to_string(p.scored) + " scored / " +
                                  std::to_string(p.not_scored) + " not_scored)");
    }
    if (p.recordings != 1) {
      report.violations.push_back("player " + p.player_id + " spans " +
                                  std::to_string(p.recordings) + " recordings");
    }
  }
  if (report.players.empty()) report.warnings.push_back("manifest has no players");
  return report;
}

std::string ValidationReport::to_text() const {
  std::ostringstream os;
  os << "players: " << players.size() << " (" << female_players << " female, " << male_players
     << " male), records: " << total_records << "\n";
  for (const auto& p : players) {
    os << "  " << p.player_id << " " << to_string(p.sex) << " clips=" << p.clips
       << " scored=" << p.scored << " not_scored=" << p.not_scored << "\n";
  }
  for (const auto& w : warnings) os << "warning: " << w << "\n";
  for (const auto& v : violations) os << "violation: " << v << "\n";
  os << (ok() ? "OK" : "FAILED") << " (" << violations.size() << " violations)\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// WAV

namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return std::uint32_t{b[at]} | (std::uint32_t{b[at + 1]} << 8) | (std::uint32_t{b[at + 2]} << 16) |
         (std::uint32_t{b[at + 3]} << 24);
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::equal(tag, tag + 4, b.begin() + static_cast<std::ptrdiff_t>(at));
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw FormatError("truncated WAV stream: no RIFF header");
  if (!tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw FormatError("not a RIFF/WAVE stream");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (tag_is(bytes, pos, "fmt ")) {
      if (size < 16 || body + 16 > bytes.size()) throw FormatError("truncated WAV fmt chunk");
      std::uint16_t format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      if (format == 0xFFFE && size >= 40) {  // WAVE_FORMAT_EXTENSIBLE
        format = read_u16(bytes, body + 24);
      }
      if (format != 1) throw FormatError("unsupported WAV codec " + std::to_string(format));
      if (bits != 16) throw FormatError("unsupported bit depth " + std::to_string(bits));
      if (channels != 1 && channels != 2) {
        throw FormatError("unsupported channel count " + std::to_string(channels));
      }
      if (rate == 0) throw FormatError("WAV sample rate is zero");
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) throw FormatError("WAV data chunk precedes fmt chunk");
      if (body + size > bytes.size()) throw FormatError("truncated WAV data chunk");
      const std::size_t frame_bytes = 2u * channels;
      const std::size_t frames = size / frame_bytes;
      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const auto raw = static_cast<std::int16_t>(read_u16(bytes, body + i * frame_bytes + 2 * c));
          acc += raw / 32768.0;
        }
        clip.samples[i] = acc / channels;
      }
      return clip;
    }
    pos = body + size + (size & 1u);
  }
  throw FormatError(have_fmt ? "truncated WAV stream: no data chunk" : "truncated WAV stream: no fmt chunk");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open audio file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw ArgumentError("encode_wav: invalid sample rate");
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * n);
  put_tag(out, "RIFF");
  put_u32(out, 36 + 2 * n);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, 2 * n);
  for (double s : clip.samples) {
    const double scaled = std::nearbyint(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

AudioClip extract_clip(const AudioClip& recording, const AnnotationRecord& record) {
  if (recording.sample_rate <= 0) throw ArgumentError("extract_clip: recording has no sample rate");
  const auto rate = static_cast<std::int64_t>(recording.sample_rate);
  // Integer arithmetic keeps adjacent windows exactly contiguous.
  const std::int64_t begin = (record.start_ms * rate + 500) / 1000;
  const std::int64_t count = (record.duration_ms * rate + 500) / 1000;
  if (record.start_ms < 0 || begin + count > static_cast<std::int64_t>(recording.samples.size())) {
    throw std::out_of_range("extract_clip: window " + record.clip_id() + " exceeds recording of " +
                            std::to_string(recording.samples.size()) + " samples");
  }
  AudioClip clip;
  clip.sample_rate = recording.sample_rate;
  clip.samples.assign(recording.samples.begin() + begin, recording.samples.begin() + begin + count);
  clip.source = record;
  return clip;
}

AudioClip normalize_peak(const AudioClip& clip) {
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0) throw ArgumentError("silent clip");
  AudioClip out = clip;
  if (peak == 1.0) return out;
  for (double& s : out.samples) s /= peak;
  return out;
}

}  // namespace grunt
