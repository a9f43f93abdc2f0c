#include "grunt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

namespace grunt {

using std::numbers::pi;

ClipStore::ClipStore(const ClipStore& other) {
  std::shared_lock lock(other.mutex_);
  clips_ = other.clips_;
}

ClipStore& ClipStore::operator=(const ClipStore& other) {
  if (this != &other) {
    std::scoped_lock lock(mutex_);
    std::shared_lock other_lock(other.mutex_);
    clips_ = other.clips_;
  }
  return *this;
}

void ClipStore::put(const std::string& clip_id, AudioClip clip) {
  std::unique_lock lock(mutex_);
  clips_.insert_or_assign(clip_id, std::move(clip));
}

AudioClip ClipStore::get(const std::string& clip_id) const {
  std::shared_lock lock(mutex_);
  const auto it = clips_.find(clip_id);
  if (it == clips_.end()) throw Error("clip store has no clip '" + clip_id + "'");
  return it->second;
}

bool ClipStore::contains(const std::string& clip_id) const {
  std::shared_lock lock(mutex_);
  return clips_.contains(clip_id);
}

std::vector<std::string> ClipStore::ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  out.reserve(clips_.size());
  for (const auto& [id, clip] : clips_) out.push_back(id);
  return out;
}

std::size_t ClipStore::size() const {
  std::shared_lock lock(mutex_);
  return clips_.size();
}

void ClipStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::shared_lock lock(mutex_);
  for (const auto& [id, clip] : clips_) write_wav(dir / (id + ".wav"), clip);
}

ClipStore ClipStore::load(const std::filesystem::path& dir, const DatasetManifest& manifest) {
  ClipStore store;
  for (const auto& r : manifest.records) {
    auto clip = read_wav(dir / (r.clip_id() + ".wav"));
    clip.source = r;
    store.put(r.clip_id(), std::move(clip));
  }
  return store;
}

void SyntheticSpec::validate() const {
  if (n_players < 1) throw ArgumentError("synthetic spec: need at least one player");
  if (clips_per_player < 2 || clips_per_player % 2 != 0) {
    throw ArgumentError("synthetic spec: clips per player must be even and >= 2 to balance score labels");
  }
  for (const auto& r : {f0_range_class_a, f0_range_class_b}) {
    if (!(r.lo > 0.0 && r.lo < r.hi)) throw ArgumentError("synthetic spec: invalid F0 range");
    if (r.hi > 1000.0) throw ArgumentError("synthetic spec: F0 range exceeds 1000 Hz");
  }
  if (separable && f0_range_class_a.lo <= f0_range_class_b.hi && f0_range_class_b.lo <= f0_range_class_a.hi) {
    throw ArgumentError("synthetic spec: F0 ranges must be disjoint for a separable corpus");
  }
  if (score_amplitude_effect < 0.0 || score_duration_effect < 0.0) {
    throw ArgumentError("synthetic spec: score effects must be non-negative");
  }
  if (sample_rate < 16000) throw ArgumentError("synthetic spec: sample rate must be >= 16 kHz");
}

namespace {

struct PlayerVoice {
  double f0_center = 0.0;
  double formants[3] = {};
  double bandwidths[3] = {};
  double noise_level = 0.0;
};

// Two-pole resonator, unity gain at its center frequency.
void resonate(std::vector<double>& x, double freq, double bandwidth, double rate) {
  const double r = std::exp(-pi * bandwidth / rate);
  const double theta = 2.0 * pi * freq / rate;
  const double a1 = 2.0 * r * std::cos(theta);
  const double a2 = -r * r;
  const double gain = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(2.0 * theta) + r * r);
  double y1 = 0.0, y2 = 0.0;
  for (double& v : x) {
    const double y = gain * v + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

void one_pole_lowpass(std::vector<double>& x, double pole) {
  double y = 0.0;
  for (double& v : x) {
    y = (1.0 - pole) * v + pole * y;
    v = y;
  }
}

/// One 1000 ms clip: voiced grunt plus background noise.
std::vector<double> render_grunt(const PlayerVoice& voice, double f0, bool scored, const SyntheticSpec& spec,
                                 Rng& rng) {
  const int rate = spec.sample_rate;
  const auto n = static_cast<std::size_t>(rate);
  std::vector<double> source(n, 0.0);

  // Band-limited pulse train with slight period jitter.
  constexpr int kHalf = 8;
  double t = rng.uniform(0.0, rate / f0);
  while (t < static_cast<double>(n)) {
    const auto center = static_cast<long>(std::floor(t));
    for (long k = center - kHalf + 1; k <= center + kHalf; ++k) {
      if (k < 0 || k >= static_cast<long>(n)) continue;
      const double u = static_cast<double>(k) - t;
      const double sinc = u == 0.0 ? 1.0 : std::sin(pi * u) / (pi * u);
      const double w = 0.5 + 0.5 * std::cos(pi * u / kHalf);
      source[static_cast<std::size_t>(k)] += sinc * w;
    }
    t += (rate / f0) * (1.0 + 0.004 * rng.normal());
  }
  one_pole_lowpass(source, 0.96);
  one_pole_lowpass(source, 0.96);
  for (int f = 0; f < 3; ++f) resonate(source, voice.formants[f], voice.bandwidths[f], rate);
  for (std::size_t i = n - 1; i > 0; --i) source[i] -= source[i - 1];  // lip radiation
  double peak = 0.0;
  for (double v : source) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : source) v /= peak;
  }

  // Amplitude envelope: raised-cosine attack, linear decay, raised-cosine release.
  const double amplitude = rng.uniform(0.55, 0.9) * (scored ? 1.0 + spec.score_amplitude_effect : 1.0);
  const double duration_s = rng.uniform(0.35, 0.5) * (scored ? 1.0 + spec.score_duration_effect : 1.0);
  const double onset_s = rng.uniform(0.08, 0.2);
  const double attack_s = 0.03;
  const double release_s = 0.08;
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double ts = static_cast<double>(i) / rate - onset_s;
    double env = 0.0;
    if (ts >= 0.0 && ts < duration_s) {
      if (ts < attack_s) {
        env = 0.5 - 0.5 * std::cos(pi * ts / attack_s);
      } else if (ts > duration_s - release_s) {
        env = 0.5 + 0.5 * std::cos(pi * (ts - (duration_s - release_s)) / release_s);
      } else {
        env = 1.0;
      }
      env *= 1.0 - 0.3 * ts / duration_s;
    }
    out[i] = amplitude * env * source[i];
  }

  // Court noise: low-passed white noise at a per-player level.
  std::vector<double> noise(n);
  for (double& v : noise) v = rng.normal();
  one_pole_lowpass(noise, 0.7);
  for (std::size_t i = 0; i < n; ++i) out[i] += voice.noise_level * noise[i];
  return out;
}

double quantize16(double s) { return std::clamp(std::nearbyint(s * 32768.0), -32768.0, 32767.0) / 32768.0; }

std::string two_digits(int i) { return (i < 10 ? "0" : "") + std::to_string(i); }

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticCorpus corpus;
  Rng master(spec.seed);
  for (int p = 0; p < spec.n_players; ++p) {
    Rng rng = master.fork(static_cast<std::uint64_t>(p));
    const Sex sex = p % 2 == 0 ? Sex::female : Sex::male;
    const Interval range = sex == Sex::female ? spec.f0_range_class_a : spec.f0_range_class_b;
    const std::string player_id = "p" + two_digits(p);
    const std::string recording_id = "rec_" + player_id;

    PlayerVoice voice;
    voice.f0_center = rng.uniform(range.lo, range.hi);
    voice.formants[0] = rng.uniform(600.0, 900.0);
    voice.formants[1] = rng.uniform(1100.0, 1600.0);
    voice.formants[2] = rng.uniform(2400.0, 3000.0);
    voice.bandwidths[0] = rng.uniform(80.0, 120.0);
    voice.bandwidths[1] = rng.uniform(100.0, 150.0);
    voice.bandwidths[2] = rng.uniform(150.0, 220.0);
    voice.noise_level = rng.uniform(0.004, 0.015);

    std::vector<Score> labels(static_cast<std::size_t>(spec.clips_per_player));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = i < labels.size() / 2 ? Score::scored : Score::not_scored;
    }
    rng.shuffle(labels);

    const double spread = (range.hi - range.lo) / 6.0;
    AudioClip recording;
    recording.sample_rate = spec.sample_rate;
    std::vector<double> clip_f0s;
    for (int c = 0; c < spec.clips_per_player; ++c) {
      const double f0 = std::clamp(voice.f0_center + rng.uniform(-spread, spread), range.lo, range.hi);
      clip_f0s.push_back(f0);
      const auto grunt = render_grunt(voice, f0, labels[static_cast<std::size_t>(c)] == Score::scored, spec, rng);
      recording.samples.insert(recording.samples.end(), grunt.begin(), grunt.end());

      AnnotationRecord r;
      r.recording_id = recording_id;
      r.player_id = player_id;
      r.start_ms = static_cast<std::int64_t>(c) * kClipDurationMs;
      r.duration_ms = kClipDurationMs;
      r.sex = sex;
      r.score = labels[static_cast<std::size_t>(c)];
      corpus.manifest.records.push_back(r);
    }
    recording = normalize_peak(recording);
    for (double& s : recording.samples) s = quantize16(s);

    const auto first = corpus.manifest.records.size() - static_cast<std::size_t>(spec.clips_per_player);
    for (int c = 0; c < spec.clips_per_player; ++c) {
      const auto& r = corpus.manifest.records[first + static_cast<std::size_t>(c)];
      corpus.clips.put(r.clip_id(), extract_clip(recording, r));
      corpus.clip_f0[r.clip_id()] = clip_f0s[static_cast<std::size_t>(c)];
    }
    corpus.manifest.audio_paths[recording_id] = std::filesystem::path("recordings") / (recording_id + ".wav");
    corpus.recordings.emplace(recording_id, std::move(recording));
  }
  return corpus;
}

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "recordings");
  {
    std::ofstream out(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / "manifest.csv").string());
    out << serialize_manifest(corpus.manifest);
  }
  for (const auto& [recording_id, recording] : corpus.recordings) {
    write_wav(dir / "recordings" / (recording_id + ".wav"), recording);
  }
  corpus.clips.save(dir / "clips");
}

}  // namespace grunt
