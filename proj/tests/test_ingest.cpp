#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <functional>
#include <cstring>
#include <thread>

#include "grunt/ingest.hpp"
#include "grunt/lld.hpp"
#include "grunt/synth.hpp"
#include "support.hpp"

using namespace grunt;

namespace {

/// Hand-assembled RIFF/WAVE stream, independent of encode_wav.
std::vector<std::uint8_t> wav_bytes(const std::vector<std::int16_t>& interleaved, int channels, int rate,
                                    int bits = 16, int format = 1) {
  std::vector<std::uint8_t> b;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto u16 = [&](std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto tag = [&](const char* t) { b.insert(b.end(), t, t + 4); };
  const auto data_size = static_cast<std::uint32_t>(interleaved.size() * 2);
  tag("RIFF");
  u32(36 + data_size);
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(static_cast<std::uint16_t>(format));
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate * channels * bits / 8));
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(static_cast<std::uint16_t>(bits));
  tag("data");
  u32(data_size);
  for (auto s : interleaved) u16(static_cast<std::uint16_t>(s));
  return b;
}

AnnotationRecord record(std::string rec, std::string player, std::int64_t start, Sex sex = Sex::female,
                        Score score = Score::scored) {
  AnnotationRecord r;
  r.recording_id = std::move(rec);
  r.player_id = std::move(player);
  r.start_ms = start;
  r.sex = sex;
  r.score = score;
  return r;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("manifest") {
  TEST_CASE("one-line manifest parses to one record") {
    const auto m = parse_manifest("recording_id,player_id,start_ms,duration_ms,sex,score\nr1,p1,0,1000,female,scored\n");
    REQUIRE(m.records.size() == 1);
    CHECK(m.records[0].recording_id == "r1");
    CHECK(m.records[0].player_id == "p1");
    CHECK(m.records[0].sex == Sex::female);
    CHECK(m.records[0].score == Score::scored);
    CHECK(m.records[0].clip_id() == "r1_0");
  }

  TEST_CASE("duration other than 1000 ms is rejected") {
    const auto msg = error_of([] {
      parse_manifest("recording_id,player_id,start_ms,duration_ms,sex,score\nr1,p1,0,900,male,scored\n");
    });
    CHECK(msg.find("duration must be 1000 ms") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }

  TEST_CASE("syntax errors name the line") {
    const std::string head = "recording_id,player_id,start_ms,duration_ms,sex,score\n";
    CHECK_THROWS_AS(parse_manifest("bad,header\n"), FormatError);
    CHECK(error_of([&] { parse_manifest(head + "r1,p1,0,1000,female,scored\nr1,p1,x,1000,male,scored\n"); })
              .find("line 3") != std::string::npos);
    CHECK(error_of([&] { parse_manifest(head + "r1,p1,0,1000,other,scored\n"); }).find("line 2") !=
          std::string::npos);
    CHECK_THROWS_AS(parse_manifest(head + "r1,p1,0,1000,female,maybe\n"), FormatError);
    CHECK_THROWS_AS(parse_manifest(head + "r1,p1,0,1000,female\n"), FormatError);
    CHECK_THROWS_AS(parse_manifest(head + "r1,,0,1000,female,scored\n"), FormatError);
    CHECK_THROWS_AS(parse_manifest(head + "r1,p1,-5,1000,female,scored\n"), FormatError);
  }

  TEST_CASE("duplicate recording and start is rejected") {
    const std::string text =
        "recording_id,player_id,start_ms,duration_ms,sex,score\nr1,p1,0,1000,female,scored\n"
        "r1,p1,0,1000,female,not_scored\n";
    const auto msg = error_of([&] { parse_manifest(text); });
    CHECK(msg.find("duplicate") != std::string::npos);
  }

  TEST_CASE("serialize and parse round-trip") {
    const auto& corpus = test::small_corpus();
    const std::string text = serialize_manifest(corpus.manifest);
    const auto again = parse_manifest(text);
    CHECK(again.records == corpus.manifest.records);
    CHECK(serialize_manifest(again) == text);
    CHECK(text.rfind(std::string(kManifestHeader) + "\n", 0) == 0);
  }

  TEST_CASE("600-record synthetic manifest parses and validates") {
    SyntheticSpec spec;  // 20 players x 30 clips
    const auto corpus = generate_synthetic_corpus(spec);
    const auto parsed = parse_manifest(serialize_manifest(corpus.manifest));
    CHECK(parsed.records.size() == 600);
    auto with_paths = parsed;
    with_paths.audio_paths = corpus.manifest.audio_paths;
    const auto report = validate_manifest(with_paths);
    CHECK(report.ok());
    CHECK(report.players.size() == 20);
    CHECK(report.female_players == 10);
    CHECK(report.male_players == 10);
    std::size_t sum = 0;
    for (const auto& p : report.players) {
      CHECK(p.scored == 15);
      CHECK(p.not_scored == 15);
      sum += p.clips;
    }
    CHECK(sum == report.total_records);
  }
}

TEST_SUITE("validation") {
  TEST_CASE("unbalanced player is flagged once") {
    DatasetManifest m;
    for (int i = 0; i < 30; ++i) {
      m.records.push_back(record("r1", "p1", 1000 * i, Sex::male, i < 16 ? Score::scored : Score::not_scored));
    }
    m.audio_paths["r1"] = "r1.wav";
    const auto report = validate_manifest(m);
    CHECK(report.violations.size() == 1);
    CHECK(report.violations[0].find("p1") != std::string::npos);
  }

  TEST_CASE("empty manifest gives a warning and zero players") {
    const auto report = validate_manifest(DatasetManifest{});
    CHECK(report.players.empty());
    CHECK(report.total_records == 0);
    CHECK(report.ok());
    CHECK_FALSE(report.warnings.empty());
  }

  TEST_CASE("a player with two recordings violates one recording per player") {
    DatasetManifest m;
    m.records.push_back(record("r1", "p1", 0, Sex::female, Score::scored));
    m.records.push_back(record("r2", "p1", 0, Sex::female, Score::not_scored));
    m.audio_paths = {{"r1", "r1.wav"}, {"r2", "r2.wav"}};
    CHECK_FALSE(validate_manifest(m).ok());
  }

  TEST_CASE("a recording without an audio path is a violation") {
    DatasetManifest m;
    m.records.push_back(record("r1", "p1", 0, Sex::female, Score::scored));
    m.records.push_back(record("r1", "p1", 1000, Sex::female, Score::not_scored));
    m.audio_paths["other"] = "other.wav";
    CHECK_FALSE(validate_manifest(m).ok());
    m.audio_paths = {{"r1", "r1.wav"}};
    CHECK(validate_manifest(m).ok());
  }
}

TEST_SUITE("wav") {
  TEST_CASE("44.1 kHz mono 16-bit") {
    std::vector<std::int16_t> s(44100);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<std::int16_t>((i * 37) % 2000 - 1000);
    const auto clip = decode_wav(wav_bytes(s, 1, 44100));
    CHECK(clip.samples.size() == 44100);
    CHECK(clip.sample_rate == 44100);
    CHECK(clip.samples[5] == s[5] / 32768.0);
  }

  TEST_CASE("-32768 decodes to -1.0") {
    const auto clip = decode_wav(wav_bytes({-32768, 32767, 0}, 1, 16000));
    CHECK(clip.samples[0] == -1.0);
    CHECK(clip.samples[1] == 32767.0 / 32768.0);
    CHECK(clip.samples[2] == 0.0);
  }

  TEST_CASE("stereo with opposite channels averages to silence") {
    std::vector<std::int16_t> s;
    for (int i = 0; i < 100; ++i) {
      s.push_back(16384);
      s.push_back(-16384);
    }
    const auto clip = decode_wav(wav_bytes(s, 2, 44100));
    CHECK(clip.samples.size() == 100);
    CHECK(std::all_of(clip.samples.begin(), clip.samples.end(), [](double v) { return v == 0.0; }));
  }

  TEST_CASE("unsupported codec, bit depth and truncation") {
    CHECK_THROWS_AS(decode_wav(wav_bytes({1, 2, 3, 4}, 1, 44100, 16, 3)), FormatError);
    CHECK_THROWS_AS(decode_wav(wav_bytes({1, 2, 3, 4}, 1, 44100, 8)), FormatError);
    auto bytes = wav_bytes({1, 2, 3, 4}, 1, 44100);
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_wav(bytes), FormatError);
    CHECK_THROWS_AS(decode_wav(std::vector<std::uint8_t>{'R', 'I', 'F'}), FormatError);
  }

  TEST_CASE("encode then decode is exact on the 16-bit grid") {
    AudioClip c;
    c.sample_rate = 16000;
    for (int i = -5; i <= 5; ++i) c.samples.push_back(i * 1000 / 32768.0);
    c.samples.push_back(1.5);  // clamped
    const auto back = decode_wav(encode_wav(c));
    for (std::size_t i = 0; i + 1 < c.samples.size(); ++i) CHECK(back.samples[i] == c.samples[i]);
    CHECK(back.samples.back() == 32767.0 / 32768.0);
  }
}

TEST_SUITE("clips") {
  TEST_CASE("extract_clip yields exactly one second") {
    const auto rec = test::noise(44100, 3 * 44100, 1);
    const auto clip = extract_clip(rec, record("r", "p", 0));
    CHECK(clip.samples.size() == 44100);
    REQUIRE(clip.source.has_value());
    CHECK(clip.source->recording_id == "r");
    const auto at16 = extract_clip(test::noise(16000, 40000, 2), record("r", "p", 1000));
    CHECK(at16.samples.size() == 16000);
  }

  TEST_CASE("window past the end is a range error") {
    const auto rec = test::noise(44100, 2 * 44100, 1);
    CHECK_THROWS_AS(extract_clip(rec, record("r", "p", 1500)), std::out_of_range);
    CHECK_THROWS_AS(extract_clip(rec, record("r", "p", 5000)), std::out_of_range);
    CHECK_NOTHROW(extract_clip(rec, record("r", "p", 1000)));
  }

  TEST_CASE("adjacent clips concatenate to the first two seconds") {
    for (int rate : {44100, 16000, 22050}) {
      const auto rec = test::noise(rate, 3 * static_cast<std::size_t>(rate), 9);
      const auto a = extract_clip(rec, record("r", "p", 0));
      const auto b = extract_clip(rec, record("r", "p", 1000));
      std::vector<double> joined = a.samples;
      joined.insert(joined.end(), b.samples.begin(), b.samples.end());
      const std::vector<double> expected(rec.samples.begin(), rec.samples.begin() + 2 * rate);
      CHECK(joined == expected);
    }
  }

  TEST_CASE("normalize_peak scales to unit peak") {
    AudioClip c;
    c.sample_rate = 16000;
    c.samples = {0.0, 0.25, -0.125, 0.1};
    const auto n = normalize_peak(c);
    CHECK(n.samples == std::vector<double>{0.0, 1.0, -0.5, 0.4});

    AudioClip unit;
    unit.sample_rate = 16000;
    unit.samples = {0.3, -1.0, 0.7};
    CHECK(normalize_peak(unit).samples == unit.samples);

    AudioClip silent;
    silent.sample_rate = 16000;
    silent.samples.assign(10, 0.0);
    CHECK(error_of([&] { normalize_peak(silent); }).find("silent clip") != std::string::npos);
  }

  TEST_CASE("normalizing a quiet sine keeps its zero crossings") {
    const auto quiet = test::sine(440.0, 16000, 1600, 0.1, 0.3);
    const auto loud = normalize_peak(quiet);
    auto crossings = [](const std::vector<double>& x) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 1; i < x.size(); ++i) {
        if ((x[i - 1] < 0.0) != (x[i] < 0.0)) idx.push_back(i);
      }
      return idx;
    };
    CHECK(crossings(quiet.samples) == crossings(loud.samples));
    double peak = 0.0;
    for (double v : loud.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == 1.0);
  }

  TEST_CASE("clip store allows concurrent readers") {
    ClipStore store;
    for (int i = 0; i < 8; ++i) store.put("c" + std::to_string(i), test::noise(16000, 100, static_cast<std::uint64_t>(i)));
    std::vector<std::thread> threads;
    std::atomic<int> ok{0};
    for (int t = 0; t < 4; ++t) {
      threads.emplace_back([&] {
        for (int i = 0; i < 8; ++i) ok += store.get("c" + std::to_string(i)).samples.size() == 100;
      });
    }
    for (auto& t : threads) t.join();
    CHECK(ok == 32);
    CHECK_THROWS_AS(store.get("missing"), Error);
  }
}

TEST_SUITE("synthetic corpus") {
  TEST_CASE("same spec gives identical corpora") {
    SyntheticSpec spec;
    spec.n_players = 4;
    spec.clips_per_player = 4;
    const auto a = generate_synthetic_corpus(spec);
    const auto b = generate_synthetic_corpus(spec);
    CHECK(a.manifest == b.manifest);
    for (const auto& id : a.clips.ids()) CHECK(encode_wav(a.clips.get(id)) == encode_wav(b.clips.get(id)));
    spec.seed = 8;
    const auto c = generate_synthetic_corpus(spec);
    CHECK(encode_wav(a.clips.get(a.clips.ids()[0])) != encode_wav(c.clips.get(c.clips.ids()[0])));
  }

  TEST_CASE("written clip store equals the in-memory store") {
    const auto& corpus = test::small_corpus();
    const auto dir = test::temp_dir("synth_write");
    write_corpus(corpus, dir);
    const auto manifest = load_manifest(dir / "manifest.csv");
    CHECK(manifest.records == corpus.manifest.records);
    CHECK(validate_manifest(manifest).ok());
    const auto loaded = ClipStore::load(dir / "clips", manifest);
    for (const auto& r : manifest.records) {
      CHECK(loaded.get(r.clip_id()).samples == corpus.clips.get(r.clip_id()).samples);
    }
    // Clips are cut from the recordings.
    const auto& r0 = manifest.records[1];
    const auto rec = read_wav(manifest.audio_paths.at(r0.recording_id));
    CHECK(extract_clip(rec, r0).samples == loaded.get(r0.clip_id()).samples);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("measured F0 falls in the class range") {
    SyntheticSpec spec;
    spec.n_players = 6;
    spec.clips_per_player = 4;
    const auto corpus = generate_synthetic_corpus(spec);
    for (const auto& r : corpus.manifest.records) {
      const double f0 = median_f0(corpus.clips.get(r.clip_id()));
      const auto range = r.sex == Sex::female ? spec.f0_range_class_a : spec.f0_range_class_b;
      CHECK(f0 >= range.lo - 5.0);
      CHECK(f0 <= range.hi + 5.0);
    }
  }

  TEST_CASE("spec validation") {
    SyntheticSpec spec;
    spec.clips_per_player = 31;
    CHECK_THROWS_AS(spec.validate(), ArgumentError);
    spec = SyntheticSpec{};
    spec.f0_range_class_a = {200.0, 350.0};
    CHECK_THROWS_AS(spec.validate(), ArgumentError);
    spec.separable = false;
    CHECK_NOTHROW(spec.validate());
    spec = SyntheticSpec{};
    spec.n_players = 0;
    CHECK_THROWS_AS(spec.validate(), ArgumentError);
  }
}
