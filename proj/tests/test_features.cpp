#include <doctest.h>

#include <bit>
#include <cstring>
#include <limits>

#include <nlohmann/json.hpp>

#include "grunt/features.hpp"
#include "grunt/io.hpp"
#include "support.hpp"

using namespace grunt;

namespace {

RowMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  grunt::Rng rng(seed);
  RowMatrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * 1e3;
  return m;
}

bool bit_equal(const RowMatrix& a, const RowMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * std::size_t(a.size())) == 0;
}

bool tables_bit_equal(const FeatureTable& a, const FeatureTable& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [id, m] : a) {
    const auto it = b.find(id);
    if (it == b.end() || !bit_equal(m, it->second)) return false;
  }
  return true;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  write_file_atomic(p, bytes);
}

}  // namespace

TEST_SUITE("feature kinds") {
  TEST_CASE("shapes of a 1000 ms clip") {
    const auto clip = test::small_corpus().clips.get(test::small_corpus().manifest.records[0].clip_id());
    REQUIRE(clip.sample_rate == 44100);
    REQUIRE(clip.samples.size() == 44100);
    struct Shape {
      FeatureKind kind;
      Eigen::Index rows, cols;
    };
    for (const auto& s : {Shape{FeatureKind::lld, 100, 130}, Shape{FeatureKind::mfcc, 44, 40},
                          Shape{FeatureKind::spectrogram, 227, 227}, Shape{FeatureKind::compare_functionals, 1, 986},
                          Shape{FeatureKind::egemaps_functionals, 1, 64}}) {
      const auto m = extract_feature(clip, s.kind);
      INFO(to_string(s.kind));
      CHECK(m.values.rows() == s.rows);
      CHECK(m.values.cols() == s.cols);
      CHECK(m.descriptor_names.size() == std::size_t(s.cols));
      CHECK(m.values.allFinite());
    }
    CHECK(58 * 17 == 986);
    CHECK(egemaps_channels().size() * egemaps_functional_names().size() == 64);
  }

  TEST_CASE("names and sequence flags") {
    for (auto k : {FeatureKind::lld, FeatureKind::mfcc, FeatureKind::spectrogram, FeatureKind::compare_functionals,
                   FeatureKind::egemaps_functionals}) {
      CHECK(parse_feature(to_string(k)) == k);
      CHECK_FALSE(feature_schema_version(k).empty());
    }
    CHECK(is_sequence(FeatureKind::lld));
    CHECK(is_sequence(FeatureKind::mfcc));
    CHECK(is_sequence(FeatureKind::spectrogram));
    CHECK_FALSE(is_sequence(FeatureKind::compare_functionals));
    CHECK_FALSE(is_sequence(FeatureKind::egemaps_functionals));
    CHECK_THROWS_AS(parse_feature("chroma"), ArgumentError);
  }

  TEST_CASE("clip hash follows the quantized content") {
    auto a = test::noise(44100, 1000, 1);
    auto b = a;
    CHECK(clip_hash(a) == clip_hash(b));
    b.samples[500] += 1.0 / 32768.0 * 2.0;
    CHECK(clip_hash(a) != clip_hash(b));
    b = a;
    b.sample_rate = 48000;
    CHECK(clip_hash(a) != clip_hash(b));
  }
}

TEST_SUITE("feature records") {
  TEST_CASE("round trip is bit exact") {
    for (auto [r, c] : {std::pair{1, 1}, std::pair{3, 7}, std::pair{100, 130}}) {
      auto m = random_matrix(r, c, std::uint64_t(r * 1000 + c));
      m(0, 0) = -0.0;
      if (m.size() > 3) {
        m.data()[1] = std::numeric_limits<double>::denorm_min();
        m.data()[2] = std::numeric_limits<double>::max();
      }
      const auto bytes = encode_feature_record(m);
      CHECK(bytes.size() == 4 + 2 + 4 + 4 + 8 * std::size_t(m.size()));
      const auto back = decode_feature_record(bytes, 0);
      CHECK(bit_equal(m, back));
      CHECK(std::signbit(back(0, 0)));
    }
  }

  TEST_CASE("layout is little-endian with the magic first") {
    RowMatrix m(1, 1);
    m(0, 0) = 1.0;
    const auto b = encode_feature_record(m);
    CHECK(std::string(b.begin(), b.begin() + 4) == "GRNT");
    CHECK(b[4] == kCacheVersion);
    CHECK(b[5] == 0);
    CHECK(b[6] == 1);
    CHECK(b[10] == 1);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[std::size_t(14 + i)]) << (8 * i);
    CHECK(std::bit_cast<double>(bits) == 1.0);
  }

  TEST_CASE("records decode at an offset") {
    const auto a = random_matrix(2, 3, 1);
    const auto b = random_matrix(4, 5, 2);
    auto bytes = encode_feature_record(a);
    const auto offset = bytes.size();
    const auto rb = encode_feature_record(b);
    bytes.insert(bytes.end(), rb.begin(), rb.end());
    CHECK(bit_equal(decode_feature_record(bytes, 0), a));
    CHECK(bit_equal(decode_feature_record(bytes, offset), b));
  }

  TEST_CASE("corrupt records are rejected") {
    const auto good = encode_feature_record(random_matrix(3, 3, 3));
    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_feature_record(bad_magic, 0), FormatError);
    auto bad_version = good;
    bad_version[4] = 99;
    CHECK_THROWS_AS(decode_feature_record(bad_version, 0), FormatError);
    auto truncated = good;
    truncated.resize(truncated.size() - 1);
    CHECK_THROWS_AS(decode_feature_record(truncated, 0), FormatError);
    CHECK_THROWS_AS(decode_feature_record(good, good.size()), FormatError);
    CHECK_THROWS_AS(decode_feature_record(std::vector<std::uint8_t>{'G', 'R'}, 0), FormatError);
  }
}

TEST_SUITE("feature cache") {
  TEST_CASE("store, flush and reload") {
    const auto dir = test::temp_dir("cache_roundtrip");
    const auto a = random_matrix(5, 4, 10);
    const auto b = random_matrix(2, 9, 11);
    {
      FeatureCache cache(dir, FeatureKind::mfcc);
      CHECK(cache.size() == 0);
      CHECK_FALSE(cache.flush());
      cache.store("a", 1, a);
      cache.store("b", 2, b);
      CHECK(cache.flush());
      CHECK_FALSE(cache.flush());
    }
    FeatureCache cache(dir, FeatureKind::mfcc);
    CHECK(cache.size() == 2);
    REQUIRE(cache.lookup("a", 1).has_value());
    CHECK(bit_equal(*cache.lookup("a", 1), a));
    CHECK(bit_equal(*cache.lookup("b", 2), b));
    CHECK_FALSE(cache.lookup("a", 3).has_value());
    CHECK_FALSE(cache.lookup("c", 1).has_value());

    const auto idx = nlohmann::json::parse(read_text(cache.index_path()));
    CHECK(idx["feature"] == "mfcc");
    CHECK(idx["schema"] == feature_schema_version(FeatureKind::mfcc));
    CHECK(idx["entries"].size() == 2);
    CHECK_FALSE(std::filesystem::exists(cache.data_path().string() + ".tmp"));
  }

  TEST_CASE("stale schema starts empty and another feature's index is an error") {
    const auto dir = test::temp_dir("cache_schema");
    {
      FeatureCache cache(dir, FeatureKind::lld);
      cache.store("a", 1, random_matrix(2, 2, 1));
      cache.flush();
    }
    auto idx = nlohmann::json::parse(read_text(dir / "lld.idx.json"));
    idx["schema"] = "lld_old/0";
    write_text_atomic(dir / "lld.idx.json", idx.dump());
    CHECK(FeatureCache(dir, FeatureKind::lld).size() == 0);

    idx["feature"] = "mfcc";
    write_text_atomic(dir / "lld.idx.json", idx.dump());
    CHECK_THROWS_AS(FeatureCache(dir, FeatureKind::lld), FormatError);
  }

  TEST_CASE("corrupt data or index is a format error") {
    const auto dir = test::temp_dir("cache_corrupt");
    {
      FeatureCache cache(dir, FeatureKind::mfcc);
      cache.store("a", 1, random_matrix(3, 3, 1));
      cache.store("b", 1, random_matrix(3, 3, 2));
      cache.flush();
    }
    auto data = read_file(dir / "mfcc.grnt");
    const auto original = data;
    data.resize(data.size() - 8);
    write_bytes(dir / "mfcc.grnt", data);
    CHECK_THROWS_AS(FeatureCache(dir, FeatureKind::mfcc), FormatError);

    data = original;
    data[0] = 'Z';
    write_bytes(dir / "mfcc.grnt", data);
    CHECK_THROWS_AS(FeatureCache(dir, FeatureKind::mfcc), FormatError);

    write_bytes(dir / "mfcc.grnt", original);
    write_text_atomic(dir / "mfcc.idx.json", "{not json");
    CHECK_THROWS_AS(FeatureCache(dir, FeatureKind::mfcc), FormatError);
  }
}

TEST_SUITE("extract_features") {
  TEST_CASE("second run reuses the cache and gives identical features") {
    const auto& corpus = test::small_corpus();
    const auto dir = test::temp_dir("extract_idempotent");
    ExtractStats first, second;
    const auto t1 = extract_features(corpus.manifest, corpus.clips, FeatureKind::mfcc, dir, 1, &first);
    CHECK(first.computed == corpus.manifest.records.size());
    CHECK(first.reused == 0);
    const auto data_before = read_file(dir / "mfcc.grnt");
    const auto t2 = extract_features(corpus.manifest, corpus.clips, FeatureKind::mfcc, dir, 2, &second);
    CHECK(second.computed == 0);
    CHECK(second.reused == corpus.manifest.records.size());
    CHECK(tables_bit_equal(t1, t2));
    CHECK(read_file(dir / "mfcc.grnt") == data_before);

    const auto uncached = extract_features(corpus.manifest, corpus.clips, FeatureKind::mfcc, std::nullopt, 1);
    CHECK(tables_bit_equal(t1, uncached));
  }

  TEST_CASE("changed audio invalidates only its entry") {
    const auto& corpus = test::small_corpus();
    const auto dir = test::temp_dir("extract_invalidate");
    const auto t1 = extract_features(corpus.manifest, corpus.clips, FeatureKind::egemaps_functionals, dir, 1);
    ClipStore changed = corpus.clips;
    const auto id = corpus.manifest.records[3].clip_id();
    auto clip = changed.get(id);
    for (auto& s : clip.samples) s *= 0.5;
    changed.put(id, clip);
    ExtractStats stats;
    const auto t2 = extract_features(corpus.manifest, changed, FeatureKind::egemaps_functionals, dir, 1, &stats);
    CHECK(stats.computed == 1);
    CHECK(stats.reused == corpus.manifest.records.size() - 1);
    CHECK_FALSE(bit_equal(t1.at(id), t2.at(id)));
    CHECK(bit_equal(t2.at(id), extract_feature(clip, FeatureKind::egemaps_functionals).values));
  }

  TEST_CASE("thread count does not change results") {
    const auto& corpus = test::small_corpus();
    const auto a = extract_features(corpus.manifest, corpus.clips, FeatureKind::spectrogram, std::nullopt, 1);
    const auto b = extract_features(corpus.manifest, corpus.clips, FeatureKind::spectrogram, std::nullopt, 4);
    CHECK(tables_bit_equal(a, b));
  }

  TEST_CASE("missing clip is an error") {
    const auto& corpus = test::small_corpus();
    ClipStore empty;
    CHECK_THROWS(extract_features(corpus.manifest, empty, FeatureKind::mfcc, std::nullopt, 1));
  }
}
