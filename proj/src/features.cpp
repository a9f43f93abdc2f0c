#include "grunt/features.hpp"

#include <algorithm>
#include <cstring>

#include <nlohmann/json.hpp>

#include "grunt/io.hpp"
#include "grunt/parallel.hpp"

namespace grunt {

std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::lld: return "lld";
    case FeatureKind::mfcc: return "mfcc";
    case FeatureKind::spectrogram: return "spectrogram";
    case FeatureKind::compare_functionals: return "compare_functionals";
    case FeatureKind::egemaps_functionals: return "egemaps_functionals";
  }
  return "?";
}

FeatureKind parse_feature(std::string_view s) {
  for (auto k : {FeatureKind::lld, FeatureKind::mfcc, FeatureKind::spectrogram, FeatureKind::compare_functionals,
                 FeatureKind::egemaps_functionals}) {
    if (s == to_string(k)) return k;
  }
  throw ArgumentError("unknown feature '" + std::string(s) + "'");
}

bool is_sequence(FeatureKind k) {
  return k == FeatureKind::lld || k == FeatureKind::mfcc || k == FeatureKind::spectrogram;
}

std::string feature_schema_version(FeatureKind k) {
  switch (k) {
    case FeatureKind::lld: return "lld_padded130/1";
    case FeatureKind::mfcc: return "mfcc40_hop1024/1";
    case FeatureKind::spectrogram: return "spectrogram227_16ms_8ms/1";
    case FeatureKind::compare_functionals: return std::string(kCompareSchemaVersion);
    case FeatureKind::egemaps_functionals: return std::string(kEgemapsSchemaVersion);
  }
  return "?";
}

namespace {

FrameMatrix as_row(const FunctionalVector& v) {
  FrameMatrix m;
  m.values = v.values.transpose();
  m.frame_period_ms = 1000.0;
  m.descriptor_names = v.names;
  return m;
}

}  // namespace

FrameMatrix extract_feature(const AudioClip& clip, FeatureKind kind) {
  switch (kind) {
    case FeatureKind::lld:
      return extract_llds(resample(clip, kLldRate), LldLayout::padded130);
    case FeatureKind::mfcc:
      return mfcc(clip);
    case FeatureKind::spectrogram: {
      const auto img = spectrogram_image(clip);
      FrameMatrix m;
      m.values = img.values;
      m.frame_period_ms = 1000.0 * static_cast<double>(clip.samples.size()) / clip.sample_rate / kImageSide;
      for (int f = 0; f < kImageSide; ++f) m.descriptor_names.push_back("bin_" + std::to_string(f));
      return m;
    }
    case FeatureKind::compare_functionals:
      return as_row(functionals_compare_like(extract_llds(resample(clip, kLldRate), LldLayout::reduced)));
    case FeatureKind::egemaps_functionals:
      return as_row(functionals_egemaps_like(
          smooth_moving_average(extract_llds(resample(clip, kLldRate), LldLayout::reduced), 3)));
  }
  throw ArgumentError("extract_feature: unknown kind");
}

std::uint64_t clip_hash(const AudioClip& clip) {
  std::uint64_t h = fnv1a(&clip.sample_rate, sizeof clip.sample_rate);
  for (double s : clip.samples) {
    const auto q = static_cast<std::int16_t>(std::clamp(std::nearbyint(s * 32768.0), -32768.0, 32767.0));
    h = fnv1a(&q, sizeof q, h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Cache records

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{in[at + static_cast<std::size_t>(i)]} << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_feature_record(const RowMatrix& m) {
  std::vector<std::uint8_t> out;
  out.reserve(14 + 8 * static_cast<std::size_t>(m.size()));
  for (char c : std::string_view("GRNT")) out.push_back(static_cast<std::uint8_t>(c));
  put_le(out, kCacheVersion, 2);
  put_le(out, static_cast<std::uint64_t>(m.rows()), 4);
  put_le(out, static_cast<std::uint64_t>(m.cols()), 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, m.data() + i, sizeof bits);
    put_le(out, bits, 8);
  }
  return out;
}

RowMatrix decode_feature_record(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 14 > bytes.size()) throw FormatError("feature cache: truncated record header");
  if (std::memcmp(bytes.data() + offset, "GRNT", 4) != 0) throw FormatError("feature cache: bad record magic");
  const auto version = get_le(bytes, offset + 4, 2);
  if (version != kCacheVersion) {
    throw FormatError("feature cache: unsupported record version " + std::to_string(version));
  }
  const auto rows = static_cast<Eigen::Index>(get_le(bytes, offset + 6, 4));
  const auto cols = static_cast<Eigen::Index>(get_le(bytes, offset + 10, 4));
  const std::size_t body = offset + 14;
  if (body + 8 * static_cast<std::size_t>(rows * cols) > bytes.size()) {
    throw FormatError("feature cache: truncated record body");
  }
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const std::uint64_t bits = get_le(bytes, body + 8 * static_cast<std::size_t>(i), 8);
    std::memcpy(m.data() + i, &bits, sizeof bits);
  }
  return m;
}

// ---------------------------------------------------------------------------
// FeatureCache

FeatureCache::FeatureCache(std::filesystem::path dir, FeatureKind kind) : dir_(std::move(dir)), kind_(kind) {
  if (!std::filesystem::exists(index_path())) return;
  nlohmann::json idx;
  try {
    idx = nlohmann::json::parse(read_text(index_path()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("feature cache: corrupt index " + index_path().string() + ": " + e.what());
  }
  if (idx.value("feature", "") != to_string(kind_)) {
    throw FormatError("feature cache: index " + index_path().string() + " belongs to another feature");
  }
  if (idx.value("schema", "") != feature_schema_version(kind_)) return;  // stale schema: start over
  const auto data = read_file(data_path());
  for (const auto& e : idx.at("entries")) {
    CacheEntry entry;
    entry.clip_id = e.at("clip").get<std::string>();
    entry.offset = e.at("offset").get<std::uint64_t>();
    entry.content_hash = std::stoull(e.at("hash").get<std::string>(), nullptr, 16);
    entry.rows = e.at("rows").get<std::uint32_t>();
    entry.cols = e.at("cols").get<std::uint32_t>();
    RowMatrix m = decode_feature_record(data, entry.offset);
    if (m.rows() != entry.rows || m.cols() != entry.cols) {
      throw FormatError("feature cache: shape mismatch for " + entry.clip_id);
    }
    values_[entry.clip_id] = std::move(m);
    entries_[entry.clip_id] = std::move(entry);
  }
}

std::filesystem::path FeatureCache::data_path() const { return dir_ / (std::string(to_string(kind_)) + ".grnt"); }
std::filesystem::path FeatureCache::index_path() const {
  return dir_ / (std::string(to_string(kind_)) + ".idx.json");
}

std::optional<RowMatrix> FeatureCache::lookup(const std::string& clip_id, std::uint64_t content_hash) const {
  const auto it = entries_.find(clip_id);
  if (it == entries_.end() || it->second.content_hash != content_hash) return std::nullopt;
  return values_.at(clip_id);
}

void FeatureCache::store(const std::string& clip_id, std::uint64_t content_hash, const RowMatrix& m) {
  CacheEntry e;
  e.clip_id = clip_id;
  e.content_hash = content_hash;
  e.rows = static_cast<std::uint32_t>(m.rows());
  e.cols = static_cast<std::uint32_t>(m.cols());
  entries_[clip_id] = e;
  values_[clip_id] = m;
  dirty_ = true;
}

bool FeatureCache::flush() {
  if (!dirty_) return false;
  std::vector<std::uint8_t> data;
  nlohmann::ordered_json idx;
  idx["feature"] = to_string(kind_);
  idx["schema"] = feature_schema_version(kind_);
  idx["record_version"] = kCacheVersion;
  auto& list = idx["entries"] = nlohmann::ordered_json::array();
  for (auto& [id, entry] : entries_) {
    entry.offset = data.size();
    const auto rec = encode_feature_record(values_.at(id));
    data.insert(data.end(), rec.begin(), rec.end());
    nlohmann::ordered_json e;
    e["clip"] = id;
    e["offset"] = entry.offset;
    e["hash"] = hex64(entry.content_hash);
    e["rows"] = entry.rows;
    e["cols"] = entry.cols;
    list.push_back(std::move(e));
  }
  write_file_atomic(data_path(), data);
  write_text_atomic(index_path(), idx.dump(1) + "\n");
  dirty_ = false;
  return true;
}

FeatureTable extract_features(const DatasetManifest& manifest, const ClipStore& clips, FeatureKind kind,
                              const std::optional<std::filesystem::path>& cache_dir, int jobs,
                              ExtractStats* stats) {
  std::optional<FeatureCache> cache;
  if (cache_dir) cache.emplace(*cache_dir, kind);
  const auto& records = manifest.records;
  std::vector<RowMatrix> out(records.size());
  std::vector<std::uint64_t> hashes(records.size());
  std::vector<char> computed(records.size(), 0);
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    const auto id = records[i].clip_id();
    const AudioClip clip = clips.get(id);
    hashes[i] = clip_hash(clip);
    if (cache) {
      if (auto hit = cache->lookup(id, hashes[i])) {
        out[i] = std::move(*hit);
        return;
      }
    }
    out[i] = extract_feature(clip, kind).values;
    computed[i] = 1;
  });
  FeatureTable table;
  ExtractStats s;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto id = records[i].clip_id();
    if (computed[i]) {
      ++s.computed;
      if (cache) cache->store(id, hashes[i], out[i]);
    } else {
      ++s.reused;
    }
    table[id] = std::move(out[i]);
  }
  if (cache) cache->flush();
  if (stats) *stats = s;
  return table;
}

}  // namespace grunt
