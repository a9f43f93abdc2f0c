#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>

#include "grunt/common.hpp"
#include "grunt/ingest.hpp"
#include "grunt/synth.hpp"

namespace test {

inline grunt::AudioClip sine(double hz, int rate, std::size_t n, double amp = 0.5, double phase = 0.0) {
  grunt::AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate + phase);
  }
  return c;
}

inline grunt::AudioClip noise(int rate, std::size_t n, std::uint64_t seed, double amp = 0.3) {
  grunt::Rng rng(seed);
  grunt::AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(n);
  for (auto& s : c.samples) s = amp * rng.uniform(-1.0, 1.0);
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("grunt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// A small corpus shared by the tests of one binary.
inline const grunt::SyntheticCorpus& small_corpus() {
  static const grunt::SyntheticCorpus corpus = [] {
    grunt::SyntheticSpec spec;
    spec.n_players = 10;
    spec.clips_per_player = 4;
    spec.seed = 11;
    return grunt::generate_synthetic_corpus(spec);
  }();
  return corpus;
}

}  // namespace test
