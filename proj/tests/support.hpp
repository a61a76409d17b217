// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ndns/audio_io.hpp"
#include "ndns/rng.hpp"

namespace ndns::test {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<uint64_t> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ndns_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline AudioClip random_clip(size_t n, uint64_t seed, double amplitude = 0.1,
                             int rate = 16000) {
  Rng rng(seed);
  AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.samples.resize(n);
  for (double& s : clip.samples) s = rng.normal() * amplitude;
  return clip;
}

/// Speech-like test signal: amplitude-modulated harmonic stacks with a
/// drifting fundamental and voiced/unvoiced alternation. Aperiodic enough
/// for cross-correlation alignment.
inline AudioClip speechish_clip(size_t n, uint64_t seed, int rate = 16000) {
  Rng rng(seed);
  AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.samples.resize(n);
  double f0 = 90.0 + rng.next_double() * 120.0;
  double phase[6] = {};
  for (size_t t = 0; t < n; ++t) {
    const double time_s = static_cast<double>(t) / rate;
    if (t % 1600 == 0) f0 = 90.0 + rng.next_double() * 120.0;  // new "syllable"
    const double envelope = 0.25 * (0.55 + 0.45 * std::sin(2 * M_PI * 3.1 * time_s +
                                                           rng.next_double() * 1e-3));
    double s = 0.0;
    for (int h = 0; h < 6; ++h) {
      phase[h] += 2 * M_PI * f0 * (h + 1) / rate;
      s += std::sin(phase[h]) / (h + 1);
    }
    const bool voiced = (t / 3200) % 3 != 2;
    clip.samples[t] = voiced ? envelope * s * 0.4
                             : 0.05 * rng.normal();  // unvoiced burst
  }
  // 5 ms raised-cosine fades, as recorded clips are usually edited.
  const size_t fade = std::min<size_t>(n / 2, static_cast<size_t>(rate) / 200);
  for (size_t t = 0; t < fade; ++t) {
    const double g = 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(t) / fade);
    clip.samples[t] *= g;
    clip.samples[n - 1 - t] *= g;
  }
  return clip;
}

/// Noise with a spectrum unlike the speech generator (low-passed hum plus
/// wideband hiss).
inline AudioClip noiseish_clip(size_t n, uint64_t seed, int rate = 16000) {
  Rng rng(seed);
  AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.samples.resize(n);
  double lp = 0.0;
  for (size_t t = 0; t < n; ++t) {
    lp = 0.98 * lp + 0.02 * rng.normal();
    clip.samples[t] = 2.0 * lp + 0.02 * rng.normal();
  }
  return clip;
}

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

/// SNR of `actual` against reference `expected` over [begin, end).
inline double segment_snr_db(const std::vector<double>& expected,
                             const std::vector<double>& actual, size_t begin,
                             size_t end) {
  double sig = 0.0, err = 0.0;
  for (size_t i = begin; i < end; ++i) {
    sig += expected[i] * expected[i];
    const double d = actual[i] - expected[i];
    err += d * d;
  }
  if (err == 0.0) return 1e9;
  return 10.0 * std::log10(sig / err);
}

}  // namespace ndns::test
