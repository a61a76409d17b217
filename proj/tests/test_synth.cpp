// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>

#include "ndns/error.hpp"
#include "ndns/synth.hpp"
#include "support.hpp"

using namespace ndns;
using test::TempDir;

namespace {

/// Writes small deterministic source pools and returns their directories.
struct SourcePools {
  explicit SourcePools(const TempDir& dir, size_t samples = 24000)
      : clean_dir(dir / "clean_src"), noise_dir(dir / "noise_src") {
    std::filesystem::create_directories(clean_dir);
    std::filesystem::create_directories(noise_dir);
    for (uint64_t i = 0; i < 3; ++i) {
      write_wav(test::speechish_clip(samples, 100 + i),
                clean_dir / ("speech" + std::to_string(i) + ".wav"));
      write_wav(test::noiseish_clip(samples, 200 + i),
                noise_dir / ("noise" + std::to_string(i) + ".wav"));
    }
  }
  std::filesystem::path clean_dir;
  std::filesystem::path noise_dir;
};

SynthConfig desk_config(int count, double segment_s = 0.5) {
  SynthConfig cfg;
  cfg.count = count;
  cfg.segment_s = segment_s;
  cfg.seed = 42;
  return cfg;
}

double measured_snr_db(const AudioClip& clean, const AudioClip& scaled_noise) {
  return 20.0 * std::log10(rms(clean) / rms(scaled_noise));
}

}  // namespace

TEST_SUITE("dataset_synth") {

TEST_CASE("gain follows the RMS rule") {
  Rng rng(3);
  AudioClip clean, noise;
  clean.samples.resize(8000);
  noise.samples.resize(8000);
  // Scale to exact RMS 0.1.
  for (auto& s : clean.samples) s = rng.normal();
  for (auto& s : noise.samples) s = rng.normal();
  const double cs = 0.1 / rms(clean), ns = 0.1 / rms(noise);
  for (auto& s : clean.samples) s *= cs;
  for (auto& s : noise.samples) s *= ns;

  AudioClip c1 = clean, n1 = noise;
  const MixResult twenty = mix_at_snr(c1, n1, 20.0);
  CHECK(twenty.gain == doctest::Approx(0.1).epsilon(1e-9));

  AudioClip c2 = clean, n2 = noise;
  const MixResult zero = mix_at_snr(c2, n2, 0.0);
  CHECK(zero.gain == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("realized SNR lands within 0.1 dB of the target") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    AudioClip clean = test::speechish_clip(16000, seed + 10);
    AudioClip noise = test::noiseish_clip(16000, seed + 60);
    const double target = -5.0 + static_cast<double>(seed) * 1.25;
    const MixResult mix = mix_at_snr(clean, noise, target);
    CHECK(std::abs(measured_snr_db(clean, noise) - target) < 0.1);
    // Additivity: the stored mixture is bit-identical to the sample sum.
    for (size_t i = 0; i < clean.samples.size(); ++i)
      CHECK(mix.noisy.samples[i] == clean.samples[i] + noise.samples[i]);
  }
}

TEST_CASE("silent inputs are rejected") {
  AudioClip silent, ok = test::random_clip(100, 1);
  silent.samples.assign(100, 0.0);
  AudioClip a = ok, b = silent;
  CHECK_THROWS_AS(mix_at_snr(b, a, 0.0), InvalidArgument);
  AudioClip c = ok, d = silent;
  CHECK_THROWS_AS(mix_at_snr(c, d, 0.0), InvalidArgument);
}

TEST_CASE("anti-clip scaling preserves SNR and additivity") {
  Rng rng(5);
  AudioClip clean, noise;
  clean.sample_rate_hz = noise.sample_rate_hz = 16000;
  clean.samples.resize(4000);
  noise.samples.resize(4000);
  for (auto& s : clean.samples) s = rng.normal() * 0.8;  // loud
  for (auto& s : noise.samples) s = rng.normal() * 0.8;

  const double target = 0.0;
  AudioClip c = clean, n = noise;
  const MixResult mix = mix_at_snr(c, n, target);
  CHECK(mix.normalization < 1.0);
  double peak = 0.0;
  for (double s : mix.noisy.samples) peak = std::max(peak, std::abs(s));
  CHECK(peak <= 0.99 * (1.0 + 1e-12));
  CHECK(std::abs(measured_snr_db(c, n) - target) < 0.1);
  for (size_t i = 0; i < c.samples.size(); ++i)
    CHECK(mix.noisy.samples[i] == c.samples[i] + n.samples[i]);
}

TEST_CASE("synthesis emits count triples with byte-identical reruns") {
  TempDir dir("synth");
  SourcePools pools(dir);
  const SynthConfig cfg = desk_config(3);

  const auto run = [&](const std::string& tag, int jobs) {
    const auto out = dir / tag;
    synthesize_dataset(cfg, pools.clean_dir, pools.noise_dir, out, jobs);
    return out;
  };
  const auto out1 = run("a", 1);
  const auto out2 = run("b", 1);
  const auto out3 = run("c", 2);  // parallel schedule must not matter

  const auto records = load_manifest(out1 / "manifest.jsonl");
  CHECK(records.size() == 3);
  size_t wavs = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(out1))
    if (entry.path().extension() == ".wav") ++wavs;
  CHECK(wavs == 9);

  CHECK(test::file_bytes(out1 / "manifest.jsonl") == test::file_bytes(out2 / "manifest.jsonl"));
  CHECK(test::file_bytes(out1 / "manifest.jsonl") == test::file_bytes(out3 / "manifest.jsonl"));
  for (const auto& rec : records) {
    for (const auto* path : {&rec.clean_path, &rec.noise_path, &rec.noisy_path}) {
      CHECK(test::file_bytes(out1 / *path) == test::file_bytes(out2 / *path));
      CHECK(test::file_bytes(out1 / *path) == test::file_bytes(out3 / *path));
    }
  }
}

TEST_CASE("loaded triples are consistent") {
  TempDir dir("synth");
  SourcePools pools(dir);
  const SynthConfig cfg = desk_config(4);
  const auto out = dir / "data";
  synthesize_dataset(cfg, pools.clean_dir, pools.noise_dir, out, 1);
  const auto manifest = load_manifest(out / "manifest.jsonl");

  for (size_t i = 0; i < manifest.size(); ++i) {
    const Triple t = load_triple(manifest, out / "manifest.jsonl", i);
    const size_t n = t.clean.samples.size();
    CHECK(n == static_cast<size_t>(std::llround(cfg.segment_s * cfg.sample_rate_hz)));
    // Two PCM quantizations: clean and noise each moved by up to 2^-15.
    for (size_t s = 0; s < n; ++s)
      CHECK(std::abs(t.noisy.samples[s] - t.clean.samples[s] - t.noise.samples[s]) <=
            2.0 / 32768.0 + 1e-12);
    // Target SNR vs. the SNR recomputed from the quantized files.
    const double realized = measured_snr_db(t.clean, t.noise);
    CHECK(std::abs(realized - t.record.snr_db) < 0.2);
    CHECK(t.record.snr_db >= cfg.snr_db_min);
    CHECK(t.record.snr_db <= cfg.snr_db_max);
  }

  CHECK_THROWS_AS(load_triple(manifest, out / "manifest.jsonl", manifest.size()),
                  InvalidArgument);
}

TEST_CASE("short sources are cycled to the segment length") {
  TempDir dir("synth");
  SourcePools pools(dir, /*samples=*/4000);  // shorter than the 8000 segment
  const SynthConfig cfg = desk_config(2, /*segment_s=*/0.5);
  const auto out = dir / "data";
  const auto records = synthesize_dataset(cfg, pools.clean_dir, pools.noise_dir, out, 1);
  const Triple t = load_triple(records, out / "manifest.jsonl", 0);
  CHECK(t.clean.samples.size() == 8000);
}

TEST_CASE("empty source directories fail") {
  TempDir dir("synth");
  std::filesystem::create_directories(dir / "empty");
  SourcePools pools(dir);
  CHECK_THROWS_AS(
      synthesize_dataset(desk_config(1), dir / "empty", pools.noise_dir, dir / "o", 1),
      IoError);
  CHECK_THROWS_AS(
      synthesize_dataset(desk_config(1), dir / "missing", pools.noise_dir, dir / "o", 1),
      IoError);
}

TEST_CASE("manifest io validates records") {
  TempDir dir("synth");
  {
    std::ofstream f(dir / "broken.jsonl");
    f << "{\"clean_path\": 3}\n";
  }
  CHECK_THROWS_AS(load_manifest(dir / "broken.jsonl"), FormatError);
  CHECK_THROWS_AS(load_manifest(dir / "absent.jsonl"), IoError);
}

}  // TEST_SUITE
