// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ndns/audio_io.hpp"

namespace ndns {

struct SynthConfig {
  double snr_db_min = -5.0;
  double snr_db_max = 20.0;
  double segment_s = 30.0;
  int sample_rate_hz = 16000;
  int count = 1;
  uint64_t seed = 0;
};

struct MixtureRecord {
  std::string clean_path;  // relative to the manifest
  std::string noise_path;
  std::string noisy_path;
  std::string clean_source_id;
  std::string noise_source_id;
  double snr_db = 0.0;          // target SNR of the pair
  double gain_applied = 0.0;    // noise scale before normalization
  double normalization = 1.0;   // joint anti-clip scale on all three
};

struct MixResult {
  AudioClip noisy;
  double gain = 0.0;
  double normalization = 1.0;
};

/// Additive mixing at a target SNR: noise is scaled by
/// g = rms(clean)/rms(noise) * 10^(-snr/20) and added to clean. If the
/// mixture peaks above 0.99 all three signals are scaled jointly, which
/// preserves both the SNR and the additivity identity. The scaled clean
/// and noise are written back into the arguments.
MixResult mix_at_snr(AudioClip& clean, AudioClip& noise, double target_snr_db);

double rms(const AudioClip& clip);

/// Synthesizes cfg.count (clean, noise, noisy) triples from WAV pools and
/// writes them plus a JSON-lines manifest under out_dir. All per-item
/// randomness derives from hash(seed, item index), so output bytes depend
/// only on (cfg, directory contents).
std::vector<MixtureRecord> synthesize_dataset(
    const SynthConfig& cfg, const std::filesystem::path& clean_dir,
    const std::filesystem::path& noise_dir, const std::filesystem::path& out_dir,
    int jobs = 1);

std::vector<MixtureRecord> load_manifest(const std::filesystem::path& manifest_path);
void save_manifest(const std::vector<MixtureRecord>& records,
                   const std::filesystem::path& manifest_path);

struct Triple {
  AudioClip clean;
  AudioClip noise;
  AudioClip noisy;
  MixtureRecord record;
};

/// Loads one triple by manifest index; verifies the three clips agree in
/// length and rate.
Triple load_triple(const std::vector<MixtureRecord>& manifest,
                   const std::filesystem::path& manifest_path, size_t index);

}  // namespace ndns
