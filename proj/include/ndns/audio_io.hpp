// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ndns {

/// Mono waveform, amplitudes nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// Throws InvalidArgument if the clip breaks an AudioClip invariant
// (non-positive rate or non-finite sample).
void check_clip(const AudioClip& clip, const char* what);

/// Reads a RIFF/WAVE file. Only PCM16 mono is accepted; integer sample i
/// maps to i / 32768.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes PCM16 mono. Amplitudes are clamped to [-1, 1 - 2^-15] and
/// converted with round-to-nearest, so read_wav(write_wav(c)) matches c
/// within 2^-15 per sample.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

}  // namespace ndns
