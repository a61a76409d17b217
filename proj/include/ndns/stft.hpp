// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "ndns/audio_io.hpp"

namespace ndns {

enum class WindowType { kHann };

struct StftConfig {
  int window_length = 512;
  int hop_length = 128;
  WindowType window = WindowType::kHann;
  int sample_rate_hz = 16000;

  int bins() const { return window_length / 2 + 1; }
  double frame_step_s() const {
    return static_cast<double>(hop_length) / sample_rate_hz;
  }
  /// Wall-clock time at which frame k's analysis buffer is full.
  double frame_fill_time_s(size_t frame) const {
    return (static_cast<double>(frame) * hop_length + window_length) /
           sample_rate_hz;
  }
};

// Throws InvalidArgument unless hop divides window and both are positive.
void check_config(const StftConfig& cfg);

/// Half-spectrum frames of a real signal. `source_samples` remembers the
/// analyzed length so istft can truncate its overlap-add tail; 0 means
/// unknown (istft then returns the full covered span).
struct Spectrogram {
  std::vector<std::vector<std::complex<double>>> frames;
  StftConfig config;
  size_t source_samples = 0;
};

/// Number of analysis frames covering `samples`: every sample is covered,
/// the tail is zero-padded. samples must be >= window_length.
size_t frame_count(size_t samples, const StftConfig& cfg);

/// Forward STFT with a periodic Hann window. Frame k covers samples
/// [k*hop, k*hop + window).
Spectrogram stft(const AudioClip& clip, const StftConfig& cfg);

/// Weighted overlap-add inverse with sum-of-squared-window normalization.
/// Exact reconstruction (up to rounding) wherever the window power sum is
/// nonzero.
AudioClip istft(const Spectrogram& spec);

struct MagnitudePhase {
  std::vector<std::vector<double>> magnitude;  // nonnegative
  std::vector<std::vector<double>> phase;      // radians in (-pi, pi]
};

/// Splits each bin into |z| and arg(z); the phase of a zero bin is 0.
MagnitudePhase magnitude_phase(const Spectrogram& spec);

/// Rebuilds complex frames as magnitude * exp(i*phase).
Spectrogram recombine(const std::vector<std::vector<double>>& magnitude,
                      const std::vector<std::vector<double>>& phase,
                      const StftConfig& cfg, size_t source_samples);

namespace detail {
/// Periodic Hann taper of length n.
std::vector<double> make_window(const StftConfig& cfg);

/// Real-to-complex DFT of `in` (length n) into n/2+1 bins. Thread-safe.
void rfft(const double* in, std::complex<double>* out, int n);

/// Hermitian complex-to-real inverse of rfft, including the 1/n scale.
void irfft(const std::complex<double>* in, double* out, int n);
}  // namespace detail

}  // namespace ndns
