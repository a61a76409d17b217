// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ndns/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>

#include "ndns/error.hpp"

namespace ndns {

namespace detail {

namespace {

// FFTW plan creation is not thread-safe; execution on distinct buffers via
// the new-array interface is. Plans are cached per transform size.
std::mutex g_plan_mutex;

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

PlanPair plans_for(int n) {
  static std::map<int, PlanPair> cache;
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  double* re = fftw_alloc_real(n);
  fftw_complex* cx = fftw_alloc_complex(n / 2 + 1);
  PlanPair p;
  p.forward = fftw_plan_dft_r2c_1d(n, re, cx, FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_c2r_1d(n, cx, re, FFTW_ESTIMATE);
  fftw_free(re);
  fftw_free(cx);
  cache[n] = p;
  return p;
}

struct FftwBuffer {
  explicit FftwBuffer(int n)
      : real(fftw_alloc_real(n)), cplx(fftw_alloc_complex(n / 2 + 1)) {}
  ~FftwBuffer() {
    fftw_free(real);
    fftw_free(cplx);
  }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  double* real;
  fftw_complex* cplx;
};

}  // namespace

std::vector<double> make_window(const StftConfig& cfg) {
  const int n = cfg.window_length;
  std::vector<double> w(n);
  switch (cfg.window) {
    case WindowType::kHann:
      for (int i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);  // periodic form
      break;
  }
  return w;
}

void rfft(const double* in, std::complex<double>* out, int n) {
  PlanPair p = plans_for(n);
  FftwBuffer buf(n);
  std::copy(in, in + n, buf.real);
  fftw_execute_dft_r2c(p.forward, buf.real, buf.cplx);
  for (int i = 0; i < n / 2 + 1; ++i)
    out[i] = {buf.cplx[i][0], buf.cplx[i][1]};
}

void irfft(const std::complex<double>* in, double* out, int n) {
  PlanPair p = plans_for(n);
  FftwBuffer buf(n);
  for (int i = 0; i < n / 2 + 1; ++i) {
    buf.cplx[i][0] = in[i].real();
    buf.cplx[i][1] = in[i].imag();
  }
  fftw_execute_dft_c2r(p.inverse, buf.cplx, buf.real);
  const double scale = 1.0 / n;
  for (int i = 0; i < n; ++i) out[i] = buf.real[i] * scale;
}

}  // namespace detail

void check_config(const StftConfig& cfg) {
  if (cfg.window_length <= 0 || cfg.hop_length <= 0)
    throw InvalidArgument("STFT window and hop must be positive");
  if (cfg.window_length % cfg.hop_length != 0)
    throw InvalidArgument("hop length must divide window length");
  if (cfg.sample_rate_hz <= 0)
    throw InvalidArgument("sample rate must be positive");
}

size_t frame_count(size_t samples, const StftConfig& cfg) {
  const size_t window = static_cast<size_t>(cfg.window_length);
  const size_t hop = static_cast<size_t>(cfg.hop_length);
  if (samples < window)
    throw InvalidArgument("clip shorter than one analysis window");
  return (samples - window + hop - 1) / hop + 1;
}

Spectrogram stft(const AudioClip& clip, const StftConfig& cfg) {
  check_config(cfg);
  if (clip.sample_rate_hz != cfg.sample_rate_hz)
    throw InvalidArgument("clip sample rate does not match STFT config");

  const int window = cfg.window_length;
  const int hop = cfg.hop_length;
  const size_t n_frames = frame_count(clip.samples.size(), cfg);
  const std::vector<double> taper = detail::make_window(cfg);

  Spectrogram spec;
  spec.config = cfg;
  spec.source_samples = clip.samples.size();
  spec.frames.resize(n_frames);

  std::vector<double> buf(window);
  for (size_t k = 0; k < n_frames; ++k) {
    const size_t start = k * hop;
    for (int i = 0; i < window; ++i) {
      const size_t t = start + i;
      const double s = t < clip.samples.size() ? clip.samples[t] : 0.0;
      buf[i] = s * taper[i];
    }
    spec.frames[k].resize(cfg.bins());
    detail::rfft(buf.data(), spec.frames[k].data(), window);
  }
  return spec;
}

AudioClip istft(const Spectrogram& spec) {
  check_config(spec.config);
  if (spec.frames.empty()) throw InvalidArgument("empty spectrogram");
  const int window = spec.config.window_length;
  const int hop = spec.config.hop_length;
  const int bins = spec.config.bins();
  for (const auto& f : spec.frames)
    if (static_cast<int>(f.size()) != bins)
      throw InvalidArgument("spectrogram frame has wrong bin count");

  const size_t covered = (spec.frames.size() - 1) * hop + window;
  const size_t out_len =
      spec.source_samples > 0 ? spec.source_samples : covered;
  const std::vector<double> taper = detail::make_window(spec.config);

  std::vector<double> num(covered, 0.0), den(covered, 0.0);
  std::vector<double> frame_time(window);
  for (size_t k = 0; k < spec.frames.size(); ++k) {
    detail::irfft(spec.frames[k].data(), frame_time.data(), window);
    const size_t start = k * hop;
    for (int i = 0; i < window; ++i) {
      num[start + i] += taper[i] * frame_time[i];
      den[start + i] += taper[i] * taper[i];
    }
  }

  AudioClip out;
  out.sample_rate_hz = spec.config.sample_rate_hz;
  out.samples.resize(out_len);
  for (size_t t = 0; t < out_len; ++t) {
    const double d = t < covered ? den[t] : 0.0;
    out.samples[t] = d > 1e-12 ? num[t] / d : 0.0;
  }
  return out;
}

MagnitudePhase magnitude_phase(const Spectrogram& spec) {
  MagnitudePhase mp;
  mp.magnitude.resize(spec.frames.size());
  mp.phase.resize(spec.frames.size());
  for (size_t k = 0; k < spec.frames.size(); ++k) {
    const auto& frame = spec.frames[k];
    mp.magnitude[k].resize(frame.size());
    mp.phase[k].resize(frame.size());
    for (size_t i = 0; i < frame.size(); ++i) {
      const double mag = std::abs(frame[i]);
      mp.magnitude[k][i] = mag;
      double ph = mag == 0.0 ? 0.0 : std::atan2(frame[i].imag(), frame[i].real());
      if (ph <= -M_PI) ph = M_PI;  // normalize phase into (-pi, pi]
      mp.phase[k][i] = ph;
    }
  }
  return mp;
}

Spectrogram recombine(const std::vector<std::vector<double>>& magnitude,
                      const std::vector<std::vector<double>>& phase,
                      const StftConfig& cfg, size_t source_samples) {
  if (magnitude.size() != phase.size())
    throw InvalidArgument("magnitude/phase frame counts differ");
  Spectrogram spec;
  spec.config = cfg;
  spec.source_samples = source_samples;
  spec.frames.resize(magnitude.size());
  for (size_t k = 0; k < magnitude.size(); ++k) {
    if (magnitude[k].size() != phase[k].size())
      throw InvalidArgument("magnitude/phase bin counts differ");
    spec.frames[k].resize(magnitude[k].size());
    for (size_t i = 0; i < magnitude[k].size(); ++i)
      spec.frames[k][i] = std::polar(magnitude[k][i], phase[k][i]);
  }
  return spec;
}

}  // namespace ndns
