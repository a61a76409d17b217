// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ndns/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "ndns/error.hpp"
#include "ndns/metrics.hpp"
#include "ndns/rng.hpp"

namespace ndns {

namespace {

constexpr double kLog10Factor = 10.0 / 2.302585092994046;  // 10 / ln(10)

// The delta gate transmits d unchanged in its emission region and the
// straight-through window covers the sub-threshold band, so the gate is
// transparent to gradients.
inline double delta_gate_grad(double /*d*/, double /*theta*/) { return 1.0; }

int rounded_delay(double shadow) {
  const auto d = static_cast<int>(std::lround(shadow));
  return std::clamp(d, 0, kMaxDelay);
}

/// Layer parameters as used by the forward pass: optionally quantized
/// weights in column-major order, integer delays, clamped threshold.
struct RealizedLayer {
  int in = 0;
  int out = 0;
  std::vector<double> w_col;  // [i * out + j]
  std::vector<int> delays;
  double threshold = 0.0;
};

std::vector<RealizedLayer> realize(const ShadowParams& params,
                                   const TrainConfig& cfg) {
  std::vector<RealizedLayer> layers;
  layers.reserve(params.layers.size());
  for (const ShadowLayer& sl : params.layers) {
    RealizedLayer rl;
    rl.in = sl.in_dim;
    rl.out = sl.out_dim;
    rl.w_col.resize(sl.weights.size());
    if (cfg.quantize) {
      const QuantizedWeights qw = quantize_weights(sl.weights, sl.weight_bits);
      for (int j = 0; j < rl.out; ++j)
        for (int i = 0; i < rl.in; ++i)
          rl.w_col[static_cast<size_t>(i) * rl.out + j] = std::ldexp(
              static_cast<double>(qw.q[static_cast<size_t>(j) * rl.in + i]),
              qw.scale_exp);
    } else {
      for (int j = 0; j < rl.out; ++j)
        for (int i = 0; i < rl.in; ++i)
          rl.w_col[static_cast<size_t>(i) * rl.out + j] =
              sl.weights[static_cast<size_t>(j) * rl.in + i];
    }
    rl.delays.resize(sl.delays.size());
    for (size_t j = 0; j < sl.delays.size(); ++j)
      rl.delays[j] = rounded_delay(sl.delays[j]);
    rl.threshold = std::max(0.0, sl.threshold);
    layers.push_back(std::move(rl));
  }
  return layers;
}

struct LayerTape {
  std::vector<SparseEvents> in_events;        // [T]
  std::vector<std::vector<double>> acc;       // [T][out], post-update
  std::vector<std::vector<double>> d;         // [T][out], pre-gate
  std::vector<std::vector<double>> arrived;   // [T][out], delayed output
};

struct Tape {
  std::vector<std::vector<double>> input_d;   // [T][in], input delta pre-gate
  std::vector<LayerTape> layers;
  std::vector<std::vector<double>> decoder;   // [T][bins], sigma post-update
};

struct ForwardOutput {
  std::vector<std::vector<double>> masks;       // [T][bins]
  std::vector<std::vector<double>> masked_mag;  // [T][bins]
  AudioClip denoised;                           // segment overlap-add span
  double neg_si_snr = 0.0;
  double mse = 0.0;
  std::vector<double> g_samples;  // d(neg_si_snr)/d(denoised samples)
  double loss() const { return neg_si_snr + mse; }
};

/// Negative capped SI-SNR of y against target, plus its gradient in y.
/// Degenerate cases (silent target, exact match, vanishing projection)
/// contribute a flat loss with zero gradient.
void neg_si_snr_with_grad(const std::vector<double>& y,
                          const std::vector<double>& target, double* value,
                          std::vector<double>* grad) {
  const size_t n = y.size();
  grad->assign(n, 0.0);
  double my = 0.0, mt = 0.0;
  for (size_t i = 0; i < n; ++i) {
    my += y[i];
    mt += target[i];
  }
  my /= static_cast<double>(n);
  mt /= static_cast<double>(n);

  double tt = 0.0, xt = 0.0, xx = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double x = y[i] - my;
    const double t = target[i] - mt;
    tt += t * t;
    xt += x * t;
    xx += x * x;
  }
  if (tt == 0.0) {  // silent target segment: SI-SNR undefined, skip the term
    *value = 0.0;
    return;
  }
  const double p = xt * xt / tt;
  const double e = xx - p;
  if (e <= 0.0 || p / std::max(e, 1e-300) > 1e30) {  // beyond the 300 dB cap
    *value = -kSiSnrCapDb;
    return;
  }
  if (p <= 1e-30 * xx) {  // orthogonal estimate: plateau, no usable gradient
    *value = kSiSnrCapDb;
    return;
  }
  *value = -cap_db(10.0 * std::log10(p / e));
  if (*value <= -kSiSnrCapDb) return;  // capped: flat

  const double alpha = xt / tt;
  // d(-10*log10(P/E))/dx = -(10/ln10) * (P'/P - E'/E),
  // P' = 2*alpha*t, E' = 2x - 2*alpha*t, then re-center (mean subtraction).
  double gsum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double x = y[i] - my;
    const double t = target[i] - mt;
    const double gp = 2.0 * alpha * t;
    const double ge = 2.0 * x - gp;
    (*grad)[i] = -kLog10Factor * (gp / p - ge / e);
    gsum += (*grad)[i];
  }
  const double gmean = gsum / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) (*grad)[i] -= gmean;
}

ForwardOutput run_forward(const std::vector<RealizedLayer>& layers,
                          const ShadowParams& params,
                          const TrainingExample& segment, TrainState& state,
                          const TrainConfig& cfg, Tape* tape) {
  const size_t T = segment.input_mag.size();
  if (T == 0) throw InvalidArgument("empty training segment");
  const size_t bins = segment.input_mag[0].size();
  if (state.layers.size() != layers.size())
    throw InvalidArgument("train state does not match network shape");

  const double theta_in = std::max(0.0, params.input_threshold);
  if (tape) {
    tape->input_d.resize(T);
    tape->layers.assign(layers.size(), LayerTape{});
    for (size_t l = 0; l < layers.size(); ++l) {
      tape->layers[l].in_events.resize(T);
      tape->layers[l].acc.resize(T);
      tape->layers[l].d.resize(T);
      tape->layers[l].arrived.resize(T);
    }
    tape->decoder.resize(T);
  }

  ForwardOutput out;
  out.masks.resize(T);
  out.masked_mag.resize(T);

  for (size_t t = 0; t < T; ++t) {
    const std::vector<double>& x = segment.input_mag[t];
    if (x.size() != state.input_reference.size())
      throw InvalidArgument("frame length does not match network input dim");

    // Input delta encoding.
    SparseEvents events;
    if (tape) tape->input_d[t].resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - state.input_reference[i];
      if (tape) tape->input_d[t][i] = d;
      if (d != 0.0 && std::abs(d) >= theta_in) {
        events.push(static_cast<int>(i), d);
        state.input_reference[i] = x[i];
      }
    }

    for (size_t l = 0; l < layers.size(); ++l) {
      const RealizedLayer& rl = layers[l];
      TrainState::LayerState& ls = state.layers[l];
      if (tape) tape->layers[l].in_events[t] = events;

      for (size_t k = 0; k < events.size(); ++k) {
        const double v = events.value[k];
        const double* col =
            &rl.w_col[static_cast<size_t>(events.index[k]) * rl.out];
        for (int j = 0; j < rl.out; ++j) ls.sigma[static_cast<size_t>(j)] += col[j] * v;
      }

      if (tape) {
        tape->layers[l].acc[t] = ls.sigma;
        tape->layers[l].d[t].resize(static_cast<size_t>(rl.out));
      }
      for (int j = 0; j < rl.out; ++j) {
        const double r = std::max(0.0, ls.sigma[static_cast<size_t>(j)]);
        const double d = r - ls.reference[static_cast<size_t>(j)];
        if (tape) tape->layers[l].d[t][static_cast<size_t>(j)] = d;
        if (d != 0.0 && std::abs(d) >= rl.threshold) {
          ls.reference[static_cast<size_t>(j)] = r;
          ls.ring[(ls.head + static_cast<size_t>(rl.delays[static_cast<size_t>(j)])) %
                  ls.ring.size()][static_cast<size_t>(j)] = d;
        }
      }

      SparseEvents due;
      std::vector<double>& slot = ls.ring[ls.head];
      if (tape) tape->layers[l].arrived[t] = slot;
      for (int j = 0; j < rl.out; ++j) {
        if (slot[static_cast<size_t>(j)] != 0.0) {
          due.push(j, slot[static_cast<size_t>(j)]);
          slot[static_cast<size_t>(j)] = 0.0;
        }
      }
      ls.head = (ls.head + 1) % ls.ring.size();
      events = std::move(due);
    }

    for (size_t k = 0; k < events.size(); ++k)
      state.decoder_sigma[static_cast<size_t>(events.index[k])] += events.value[k];
    if (tape) tape->decoder[t] = state.decoder_sigma;

    out.masks[t].resize(bins);
    out.masked_mag[t].resize(bins);
    for (size_t f = 0; f < bins; ++f) {
      out.masks[t][f] = std::max(0.0, state.decoder_sigma[f]);
      out.masked_mag[t][f] = out.masks[t][f] * segment.delayed_mag[t][f];
    }
  }

  // Loss: negative SI-SNR of the resynthesized segment plus the
  // STFT-magnitude MSE against the delayed clean frames.
  Spectrogram masked = recombine(out.masked_mag, segment.delayed_phase, cfg.stft,
                                 segment.target_samples.size());
  out.denoised = istft(masked);
  neg_si_snr_with_grad(out.denoised.samples, segment.target_samples,
                       &out.neg_si_snr, &out.g_samples);

  double sq = 0.0;
  for (size_t t = 0; t < T; ++t)
    for (size_t f = 0; f < bins; ++f) {
      const double diff = out.masked_mag[t][f] - segment.clean_mag[t][f];
      sq += diff * diff;
    }
  out.mse = cfg.loss_lambda * sq / (static_cast<double>(T) * static_cast<double>(bins));
  return out;
}

/// Adjoint of the weighted overlap-add istft: maps the gradient in output
/// samples to gradients in the complex half-spectrum frames.
void istft_adjoint(const std::vector<double>& g_samples, size_t n_frames,
                   const StftConfig& cfg,
                   std::vector<std::vector<std::complex<double>>>* g_frames) {
  const int window = cfg.window_length;
  const int hop = cfg.hop_length;
  const int bins = cfg.bins();
  const std::vector<double> taper = detail::make_window(cfg);
  const size_t covered = (n_frames - 1) * static_cast<size_t>(hop) +
                         static_cast<size_t>(window);

  std::vector<double> den(covered, 0.0);
  for (size_t k = 0; k < n_frames; ++k)
    for (int i = 0; i < window; ++i)
      den[k * static_cast<size_t>(hop) + static_cast<size_t>(i)] += taper[i] * taper[i];

  std::vector<double> g_num(covered, 0.0);
  for (size_t t = 0; t < covered && t < g_samples.size(); ++t)
    g_num[t] = den[t] > 1e-12 ? g_samples[t] / den[t] : 0.0;

  g_frames->assign(n_frames, std::vector<std::complex<double>>(
                                 static_cast<size_t>(bins)));
  std::vector<double> seg(static_cast<size_t>(window));
  std::vector<std::complex<double>> spec(static_cast<size_t>(bins));
  for (size_t k = 0; k < n_frames; ++k) {
    for (int i = 0; i < window; ++i)
      seg[static_cast<size_t>(i)] =
          taper[i] * g_num[k * static_cast<size_t>(hop) + static_cast<size_t>(i)];
    detail::rfft(seg.data(), spec.data(), window);
    for (int f = 0; f < bins; ++f) {
      // Interior bins appear twice in the Hermitian extension.
      const double c = (f == 0 || f == window / 2) ? 1.0 / window : 2.0 / window;
      (*g_frames)[k][static_cast<size_t>(f)] = c * spec[static_cast<size_t>(f)];
    }
  }
}

}  // namespace

void check_train_config(const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0) throw InvalidArgument("learning rate must be positive");
  if (cfg.epochs < 0) throw InvalidArgument("epochs must be nonnegative");
  if (cfg.batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (cfg.bptt_len < 1) throw InvalidArgument("bptt_len must be >= 1");
  if (cfg.net_delay_steps < 0) throw InvalidArgument("net_delay_steps must be >= 0");
  if (cfg.val_fraction < 0.0 || cfg.val_fraction >= 1.0)
    throw InvalidArgument("val_fraction must be in [0, 1)");
  check_config(cfg.stft);
}

ShadowParams init_shadow(const std::vector<int>& dims, int weight_bits,
                         uint64_t seed) {
  if (dims.size() < 2) throw InvalidArgument("need at least two dimensions");
  Rng rng(seed);
  ShadowParams params;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    ShadowLayer layer;
    layer.in_dim = dims[i];
    layer.out_dim = dims[i + 1];
    layer.weight_bits = weight_bits;
    const bool last = i + 2 == dims.size();
    const double scale =
        std::sqrt(2.0 / dims[i]) * (last ? 0.3 : 1.0);  // damped mask head
    layer.weights.resize(static_cast<size_t>(dims[i]) * static_cast<size_t>(dims[i + 1]));
    for (double& w : layer.weights) w = rng.normal() * scale;
    layer.delays.assign(static_cast<size_t>(dims[i + 1]), 0.0);
    layer.threshold = 0.0;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

SdnnNetwork deploy(const ShadowParams& params) {
  SdnnNetwork net;
  net.input_threshold = std::max(0.0, params.input_threshold);
  for (const ShadowLayer& sl : params.layers) {
    SdnnLayer layer;
    layer.in_dim = sl.in_dim;
    layer.out_dim = sl.out_dim;
    layer.weight_bits = sl.weight_bits;
    const QuantizedWeights qw = quantize_weights(sl.weights, sl.weight_bits);
    layer.weights = qw.q;
    layer.scale_exp = qw.scale_exp;
    layer.delays.resize(sl.delays.size());
    for (size_t j = 0; j < sl.delays.size(); ++j)
      layer.delays[j] = rounded_delay(sl.delays[j]);
    layer.threshold = std::max(0.0, sl.threshold);
    net.layers.push_back(std::move(layer));
  }
  validate_network(net);
  return net;
}

void Gradients::accumulate(const Gradients& other) {
  for (size_t l = 0; l < layers.size(); ++l) {
    for (size_t i = 0; i < layers[l].weights.size(); ++i)
      layers[l].weights[i] += other.layers[l].weights[i];
    for (size_t j = 0; j < layers[l].delays.size(); ++j)
      layers[l].delays[j] += other.layers[l].delays[j];
    layers[l].threshold += other.layers[l].threshold;
  }
  input_threshold += other.input_threshold;
}

void Gradients::scale(double factor) {
  for (auto& layer : layers) {
    for (double& g : layer.weights) g *= factor;
    for (double& g : layer.delays) g *= factor;
    layer.threshold *= factor;
  }
  input_threshold *= factor;
}

double Gradients::norm() const {
  double sq = 0.0;
  for (const auto& layer : layers) {
    for (double g : layer.weights) sq += g * g;
    for (double g : layer.delays) sq += g * g;
    sq += layer.threshold * layer.threshold;
  }
  sq += input_threshold * input_threshold;
  return std::sqrt(sq);
}

bool Gradients::finite() const {
  for (const auto& layer : layers) {
    for (double g : layer.weights)
      if (!std::isfinite(g)) return false;
    for (double g : layer.delays)
      if (!std::isfinite(g)) return false;
    if (!std::isfinite(layer.threshold)) return false;
  }
  return std::isfinite(input_threshold);
}

Gradients zero_gradients_like(const ShadowParams& params) {
  Gradients g;
  g.layers.resize(params.layers.size());
  for (size_t l = 0; l < params.layers.size(); ++l) {
    g.layers[l].weights.assign(params.layers[l].weights.size(), 0.0);
    g.layers[l].delays.assign(params.layers[l].delays.size(), 0.0);
  }
  return g;
}

TrainState make_train_state(const ShadowParams& params) {
  if (params.layers.empty()) throw InvalidArgument("network has no layers");
  TrainState state;
  state.input_reference.assign(static_cast<size_t>(params.layers.front().in_dim), 0.0);
  state.layers.resize(params.layers.size());
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const auto out = static_cast<size_t>(params.layers[l].out_dim);
    state.layers[l].sigma.assign(out, 0.0);
    state.layers[l].reference.assign(out, 0.0);
    state.layers[l].ring.assign(kMaxDelay + 1, std::vector<double>(out, 0.0));
    state.layers[l].head = 0;
  }
  state.decoder_sigma.assign(static_cast<size_t>(params.layers.back().out_dim), 0.0);
  return state;
}

std::vector<TrainingExample> prepare_segments(const AudioClip& noisy,
                                              const AudioClip& clean,
                                              const TrainConfig& cfg) {
  check_train_config(cfg);
  if (noisy.samples.size() != clean.samples.size())
    throw InvalidArgument("noisy/clean length mismatch");
  if (noisy.sample_rate_hz != clean.sample_rate_hz ||
      noisy.sample_rate_hz != cfg.stft.sample_rate_hz)
    throw InvalidArgument("sample rate mismatch");

  const Spectrogram noisy_spec = stft(noisy, cfg.stft);
  const Spectrogram clean_spec = stft(clean, cfg.stft);
  const MagnitudePhase noisy_mp = magnitude_phase(noisy_spec);
  const MagnitudePhase clean_mp = magnitude_phase(clean_spec);

  const size_t total = noisy_spec.frames.size();
  const auto hop = static_cast<size_t>(cfg.stft.hop_length);
  const auto window = static_cast<size_t>(cfg.stft.window_length);
  const auto delay = static_cast<size_t>(cfg.net_delay_steps);
  const std::vector<double> zeros(static_cast<size_t>(cfg.stft.bins()), 0.0);

  std::vector<TrainingExample> segments;
  for (size_t f0 = 0; f0 < total; f0 += static_cast<size_t>(cfg.bptt_len)) {
    const size_t f1 = std::min(total, f0 + static_cast<size_t>(cfg.bptt_len));
    const size_t frames = f1 - f0;
    TrainingExample ex;
    ex.sample_rate_hz = noisy.sample_rate_hz;
    ex.input_mag.resize(frames);
    ex.delayed_mag.resize(frames);
    ex.delayed_phase.resize(frames);
    ex.clean_mag.resize(frames);
    for (size_t t = 0; t < frames; ++t) {
      const size_t g = f0 + t;
      ex.input_mag[t] = noisy_mp.magnitude[g];
      if (g >= delay) {
        ex.delayed_mag[t] = noisy_mp.magnitude[g - delay];
        ex.delayed_phase[t] = noisy_mp.phase[g - delay];
        ex.clean_mag[t] = clean_mp.magnitude[g - delay];
      } else {
        ex.delayed_mag[t] = zeros;
        ex.delayed_phase[t] = zeros;
        ex.clean_mag[t] = zeros;
      }
    }
    const size_t span = (frames - 1) * hop + window;
    const size_t sample0 = f0 * hop;
    const size_t delay_samples = delay * hop;
    ex.target_samples.assign(span, 0.0);
    for (size_t u = 0; u < span; ++u) {
      const size_t global = sample0 + u;
      if (global >= delay_samples) {
        const size_t src = global - delay_samples;
        if (src < clean.samples.size()) ex.target_samples[u] = clean.samples[src];
      }
    }
    segments.push_back(std::move(ex));
  }
  return segments;
}

double loss(const AudioClip& denoised, const AudioClip& clean,
            const std::vector<std::vector<double>>& masked_mags,
            const std::vector<std::vector<double>>& clean_mags, double lambda) {
  const double snr = -cap_db(si_snr_db(denoised, clean));
  if (masked_mags.size() != clean_mags.size())
    throw InvalidArgument("loss: magnitude frame counts differ");
  double sq = 0.0;
  size_t count = 0;
  for (size_t t = 0; t < masked_mags.size(); ++t) {
    if (masked_mags[t].size() != clean_mags[t].size())
      throw InvalidArgument("loss: magnitude bin counts differ");
    for (size_t f = 0; f < masked_mags[t].size(); ++f) {
      const double diff = masked_mags[t][f] - clean_mags[t][f];
      sq += diff * diff;
      ++count;
    }
  }
  return snr + (count > 0 ? lambda * sq / static_cast<double>(count) : 0.0);
}

ForwardResult forward_loss(const ShadowParams& params,
                           const TrainingExample& segment, TrainState& state,
                           const TrainConfig& cfg) {
  const std::vector<RealizedLayer> layers = realize(params, cfg);
  ForwardOutput out = run_forward(layers, params, segment, state, cfg, nullptr);
  return {out.loss(), std::move(out.masks)};
}

ForwardBackwardResult forward_backward(const ShadowParams& params,
                                       const TrainingExample& segment,
                                       TrainState& state,
                                       const TrainConfig& cfg) {
  const std::vector<RealizedLayer> layers = realize(params, cfg);
  Tape tape;
  ForwardOutput out = run_forward(layers, params, segment, state, cfg, &tape);

  const size_t T = segment.input_mag.size();
  const size_t bins = segment.input_mag[0].size();
  const size_t n_layers = layers.size();

  ForwardBackwardResult result;
  result.loss = out.loss();
  result.grads = zero_gradients_like(params);

  // Gradient w.r.t. the mask frames: SI-SNR term through the istft adjoint
  // plus the direct magnitude-MSE term.
  std::vector<std::vector<std::complex<double>>> g_frames;
  istft_adjoint(out.g_samples, T, cfg.stft, &g_frames);

  const double mse_scale = 2.0 * cfg.loss_lambda /
                           (static_cast<double>(T) * static_cast<double>(bins));
  std::vector<std::vector<double>> g_mask(T, std::vector<double>(bins, 0.0));
  for (size_t t = 0; t < T; ++t) {
    for (size_t f = 0; f < bins; ++f) {
      const double mag = segment.delayed_mag[t][f];
      const double phase = segment.delayed_phase[t][f];
      const double g_re = g_frames[t][f].real();
      const double g_im = g_frames[t][f].imag();
      double g = mag * (g_re * std::cos(phase) + g_im * std::sin(phase));
      g += mse_scale * (out.masked_mag[t][f] - segment.clean_mag[t][f]) * mag;
      g_mask[t][f] = g;
    }
  }

  // Decoder sigma: suffix-accumulate through mask = relu(sigma).
  std::vector<std::vector<double>> g_arr(T, std::vector<double>(
                                                static_cast<size_t>(layers.back().out)));
  {
    std::vector<double> acc(bins, 0.0);
    for (size_t t = T; t-- > 0;) {
      for (size_t f = 0; f < bins; ++f)
        if (tape.decoder[t][f] > 0.0) acc[f] += g_mask[t][f];
      g_arr[t] = acc;
    }
  }

  // Layer-by-layer BPTT, deepest first.
  for (size_t l = n_layers; l-- > 0;) {
    const RealizedLayer& rl = layers[l];
    const LayerTape& lt = tape.layers[l];
    const auto out_dim = static_cast<size_t>(rl.out);
    const auto in_dim = static_cast<size_t>(rl.in);
    LayerGradients& lg = result.grads.layers[l];

    // Route arrival gradients back through each neuron's axonal delay.
    std::vector<std::vector<double>> g_emit(T, std::vector<double>(out_dim, 0.0));
    for (size_t s = 0; s < T; ++s)
      for (size_t j = 0; j < out_dim; ++j) {
        const size_t arrival = s + static_cast<size_t>(rl.delays[j]);
        if (arrival < T) g_emit[s][j] = g_arr[arrival][j];
      }

    if (cfg.train_delays) {
      // Shifting a delay by one step moves each arrived value one step
      // later; the directional derivative pairs the arrival gradient with
      // the local time difference of the arrived stream.
      for (size_t j = 0; j < out_dim; ++j) {
        double g = 0.0;
        for (size_t s = 0; s < T; ++s) {
          const double prev = s > 0 ? lt.arrived[s - 1][j] : 0.0;
          g -= g_arr[s][j] * (lt.arrived[s][j] - prev);
        }
        lg.delays[j] = g;
      }
    }

    std::vector<double> g_ref(out_dim, 0.0);   // d loss / d reference
    std::vector<double> g_acc(out_dim, 0.0);   // d loss / d sigma accumulator
    std::vector<double> w_col_grad(in_dim * out_dim, 0.0);
    std::vector<std::vector<double>> g_prev(T);

    for (size_t s = T; s-- > 0;) {
      for (size_t j = 0; j < out_dim; ++j) {
        const double d = lt.d[s][j];
        const double surrogate = delta_gate_grad(d, rl.threshold);
        const double into_gate = g_emit[s][j] + g_ref[j];
        const double g_d = into_gate * surrogate;
        if (cfg.train_thresholds && rl.threshold > 0.0 && d != 0.0 &&
            std::abs(d) <= 2.0 * rl.threshold)
          lg.threshold -= into_gate * (d > 0.0 ? 1.0 : -1.0);
        g_ref[j] -= g_d;
        g_acc[j] += lt.acc[s][j] > 0.0 ? g_d : 0.0;
      }

      // Weight gradients only where input events existed; the input-event
      // gradient is dense (straight-through delta gate upstream).
      const SparseEvents& ev = lt.in_events[s];
      for (size_t k = 0; k < ev.size(); ++k) {
        const auto i = static_cast<size_t>(ev.index[k]);
        const double v = ev.value[k];
        double* gcol = &w_col_grad[i * out_dim];
        for (size_t j = 0; j < out_dim; ++j) gcol[j] += g_acc[j] * v;
      }
      g_prev[s].assign(in_dim, 0.0);
      for (size_t i = 0; i < in_dim; ++i) {
        const double* col = &rl.w_col[i * out_dim];
        double acc = 0.0;
        for (size_t j = 0; j < out_dim; ++j) acc += col[j] * g_acc[j];
        g_prev[s][i] = acc;
      }
    }

    // Column-major scratch back to the row-major shadow layout.
    for (size_t j = 0; j < out_dim; ++j)
      for (size_t i = 0; i < in_dim; ++i)
        lg.weights[j * in_dim + i] = w_col_grad[i * out_dim + j];

    if (l > 0) {
      g_arr = std::move(g_prev);
    } else if (cfg.train_thresholds && params.input_threshold > 0.0) {
      const double theta = params.input_threshold;
      for (size_t s = 0; s < T; ++s)
        for (size_t i = 0; i < in_dim; ++i) {
          const double d = tape.input_d[s][i];
          if (d != 0.0 && std::abs(d) <= 2.0 * theta)
            result.grads.input_threshold -= g_prev[s][i] * (d > 0.0 ? 1.0 : -1.0);
        }
    }
  }

  return result;
}

ForwardBackwardResult forward_backward(const ShadowParams& params,
                                       const std::vector<TrainingExample>& batch,
                                       std::vector<TrainState*>& states,
                                       const TrainConfig& cfg) {
  if (batch.size() != states.size())
    throw InvalidArgument("batch and state counts differ");
  if (batch.empty()) throw InvalidArgument("empty batch");
  ForwardBackwardResult total;
  total.grads = zero_gradients_like(params);
  for (size_t i = 0; i < batch.size(); ++i) {
    ForwardBackwardResult one = forward_backward(params, batch[i], *states[i], cfg);
    total.loss += one.loss;
    total.grads.accumulate(one.grads);
  }
  return total;
}

RadamState make_radam_state(const ShadowParams& params) {
  size_t n = 1;  // input threshold
  for (const ShadowLayer& layer : params.layers)
    n += layer.weights.size() + layer.delays.size() + 1;
  RadamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

namespace {

template <typename Fn>
void for_each_param(ShadowParams& params, const Gradients& grads, Fn&& fn) {
  size_t idx = 0;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    ShadowLayer& layer = params.layers[l];
    const LayerGradients& lg = grads.layers[l];
    for (size_t i = 0; i < layer.weights.size(); ++i)
      fn(idx++, layer.weights[i], lg.weights[i]);
    for (size_t j = 0; j < layer.delays.size(); ++j)
      fn(idx++, layer.delays[j], lg.delays[j]);
    fn(idx++, layer.threshold, lg.threshold);
  }
  fn(idx++, params.input_threshold, grads.input_threshold);
}

}  // namespace

bool radam_step(ShadowParams& params, const Gradients& grads, RadamState& opt,
                const TrainConfig& cfg) {
  if (!grads.finite()) {
    std::fprintf(stderr, "radam_step: non-finite gradient, step skipped\n");
    return false;
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  const double rho_inf = 2.0 / (1.0 - kBeta2) - 1.0;

  opt.step += 1;
  const auto t = static_cast<double>(opt.step);
  const double beta1_t = std::pow(kBeta1, t);
  const double beta2_t = std::pow(kBeta2, t);
  const double rho_t = rho_inf - 2.0 * t * beta2_t / (1.0 - beta2_t);

  double rect = 0.0;
  const bool rectified = rho_t > 4.0;
  if (rectified)
    rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                     ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));

  for_each_param(params, grads, [&](size_t idx, double& p, double g) {
    opt.m[idx] = kBeta1 * opt.m[idx] + (1.0 - kBeta1) * g;
    opt.v[idx] = kBeta2 * opt.v[idx] + (1.0 - kBeta2) * g * g;
    const double m_hat = opt.m[idx] / (1.0 - beta1_t);
    if (rectified) {
      const double v_hat = std::sqrt(opt.v[idx] / (1.0 - beta2_t));
      p -= cfg.learning_rate * rect * m_hat / (v_hat + kEps);
    } else {
      p -= cfg.learning_rate * m_hat;
    }
  });

  // Keep the shadow values inside their deployable ranges.
  for (ShadowLayer& layer : params.layers) {
    for (double& d : layer.delays) d = std::clamp(d, 0.0, static_cast<double>(kMaxDelay));
    layer.threshold = std::max(0.0, layer.threshold);
  }
  params.input_threshold = std::max(0.0, params.input_threshold);
  return true;
}

// --- checkpoint io -----------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'N', 'D', 'N', 'T'};
constexpr uint16_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& f, const std::string& origin) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw FormatError("truncated checkpoint: " + origin);
  return v;
}

void write_doubles(std::ofstream& f, const std::vector<double>& v) {
  write_le<uint64_t>(f, v.size());
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& f, const std::string& origin) {
  const auto n = read_le<uint64_t>(f, origin);
  std::vector<double> v(n);
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw FormatError("truncated checkpoint: " + origin);
  return v;
}

}  // namespace

void save_train_checkpoint(const TrainCheckpoint& ckpt,
                           const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path.string());
  f.write(kCheckpointMagic, 4);
  write_le<uint16_t>(f, kCheckpointVersion);
  write_le<uint32_t>(f, static_cast<uint32_t>(ckpt.shadow.layers.size()));
  write_le<double>(f, ckpt.shadow.input_threshold);
  for (const ShadowLayer& layer : ckpt.shadow.layers) {
    write_le<uint32_t>(f, static_cast<uint32_t>(layer.in_dim));
    write_le<uint32_t>(f, static_cast<uint32_t>(layer.out_dim));
    write_le<uint16_t>(f, static_cast<uint16_t>(layer.weight_bits));
    write_doubles(f, layer.weights);
    write_doubles(f, layer.delays);
    write_le<double>(f, layer.threshold);
  }
  write_doubles(f, ckpt.opt.m);
  write_doubles(f, ckpt.opt.v);
  write_le<int64_t>(f, ckpt.opt.step);
  write_le<int32_t>(f, ckpt.completed_epochs);
  write_le<uint32_t>(f, static_cast<uint32_t>(ckpt.history.size()));
  for (const EpochStats& e : ckpt.history) {
    write_le<int32_t>(f, e.epoch);
    write_le<double>(f, e.train_loss);
    write_le<double>(f, e.val_si_snri_data_db);
  }
  if (!f) throw IoError("checkpoint write failed: " + path.string());
}

TrainCheckpoint load_train_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw FormatError("bad magic in checkpoint: " + path.string());
  const auto version = read_le<uint16_t>(f, path.string());
  if (version > kCheckpointVersion)
    throw VersionError("checkpoint version " + std::to_string(version) +
                       " newer than supported");
  TrainCheckpoint ckpt;
  const auto n_layers = read_le<uint32_t>(f, path.string());
  ckpt.shadow.input_threshold = read_le<double>(f, path.string());
  for (uint32_t l = 0; l < n_layers; ++l) {
    ShadowLayer layer;
    layer.in_dim = static_cast<int>(read_le<uint32_t>(f, path.string()));
    layer.out_dim = static_cast<int>(read_le<uint32_t>(f, path.string()));
    layer.weight_bits = read_le<uint16_t>(f, path.string());
    layer.weights = read_doubles(f, path.string());
    layer.delays = read_doubles(f, path.string());
    layer.threshold = read_le<double>(f, path.string());
    ckpt.shadow.layers.push_back(std::move(layer));
  }
  ckpt.opt.m = read_doubles(f, path.string());
  ckpt.opt.v = read_doubles(f, path.string());
  ckpt.opt.step = read_le<int64_t>(f, path.string());
  ckpt.completed_epochs = read_le<int32_t>(f, path.string());
  const auto n_history = read_le<uint32_t>(f, path.string());
  for (uint32_t i = 0; i < n_history; ++i) {
    EpochStats e;
    e.epoch = read_le<int32_t>(f, path.string());
    e.train_loss = read_le<double>(f, path.string());
    e.val_si_snri_data_db = read_le<double>(f, path.string());
    ckpt.history.push_back(e);
  }
  return ckpt;
}

// --- config io ---------------------------------------------------------------

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["learning_rate"] = cfg.learning_rate;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["bptt_len"] = cfg.bptt_len;
  j["loss_lambda"] = cfg.loss_lambda;
  j["grad_clip"] = cfg.grad_clip;
  j["seed"] = cfg.seed;
  j["net_delay_steps"] = cfg.net_delay_steps;
  j["val_fraction"] = cfg.val_fraction;
  j["quantize"] = cfg.quantize;
  j["train_delays"] = cfg.train_delays;
  j["train_thresholds"] = cfg.train_thresholds;
  j["stft"] = {{"window_length", cfg.stft.window_length},
               {"hop_length", cfg.stft.hop_length},
               {"sample_rate_hz", cfg.stft.sample_rate_hz}};
  return j.dump(2) + "\n";
}

TrainConfig train_config_from_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("config parse error in " + path.string() + ": " + e.what());
  }
  TrainConfig cfg;
  try {
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.bptt_len = j.value("bptt_len", cfg.bptt_len);
    cfg.loss_lambda = j.value("loss_lambda", cfg.loss_lambda);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.net_delay_steps = j.value("net_delay_steps", cfg.net_delay_steps);
    cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
    cfg.quantize = j.value("quantize", cfg.quantize);
    cfg.train_delays = j.value("train_delays", cfg.train_delays);
    cfg.train_thresholds = j.value("train_thresholds", cfg.train_thresholds);
    if (j.contains("stft")) {
      const auto& s = j.at("stft");
      cfg.stft.window_length = s.value("window_length", cfg.stft.window_length);
      cfg.stft.hop_length = s.value("hop_length", cfg.stft.hop_length);
      cfg.stft.sample_rate_hz = s.value("sample_rate_hz", cfg.stft.sample_rate_hz);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config field error in " + path.string() + ": " + e.what());
  }
  check_train_config(cfg);
  return cfg;
}

std::string history_to_json(const std::vector<EpochStats>& history) {
  nlohmann::json j = nlohmann::json::array();
  for (const EpochStats& e : history)
    j.push_back({{"epoch", e.epoch},
                 {"train_loss", e.train_loss},
                 {"val_si_snri_data_db", e.val_si_snri_data_db}});
  return j.dump(2) + "\n";
}

// --- training loop -----------------------------------------------------------

namespace {

double validation_si_snri_data(const SdnnNetwork& net,
                               const std::vector<Triple>& val,
                               const TrainConfig& cfg) {
  if (val.empty()) return 0.0;
  double denoised_sum = 0.0, noisy_sum = 0.0;
  for (const Triple& triple : val) {
    DenoiseResult out = denoise(net, triple.noisy, cfg.stft, cfg.net_delay_steps);
    denoised_sum += cap_db(si_snr_db(out.clean_estimate, triple.clean));
    noisy_sum += cap_db(si_snr_db(triple.noisy, triple.clean));
  }
  return (denoised_sum - noisy_sum) / static_cast<double>(val.size());
}

}  // namespace

TrainResult train(const TrainCheckpoint& start,
                  const std::vector<MixtureRecord>& manifest,
                  const std::filesystem::path& manifest_path,
                  const TrainConfig& cfg, const std::filesystem::path& run_dir) {
  check_train_config(cfg);
  if (manifest.empty()) throw InvalidArgument("empty manifest");
  if (start.shadow.layers.empty()) throw InvalidArgument("untrained shadow is empty");

  const bool persist = !run_dir.empty();
  if (persist) {
    std::error_code ec;
    std::filesystem::create_directories(run_dir, ec);
    if (ec) throw IoError("cannot create run dir: " + run_dir.string());
  }

  // Deterministic split: the tail of the manifest is validation.
  const auto val_count = std::min(
      manifest.size() - 1,
      static_cast<size_t>(std::llround(cfg.val_fraction * static_cast<double>(manifest.size()))));
  const size_t train_count = manifest.size() - val_count;

  std::vector<Triple> val_triples;
  for (size_t i = train_count; i < manifest.size(); ++i)
    val_triples.push_back(load_triple(manifest, manifest_path, i));

  TrainCheckpoint ckpt = start;

  for (int epoch = ckpt.completed_epochs; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    size_t segment_count = 0;

    Gradients batch_grads = zero_gradients_like(ckpt.shadow);
    int batch_fill = 0;
    const auto flush = [&]() {
      if (batch_fill == 0) return;
      batch_grads.scale(1.0 / batch_fill);
      if (cfg.grad_clip > 0.0) {
        const double norm = batch_grads.norm();
        if (norm > cfg.grad_clip) batch_grads.scale(cfg.grad_clip / norm);
      }
      radam_step(ckpt.shadow, batch_grads, ckpt.opt, cfg);
      batch_grads = zero_gradients_like(ckpt.shadow);
      batch_fill = 0;
    };

    for (size_t item = 0; item < train_count; ++item) {
      const Triple triple = load_triple(manifest, manifest_path, item);
      const std::vector<TrainingExample> segments =
          prepare_segments(triple.noisy, triple.clean, cfg);
      TrainState state = make_train_state(ckpt.shadow);
      for (const TrainingExample& segment : segments) {
        ForwardBackwardResult fb =
            forward_backward(ckpt.shadow, segment, state, cfg);
        loss_sum += fb.loss;
        ++segment_count;
        batch_grads.accumulate(fb.grads);
        if (++batch_fill >= cfg.batch_size) flush();
      }
    }
    flush();

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = segment_count > 0 ? loss_sum / static_cast<double>(segment_count) : 0.0;
    const SdnnNetwork net = deploy(ckpt.shadow);
    stats.val_si_snri_data_db = validation_si_snri_data(net, val_triples, cfg);
    ckpt.history.push_back(stats);
    ckpt.completed_epochs = epoch + 1;

    if (persist) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.ndns", epoch + 1);
      save_model(net, run_dir / name);
      save_train_checkpoint(ckpt, run_dir / "train_state.ndnt");
      std::ofstream hist(run_dir / "history.json", std::ios::trunc);
      hist << history_to_json(ckpt.history);
    }
  }

  TrainResult result;
  result.net = deploy(ckpt.shadow);
  result.history = ckpt.history;
  result.checkpoint = std::move(ckpt);
  if (persist) save_model(result.net, run_dir / "model.ndns");
  return result;
}

}  // namespace ndns
