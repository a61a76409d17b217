// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ndns/sdnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>

#include "ndns/error.hpp"

namespace ndns {

namespace {

int32_t qmin_for_bits(int bits) { return -(int32_t{1} << (bits - 1)); }
int32_t qmax_for_bits(int bits) { return (int32_t{1} << (bits - 1)) - 1; }

}  // namespace

void validate_network(const SdnnNetwork& net) {
  if (net.input_threshold < 0.0)
    throw InvalidArgument("input delta threshold must be nonnegative");
  int prev_out = -1;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const SdnnLayer& layer = net.layers[l];
    const std::string tag = "layer " + std::to_string(l);
    if (layer.in_dim <= 0 || layer.out_dim <= 0)
      throw InvalidArgument(tag + ": dimensions must be positive");
    if (prev_out >= 0 && layer.in_dim != prev_out)
      throw InvalidArgument(tag + ": input dim does not match previous layer");
    if (layer.weight_bits < 1 || layer.weight_bits > 8)
      throw InvalidArgument(tag + ": weight_bits must be in [1, 8]");
    if (layer.weights.size() !=
        static_cast<size_t>(layer.in_dim) * static_cast<size_t>(layer.out_dim))
      throw InvalidArgument(tag + ": weight count does not match dimensions");
    const int32_t lo = qmin_for_bits(layer.weight_bits);
    const int32_t hi = qmax_for_bits(layer.weight_bits);
    for (int32_t q : layer.weights)
      if (q < lo || q > hi)
        throw InvalidArgument(tag + ": weight not representable in " +
                              std::to_string(layer.weight_bits) + " bits");
    if (layer.delays.size() != static_cast<size_t>(layer.out_dim))
      throw InvalidArgument(tag + ": delay count does not match out_dim");
    for (int d : layer.delays)
      if (d < 0 || d > kMaxDelay)
        throw InvalidArgument(tag + ": delay outside [0, " +
                              std::to_string(kMaxDelay) + "]");
    if (layer.threshold < 0.0)
      throw InvalidArgument(tag + ": threshold must be nonnegative");
    prev_out = layer.out_dim;
  }
}

SdnnNetwork make_network(const std::vector<int>& dims, int weight_bits) {
  if (dims.size() < 2) throw InvalidArgument("need at least two dimensions");
  SdnnNetwork net;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    SdnnLayer layer;
    layer.in_dim = dims[i];
    layer.out_dim = dims[i + 1];
    layer.weight_bits = weight_bits;
    layer.weights.assign(
        static_cast<size_t>(layer.in_dim) * static_cast<size_t>(layer.out_dim), 0);
    layer.delays.assign(static_cast<size_t>(layer.out_dim), 0);
    net.layers.push_back(std::move(layer));
  }
  validate_network(net);
  return net;
}

QuantizedWeights quantize_weights(const std::vector<double>& w, int bits) {
  if (bits < 1 || bits > 8)
    throw InvalidArgument("weight_bits must be in [1, 8]");
  const int32_t lo = qmin_for_bits(bits);
  const int32_t hi = qmax_for_bits(bits);

  double peak = 0.0;
  for (double v : w) peak = std::max(peak, std::abs(v));

  QuantizedWeights out;
  out.q.resize(w.size());
  out.scale_exp = 0;
  if (peak > 0.0 && hi > 0) {
    // Smallest exponent whose grid covers the peak.
    int e = static_cast<int>(std::ceil(std::log2(peak / hi)));
    while (peak > std::ldexp(static_cast<double>(hi), e)) ++e;
    while (e > -60 && peak <= std::ldexp(static_cast<double>(hi), e - 1)) --e;
    out.scale_exp = e;
  }
  const double inv_scale = std::ldexp(1.0, -out.scale_exp);
  for (size_t i = 0; i < w.size(); ++i) {
    // nearbyint rounds half to even under the default FP environment.
    double q = std::nearbyint(w[i] * inv_scale);
    q = std::clamp(q, static_cast<double>(lo), static_cast<double>(hi));
    out.q[i] = static_cast<int32_t>(q);
  }
  return out;
}

SparseEvents delta_encode(const std::vector<double>& x, DeltaState& state) {
  if (x.size() != state.reference.size())
    throw InvalidArgument("delta_encode: dimension mismatch");
  SparseEvents events;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - state.reference[i];
    if (d != 0.0 && std::abs(d) >= state.threshold) {
      events.push(static_cast<int>(i), d);
      state.reference[i] = x[i];
    }
  }
  return events;
}

const std::vector<double>& sigma_accumulate(const SparseEvents& events,
                                            SigmaState& state) {
  for (size_t k = 0; k < events.size(); ++k) {
    const int i = events.index[k];
    if (i < 0 || static_cast<size_t>(i) >= state.accumulator.size())
      throw InvalidArgument("sigma_accumulate: event index out of range");
    state.accumulator[i] += events.value[k];
  }
  return state.accumulator;
}

LayerRuntime::LayerRuntime(const SdnnLayer& layer) : layer_(&layer) {
  const size_t in = static_cast<size_t>(layer.in_dim);
  const size_t out = static_cast<size_t>(layer.out_dim);
  weights_col_.resize(in * out);
  for (size_t j = 0; j < out; ++j)
    for (size_t i = 0; i < in; ++i)
      weights_col_[i * out + j] =
          std::ldexp(static_cast<double>(layer.weights[j * in + i]), layer.scale_exp);
  sigma_.accumulator.assign(out, 0.0);
  delta_.reference.assign(out, 0.0);
  delta_.threshold = layer.threshold;
  int max_delay = 0;
  for (int d : layer.delays) max_delay = std::max(max_delay, d);
  ring_.assign(static_cast<size_t>(max_delay) + 1, std::vector<double>(out, 0.0));
}

SparseEvents LayerRuntime::step(const SparseEvents& input, OpsCounter& counter) {
  const int in = layer_->in_dim;
  const int out = layer_->out_dim;

  // Synaptic accumulation over nonzero events only.
  for (size_t k = 0; k < input.size(); ++k) {
    const int i = input.index[k];
    if (i < 0 || i >= in)
      throw InvalidArgument("layer step: event index out of range");
    const double v = input.value[k];
    const double* col = &weights_col_[static_cast<size_t>(i) * out];
    for (int j = 0; j < out; ++j) sigma_.accumulator[j] += col[j] * v;
  }
  counter.synops += input.size() * static_cast<uint64_t>(out);
  counter.neuronops += static_cast<uint64_t>(out);

  // Sigma (done above, the accumulator is the running sum), ReLU, delta,
  // then the axonal delay per output neuron.
  for (int j = 0; j < out; ++j) {
    const double r = std::max(0.0, sigma_.accumulator[j]);
    const double d = r - delta_.reference[j];
    if (d != 0.0 && std::abs(d) >= delta_.threshold) {
      delta_.reference[j] = r;
      ring_[(head_ + static_cast<size_t>(layer_->delays[j])) % ring_.size()][j] = d;
    }
  }

  SparseEvents output;
  std::vector<double>& due = ring_[head_];
  for (int j = 0; j < out; ++j) {
    if (due[j] != 0.0) {
      output.push(j, due[j]);
      due[j] = 0.0;
    }
  }
  head_ = (head_ + 1) % ring_.size();
  return output;
}

NetworkRuntime::NetworkRuntime(const SdnnNetwork& net) : net_(&net) {
  validate_network(net);
  if (net.layers.empty()) throw InvalidArgument("network has no layers");
  input_delta_.reference.assign(static_cast<size_t>(net.input_dim()), 0.0);
  input_delta_.threshold = net.input_threshold;
  layers_.reserve(net.layers.size());
  for (const SdnnLayer& layer : net.layers) layers_.emplace_back(layer);
  decode_.accumulator.assign(static_cast<size_t>(net.output_dim()), 0.0);
}

std::vector<double> NetworkRuntime::step(const std::vector<double>& magnitude_frame,
                                         OpsCounter& counter) {
  if (magnitude_frame.size() != input_delta_.reference.size())
    throw InvalidArgument("network step: frame length does not match input dim");
  SparseEvents events = delta_encode(magnitude_frame, input_delta_);
  for (LayerRuntime& layer : layers_) events = layer.step(events, counter);
  sigma_accumulate(events, decode_);
  counter.steps += 1;

  std::vector<double> mask(decode_.accumulator.size());
  for (size_t i = 0; i < mask.size(); ++i)
    mask[i] = std::max(0.0, decode_.accumulator[i]);
  return mask;
}

DenoiseResult denoise(const SdnnNetwork& net, const AudioClip& noisy,
                      const StftConfig& cfg, int net_delay_steps,
                      bool mask_bypass) {
  if (net_delay_steps < 0)
    throw InvalidArgument("net_delay_steps must be nonnegative");
  if (!mask_bypass && net.input_dim() != cfg.bins())
    throw InvalidArgument("network input dim does not match STFT bins");

  const Spectrogram spec = stft(noisy, cfg);
  const MagnitudePhase mp = magnitude_phase(spec);
  const size_t n_frames = spec.frames.size();
  const size_t bins = static_cast<size_t>(cfg.bins());

  DenoiseResult result;
  result.counter.timestep_s = cfg.frame_step_s();

  std::vector<std::vector<double>> out_mag(n_frames), out_phase(n_frames);
  std::optional<NetworkRuntime> runtime;
  if (!mask_bypass) runtime.emplace(net);
  const std::vector<double> zeros(bins, 0.0);
  for (size_t k = 0; k < n_frames; ++k) {
    std::vector<double> mask;
    if (mask_bypass) {
      result.counter.steps += 1;  // duration accounting; no network ops
      mask.assign(bins, 1.0);
    } else {
      mask = runtime->step(mp.magnitude[k], result.counter);
    }
    const bool has_delayed = k >= static_cast<size_t>(net_delay_steps);
    const std::vector<double>& mag =
        has_delayed ? mp.magnitude[k - net_delay_steps] : zeros;
    const std::vector<double>& phase =
        has_delayed ? mp.phase[k - net_delay_steps] : zeros;
    out_mag[k].resize(bins);
    for (size_t i = 0; i < bins; ++i) out_mag[k][i] = mask[i] * mag[i];
    out_phase[k] = phase;
  }

  const Spectrogram masked =
      recombine(out_mag, out_phase, cfg, spec.source_samples);
  result.clean_estimate = istft(masked);
  return result;
}

uint64_t count_params(const SdnnNetwork& net) {
  uint64_t total = 0;
  for (const SdnnLayer& layer : net.layers)
    total += layer.weights.size() + layer.delays.size() + 1;
  return total;
}

uint64_t weight_count(const SdnnNetwork& net) {
  uint64_t total = 0;
  for (const SdnnLayer& layer : net.layers) total += layer.weights.size();
  return total;
}

uint64_t model_size_bytes(const SdnnNetwork& net) {
  uint64_t bits = 0;
  for (const SdnnLayer& layer : net.layers) {
    bits += layer.weights.size() * static_cast<uint64_t>(layer.weight_bits);
    bits += layer.delays.size() * kDelaySizeBits;
    bits += kThresholdSizeBits;
  }
  return (bits + 7) / 8;
}

namespace {

void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(reinterpret_cast<const char*>(p), n);
}

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  // The in-memory representation is little-endian on every target we
  // build for; keep an explicit byte swap out until one is needed.
  static_assert(sizeof(T) <= 8);
  put_bytes(out, b, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  template <typename T>
  T read() {
    if (pos_ + sizeof(T) > bytes_.size())
      throw FormatError("truncated model file: " + origin_);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void read_raw(void* dst, size_t n) {
    if (pos_ + n > bytes_.size())
      throw FormatError("truncated model file: " + origin_);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string origin_;
  size_t pos_ = 0;
};

}  // namespace

void save_model(const SdnnNetwork& net, const std::filesystem::path& path) {
  validate_network(net);
  std::string out;
  out += "NDNS";
  put_le<uint16_t>(out, kModelFormatVersion);
  put_le<uint32_t>(out, static_cast<uint32_t>(net.layers.size()));
  put_le<double>(out, net.input_threshold);
  for (const SdnnLayer& layer : net.layers) {
    put_le<uint32_t>(out, static_cast<uint32_t>(layer.in_dim));
    put_le<uint32_t>(out, static_cast<uint32_t>(layer.out_dim));
    put_le<uint16_t>(out, static_cast<uint16_t>(layer.weight_bits));
    put_le<int16_t>(out, static_cast<int16_t>(layer.scale_exp));
    for (int32_t q : layer.weights) put_le<int8_t>(out, static_cast<int8_t>(q));
    for (int d : layer.delays) put_le<uint8_t>(out, static_cast<uint8_t>(d));
    put_le<double>(out, layer.threshold);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

SdnnNetwork load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  Reader r(bytes, path.string());

  char magic[4];
  r.read_raw(magic, 4);
  if (std::memcmp(magic, "NDNS", 4) != 0)
    throw FormatError("bad magic in model file: " + path.string());
  const uint16_t version = r.read<uint16_t>();
  if (version > kModelFormatVersion)
    throw VersionError("model format version " + std::to_string(version) +
                       " is newer than supported version " +
                       std::to_string(kModelFormatVersion));

  SdnnNetwork net;
  const uint32_t n_layers = r.read<uint32_t>();
  net.input_threshold = r.read<double>();
  for (uint32_t l = 0; l < n_layers; ++l) {
    SdnnLayer layer;
    layer.in_dim = static_cast<int>(r.read<uint32_t>());
    layer.out_dim = static_cast<int>(r.read<uint32_t>());
    layer.weight_bits = r.read<uint16_t>();
    layer.scale_exp = r.read<int16_t>();
    if (layer.in_dim <= 0 || layer.out_dim <= 0)
      throw FormatError("invalid layer dimensions in model file: " +
                        path.string());
    const size_t n_w =
        static_cast<size_t>(layer.in_dim) * static_cast<size_t>(layer.out_dim);
    layer.weights.resize(n_w);
    for (size_t i = 0; i < n_w; ++i) layer.weights[i] = r.read<int8_t>();
    layer.delays.resize(static_cast<size_t>(layer.out_dim));
    for (int j = 0; j < layer.out_dim; ++j) layer.delays[j] = r.read<uint8_t>();
    layer.threshold = r.read<double>();
    net.layers.push_back(std::move(layer));
  }
  if (!r.exhausted())
    throw FormatError("trailing bytes in model file: " + path.string());
  validate_network(net);
  return net;
}

}  // namespace ndns
