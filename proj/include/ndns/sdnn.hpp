// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ndns/audio_io.hpp"
#include "ndns/stft.hpp"

namespace ndns {

constexpr int kMaxDelay = 64;
// Cost-model bit widths used by model_size_bytes (not the file encoding).
constexpr int kDelaySizeBits = 6;
constexpr int kThresholdSizeBits = 16;
constexpr uint16_t kModelFormatVersion = 1;

/// Graded events: value[k] is the nonzero payload of channel index[k].
struct SparseEvents {
  std::vector<int> index;
  std::vector<double> value;

  size_t size() const { return index.size(); }
  bool empty() const { return index.empty(); }
  void clear() {
    index.clear();
    value.clear();
  }
  void push(int i, double v) {
    index.push_back(i);
    value.push_back(v);
  }
};

/// SynOPS: one op per nonzero transmitted event per outgoing synapse.
/// NeuronOPS: one op per neuron per timestep (sigma-delta neurons are
/// stateful and update every step).
struct OpsCounter {
  uint64_t synops = 0;
  uint64_t neuronops = 0;
  uint64_t steps = 0;
  double timestep_s = 0.0;

  double audio_seconds() const { return static_cast<double>(steps) * timestep_s; }
};

/// One feedforward layer: quantized weights on a shared power-of-two scale,
/// a per-output-neuron axonal delay, and the delta threshold applied to the
/// layer's output events.
struct SdnnLayer {
  int in_dim = 0;
  int out_dim = 0;
  int weight_bits = 8;  // in [1, 8]
  int scale_exp = 0;    // real weight = q * 2^scale_exp
  std::vector<int32_t> weights;  // row-major out x in
  std::vector<int> delays;       // per output neuron, in [0, kMaxDelay]
  double threshold = 0.0;

  double weight(int out, int in) const {
    return std::ldexp(static_cast<double>(weights[static_cast<size_t>(out) * in_dim + in]),
                      scale_exp);
  }
};

struct SdnnNetwork {
  std::vector<SdnnLayer> layers;
  double input_threshold = 0.0;  // delta threshold on the encoder frames

  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }
};

// Throws InvalidArgument on dimension mismatches, out-of-range bit widths,
// unrepresentable weights, or delays outside [0, kMaxDelay].
void validate_network(const SdnnNetwork& net);

/// Layers sized dims[0] -> dims[1] -> ... with zero weights and delays.
SdnnNetwork make_network(const std::vector<int>& dims, int weight_bits);

// --- quantization -----------------------------------------------------------

struct QuantizedWeights {
  std::vector<int32_t> q;
  int scale_exp = 0;
};

/// Signed quantization onto a shared power-of-two grid: the exponent is the
/// smallest one whose grid covers max|w|, values round to nearest even and
/// saturate.
QuantizedWeights quantize_weights(const std::vector<double>& w, int bits);

// --- sigma-delta primitives --------------------------------------------------

struct DeltaState {
  std::vector<double> reference;
  double threshold = 0.0;
};

struct SigmaState {
  std::vector<double> accumulator;
};

/// Per channel: d = x - reference; emits d and moves the reference when
/// |d| >= threshold (zero-valued differences transmit nothing).
SparseEvents delta_encode(const std::vector<double>& x, DeltaState& state);

/// accumulator += events; returns the accumulator.
const std::vector<double>& sigma_accumulate(const SparseEvents& events,
                                            SigmaState& state);

// --- runtime -----------------------------------------------------------------

/// Per-stream state of one layer. Parameters stay shared and immutable;
/// each audio stream owns its runtime.
class LayerRuntime {
 public:
  explicit LayerRuntime(const SdnnLayer& layer);

  /// One timestep: synaptic accumulation over the nonzero input events
  /// (synops += nnz * out_dim), then sigma -> ReLU -> delta per output
  /// neuron (neuronops += out_dim); emitted events surface after each
  /// neuron's axonal delay.
  SparseEvents step(const SparseEvents& input, OpsCounter& counter);

  const SdnnLayer& layer() const { return *layer_; }

 private:
  const SdnnLayer* layer_;
  std::vector<double> weights_col_;  // dequantized, column-major in x out
  SigmaState sigma_;
  DeltaState delta_;
  std::vector<std::vector<double>> ring_;  // [slot][neuron], 0 = no event
  size_t head_ = 0;
};

/// Whole-network stream state: input delta encoder, layer runtimes, and the
/// decoder-side sigma that reconstructs the mask.
class NetworkRuntime {
 public:
  explicit NetworkRuntime(const SdnnNetwork& net);

  /// Processes one magnitude frame and returns the nonnegative mask frame.
  std::vector<double> step(const std::vector<double>& magnitude_frame,
                           OpsCounter& counter);

 private:
  const SdnnNetwork* net_;
  DeltaState input_delta_;
  std::vector<LayerRuntime> layers_;
  SigmaState decode_;
};

// --- pipeline ----------------------------------------------------------------

struct DenoiseResult {
  AudioClip clean_estimate;
  OpsCounter counter;
};

/// Full encode -> N-DNS -> decode pass over one utterance. Output frame k is
/// mask_k applied to magnitude/phase frame k - net_delay_steps (zero
/// magnitude where that index is negative). With mask_bypass the network is
/// skipped and the mask is identically 1, which reduces the pipeline to
/// encode+decode (plus the configured delay).
DenoiseResult denoise(const SdnnNetwork& net, const AudioClip& noisy,
                      const StftConfig& cfg, int net_delay_steps,
                      bool mask_bypass = false);

// --- accounting --------------------------------------------------------------

/// Unique parameters: weights + delays + one threshold per layer.
uint64_t count_params(const SdnnNetwork& net);

/// Synaptic weights only; the number reported as "param count" in
/// evaluation tables.
uint64_t weight_count(const SdnnNetwork& net);

/// ceil of total parameter bits / 8: weights at weight_bits, delays at 6
/// bits, thresholds at 16 bits.
uint64_t model_size_bytes(const SdnnNetwork& net);

// --- persistence -------------------------------------------------------------

// Binary little-endian container: magic "NDNS", format version u16,
// layer count u32, input delta threshold f64, then per layer
// {in u32, out u32, weight_bits u16, scale_exp i16, row-major weights i8,
// delays u8, threshold f64}.
void save_model(const SdnnNetwork& net, const std::filesystem::path& path);
SdnnNetwork load_model(const std::filesystem::path& path);

}  // namespace ndns
