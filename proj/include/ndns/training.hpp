// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ndns/audio_io.hpp"
#include "ndns/sdnn.hpp"
#include "ndns/stft.hpp"
#include "ndns/synth.hpp"

namespace ndns {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 20;
  int batch_size = 1;    // segments per optimizer step
  int bptt_len = 375;    // frames per truncated segment
  double loss_lambda = 1.0;
  double grad_clip = 10.0;  // max global gradient norm; <= 0 disables
  uint64_t seed = 0;
  int net_delay_steps = 2;  // output/target alignment, in frames
  double val_fraction = 0.2;
  bool quantize = true;  // straight-through quantization-aware forward
  bool train_delays = false;
  bool train_thresholds = false;
  StftConfig stft;
};

// Throws InvalidArgument on non-positive rates, lengths, or batch sizes.
void check_train_config(const TrainConfig& cfg);

TrainConfig train_config_from_json_file(const std::filesystem::path& path);
std::string train_config_to_json(const TrainConfig& cfg);

/// Full-precision mirrors of every deployable parameter. The deployed
/// integer network is always quantize(shadow); updates land here and are
/// re-quantized after every optimizer step.
struct ShadowLayer {
  int in_dim = 0;
  int out_dim = 0;
  int weight_bits = 8;
  std::vector<double> weights;  // row-major out x in
  std::vector<double> delays;   // continuous, rounded in the forward pass
  double threshold = 0.0;
};

struct ShadowParams {
  std::vector<ShadowLayer> layers;
  double input_threshold = 0.0;
};

/// Random initialization: zero delays and thresholds, He-style weight
/// scale with a damped final layer. Deterministic in `seed`.
ShadowParams init_shadow(const std::vector<int>& dims, int weight_bits,
                         uint64_t seed);

/// Quantizes the shadow parameters into a deployable integer network.
SdnnNetwork deploy(const ShadowParams& params);

struct LayerGradients {
  std::vector<double> weights;
  std::vector<double> delays;
  double threshold = 0.0;
};

struct Gradients {
  std::vector<LayerGradients> layers;
  double input_threshold = 0.0;

  void accumulate(const Gradients& other);
  void scale(double factor);
  double norm() const;
  bool finite() const;
};

Gradients zero_gradients_like(const ShadowParams& params);

/// One truncated-BPTT segment with everything pre-aligned by the caller:
/// `input_mag[t]` feeds the network, `delayed_mag/phase[t]` are the frames
/// the mask multiplies (frame t - net_delay_steps, zeros when negative),
/// `clean_mag[t]` is the matching delayed clean magnitude, and
/// `target_samples` covers the segment's overlap-add span of the equally
/// delayed clean waveform.
struct TrainingExample {
  std::vector<std::vector<double>> input_mag;
  std::vector<std::vector<double>> delayed_mag;
  std::vector<std::vector<double>> delayed_phase;
  std::vector<std::vector<double>> clean_mag;
  std::vector<double> target_samples;
  int sample_rate_hz = 16000;
};

/// Cuts one utterance pair into bptt_len segments (state is carried across
/// them by the caller).
std::vector<TrainingExample> prepare_segments(const AudioClip& noisy,
                                              const AudioClip& clean,
                                              const TrainConfig& cfg);

/// Carried sigma/delta/ring state between truncated segments; gradients do
/// not flow across segment boundaries.
struct TrainState {
  std::vector<double> input_reference;
  struct LayerState {
    std::vector<double> sigma;
    std::vector<double> reference;
    std::vector<std::vector<double>> ring;
    size_t head = 0;
  };
  std::vector<LayerState> layers;
  std::vector<double> decoder_sigma;
};

TrainState make_train_state(const ShadowParams& params);

/// Spec loss: negative (capped) SI-SNR plus lambda times the mean squared
/// STFT-magnitude error. `clean` must already carry the network-delay
/// alignment.
double loss(const AudioClip& denoised, const AudioClip& clean,
            const std::vector<std::vector<double>>& masked_mags,
            const std::vector<std::vector<double>>& clean_mags, double lambda);

struct ForwardResult {
  double loss = 0.0;
  std::vector<std::vector<double>> masks;  // one frame per step
};

/// Forward pass only; advances `state`.
ForwardResult forward_loss(const ShadowParams& params,
                           const TrainingExample& segment, TrainState& state,
                           const TrainConfig& cfg);

struct ForwardBackwardResult {
  double loss = 0.0;
  Gradients grads;
};

/// Backpropagation through time over the unrolled delta/sigma/delay graph.
/// The delta gate and the weight/delay rounding use straight-through
/// estimators onto the shadow values; `state` advances exactly as in
/// forward_loss.
ForwardBackwardResult forward_backward(const ShadowParams& params,
                                       const TrainingExample& segment,
                                       TrainState& state,
                                       const TrainConfig& cfg);

/// Batch form: gradients summed over segments in order, each with its own
/// carried state.
ForwardBackwardResult forward_backward(const ShadowParams& params,
                                       const std::vector<TrainingExample>& batch,
                                       std::vector<TrainState*>& states,
                                       const TrainConfig& cfg);

// --- optimizer ---------------------------------------------------------------

struct RadamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t step = 0;
};

RadamState make_radam_state(const ShadowParams& params);

/// Rectified Adam (beta1 0.9, beta2 0.999, eps 1e-8). While the variance
/// rectification is inactive the update falls back to bias-corrected
/// momentum without adaptive scaling. Returns false (and leaves everything
/// untouched) on a non-finite gradient.
bool radam_step(ShadowParams& params, const Gradients& grads, RadamState& opt,
                const TrainConfig& cfg);

// --- training loop -----------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_si_snri_data_db = 0.0;
};

struct TrainCheckpoint {
  ShadowParams shadow;
  RadamState opt;
  int completed_epochs = 0;
  std::vector<EpochStats> history;
};

// Binary sidecar holding shadow parameters, optimizer state, and history,
// enough to resume training deterministically.
void save_train_checkpoint(const TrainCheckpoint& ckpt,
                           const std::filesystem::path& path);
TrainCheckpoint load_train_checkpoint(const std::filesystem::path& path);

struct TrainResult {
  SdnnNetwork net;
  TrainCheckpoint checkpoint;
  std::vector<EpochStats> history;
};

/// Runs epochs completed_epochs..cfg.epochs over the manifest (fixed order,
/// last val_fraction of the records held out for validation). When run_dir
/// is nonempty writes per-epoch checkpoints, deployed models, and
/// history.json there. Bit-reproducible for a fixed seed.
TrainResult train(const TrainCheckpoint& start,
                  const std::vector<MixtureRecord>& manifest,
                  const std::filesystem::path& manifest_path,
                  const TrainConfig& cfg, const std::filesystem::path& run_dir);

std::string history_to_json(const std::vector<EpochStats>& history);

}  // namespace ndns
