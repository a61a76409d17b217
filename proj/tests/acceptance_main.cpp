// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Acceptance suite: one self-contained check per release criterion, one
// PASS/FAIL line each, nonzero exit if anything fails. Run via ctest or
// directly; `--skip-training` drops the slow desk-scale training check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "ndns/metrics.hpp"
#include "ndns/rng.hpp"
#include "ndns/sdnn.hpp"
#include "ndns/stft.hpp"
#include "ndns/synth.hpp"
#include "ndns/training.hpp"
#include "support.hpp"

using namespace ndns;
using test::TempDir;

namespace {

struct Criterion {
  std::string name;
  std::function<void(std::string&)> run;  // throws or appends detail on failure
};

#define REQUIRE_OK(cond)                                                 \
  do {                                                                   \
    if (!(cond)) throw std::runtime_error("failed: " #cond);             \
  } while (0)

void require_near(double actual, double want, double tol, const char* what) {
  if (!(std::abs(actual - want) <= tol))
    throw std::runtime_error(std::string("failed: ") + what + " = " +
                             std::to_string(actual) + ", want " +
                             std::to_string(want) + " +/- " + std::to_string(tol));
}

// 1. Metric arithmetic against the published comparison row values.
void metric_arithmetic(std::string& detail) {
  LatencyBreakdown nsnet_latency;
  nsnet_latency.buffer_s = 0.020;
  nsnet_latency.encdec_s = 24e-6;
  require_near(pdp_proxy_mops(136.13, nsnet_latency), 2.72, 0.01, "pdp(136.13, 20.024ms)");

  require_near(12.50 - 7.62, 4.88, 1e-12, "si_snri from (12.50, 7.62)");

  StftConfig cfg;
  require_near(buffer_latency_s(cfg), 0.032, 1e-15, "buffer_latency(512 @ 16k)");
  LatencyBreakdown sdnn_latency;
  sdnn_latency.buffer_s = buffer_latency_s(cfg);
  sdnn_latency.encdec_s = 36e-6;
  require_near(sdnn_latency.total_s(), 0.032036, 1e-12, "total latency");
  detail = "pdp 2.7258->2.72, 4.88 dB, 32.036 ms";
}

// 2. Parameter accounting on the default topology.
void default_topology_accounting(std::string& detail) {
  const SdnnNetwork net = make_network({257, 512, 512, 257}, 8);
  REQUIRE_OK(weight_count(net) == 525312);
  char rounded[16];
  std::snprintf(rounded, sizeof(rounded), "%llu",
                static_cast<unsigned long long>((weight_count(net) + 500) / 1000));
  REQUIRE_OK(std::string(rounded) == "525");
  const uint64_t bits = 525312ull * 8 + (512 + 512 + 257) * 6ull + 3ull * 16;
  REQUIRE_OK(model_size_bytes(net) == (bits + 7) / 8);
  detail = "weights 525312 (525k), size " + std::to_string(model_size_bytes(net)) + " B";
}

// 3. SI-SNR properties: scale invariance, oracle agreement, orthogonal case.
void si_snr_properties(std::string& detail) {
  Rng rng(100);
  double worst_scale = 0.0, worst_oracle = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    AudioClip target = test::random_clip(1000, 2 * static_cast<uint64_t>(trial) + 1);
    AudioClip est = target;
    Rng noise_rng(static_cast<uint64_t>(trial) + 5000);
    for (double& s : est.samples) s += noise_rng.normal() * 0.05;

    const double base = si_snr_db(est, target);
    const double alpha = 0.25 + 7.5 * rng.next_double();
    AudioClip scaled = est;
    for (double& s : scaled.samples) s *= alpha;
    worst_scale = std::max(worst_scale, std::abs(si_snr_db(scaled, target) - base));

    // Literal re-evaluation of the defining formula.
    const size_t n = target.samples.size();
    double me = 0, mt = 0;
    for (size_t i = 0; i < n; ++i) {
      me += est.samples[i];
      mt += target.samples[i];
    }
    me /= static_cast<double>(n);
    mt /= static_cast<double>(n);
    double dot = 0, ss = 0;
    for (size_t i = 0; i < n; ++i) {
      dot += (est.samples[i] - me) * (target.samples[i] - mt);
      ss += (target.samples[i] - mt) * (target.samples[i] - mt);
    }
    double sig = 0, err = 0;
    for (size_t i = 0; i < n; ++i) {
      const double t = dot / ss * (target.samples[i] - mt);
      const double e = (est.samples[i] - me) - t;
      sig += t * t;
      err += e * e;
    }
    worst_oracle = std::max(worst_oracle,
                            std::abs(base - 10.0 * std::log10(sig / err)));
  }
  REQUIRE_OK(worst_scale < 1e-9);
  REQUIRE_OK(worst_oracle < 1e-9);

  AudioClip s, est;
  s.samples = {1, -1, 1, -1};
  est.samples = {2, 0, 0, -2};
  require_near(si_snr_db(est, s), 0.0, 1e-12, "orthogonal equal-energy case");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "worst scale drift %.2e dB, worst oracle gap %.2e dB",
                worst_scale, worst_oracle);
  detail = buf;
}

// 4. Codec round-trip fidelity on 100 random one-second clips.
void codec_fidelity(std::string& detail) {
  StftConfig cfg;
  double worst = 1e300;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const AudioClip clip = test::random_clip(16000, seed + 10000);
    const AudioClip back = istft(stft(clip, cfg));
    const double snr = test::segment_snr_db(clip.samples, back.samples, 256,
                                            clip.samples.size() - 256);
    worst = std::min(worst, snr);
  }
  REQUIRE_OK(worst >= 50.0);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "worst interior round-trip SNR %.1f dB", worst);
  detail = buf;
}

// 5. Sigma-delta equivalence with a dense ReLU oracle.
void sigma_delta_equivalence(std::string& detail) {
  double worst = 0.0;
  for (uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(trial + 31);
    SdnnNetwork net;
    for (int l = 0; l < 3; ++l) {
      SdnnLayer layer;
      layer.in_dim = layer.out_dim = 8;
      layer.weight_bits = 8;
      layer.scale_exp = -6;
      layer.weights.resize(64);
      for (auto& q : layer.weights) q = static_cast<int32_t>(rng.below(255)) - 127;
      layer.delays.assign(8, 0);
      layer.threshold = 0.0;
      net.layers.push_back(std::move(layer));
    }
    validate_network(net);

    NetworkRuntime rt(net);
    OpsCounter counter;
    std::vector<double> x(8, 0.0);
    for (int t = 0; t < 12; ++t) {
      for (auto& v : x) v += rng.normal() * 0.3;
      const std::vector<double> mask = rt.step(x, counter);
      if (t == 0) continue;
      // Dense oracle on the dequantized weights.
      std::vector<double> cur = x;
      for (const SdnnLayer& layer : net.layers) {
        std::vector<double> next(8, 0.0);
        for (int j = 0; j < 8; ++j) {
          double acc = 0.0;
          for (int i = 0; i < 8; ++i) acc += layer.weight(j, i) * cur[static_cast<size_t>(i)];
          next[static_cast<size_t>(j)] = std::max(0.0, acc);
        }
        cur = std::move(next);
      }
      for (size_t j = 0; j < 8; ++j) {
        const double scale = std::max(1e-6, std::abs(cur[j]));
        worst = std::max(worst, std::abs(mask[j] - cur[j]) / scale);
      }
    }
  }
  REQUIRE_OK(worst < 1e-5);

  // sigma(delta(x)) with zero threshold is the identity, exactly.
  Rng rng(77);
  DeltaState delta;
  delta.reference.assign(16, 0.0);
  SigmaState sigma;
  sigma.accumulator.assign(16, 0.0);
  std::vector<double> x(16, 0.0);
  for (int t = 0; t < 100; ++t) {
    for (auto& v : x) v += rng.normal();
    sigma_accumulate(delta_encode(x, delta), sigma);
    for (size_t i = 0; i < x.size(); ++i) REQUIRE_OK(sigma.accumulator[i] == x[i]);
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "worst dense gap %.2e rel, identity exact", worst);
  detail = buf;
}

// 6. Ops accounting: hand-counted synops, neuron count law, the power
// proxy formula, the dense bound, and threshold monotonicity.
void ops_accounting(std::string& detail) {
  // Scripted event streams through one layer.
  Rng rng(5);
  SdnnLayer layer;
  layer.in_dim = 7;
  layer.out_dim = 13;
  layer.weight_bits = 8;
  layer.weights.assign(7 * 13, 1);
  layer.delays.assign(13, 0);
  layer.threshold = 0.0;
  LayerRuntime rt(layer);
  OpsCounter counter;
  uint64_t hand_synops = 0;
  for (int t = 0; t < 50; ++t) {
    SparseEvents events;
    const int nnz = static_cast<int>(rng.below(8));
    for (int k = 0; k < nnz; ++k) events.push(k, rng.normal() + 0.01);
    hand_synops += static_cast<uint64_t>(nnz) * 13;
    rt.step(events, counter);
  }
  REQUIRE_OK(counter.synops == hand_synops);
  REQUIRE_OK(counter.neuronops == 50 * 13);

  // neuronops = steps x total neurons at the network level.
  Rng net_rng(6);
  SdnnNetwork net;
  for (auto [in, out] : {std::pair{9, 14}, {14, 9}}) {
    SdnnLayer l;
    l.in_dim = in;
    l.out_dim = out;
    l.weight_bits = 8;
    l.scale_exp = -6;
    l.weights.resize(static_cast<size_t>(in) * out);
    for (auto& q : l.weights) q = static_cast<int32_t>(net_rng.below(255)) - 127;
    l.delays.assign(static_cast<size_t>(out), 0);
    net.layers.push_back(std::move(l));
  }
  validate_network(net);
  NetworkRuntime nrt(net);
  OpsCounter nc;
  nc.timestep_s = 0.008;
  std::vector<double> frame(9, 0.0);
  const int steps = 40;
  for (int t = 0; t < steps; ++t) {
    for (auto& v : frame) v += net_rng.normal() * 0.2;
    nrt.step(frame, nc);
  }
  REQUIRE_OK(nc.neuronops == static_cast<uint64_t>(steps) * (14 + 9));
  REQUIRE_OK(nc.synops <= static_cast<uint64_t>(steps) * (9 * 14 + 14 * 9));

  // Eq-style power proxy on constructed counters.
  OpsCounter c;
  c.timestep_s = 0.5;
  c.steps = 2;
  c.synops = 100'000'000;
  c.neuronops = 10'000'000;
  require_near(power_proxy_mops_s(c), 200.0, 1e-9, "power proxy");

  // Monotonicity in any single threshold, 100 trials.
  int violations = 0;
  for (uint64_t trial = 0; trial < 100; ++trial) {
    Rng trng(trial + 4000);
    SdnnNetwork tnet;
    for (auto [in, out] : {std::pair{6, 10}, {10, 6}}) {
      SdnnLayer l;
      l.in_dim = in;
      l.out_dim = out;
      l.weight_bits = 8;
      l.scale_exp = -6;
      l.weights.resize(static_cast<size_t>(in) * out);
      for (auto& q : l.weights) q = static_cast<int32_t>(trng.below(255)) - 127;
      l.delays.assign(static_cast<size_t>(out), 0);
      tnet.layers.push_back(std::move(l));
    }
    validate_network(tnet);
    std::vector<std::vector<double>> frames(25);
    std::vector<double> x(6, 0.0);
    for (auto& f : frames) {
      for (auto& v : x) v += trng.normal() * 0.15;
      f = x;
    }
    const size_t which = trng.below(2);
    uint64_t prev = std::numeric_limits<uint64_t>::max();
    for (double theta : {0.0, 0.05, 0.2, 0.8, 2.0}) {
      tnet.layers[which].threshold = theta;
      NetworkRuntime trt(tnet);
      OpsCounter tc;
      for (const auto& f : frames) trt.step(f, tc);
      if (tc.synops > prev) ++violations;
      prev = tc.synops;
    }
  }
  REQUIRE_OK(violations == 0);
  detail = "hand count " + std::to_string(hand_synops) + " synops, 0/100 monotonicity violations";
}

// 7. Gradient fidelity on a smooth-mode 6->4->6 network over 10 frames.
void gradient_fidelity(std::string& detail) {
  TrainConfig cfg;
  cfg.quantize = false;
  cfg.net_delay_steps = 1;
  cfg.loss_lambda = 0.5;
  cfg.bptt_len = 10;
  cfg.stft.window_length = 10;
  cfg.stft.hop_length = 5;
  cfg.stft.sample_rate_hz = 1000;

  AudioClip clean = test::random_clip(55, 900, 0.4, 1000);
  AudioClip noisy = clean;
  Rng rng(901);
  for (double& s : noisy.samples) s += rng.normal() * 0.1;
  const auto segments = prepare_segments(noisy, clean, cfg);
  const TrainingExample& segment = segments.front();

  ShadowParams params = init_shadow({6, 4, 6}, 8, 902);
  TrainState state = make_train_state(params);
  const ForwardBackwardResult fb = forward_backward(params, segment, state, cfg);

  const double h = 1e-4;
  size_t total = 0, within = 0;
  double worst = 0.0;
  for (size_t l = 0; l < params.layers.size(); ++l)
    for (size_t i = 0; i < params.layers[l].weights.size(); ++i) {
      double& w = params.layers[l].weights[i];
      const double keep = w;
      const auto eval = [&](double value) {
        w = value;
        TrainState s = make_train_state(params);
        return forward_loss(params, segment, s, cfg).loss;
      };
      const double fd = (eval(keep + h) - eval(keep - h)) / (2.0 * h);
      w = keep;
      const double an = fb.grads.layers[l].weights[i];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      worst = std::max(worst, rel);
      ++total;
      if (rel < 1e-4) ++within;
    }
  const double fraction = static_cast<double>(within) / static_cast<double>(total);
  REQUIRE_OK(fraction >= 0.95);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%zu/%zu weights within 1e-4 (worst %.2e)", within,
                total, worst);
  detail = buf;
}

// 8. Desk-scale training smoke: 30 triples, 257->64->64->257, 20 epochs.
void training_smoke(std::string& detail) {
  TempDir dir("acceptance_train");
  const auto src = dir / "src";
  std::filesystem::create_directories(src / "clean");
  std::filesystem::create_directories(src / "noise");
  for (uint64_t i = 0; i < 6; ++i) {
    write_wav(test::speechish_clip(16000 * 32, 7000 + i),
              src / "clean" / ("speech" + std::to_string(i) + ".wav"));
    write_wav(test::noiseish_clip(16000 * 32, 8000 + i),
              src / "noise" / ("noise" + std::to_string(i) + ".wav"));
  }

  SynthConfig synth_cfg;
  synth_cfg.count = 30;
  synth_cfg.segment_s = 30.0;
  synth_cfg.seed = 11;
  const auto data = dir / "data";
  const auto records =
      synthesize_dataset(synth_cfg, src / "clean", src / "noise", data, 2);

  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 1;
  TrainCheckpoint start;
  start.shadow = init_shadow({257, 64, 64, 257}, 8, cfg.seed);
  start.opt = make_radam_state(start.shadow);

  const TrainResult result = train(start, records, data / "manifest.jsonl", cfg, "");
  REQUIRE_OK(result.history.size() == 20);
  const double final_si_snri = result.history.back().val_si_snri_data_db;
  REQUIRE_OK(final_si_snri > 0.0);

  // Smoothed (5-epoch moving average) loss must be non-increasing.
  std::vector<double> smoothed;
  for (size_t i = 4; i < result.history.size(); ++i) {
    double acc = 0.0;
    for (size_t k = i - 4; k <= i; ++k) acc += result.history[k].train_loss;
    smoothed.push_back(acc / 5.0);
  }
  for (size_t i = 1; i < smoothed.size(); ++i)
    REQUIRE_OK(smoothed[i] <= smoothed[i - 1] + 1e-9 + 1e-6 * std::abs(smoothed[i - 1]));

  char buf[96];
  std::snprintf(buf, sizeof(buf), "val si_snri_data %.2f dB after 20 epochs", final_si_snri);
  detail = buf;
}

// 9. Latency pipeline: injected two-frame delay shows up as ~16 ms, and
// the 40 ms gate behaves.
void latency_pipeline(std::string& detail) {
  StftConfig cfg;
  const AudioClip clean = test::speechish_clip(16000 * 2, 55);

  SdnnNetwork bypass_net;
  const DenoiseResult delayed = denoise(bypass_net, clean, cfg, 2, /*mask_bypass=*/true);
  const double lag = network_latency_s(clean, delayed.clean_estimate);
  require_near(lag, 0.016, 0.008, "injected 2-frame delay");

  EvalReport report;
  report.si_snri_data_db = 5.0;
  report.si_snri_encdec_db = 5.0;
  report.latency.buffer_s = 0.032;
  report.latency.encdec_s = 36e-6;
  report.power_proxy_mops_s = 1.0;
  report.pdp_proxy_mops = pdp_proxy_mops(1.0, report.latency);
  REQUIRE_OK(qualification(report).pass);
  report.latency.network_s = 0.009;  // pushes past 40 ms
  report.pdp_proxy_mops = pdp_proxy_mops(1.0, report.latency);
  REQUIRE_OK(!qualification(report).pass);

  char buf[64];
  std::snprintf(buf, sizeof(buf), "measured lag %.4f s", lag);
  detail = buf;
}

// 10. Synthesis determinism and SNR accuracy.
void synthesis_determinism(std::string& detail) {
  TempDir dir("acceptance_synth");
  const auto src = dir / "src";
  std::filesystem::create_directories(src / "clean");
  std::filesystem::create_directories(src / "noise");
  for (uint64_t i = 0; i < 3; ++i) {
    write_wav(test::speechish_clip(24000, 600 + i),
              src / "clean" / ("c" + std::to_string(i) + ".wav"));
    write_wav(test::noiseish_clip(24000, 700 + i),
              src / "noise" / ("n" + std::to_string(i) + ".wav"));
  }
  SynthConfig cfg;
  cfg.count = 6;
  cfg.segment_s = 1.0;
  cfg.seed = 77;

  const auto out1 = dir / "run1";
  const auto out2 = dir / "run2";
  const auto rec1 = synthesize_dataset(cfg, src / "clean", src / "noise", out1, 2);
  synthesize_dataset(cfg, src / "clean", src / "noise", out2, 1);
  REQUIRE_OK(test::file_bytes(out1 / "manifest.jsonl") ==
             test::file_bytes(out2 / "manifest.jsonl"));
  for (const auto& rec : rec1)
    for (const auto* rel : {&rec.clean_path, &rec.noise_path, &rec.noisy_path})
      REQUIRE_OK(test::file_bytes(out1 / *rel) == test::file_bytes(out2 / *rel));

  // In-memory additivity and SNR accuracy, pre-quantization.
  double worst_snr_err = 0.0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    AudioClip clean = test::speechish_clip(16000, 1300 + seed);
    AudioClip noise = test::noiseish_clip(16000, 1400 + seed);
    const double target = -5.0 + 25.0 * static_cast<double>(seed) / 9.0;
    const MixResult mix = mix_at_snr(clean, noise, target);
    for (size_t i = 0; i < clean.samples.size(); ++i)
      REQUIRE_OK(mix.noisy.samples[i] == clean.samples[i] + noise.samples[i]);
    const double realized = 20.0 * std::log10(rms(clean) / rms(noise));
    worst_snr_err = std::max(worst_snr_err, std::abs(realized - target));
  }
  REQUIRE_OK(worst_snr_err <= 0.1);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "byte-identical reruns, worst SNR error %.2e dB",
                worst_snr_err);
  detail = buf;
}

}  // namespace

int main(int argc, char** argv) {
  bool skip_training = false;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--skip-training") == 0) skip_training = true;

  std::vector<Criterion> criteria = {
      {"1 metric arithmetic vs published row", metric_arithmetic},
      {"2 default-topology accounting", default_topology_accounting},
      {"3 SI-SNR property suite", si_snr_properties},
      {"4 codec fidelity", codec_fidelity},
      {"5 sigma-delta equivalence", sigma_delta_equivalence},
      {"6 ops accounting", ops_accounting},
      {"7 gradient fidelity", gradient_fidelity},
      {"8 desk-scale training smoke", training_smoke},
      {"9 latency pipeline", latency_pipeline},
      {"10 synthesis determinism and SNR accuracy", synthesis_determinism},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    if (skip_training && criterion.name[0] == '8') {
      std::printf("[SKIP] %s\n", criterion.name.c_str());
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    std::string note;
    try {
      criterion.run(note);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::printf("[PASS] %s (%.1fs)%s%s\n", criterion.name.c_str(), seconds,
                  note.empty() ? "" : " -- ", note.c_str());
    } catch (const std::exception& e) {
      ++failures;
      std::printf("[FAIL] %s -- %s\n", criterion.name.c_str(), e.what());
    }
    std::fflush(stdout);
  }
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
