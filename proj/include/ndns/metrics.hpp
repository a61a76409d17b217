// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ndns/audio_io.hpp"
#include "ndns/sdnn.hpp"
#include "ndns/stft.hpp"

namespace ndns {

// Reporting cap standing in for an infinite SI-SNR (exact reconstruction).
constexpr double kSiSnrCapDb = 300.0;

/// Scale-invariant source-to-noise ratio in dB. Both signals are
/// mean-subtracted, the estimate is projected onto the target, and the
/// residual energy ratio is returned. An exact (scaled) match returns
/// +infinity; use cap_db for reporting.
double si_snr_db(const AudioClip& estimate, const AudioClip& target);

inline double cap_db(double db) { return db > kSiSnrCapDb ? kSiSnrCapDb : db; }

struct SiSnrImprovements {
  double data_db = 0.0;    // full system vs. unprocessed noisy input
  double encdec_db = 0.0;  // full system vs. encode+decode only
};

SiSnrImprovements si_snr_improvements(const AudioClip& full_system_out,
                                      const AudioClip& encdec_only_out,
                                      const AudioClip& noisy_in,
                                      const AudioClip& clean);

/// Batch form: each SI-SNR is the arithmetic mean over utterances (index
/// order), the improvements are differences of those means.
SiSnrImprovements si_snr_improvements(
    const std::vector<AudioClip>& full_system_out,
    const std::vector<AudioClip>& encdec_only_out,
    const std::vector<AudioClip>& noisy_in,
    const std::vector<AudioClip>& clean);

struct LatencyBreakdown {
  double buffer_s = 0.0;
  double encdec_s = 0.0;
  double network_s = 0.0;

  double total_s() const { return buffer_s + encdec_s + network_s; }
};

struct DnsMos {
  double ovrl = 0.0;
  double sig = 0.0;
  double bak = 0.0;
};

/// One Table-style row of evaluation results. DNSMOS values are never
/// computed here; they are attached when supplied externally.
struct EvalReport {
  double si_snr_db = 0.0;
  double si_snri_data_db = 0.0;
  double si_snri_encdec_db = 0.0;
  LatencyBreakdown latency;
  double power_proxy_mops_s = 0.0;
  double pdp_proxy_mops = 0.0;
  uint64_t param_count = 0;
  uint64_t model_size_bytes = 0;
  std::optional<DnsMos> dnsmos;
};

struct Qualification {
  bool pass = false;
  std::vector<std::string> reasons;  // every violated gate, empty on pass
};

/// Real-time qualification gates: both SI-SNR improvements above 3 dB and
/// total latency at most 40 ms.
Qualification qualification(const EvalReport& report);

/// Time to fill one analysis window: window_length / sample_rate.
double buffer_latency_s(const StftConfig& cfg);

/// Median wall-clock time of `encode_decode_frame` over `timed_runs`
/// executions after `warmup_runs` untimed ones.
double encdec_latency_s(const std::function<void()>& encode_decode_frame,
                        int timed_runs = 101, int warmup_runs = 3);

/// Single-frame STFT+ISTFT worker for encdec_latency_s.
std::function<void()> make_encdec_probe(const StftConfig& cfg);

/// Delay of `denoised` relative to `clean`, located by the maximum
/// cross-correlation over nonnegative lags up to 100 ms; ties resolve to
/// the smallest lag.
double network_latency_s(const AudioClip& clean, const AudioClip& denoised);

/// Effective synaptic operations per second of audio, in M-Ops/s:
/// (synops + 10 * neuronops) / audio_seconds / 1e6.
double power_proxy_mops_s(const OpsCounter& counter);

/// Power-delay product in M-Ops: power proxy times total latency.
double pdp_proxy_mops(double power_mops_s, const LatencyBreakdown& latency);

// Throws InvalidArgument if the report's PDP field disagrees with
// power * total latency by more than 1e-9 relative.
void validate_report(const EvalReport& report);

std::string eval_report_csv_header();
std::string eval_report_csv_row(const EvalReport& report);
std::string eval_report_to_json(const EvalReport& report);  // pretty-printed

}  // namespace ndns
