// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ndns/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include <json.hpp>

#include "ndns/error.hpp"

namespace ndns {

namespace {

constexpr double kLatencyGateS = 0.040;
constexpr double kMinImprovementDb = 3.0;
constexpr double kMaxSearchLagS = 0.100;

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double mean_si_snr(const std::vector<AudioClip>& estimates,
                   const std::vector<AudioClip>& targets) {
  std::vector<double> values(estimates.size());
  for (size_t i = 0; i < estimates.size(); ++i)
    values[i] = cap_db(si_snr_db(estimates[i], targets[i]));
  return mean(values);
}

}  // namespace

double si_snr_db(const AudioClip& estimate, const AudioClip& target) {
  if (estimate.samples.size() != target.samples.size())
    throw InvalidArgument("si_snr: length mismatch");
  if (estimate.sample_rate_hz != target.sample_rate_hz)
    throw InvalidArgument("si_snr: sample rate mismatch");
  const size_t n = target.samples.size();
  if (n == 0) throw InvalidArgument("si_snr: empty signals");

  double mean_est = 0.0, mean_tgt = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mean_est += estimate.samples[i];
    mean_tgt += target.samples[i];
  }
  mean_est /= static_cast<double>(n);
  mean_tgt /= static_cast<double>(n);

  double dot = 0.0, target_energy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double e = estimate.samples[i] - mean_est;
    const double t = target.samples[i] - mean_tgt;
    dot += e * t;
    target_energy += t * t;
  }
  if (target_energy == 0.0)
    throw InvalidArgument("si_snr: all-zero target (undefined projection)");

  const double scale = dot / target_energy;
  double signal_energy = 0.0, noise_energy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double e = estimate.samples[i] - mean_est;
    const double t = target.samples[i] - mean_tgt;
    const double s = scale * t;
    signal_energy += s * s;
    noise_energy += (e - s) * (e - s);
  }
  if (noise_energy == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal_energy / noise_energy);
}

SiSnrImprovements si_snr_improvements(const AudioClip& full_system_out,
                                      const AudioClip& encdec_only_out,
                                      const AudioClip& noisy_in,
                                      const AudioClip& clean) {
  const double full = cap_db(si_snr_db(full_system_out, clean));
  const double encdec = cap_db(si_snr_db(encdec_only_out, clean));
  const double data = cap_db(si_snr_db(noisy_in, clean));
  return {full - data, full - encdec};
}

SiSnrImprovements si_snr_improvements(
    const std::vector<AudioClip>& full_system_out,
    const std::vector<AudioClip>& encdec_only_out,
    const std::vector<AudioClip>& noisy_in,
    const std::vector<AudioClip>& clean) {
  if (full_system_out.size() != clean.size() ||
      encdec_only_out.size() != clean.size() || noisy_in.size() != clean.size())
    throw InvalidArgument("si_snr_improvements: batch size mismatch");
  if (clean.empty()) throw InvalidArgument("si_snr_improvements: empty batch");
  const double full = mean_si_snr(full_system_out, clean);
  const double encdec = mean_si_snr(encdec_only_out, clean);
  const double data = mean_si_snr(noisy_in, clean);
  return {full - data, full - encdec};
}

Qualification qualification(const EvalReport& report) {
  Qualification q;
  char buf[160];
  if (!(report.si_snri_data_db > kMinImprovementDb)) {
    std::snprintf(buf, sizeof(buf),
                  "SI-SNRi over noisy data is %.3f dB, gate requires > %.0f dB",
                  report.si_snri_data_db, kMinImprovementDb);
    q.reasons.emplace_back(buf);
  }
  if (!(report.si_snri_encdec_db > kMinImprovementDb)) {
    std::snprintf(buf, sizeof(buf),
                  "SI-SNRi over encode+decode is %.3f dB, gate requires > %.0f dB",
                  report.si_snri_encdec_db, kMinImprovementDb);
    q.reasons.emplace_back(buf);
  }
  if (!(report.latency.total_s() <= kLatencyGateS)) {
    std::snprintf(buf, sizeof(buf),
                  "total latency is %.3f ms, gate requires <= %.0f ms",
                  report.latency.total_s() * 1e3, kLatencyGateS * 1e3);
    q.reasons.emplace_back(buf);
  }
  q.pass = q.reasons.empty();
  return q;
}

double buffer_latency_s(const StftConfig& cfg) {
  check_config(cfg);
  return static_cast<double>(cfg.window_length) / cfg.sample_rate_hz;
}

double encdec_latency_s(const std::function<void()>& encode_decode_frame,
                        int timed_runs, int warmup_runs) {
  if (timed_runs < 100)
    throw InvalidArgument("encdec_latency: need at least 100 timed runs");
  if (warmup_runs < 1)
    throw InvalidArgument("encdec_latency: need at least one warm-up run");
  using Clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup_runs; ++i) encode_decode_frame();
  std::vector<double> seconds(static_cast<size_t>(timed_runs));
  for (int i = 0; i < timed_runs; ++i) {
    const auto start = Clock::now();
    encode_decode_frame();
    seconds[static_cast<size_t>(i)] =
        std::chrono::duration<double>(Clock::now() - start).count();
  }
  std::sort(seconds.begin(), seconds.end());
  const size_t mid = seconds.size() / 2;
  return seconds.size() % 2 == 1 ? seconds[mid]
                                 : 0.5 * (seconds[mid - 1] + seconds[mid]);
}

std::function<void()> make_encdec_probe(const StftConfig& cfg) {
  check_config(cfg);
  // One discrete timestep's worth of work: window one frame, transform,
  // split to magnitude/phase, recombine, invert.
  auto clip = std::make_shared<AudioClip>();
  clip->sample_rate_hz = cfg.sample_rate_hz;
  clip->samples.resize(static_cast<size_t>(cfg.window_length));
  for (size_t i = 0; i < clip->samples.size(); ++i)
    clip->samples[i] = std::sin(0.37 * static_cast<double>(i));
  return [clip, cfg]() {
    const Spectrogram spec = stft(*clip, cfg);
    const MagnitudePhase mp = magnitude_phase(spec);
    const Spectrogram back =
        recombine(mp.magnitude, mp.phase, cfg, spec.source_samples);
    volatile double sink = istft(back).samples[0];
    (void)sink;
  };
}

double network_latency_s(const AudioClip& clean, const AudioClip& denoised) {
  if (clean.sample_rate_hz != denoised.sample_rate_hz)
    throw InvalidArgument("network_latency: sample rate mismatch");
  const size_t overlap = std::min(clean.samples.size(), denoised.samples.size());
  const int rate = clean.sample_rate_hz;
  if (overlap < static_cast<size_t>(rate))
    throw InvalidArgument("network_latency: need at least 1 s of overlap");

  auto is_all_zero = [](const AudioClip& c) {
    return std::all_of(c.samples.begin(), c.samples.end(),
                       [](double s) { return s == 0.0; });
  };
  if (is_all_zero(clean) || is_all_zero(denoised))
    throw InvalidArgument("network_latency: degenerate all-zero input");

  const size_t max_lag = std::min(
      static_cast<size_t>(kMaxSearchLagS * rate), denoised.samples.size() - 1);
  double best = -std::numeric_limits<double>::infinity();
  size_t best_lag = 0;
  for (size_t lag = 0; lag <= max_lag; ++lag) {
    const size_t n = std::min(clean.samples.size(), denoised.samples.size() - lag);
    double corr = 0.0;
    for (size_t t = 0; t < n; ++t)
      corr += clean.samples[t] * denoised.samples[t + lag];
    if (corr > best) {  // strict: ties keep the smallest lag
      best = corr;
      best_lag = lag;
    }
  }
  return static_cast<double>(best_lag) / rate;
}

double power_proxy_mops_s(const OpsCounter& counter) {
  const double seconds = counter.audio_seconds();
  if (seconds <= 0.0)
    throw InvalidArgument("power_proxy: zero audio duration");
  const double effective_synops =
      static_cast<double>(counter.synops) + 10.0 * static_cast<double>(counter.neuronops);
  return effective_synops / seconds / 1e6;
}

double pdp_proxy_mops(double power_mops_s, const LatencyBreakdown& latency) {
  if (!std::isfinite(power_mops_s) || !std::isfinite(latency.total_s()))
    throw InvalidArgument("pdp_proxy: non-finite input");
  return power_mops_s * latency.total_s();
}

void validate_report(const EvalReport& report) {
  const double expected = report.power_proxy_mops_s * report.latency.total_s();
  const double scale = std::max(std::abs(expected), 1e-300);
  if (std::abs(report.pdp_proxy_mops - expected) / scale > 1e-9)
    throw InvalidArgument("EvalReport: pdp_proxy_mops != power * total latency");
}

std::string eval_report_csv_header() {
  return "si_snr_db,si_snri_data_db,si_snri_encdec_db,dnsmos_ovrl,dnsmos_sig,"
         "dnsmos_bak,latency_encdec_ms,latency_total_ms,power_proxy_mops_s,"
         "pdp_proxy_mops,param_count,model_size_bytes";
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string eval_report_csv_row(const EvalReport& report) {
  validate_report(report);
  std::string row;
  row += fmt_double(report.si_snr_db) + ",";
  row += fmt_double(report.si_snri_data_db) + ",";
  row += fmt_double(report.si_snri_encdec_db) + ",";
  if (report.dnsmos) {
    row += fmt_double(report.dnsmos->ovrl) + ",";
    row += fmt_double(report.dnsmos->sig) + ",";
    row += fmt_double(report.dnsmos->bak) + ",";
  } else {
    row += ",,,";
  }
  row += fmt_double(report.latency.encdec_s * 1e3) + ",";
  row += fmt_double(report.latency.total_s() * 1e3) + ",";
  row += fmt_double(report.power_proxy_mops_s) + ",";
  row += fmt_double(report.pdp_proxy_mops) + ",";
  row += std::to_string(report.param_count) + ",";
  row += std::to_string(report.model_size_bytes);
  return row;
}

std::string eval_report_to_json(const EvalReport& report) {
  validate_report(report);
  nlohmann::json j;
  j["si_snr_db"] = report.si_snr_db;
  j["si_snri_data_db"] = report.si_snri_data_db;
  j["si_snri_encdec_db"] = report.si_snri_encdec_db;
  j["latency"] = {{"buffer_s", report.latency.buffer_s},
                  {"encdec_s", report.latency.encdec_s},
                  {"network_s", report.latency.network_s},
                  {"total_s", report.latency.total_s()}};
  j["power_proxy_mops_s"] = report.power_proxy_mops_s;
  j["pdp_proxy_mops"] = report.pdp_proxy_mops;
  j["param_count"] = report.param_count;
  j["model_size_bytes"] = report.model_size_bytes;
  if (report.dnsmos) {
    j["dnsmos"] = {{"ovrl", report.dnsmos->ovrl},
                   {"sig", report.dnsmos->sig},
                   {"bak", report.dnsmos->bak}};
  } else {
    j["dnsmos"] = nullptr;
  }
  return j.dump(2) + "\n";
}

}  // namespace ndns
