// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// ndns: batch front end for the denoising pipeline.
//   synth       synthesize (clean, noise, noisy) triples at prescribed SNRs
//   denoise     run a model (or the encode/decode bypass) over audio
//   eval        score denoised output and print a metrics row
//   train       quantization-aware training from a manifest
//   model-info  parameter and size accounting for a model file

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <mutex>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "ndns/error.hpp"
#include "ndns/metrics.hpp"
#include "ndns/sdnn.hpp"
#include "ndns/synth.hpp"
#include "ndns/training.hpp"
#include "ndns/version.hpp"

namespace {

using nlohmann::json;

int default_jobs() {
  if (const char* env = std::getenv("NDNS_JOBS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ndns::IoError("cannot hash missing file: " + path.string());
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// One per run directory: command, config, input hashes, outputs, timing.
class RunManifestWriter {
 public:
  RunManifestWriter(std::string command, json config)
      : start_(std::chrono::steady_clock::now()) {
    manifest_["command"] = std::move(command);
    manifest_["tool_version"] = ndns::kVersion;
    manifest_["config"] = std::move(config);
    manifest_["input_hashes"] = json::object();
    manifest_["outputs"] = json::array();
  }

  void add_input(const std::filesystem::path& path) {
    manifest_["input_hashes"][path.string()] = hex64(fnv1a64_file(path));
  }
  void add_output(const std::filesystem::path& path) {
    manifest_["outputs"].push_back(path.string());
  }

  void write(const std::filesystem::path& run_dir) {
    manifest_["timings"] = {
        {"wall_s", std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start_)
                       .count()}};
    std::ofstream f(run_dir / "run_manifest.json", std::ios::trunc);
    if (!f)
      throw ndns::IoError("cannot write run manifest in " + run_dir.string());
    f << manifest_.dump(2) << "\n";
  }

 private:
  json manifest_;
  std::chrono::steady_clock::time_point start_;
};

json ops_to_json(const ndns::OpsCounter& counter) {
  return {{"synops", counter.synops},
          {"neuronops", counter.neuronops},
          {"steps", counter.steps},
          {"timestep_s", counter.timestep_s},
          {"audio_seconds", counter.audio_seconds()}};
}

ndns::OpsCounter ops_from_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ndns::IoError("cannot open ops file: " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ndns::FormatError("ops file parse error: " + std::string(e.what()));
  }
  ndns::OpsCounter counter;
  counter.synops = j.at("synops").get<uint64_t>();
  counter.neuronops = j.at("neuronops").get<uint64_t>();
  counter.steps = j.at("steps").get<uint64_t>();
  counter.timestep_s = j.at("timestep_s").get<double>();
  return counter;
}

/// Runs fn(i) for i in [0, count) on up to `jobs` threads; rethrows the
/// first failure. Results must be index-addressed by the caller.
template <typename Fn>
void parallel_for(int count, int jobs, Fn&& fn) {
  const int workers = std::max(1, std::min(jobs, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::vector<std::future<void>> pool;
  for (int w = 0; w < workers; ++w) {
    pool.push_back(std::async(std::launch::async, [&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    }));
  }
  for (auto& f : pool) f.wait();
  if (first_error) std::rethrow_exception(first_error);
}

std::filesystem::path denoised_name(const ndns::MixtureRecord& rec) {
  return std::filesystem::path(rec.noisy_path).filename();
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string clean_dir, noise_dir, out_dir;
  ndns::SynthConfig cfg;
  int jobs = default_jobs();
};

int run_synth(const SynthArgs& a) {
  const std::filesystem::path out(a.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw ndns::IoError("cannot create output dir: " + a.out_dir);

  RunManifestWriter manifest("synth", {{"clean_dir", a.clean_dir},
                                       {"noise_dir", a.noise_dir},
                                       {"out_dir", a.out_dir},
                                       {"count", a.cfg.count},
                                       {"seed", a.cfg.seed},
                                       {"snr_db_min", a.cfg.snr_db_min},
                                       {"snr_db_max", a.cfg.snr_db_max},
                                       {"segment_s", a.cfg.segment_s},
                                       {"sample_rate_hz", a.cfg.sample_rate_hz},
                                       {"jobs", a.jobs}});
  const auto records =
      ndns::synthesize_dataset(a.cfg, a.clean_dir, a.noise_dir, out, a.jobs);
  manifest.add_output((out / "manifest.jsonl").string());
  for (const auto& rec : records) manifest.add_output((out / rec.noisy_path).string());
  manifest.write(out);
  std::printf("synthesized %zu triples into %s\n", records.size(), a.out_dir.c_str());
  return 0;
}

// --- denoise -----------------------------------------------------------------

struct DenoiseArgs {
  std::string model_path;
  std::string in_wav, out_wav;
  std::string manifest_path, out_dir;
  std::string ops_json;
  bool mask_bypass = false;
  int delay_steps = 0;
  ndns::StftConfig stft;
  int jobs = default_jobs();
};

int run_denoise(const DenoiseArgs& a) {
  ndns::SdnnNetwork net;
  if (!a.mask_bypass) net = ndns::load_model(a.model_path);

  if (!a.in_wav.empty()) {
    const ndns::AudioClip noisy = ndns::read_wav(a.in_wav);
    ndns::StftConfig cfg = a.stft;
    cfg.sample_rate_hz = noisy.sample_rate_hz;
    const ndns::DenoiseResult result =
        ndns::denoise(net, noisy, cfg, a.delay_steps, a.mask_bypass);
    ndns::write_wav(result.clean_estimate, a.out_wav);
    if (!a.ops_json.empty()) {
      std::ofstream f(a.ops_json, std::ios::trunc);
      if (!f) throw ndns::IoError("cannot write ops file: " + a.ops_json);
      f << ops_to_json(result.counter).dump(2) << "\n";
    }
    std::printf("denoised %s -> %s (%.1f s audio)\n", a.in_wav.c_str(),
                a.out_wav.c_str(), result.counter.audio_seconds());
    return 0;
  }

  // Manifest mode: one output per record plus an aggregate ops file.
  const std::filesystem::path manifest_path(a.manifest_path);
  const auto records = ndns::load_manifest(manifest_path);
  if (records.empty()) throw ndns::InvalidArgument("empty manifest");
  const std::filesystem::path out(a.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw ndns::IoError("cannot create output dir: " + a.out_dir);

  RunManifestWriter manifest("denoise",
                             {{"model", a.model_path},
                              {"manifest", a.manifest_path},
                              {"out_dir", a.out_dir},
                              {"mask_bypass", a.mask_bypass},
                              {"delay_steps", a.delay_steps},
                              {"window_length", a.stft.window_length},
                              {"hop_length", a.stft.hop_length},
                              {"jobs", a.jobs}});
  if (!a.mask_bypass) manifest.add_input(a.model_path);
  manifest.add_input(manifest_path);

  std::vector<ndns::OpsCounter> counters(records.size());
  parallel_for(static_cast<int>(records.size()), a.jobs, [&](int i) {
    const ndns::Triple triple =
        ndns::load_triple(records, manifest_path, static_cast<size_t>(i));
    ndns::StftConfig cfg = a.stft;
    cfg.sample_rate_hz = triple.noisy.sample_rate_hz;
    const ndns::DenoiseResult result =
        ndns::denoise(net, triple.noisy, cfg, a.delay_steps, a.mask_bypass);
    ndns::write_wav(result.clean_estimate,
                    out / denoised_name(records[static_cast<size_t>(i)]));
    counters[static_cast<size_t>(i)] = result.counter;
  });

  ndns::OpsCounter total;
  for (const auto& c : counters) {
    total.synops += c.synops;
    total.neuronops += c.neuronops;
    total.steps += c.steps;
    total.timestep_s = c.timestep_s;
  }
  {
    std::ofstream f(out / "ops.json", std::ios::trunc);
    if (!f) throw ndns::IoError("cannot write ops.json in " + a.out_dir);
    f << ops_to_json(total).dump(2) << "\n";
  }
  for (const auto& rec : records) manifest.add_output((out / denoised_name(rec)).string());
  manifest.add_output((out / "ops.json").string());
  manifest.write(out);
  std::printf("denoised %zu utterances into %s\n", records.size(), a.out_dir.c_str());
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string manifest_path;
  std::string denoised_dir, bypass_dir;
  std::string ops_json;
  std::string model_path;
  std::string dnsmos_file;
  std::string out_dir;
  ndns::StftConfig stft;
};

int run_eval(const EvalArgs& a) {
  const std::filesystem::path manifest_path(a.manifest_path);
  const auto records = ndns::load_manifest(manifest_path);
  if (records.empty()) throw ndns::InvalidArgument("empty manifest");

  RunManifestWriter manifest("eval", {{"manifest", a.manifest_path},
                                      {"denoised_dir", a.denoised_dir},
                                      {"bypass_dir", a.bypass_dir},
                                      {"ops", a.ops_json},
                                      {"model", a.model_path},
                                      {"window_length", a.stft.window_length},
                                      {"hop_length", a.stft.hop_length}});
  manifest.add_input(manifest_path);

  double full_sum = 0.0, encdec_sum = 0.0, data_sum = 0.0, lag_sum = 0.0;
  json per_utterance = json::array();
  for (size_t i = 0; i < records.size(); ++i) {
    const ndns::Triple triple = ndns::load_triple(records, manifest_path, i);
    const auto name = denoised_name(records[i]);
    const ndns::AudioClip denoised =
        ndns::read_wav(std::filesystem::path(a.denoised_dir) / name);
    const ndns::AudioClip bypass =
        ndns::read_wav(std::filesystem::path(a.bypass_dir) / name);

    const double full = ndns::cap_db(ndns::si_snr_db(denoised, triple.clean));
    const double encdec = ndns::cap_db(ndns::si_snr_db(bypass, triple.clean));
    const double data = ndns::cap_db(ndns::si_snr_db(triple.noisy, triple.clean));
    const double lag = ndns::network_latency_s(triple.clean, denoised);
    full_sum += full;
    encdec_sum += encdec;
    data_sum += data;
    lag_sum += lag;
    per_utterance.push_back({{"index", i},
                             {"si_snr_full_db", full},
                             {"si_snr_encdec_db", encdec},
                             {"si_snr_data_db", data},
                             {"network_latency_s", lag}});
  }
  const auto n = static_cast<double>(records.size());

  ndns::EvalReport report;
  report.si_snr_db = full_sum / n;
  report.si_snri_data_db = (full_sum - data_sum) / n;
  report.si_snri_encdec_db = (full_sum - encdec_sum) / n;
  report.latency.buffer_s = ndns::buffer_latency_s(a.stft);
  report.latency.encdec_s = ndns::encdec_latency_s(ndns::make_encdec_probe(a.stft));
  report.latency.network_s = lag_sum / n;

  const ndns::OpsCounter ops = ops_from_json_file(a.ops_json);
  report.power_proxy_mops_s = ndns::power_proxy_mops_s(ops);
  report.pdp_proxy_mops = ndns::pdp_proxy_mops(report.power_proxy_mops_s, report.latency);

  if (!a.model_path.empty()) {
    const ndns::SdnnNetwork net = ndns::load_model(a.model_path);
    report.param_count = ndns::weight_count(net);
    report.model_size_bytes = ndns::model_size_bytes(net);
    manifest.add_input(a.model_path);
  }
  if (!a.dnsmos_file.empty()) {
    std::ifstream f(a.dnsmos_file);
    if (!f) throw ndns::IoError("cannot open dnsmos file: " + a.dnsmos_file);
    json j;
    try {
      j = json::parse(f);
    } catch (const json::parse_error& e) {
      throw ndns::FormatError("dnsmos parse error: " + std::string(e.what()));
    }
    report.dnsmos = ndns::DnsMos{j.at("ovrl").get<double>(),
                                 j.at("sig").get<double>(),
                                 j.at("bak").get<double>()};
  }

  const ndns::Qualification qual = ndns::qualification(report);
  std::printf("%s\n", ndns::eval_report_csv_header().c_str());
  std::printf("%s\n", ndns::eval_report_csv_row(report).c_str());
  std::printf("qualification: %s\n", qual.pass ? "PASS" : "FAIL");
  for (const auto& reason : qual.reasons) std::printf("  - %s\n", reason.c_str());

  if (!a.out_dir.empty()) {
    const std::filesystem::path out(a.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw ndns::IoError("cannot create output dir: " + a.out_dir);
    std::ofstream rj(out / "report.json", std::ios::trunc);
    rj << ndns::eval_report_to_json(report);
    std::ofstream rc(out / "report.csv", std::ios::trunc);
    rc << ndns::eval_report_csv_header() << "\n"
       << ndns::eval_report_csv_row(report) << "\n";
    std::ofstream pu(out / "utterances.json", std::ios::trunc);
    pu << per_utterance.dump(2) << "\n";
    manifest.add_output((out / "report.json").string());
    manifest.add_output((out / "report.csv").string());
    manifest.add_output((out / "utterances.json").string());
    manifest.write(out);
  }
  return qual.pass ? 0 : 0;  // scoring is reported, not gated, here
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string manifest_path;
  std::string run_dir;
  bool resume = false;
};

int run_train(const TrainArgs& a) {
  ndns::TrainConfig cfg;
  std::vector<int> topology = {257, 256, 256, 257};
  int weight_bits = 8;
  double input_threshold = 0.0;
  double layer_threshold = 0.0;

  if (!a.config_path.empty()) {
    cfg = ndns::train_config_from_json_file(a.config_path);
    // Model section rides in the same file; shadow init consumes it.
    std::ifstream f(a.config_path);
    const json j = json::parse(f);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.contains("topology")) topology = m.at("topology").get<std::vector<int>>();
      weight_bits = m.value("weight_bits", weight_bits);
      input_threshold = m.value("input_threshold", input_threshold);
      layer_threshold = m.value("layer_threshold", layer_threshold);
    }
  }

  const std::filesystem::path run_dir(a.run_dir);
  std::error_code ec;
  std::filesystem::create_directories(run_dir, ec);
  if (ec) throw ndns::IoError("cannot create run dir: " + a.run_dir);

  ndns::TrainCheckpoint start;
  const auto state_path = run_dir / "train_state.ndnt";
  if (a.resume) {
    if (!std::filesystem::exists(state_path))
      throw ndns::IoError("no checkpoint to resume from in " + a.run_dir);
    start = ndns::load_train_checkpoint(state_path);
    std::printf("resuming after epoch %d\n", start.completed_epochs);
  } else {
    start.shadow = ndns::init_shadow(topology, weight_bits, cfg.seed);
    start.shadow.input_threshold = input_threshold;
    for (auto& layer : start.shadow.layers) layer.threshold = layer_threshold;
    start.opt = ndns::make_radam_state(start.shadow);
  }

  RunManifestWriter manifest("train", {{"config", a.config_path},
                                       {"manifest", a.manifest_path},
                                       {"run_dir", a.run_dir},
                                       {"resume", a.resume}});
  if (!a.config_path.empty()) manifest.add_input(a.config_path);
  manifest.add_input(a.manifest_path);

  {  // Echo the effective config into the run directory.
    std::ofstream f(run_dir / "train_config.json", std::ios::trunc);
    f << ndns::train_config_to_json(cfg);
  }

  const auto records = ndns::load_manifest(a.manifest_path);
  const ndns::TrainResult result =
      ndns::train(start, records, a.manifest_path, cfg, run_dir);

  for (const auto& stats : result.history)
    std::printf("epoch %3d  train loss %10.4f  val si_snri_data %7.3f dB\n",
                stats.epoch, stats.train_loss, stats.val_si_snri_data_db);
  manifest.add_output((run_dir / "model.ndns").string());
  manifest.add_output((run_dir / "history.json").string());
  manifest.write(run_dir);
  return 0;
}

// --- model-info --------------------------------------------------------------

int run_model_info(const std::string& path, bool as_json) {
  const ndns::SdnnNetwork net = ndns::load_model(path);
  std::string topo;
  if (!net.layers.empty()) {
    topo = std::to_string(net.layers.front().in_dim);
    for (const auto& layer : net.layers) topo += " -> " + std::to_string(layer.out_dim);
  }
  const uint64_t weights = ndns::weight_count(net);
  const uint64_t unique = ndns::count_params(net);
  const uint64_t bytes = ndns::model_size_bytes(net);
  if (as_json) {
    json j = {{"topology", json::array()},
              {"params", weights},
              {"unique_params", unique},
              {"model_size_bytes", bytes},
              {"input_threshold", net.input_threshold}};
    if (!net.layers.empty()) {
      j["topology"].push_back(net.layers.front().in_dim);
      for (const auto& layer : net.layers) j["topology"].push_back(layer.out_dim);
    }
    std::printf("%s\n", j.dump(2).c_str());
  } else {
    std::printf("topology: %s\n", topo.c_str());
    std::printf("params: %llu\n", static_cast<unsigned long long>(weights));
    std::printf("unique params (incl. delays, thresholds): %llu\n",
                static_cast<unsigned long long>(unique));
    std::printf("model size: %llu bytes (%.1f KB)\n",
                static_cast<unsigned long long>(bytes),
                static_cast<double>(bytes) / 1000.0);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neuromorphic denoising pipeline: dataset synthesis, "
               "sigma-delta network inference, training, and evaluation"};
  app.set_version_flag("--version", ndns::kVersion);
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "synthesize noisy/clean pairs");
  synth_cmd->add_option("--clean-dir", synth.clean_dir, "directory of clean WAVs")->required();
  synth_cmd->add_option("--noise-dir", synth.noise_dir, "directory of noise WAVs")->required();
  synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
  synth_cmd->add_option("--count", synth.cfg.count, "number of triples")->required();
  synth_cmd->add_option("--seed", synth.cfg.seed, "RNG seed");
  synth_cmd->add_option("--snr-min", synth.cfg.snr_db_min, "lowest target SNR (dB)");
  synth_cmd->add_option("--snr-max", synth.cfg.snr_db_max, "highest target SNR (dB)");
  synth_cmd->add_option("--segment-s", synth.cfg.segment_s, "segment length (s)");
  synth_cmd->add_option("--rate", synth.cfg.sample_rate_hz, "sample rate (Hz)");
  synth_cmd->add_option("--jobs", synth.jobs, "parallel workers");

  DenoiseArgs den;
  CLI::App* den_cmd = app.add_subcommand("denoise", "run the denoiser over audio");
  den_cmd->add_option("--model", den.model_path, "model file (.ndns)");
  den_cmd->add_option("--in", den.in_wav, "single input WAV");
  den_cmd->add_option("--out", den.out_wav, "single output WAV");
  den_cmd->add_option("--manifest", den.manifest_path, "dataset manifest (JSONL)");
  den_cmd->add_option("--out-dir", den.out_dir, "output directory for manifest mode");
  den_cmd->add_option("--ops-json", den.ops_json, "where to write the ops counter (single mode)");
  den_cmd->add_flag("--mask-bypass", den.mask_bypass, "identity mask: encode+decode only");
  den_cmd->add_option("--delay-steps", den.delay_steps, "network output delay in frames");
  den_cmd->add_option("--window", den.stft.window_length, "STFT window length");
  den_cmd->add_option("--hop", den.stft.hop_length, "STFT hop length");
  den_cmd->add_option("--jobs", den.jobs, "parallel workers");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a denoised dataset");
  eval_cmd->add_option("--manifest", eval.manifest_path, "dataset manifest")->required();
  eval_cmd->add_option("--denoised-dir", eval.denoised_dir, "full-system outputs")->required();
  eval_cmd->add_option("--bypass-dir", eval.bypass_dir, "encode+decode-only outputs")->required();
  eval_cmd->add_option("--ops", eval.ops_json, "ops counter JSON from denoise")->required();
  eval_cmd->add_option("--model", eval.model_path, "model file for parameter accounting");
  eval_cmd->add_option("--dnsmos-file", eval.dnsmos_file, "externally computed DNSMOS JSON");
  eval_cmd->add_option("--out-dir", eval.out_dir, "where to write report files");
  eval_cmd->add_option("--window", eval.stft.window_length, "STFT window length");
  eval_cmd->add_option("--hop", eval.stft.hop_length, "STFT hop length");
  eval_cmd->add_option("--rate", eval.stft.sample_rate_hz, "sample rate (Hz)");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model from a manifest");
  train_cmd->add_option("--config", train.config_path, "training config JSON");
  train_cmd->add_option("--manifest", train.manifest_path, "dataset manifest")->required();
  train_cmd->add_option("--out", train.run_dir, "run directory")->required();
  train_cmd->add_flag("--resume", train.resume, "continue from the latest checkpoint");

  std::string info_path;
  bool info_json = false;
  CLI::App* info_cmd = app.add_subcommand("model-info", "print model accounting");
  info_cmd->add_option("model", info_path, "model file (.ndns)")->required();
  info_cmd->add_flag("--json", info_json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*den_cmd) {
      const bool single = !den.in_wav.empty() || !den.out_wav.empty();
      const bool batch = !den.manifest_path.empty() || !den.out_dir.empty();
      if (single == batch) {
        std::fprintf(stderr, "denoise: use either --in/--out or --manifest/--out-dir\n");
        return 2;
      }
      if (single && (den.in_wav.empty() || den.out_wav.empty())) {
        std::fprintf(stderr, "denoise: --in and --out go together\n");
        return 2;
      }
      if (batch && (den.manifest_path.empty() || den.out_dir.empty())) {
        std::fprintf(stderr, "denoise: --manifest and --out-dir go together\n");
        return 2;
      }
      if (!den.mask_bypass && den.model_path.empty()) {
        std::fprintf(stderr, "denoise: --model is required unless --mask-bypass\n");
        return 2;
      }
      return run_denoise(den);
    }
    if (*eval_cmd) return run_eval(eval);
    if (*train_cmd) return run_train(train);
    if (*info_cmd) return run_model_info(info_path, info_json);
  } catch (const ndns::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    // Config/JSON syntax problems are usage errors.
    return std::string(e.what()).find("config parse error") != std::string::npos ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
