// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ndns/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <mutex>

#include <json.hpp>

#include "ndns/error.hpp"
#include "ndns/rng.hpp"

namespace ndns {

namespace {

constexpr double kClipGuardPeak = 0.99;

std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      files.push_back(entry.path());
  // Directory iteration order is unspecified; sort for determinism.
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .wav files in " + dir.string());
  return files;
}

/// Contiguous crop of `segment` samples starting at `offset`, cycling the
/// source when it is shorter than the request.
AudioClip crop_cycled(const AudioClip& src, size_t offset, size_t segment) {
  AudioClip out;
  out.sample_rate_hz = src.sample_rate_hz;
  out.samples.resize(segment);
  const size_t n = src.samples.size();
  for (size_t i = 0; i < segment; ++i) out.samples[i] = src.samples[(offset + i) % n];
  return out;
}

std::string item_name(int index, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/item_%05d.wav", kind, index);
  return buf;
}

MixtureRecord synth_one(const SynthConfig& cfg,
                        const std::vector<std::filesystem::path>& clean_files,
                        const std::vector<std::filesystem::path>& noise_files,
                        const std::filesystem::path& out_dir, int index) {
  Rng rng = Rng::for_item(cfg.seed, static_cast<uint64_t>(index));
  const auto& clean_file = clean_files[rng.below(clean_files.size())];
  const auto& noise_file = noise_files[rng.below(noise_files.size())];

  const AudioClip clean_src = read_wav(clean_file);
  const AudioClip noise_src = read_wav(noise_file);
  if (clean_src.sample_rate_hz != cfg.sample_rate_hz ||
      noise_src.sample_rate_hz != cfg.sample_rate_hz)
    throw InvalidArgument("source sample rate does not match config: " +
                          clean_file.string() + " / " + noise_file.string());
  if (clean_src.samples.empty() || noise_src.samples.empty())
    throw InvalidArgument("empty source clip");

  const auto segment =
      static_cast<size_t>(std::llround(cfg.segment_s * cfg.sample_rate_hz));
  const auto offset_range = [&](const AudioClip& src) {
    return src.samples.size() > segment ? src.samples.size() - segment
                                        : src.samples.size();
  };
  const size_t clean_offset = rng.below(offset_range(clean_src));
  const size_t noise_offset = rng.below(offset_range(noise_src));
  const double snr_db = rng.uniform(cfg.snr_db_min, cfg.snr_db_max);

  AudioClip clean = crop_cycled(clean_src, clean_offset, segment);
  AudioClip noise = crop_cycled(noise_src, noise_offset, segment);
  MixResult mix = mix_at_snr(clean, noise, snr_db);

  MixtureRecord rec;
  rec.clean_path = item_name(index, "clean");
  rec.noise_path = item_name(index, "noise");
  rec.noisy_path = item_name(index, "noisy");
  rec.clean_source_id = clean_file.filename().string();
  rec.noise_source_id = noise_file.filename().string();
  rec.snr_db = snr_db;
  rec.gain_applied = mix.gain;
  rec.normalization = mix.normalization;

  write_wav(clean, out_dir / rec.clean_path);
  write_wav(noise, out_dir / rec.noise_path);
  write_wav(mix.noisy, out_dir / rec.noisy_path);
  return rec;
}

nlohmann::json record_to_json(const MixtureRecord& rec) {
  return {{"clean_path", rec.clean_path},
          {"noise_path", rec.noise_path},
          {"noisy_path", rec.noisy_path},
          {"clean_source_id", rec.clean_source_id},
          {"noise_source_id", rec.noise_source_id},
          {"snr_db", rec.snr_db},
          {"gain_applied", rec.gain_applied},
          {"normalization", rec.normalization}};
}

MixtureRecord record_from_json(const nlohmann::json& j) {
  MixtureRecord rec;
  rec.clean_path = j.at("clean_path").get<std::string>();
  rec.noise_path = j.at("noise_path").get<std::string>();
  rec.noisy_path = j.at("noisy_path").get<std::string>();
  rec.clean_source_id = j.at("clean_source_id").get<std::string>();
  rec.noise_source_id = j.at("noise_source_id").get<std::string>();
  rec.snr_db = j.at("snr_db").get<double>();
  rec.gain_applied = j.at("gain_applied").get<double>();
  rec.normalization = j.at("normalization").get<double>();
  return rec;
}

}  // namespace

double rms(const AudioClip& clip) {
  if (clip.samples.empty()) throw InvalidArgument("rms of empty clip");
  double acc = 0.0;
  for (double s : clip.samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(clip.samples.size()));
}

MixResult mix_at_snr(AudioClip& clean, AudioClip& noise, double target_snr_db) {
  if (clean.samples.size() != noise.samples.size())
    throw InvalidArgument("mix_at_snr: length mismatch");
  if (clean.sample_rate_hz != noise.sample_rate_hz)
    throw InvalidArgument("mix_at_snr: sample rate mismatch");
  const double clean_rms = rms(clean);
  const double noise_rms = rms(noise);
  if (clean_rms == 0.0) throw InvalidArgument("mix_at_snr: silent clean input");
  if (noise_rms == 0.0) throw InvalidArgument("mix_at_snr: silent noise input");

  MixResult result;
  result.gain = clean_rms / noise_rms * std::pow(10.0, -target_snr_db / 20.0);

  const size_t n = clean.samples.size();
  for (size_t i = 0; i < n; ++i) noise.samples[i] *= result.gain;

  result.noisy.sample_rate_hz = clean.sample_rate_hz;
  result.noisy.samples.resize(n);
  double peak = 0.0;
  for (size_t i = 0; i < n; ++i) {
    result.noisy.samples[i] = clean.samples[i] + noise.samples[i];
    peak = std::max(peak, std::abs(result.noisy.samples[i]));
  }

  if (peak > kClipGuardPeak) {
    // Scale all three by the same factor, then rebuild the sum so that
    // noisy == clean + noise holds bit-exactly after scaling.
    result.normalization = kClipGuardPeak / peak;
    for (size_t i = 0; i < n; ++i) {
      clean.samples[i] *= result.normalization;
      noise.samples[i] *= result.normalization;
      result.noisy.samples[i] = clean.samples[i] + noise.samples[i];
    }
  }
  return result;
}

std::vector<MixtureRecord> synthesize_dataset(const SynthConfig& cfg,
                                              const std::filesystem::path& clean_dir,
                                              const std::filesystem::path& noise_dir,
                                              const std::filesystem::path& out_dir,
                                              int jobs) {
  if (cfg.count < 1) throw InvalidArgument("count must be >= 1");
  if (cfg.segment_s <= 0.0) throw InvalidArgument("segment_s must be positive");
  if (cfg.snr_db_min > cfg.snr_db_max) throw InvalidArgument("empty SNR range");
  if (cfg.sample_rate_hz <= 0) throw InvalidArgument("sample rate must be positive");

  const auto clean_files = list_wavs(clean_dir);
  const auto noise_files = list_wavs(noise_dir);

  std::error_code ec;
  for (const char* sub : {"clean", "noise", "noisy"}) {
    std::filesystem::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string());
  }

  std::vector<MixtureRecord> records(static_cast<size_t>(cfg.count));
  const int workers = std::max(1, jobs);
  // Per-item seeding makes every item independent of scheduling.
  std::atomic<int> next{0};
  std::vector<std::future<void>> pool;
  std::mutex error_mutex;
  std::exception_ptr first_error;
  for (int w = 0; w < workers; ++w) {
    pool.push_back(std::async(std::launch::async, [&]() {
      for (int i = next.fetch_add(1); i < cfg.count; i = next.fetch_add(1)) {
        try {
          records[static_cast<size_t>(i)] =
              synth_one(cfg, clean_files, noise_files, out_dir, i);
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

  save_manifest(records, out_dir / "manifest.jsonl");
  return records;
}

void save_manifest(const std::vector<MixtureRecord>& records,
                   const std::filesystem::path& manifest_path) {
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + manifest_path.string());
  for (const MixtureRecord& rec : records) out << record_to_json(rec).dump() << "\n";
  if (!out) throw IoError("manifest write failed: " + manifest_path.string());
}

std::vector<MixtureRecord> load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
  std::vector<MixtureRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest " + manifest_path.string() + " line " +
                        std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

Triple load_triple(const std::vector<MixtureRecord>& manifest,
                   const std::filesystem::path& manifest_path, size_t index) {
  if (index >= manifest.size())
    throw InvalidArgument("triple index " + std::to_string(index) +
                          " out of range (manifest has " +
                          std::to_string(manifest.size()) + " records)");
  const std::filesystem::path base = manifest_path.parent_path();
  Triple t;
  t.record = manifest[index];
  t.clean = read_wav(base / t.record.clean_path);
  t.noise = read_wav(base / t.record.noise_path);
  t.noisy = read_wav(base / t.record.noisy_path);
  if (t.clean.samples.size() != t.noisy.samples.size() ||
      t.noise.samples.size() != t.noisy.samples.size() ||
      t.clean.sample_rate_hz != t.noisy.sample_rate_hz ||
      t.noise.sample_rate_hz != t.noisy.sample_rate_hz)
    throw FormatError("inconsistent triple at index " + std::to_string(index));
  return t;
}

}  // namespace ndns
