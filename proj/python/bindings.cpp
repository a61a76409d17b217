// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Python bindings for the main pipeline operations: WAV I/O, the STFT
// codec, the sigma-delta network, dataset synthesis, and the evaluation
// metrics. Training runs through the ndns CLI.

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ndns/audio_io.hpp"
#include "ndns/error.hpp"
#include "ndns/metrics.hpp"
#include "ndns/sdnn.hpp"
#include "ndns/stft.hpp"
#include "ndns/synth.hpp"
#include "ndns/version.hpp"

namespace py = pybind11;

namespace {

ndns::AudioClip clip_from_array(const py::array_t<double>& samples, int rate) {
  if (samples.ndim() != 1)
    throw ndns::InvalidArgument("samples must be a 1-D array");
  ndns::AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.samples.assign(samples.data(), samples.data() + samples.size());
  return clip;
}

py::array_t<double> array_from_vector(const std::vector<double>& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

py::array_t<std::complex<double>> frames_to_array(
    const std::vector<std::vector<std::complex<double>>>& frames) {
  const auto rows = static_cast<py::ssize_t>(frames.size());
  const auto cols = static_cast<py::ssize_t>(rows > 0 ? frames[0].size() : 0);
  py::array_t<std::complex<double>> out({rows, cols});
  auto view = out.mutable_unchecked<2>();
  for (py::ssize_t r = 0; r < rows; ++r)
    for (py::ssize_t c = 0; c < cols; ++c) view(r, c) = frames[static_cast<size_t>(r)][static_cast<size_t>(c)];
  return out;
}

std::vector<std::vector<double>> matrix_from_array(const py::array_t<double>& a) {
  if (a.ndim() != 2) throw ndns::InvalidArgument("expected a 2-D array");
  auto view = a.unchecked<2>();
  std::vector<std::vector<double>> m(static_cast<size_t>(view.shape(0)));
  for (py::ssize_t r = 0; r < view.shape(0); ++r) {
    m[static_cast<size_t>(r)].resize(static_cast<size_t>(view.shape(1)));
    for (py::ssize_t c = 0; c < view.shape(1); ++c)
      m[static_cast<size_t>(r)][static_cast<size_t>(c)] = view(r, c);
  }
  return m;
}

py::array_t<double> matrix_to_array(const std::vector<std::vector<double>>& m) {
  const auto rows = static_cast<py::ssize_t>(m.size());
  const auto cols = static_cast<py::ssize_t>(rows > 0 ? m[0].size() : 0);
  py::array_t<double> out({rows, cols});
  auto view = out.mutable_unchecked<2>();
  for (py::ssize_t r = 0; r < rows; ++r)
    for (py::ssize_t c = 0; c < cols; ++c) view(r, c) = m[static_cast<size_t>(r)][static_cast<size_t>(c)];
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sigma-delta network speech denoising pipeline";
  m.attr("__version__") = ndns::kVersion;

  py::register_exception<ndns::InvalidArgument>(m, "InvalidArgumentError",
                                                PyExc_ValueError);
  py::register_exception<ndns::FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ndns::IoError>(m, "IoError", PyExc_OSError);

  py::class_<ndns::AudioClip>(m, "AudioClip")
      .def(py::init(&clip_from_array), py::arg("samples"),
           py::arg("sample_rate_hz") = 16000)
      .def_property_readonly(
          "samples", [](const ndns::AudioClip& c) { return array_from_vector(c.samples); })
      .def_readonly("sample_rate_hz", &ndns::AudioClip::sample_rate_hz)
      .def("duration_s", &ndns::AudioClip::duration_s)
      .def("__len__", [](const ndns::AudioClip& c) { return c.samples.size(); });

  m.def("read_wav", &ndns::read_wav, py::arg("path"));
  m.def("write_wav", &ndns::write_wav, py::arg("clip"), py::arg("path"));

  py::class_<ndns::StftConfig>(m, "StftConfig")
      .def(py::init([](int window, int hop, int rate) {
             ndns::StftConfig cfg;
             cfg.window_length = window;
             cfg.hop_length = hop;
             cfg.sample_rate_hz = rate;
             ndns::check_config(cfg);
             return cfg;
           }),
           py::arg("window_length") = 512, py::arg("hop_length") = 128,
           py::arg("sample_rate_hz") = 16000)
      .def_readonly("window_length", &ndns::StftConfig::window_length)
      .def_readonly("hop_length", &ndns::StftConfig::hop_length)
      .def_readonly("sample_rate_hz", &ndns::StftConfig::sample_rate_hz)
      .def_property_readonly("bins", &ndns::StftConfig::bins)
      .def("frame_fill_time_s", &ndns::StftConfig::frame_fill_time_s);

  py::class_<ndns::Spectrogram>(m, "Spectrogram")
      .def(py::init([](const py::array_t<std::complex<double>>& frames,
                       const ndns::StftConfig& cfg, size_t source_samples) {
             if (frames.ndim() != 2)
               throw ndns::InvalidArgument("frames must be 2-D");
             ndns::Spectrogram spec;
             spec.config = cfg;
             spec.source_samples = source_samples;
             auto view = frames.unchecked<2>();
             spec.frames.resize(static_cast<size_t>(view.shape(0)));
             for (py::ssize_t r = 0; r < view.shape(0); ++r) {
               spec.frames[static_cast<size_t>(r)].resize(static_cast<size_t>(view.shape(1)));
               for (py::ssize_t c = 0; c < view.shape(1); ++c)
                 spec.frames[static_cast<size_t>(r)][static_cast<size_t>(c)] = view(r, c);
             }
             return spec;
           }),
           py::arg("frames"), py::arg("config"), py::arg("source_samples") = 0)
      .def_property_readonly(
          "frames", [](const ndns::Spectrogram& s) { return frames_to_array(s.frames); })
      .def_readonly("config", &ndns::Spectrogram::config)
      .def_readonly("source_samples", &ndns::Spectrogram::source_samples);

  m.def("stft", &ndns::stft, py::arg("clip"), py::arg("config"));
  m.def("istft", &ndns::istft, py::arg("spectrogram"));
  m.def(
      "magnitude_phase",
      [](const ndns::Spectrogram& spec) {
        const ndns::MagnitudePhase mp = ndns::magnitude_phase(spec);
        return py::make_tuple(matrix_to_array(mp.magnitude), matrix_to_array(mp.phase));
      },
      py::arg("spectrogram"));
  m.def(
      "recombine",
      [](const py::array_t<double>& mag, const py::array_t<double>& phase,
         const ndns::StftConfig& cfg, size_t source_samples) {
        return ndns::recombine(matrix_from_array(mag), matrix_from_array(phase),
                               cfg, source_samples);
      },
      py::arg("magnitude"), py::arg("phase"), py::arg("config"),
      py::arg("source_samples") = 0);

  py::class_<ndns::OpsCounter>(m, "OpsCounter")
      .def(py::init<>())
      .def_readwrite("synops", &ndns::OpsCounter::synops)
      .def_readwrite("neuronops", &ndns::OpsCounter::neuronops)
      .def_readwrite("steps", &ndns::OpsCounter::steps)
      .def_readwrite("timestep_s", &ndns::OpsCounter::timestep_s)
      .def("audio_seconds", &ndns::OpsCounter::audio_seconds);

  py::class_<ndns::SdnnNetwork>(m, "SdnnNetwork")
      .def_readonly("input_threshold", &ndns::SdnnNetwork::input_threshold)
      .def_property_readonly("topology", [](const ndns::SdnnNetwork& net) {
        std::vector<int> dims;
        if (!net.layers.empty()) {
          dims.push_back(net.layers.front().in_dim);
          for (const auto& layer : net.layers) dims.push_back(layer.out_dim);
        }
        return dims;
      });

  m.def("make_network", &ndns::make_network, py::arg("dims"),
        py::arg("weight_bits") = 8);
  m.def("load_model", &ndns::load_model, py::arg("path"));
  m.def("save_model", &ndns::save_model, py::arg("network"), py::arg("path"));
  m.def("count_params", &ndns::count_params, py::arg("network"));
  m.def("weight_count", &ndns::weight_count, py::arg("network"));
  m.def("model_size_bytes", &ndns::model_size_bytes, py::arg("network"));

  m.def(
      "denoise",
      [](const ndns::SdnnNetwork& net, const ndns::AudioClip& noisy,
         const ndns::StftConfig& cfg, int net_delay_steps, bool mask_bypass) {
        ndns::DenoiseResult r = ndns::denoise(net, noisy, cfg, net_delay_steps, mask_bypass);
        return py::make_tuple(r.clean_estimate, r.counter);
      },
      py::arg("network"), py::arg("noisy"), py::arg("config"),
      py::arg("net_delay_steps") = 0, py::arg("mask_bypass") = false);

  // Metrics.
  m.def("si_snr_db", &ndns::si_snr_db, py::arg("estimate"), py::arg("target"));
  m.def("cap_db", &ndns::cap_db, py::arg("db"));
  m.def(
      "si_snr_improvements",
      [](const ndns::AudioClip& full, const ndns::AudioClip& encdec,
         const ndns::AudioClip& noisy, const ndns::AudioClip& clean) {
        const ndns::SiSnrImprovements si = ndns::si_snr_improvements(full, encdec, noisy, clean);
        return py::make_tuple(si.data_db, si.encdec_db);
      },
      py::arg("full_system_out"), py::arg("encdec_only_out"), py::arg("noisy_in"),
      py::arg("clean"));
  m.def("buffer_latency_s", &ndns::buffer_latency_s, py::arg("config"));
  m.def("network_latency_s", &ndns::network_latency_s, py::arg("clean"),
        py::arg("denoised"));
  m.def("power_proxy_mops_s", &ndns::power_proxy_mops_s, py::arg("counter"));
  m.def(
      "pdp_proxy_mops",
      [](double power, double buffer_s, double encdec_s, double network_s) {
        return ndns::pdp_proxy_mops(power, {buffer_s, encdec_s, network_s});
      },
      py::arg("power_mops_s"), py::arg("buffer_s"), py::arg("encdec_s") = 0.0,
      py::arg("network_s") = 0.0);

  // Dataset synthesis.
  py::class_<ndns::MixtureRecord>(m, "MixtureRecord")
      .def_readonly("clean_path", &ndns::MixtureRecord::clean_path)
      .def_readonly("noise_path", &ndns::MixtureRecord::noise_path)
      .def_readonly("noisy_path", &ndns::MixtureRecord::noisy_path)
      .def_readonly("clean_source_id", &ndns::MixtureRecord::clean_source_id)
      .def_readonly("noise_source_id", &ndns::MixtureRecord::noise_source_id)
      .def_readonly("snr_db", &ndns::MixtureRecord::snr_db)
      .def_readonly("gain_applied", &ndns::MixtureRecord::gain_applied)
      .def_readonly("normalization", &ndns::MixtureRecord::normalization);

  m.def(
      "mix_at_snr",
      [](const ndns::AudioClip& clean, const ndns::AudioClip& noise, double snr_db) {
        ndns::AudioClip c = clean, n = noise;
        const ndns::MixResult r = ndns::mix_at_snr(c, n, snr_db);
        return py::make_tuple(r.noisy, r.gain, r.normalization);
      },
      py::arg("clean"), py::arg("noise"), py::arg("target_snr_db"));
  m.def(
      "synthesize_dataset",
      [](int count, uint64_t seed, double snr_db_min, double snr_db_max,
         double segment_s, int sample_rate_hz, const std::filesystem::path& clean_dir,
         const std::filesystem::path& noise_dir, const std::filesystem::path& out_dir,
         int jobs) {
        ndns::SynthConfig cfg;
        cfg.count = count;
        cfg.seed = seed;
        cfg.snr_db_min = snr_db_min;
        cfg.snr_db_max = snr_db_max;
        cfg.segment_s = segment_s;
        cfg.sample_rate_hz = sample_rate_hz;
        return ndns::synthesize_dataset(cfg, clean_dir, noise_dir, out_dir, jobs);
      },
      py::arg("count"), py::arg("seed"), py::arg("snr_db_min") = -5.0,
      py::arg("snr_db_max") = 20.0, py::arg("segment_s") = 30.0,
      py::arg("sample_rate_hz") = 16000, py::arg("clean_dir"), py::arg("noise_dir"),
      py::arg("out_dir"), py::arg("jobs") = 1);
  m.def("load_manifest", &ndns::load_manifest, py::arg("manifest_path"));
  m.def(
      "load_triple",
      [](const std::vector<ndns::MixtureRecord>& manifest,
         const std::filesystem::path& manifest_path, size_t index) {
        ndns::Triple t = ndns::load_triple(manifest, manifest_path, index);
        return py::make_tuple(t.clean, t.noise, t.noisy, t.record);
      },
      py::arg("manifest"), py::arg("manifest_path"), py::arg("index"));
}
