// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ndns/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ndns/error.hpp"

namespace ndns {

namespace {

constexpr double kPcm16Scale = 32768.0;

uint32_t read_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint16_t read_u16le(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void put_u32le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16le(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

void check_clip(const AudioClip& clip, const char* what) {
  if (clip.sample_rate_hz <= 0)
    throw InvalidArgument(std::string(what) + ": sample rate must be positive");
  for (double s : clip.samples)
    if (!std::isfinite(s))
      throw InvalidArgument(std::string(what) + ": non-finite sample");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const size_t n = bytes.size();

  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file: " + path.string());

  bool have_fmt = false;
  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= n) {
    const char* id = reinterpret_cast<const char*>(p + pos);
    uint32_t size = read_u32le(p + pos + 4);
    pos += 8;
    if (pos + size > n)
      throw FormatError("truncated WAV chunk '" + std::string(id, 4) + "': " +
                        path.string());
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("fmt chunk too small: " + path.string());
      audio_format = read_u16le(p + pos);
      channels = read_u16le(p + pos + 2);
      sample_rate = read_u32le(p + pos + 4);
      bits = read_u16le(p + pos + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = p + pos;
      data_size = size;
    }
    pos += size + (size & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw FormatError("missing fmt chunk: " + path.string());
  if (data == nullptr) throw FormatError("missing data chunk: " + path.string());
  if (audio_format != 1)
    throw UnsupportedFormatError("unsupported WAV encoding " +
                                 std::to_string(audio_format) +
                                 " (only PCM): " + path.string());
  if (channels != 1)
    throw UnsupportedFormatError("unsupported channel count " +
                                 std::to_string(channels) +
                                 " (only mono): " + path.string());
  if (bits != 16)
    throw UnsupportedFormatError("unsupported bit depth " +
                                 std::to_string(bits) +
                                 " (only 16-bit): " + path.string());
  if (sample_rate == 0) throw FormatError("zero sample rate: " + path.string());

  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(sample_rate);
  clip.samples.resize(data_size / 2);
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    int16_t v = static_cast<int16_t>(read_u16le(data + 2 * i));
    clip.samples[i] = static_cast<double>(v) / kPcm16Scale;
  }
  return clip;
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  check_clip(clip, "write_wav");

  const uint32_t data_size = static_cast<uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32le(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<uint32_t>(clip.sample_rate_hz));
  put_u32le(out, static_cast<uint32_t>(clip.sample_rate_hz) * 2);  // byte rate
  put_u16le(out, 2);   // block align
  put_u16le(out, 16);  // bits per sample
  out += "data";
  put_u32le(out, data_size);

  constexpr double kMax = 1.0 - 1.0 / kPcm16Scale;
  for (double s : clip.samples) {
    double clamped = std::clamp(s, -1.0, kMax);
    auto code = static_cast<int16_t>(std::lrint(clamped * kPcm16Scale));
    put_u16le(out, static_cast<uint16_t>(code));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace ndns
