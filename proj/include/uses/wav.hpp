// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Minimal RIFF/WAVE reader and writer: PCM16 and IEEE float32, interleaved
// multi-channel, little-endian. The header's sample-rate field is
// authoritative. Writes are atomic (temp file + rename).

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "uses/audio.hpp"
#include "uses/error.hpp"

namespace uses {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

enum class WavFormat { pcm16, float32 };

namespace detail {

template <typename T>
T read_le(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("WAV: truncated file while reading " + what);
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace detail

inline AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path);

  char riff[4];
  in.read(riff, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0)
    throw IoError("WAV: missing RIFF header in " + path);
  detail::read_le<uint32_t>(in, "riff size");
  char wave[4];
  in.read(wave, 4);
  if (!in || std::memcmp(wave, "WAVE", 4) != 0)
    throw IoError("WAV: not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<char> payload;

  while (true) {
    char id[4];
    in.read(id, 4);
    if (!in) break;
    const uint32_t size = detail::read_le<uint32_t>(in, "chunk size");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw IoError("WAV: fmt chunk too small in " + path);
      format = detail::read_le<uint16_t>(in, "format");
      channels = detail::read_le<uint16_t>(in, "channels");
      rate = detail::read_le<uint32_t>(in, "rate");
      detail::read_le<uint32_t>(in, "byte rate");
      detail::read_le<uint16_t>(in, "block align");
      bits = detail::read_le<uint16_t>(in, "bits");
      uint32_t remaining = size - 16;
      if (format == 0xFFFE && remaining >= 24) {
        // WAVE_FORMAT_EXTENSIBLE: the real format code leads the sub-GUID.
        detail::read_le<uint16_t>(in, "cb size");
        detail::read_le<uint16_t>(in, "valid bits");
        detail::read_le<uint32_t>(in, "channel mask");
        format = detail::read_le<uint16_t>(in, "subformat");
        in.seekg(remaining - 10, std::ios::cur);
      } else {
        in.seekg(remaining, std::ios::cur);
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      payload.resize(size);
      in.read(payload.data(), size);
      if (!in) throw IoError("WAV: truncated data chunk in " + path);
    } else {
      in.seekg(size, std::ios::cur);
    }
    if (size % 2 == 1) in.seekg(1, std::ios::cur);  // chunk padding
    if (have_fmt && !payload.empty()) break;
  }

  if (!have_fmt) throw IoError("WAV: no fmt chunk in " + path);
  if (payload.empty()) throw IoError("WAV: no data chunk in " + path);
  if (channels == 0) throw IoError("WAV: zero channels in " + path);

  const bool pcm16 = (format == 1 && bits == 16);
  const bool f32 = (format == 3 && bits == 32);
  if (!pcm16 && !f32)
    throw IoError("WAV: unsupported encoding (format " + std::to_string(format) + ", " +
                  std::to_string(bits) + " bits) in " + path +
                  "; only PCM16 and IEEE float32 are supported");

  const size_t bytes_per = pcm16 ? 2 : 4;
  const size_t total = payload.size() / (bytes_per * channels);
  AudioBuffer audio(static_cast<int>(rate), channels, static_cast<int64_t>(total));
  const char* p = payload.data();
  for (size_t i = 0; i < total; ++i) {
    for (uint16_t c = 0; c < channels; ++c) {
      double v;
      if (pcm16) {
        int16_t s;
        std::memcpy(&s, p, 2);
        v = static_cast<double>(s) / 32768.0;
      } else {
        float f;
        std::memcpy(&f, p, 4);
        v = static_cast<double>(f);
      }
      audio.samples[c][i] = v;
      p += bytes_per;
    }
  }
  return audio;
}

inline void write_wav(const std::string& path, const AudioBuffer& audio,
                      WavFormat fmt = WavFormat::float32) {
  audio.validate();
  const uint16_t channels = static_cast<uint16_t>(audio.num_channels());
  const uint32_t rate = static_cast<uint32_t>(audio.sample_rate);
  const uint16_t bits = fmt == WavFormat::pcm16 ? 16 : 32;
  const uint16_t block = static_cast<uint16_t>(channels * bits / 8);
  const uint32_t data_size =
      static_cast<uint32_t>(audio.num_samples() * static_cast<int64_t>(block));

  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create WAV file: " + tmp.string());
    out.write("RIFF", 4);
    detail::write_le<uint32_t>(out, 36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    detail::write_le<uint32_t>(out, 16);
    detail::write_le<uint16_t>(out, fmt == WavFormat::pcm16 ? 1 : 3);
    detail::write_le<uint16_t>(out, channels);
    detail::write_le<uint32_t>(out, rate);
    detail::write_le<uint32_t>(out, rate * block);
    detail::write_le<uint16_t>(out, block);
    detail::write_le<uint16_t>(out, bits);
    out.write("data", 4);
    detail::write_le<uint32_t>(out, data_size);
    for (int64_t i = 0; i < audio.num_samples(); ++i) {
      for (uint16_t c = 0; c < channels; ++c) {
        const double v = audio.samples[c][static_cast<size_t>(i)];
        if (fmt == WavFormat::pcm16) {
          double scaled = std::nearbyint(v * 32767.0);
          scaled = std::min(32767.0, std::max(-32768.0, scaled));
          detail::write_le<int16_t>(out, static_cast<int16_t>(scaled));
        } else {
          detail::write_le<float>(out, static_cast<float>(v));
        }
      }
    }
    if (!out) throw IoError("failed writing WAV data to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw IoError("failed to move " + tmp.string() + " to " + path + ": " + ec.message());
}

}  // namespace uses
