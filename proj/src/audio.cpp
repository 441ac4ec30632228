/* Copyright 2026 The FusionNet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "fusionnet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "fusionnet/error.hpp"

namespace fusionnet {

AudioClip AudioClip::make(std::vector<double> samples, int sample_rate) {
  if (samples.empty()) throw DataError("audio clip has no samples");
  if (sample_rate <= 0) throw DataError("sample rate must be positive, got " + std::to_string(sample_rate));
  for (double s : samples) {
    if (!std::isfinite(s)) throw DataError("audio clip contains a non-finite sample");
  }
  return AudioClip(std::move(samples), sample_rate);
}

namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw DataError("truncated WAV chunk");
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (size < 16) throw DataError("WAV fmt chunk too small");
      format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      if (!have_fmt) throw DataError("WAV data chunk before fmt chunk");
      // WAVE_FORMAT_EXTENSIBLE (0xFFFE) carries PCM too.
      if ((format != 1 && format != 0xFFFE) || bits != 16) {
        throw DataError("only 16-bit PCM WAV is supported");
      }
      if (channels == 0) throw DataError("WAV declares zero channels");
      const std::size_t frames = size / (2u * channels);
      std::vector<double> samples(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const auto raw = static_cast<std::int16_t>(read_u16(bytes, body + 2 * (f * channels + c)));
          acc += raw / 32768.0;
        }
        samples[f] = acc / channels;
      }
      return AudioClip::make(std::move(samples), static_cast<int>(rate));
    }
    pos = body + size + (size & 1u);
  }
  throw DataError("WAV file has no data chunk");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate()));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate()) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double s : clip.samples()) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

AudioClip decimate(const AudioClip& clip, int factor) {
  if (factor < 1) throw UsageError("decimation factor must be >= 1");
  if (factor == 1) return clip;
  constexpr int kHalfTaps = 32;
  const double cutoff = 0.5 / factor;  // cycles per input sample
  std::vector<double> taps(2 * kHalfTaps + 1);
  double sum = 0.0;
  for (int i = -kHalfTaps; i <= kHalfTaps; ++i) {
    const double sinc = i == 0 ? 2.0 * cutoff : std::sin(2.0 * std::numbers::pi * cutoff * i) / (std::numbers::pi * i);
    const double hann = 0.5 + 0.5 * std::cos(std::numbers::pi * i / (kHalfTaps + 1));
    taps[i + kHalfTaps] = sinc * hann;
    sum += taps[i + kHalfTaps];
  }
  for (double& t : taps) t /= sum;

  const auto in = clip.samples();
  const auto n = static_cast<long>(in.size());
  std::vector<double> out;
  out.reserve(in.size() / factor + 1);
  for (long c = 0; c < n; c += factor) {
    double acc = 0.0;
    for (int i = -kHalfTaps; i <= kHalfTaps; ++i) {
      const long idx = c + i;
      if (idx >= 0 && idx < n) acc += taps[i + kHalfTaps] * in[idx];
    }
    out.push_back(acc);
  }
  return AudioClip::make(std::move(out), clip.sample_rate() / factor);
}

}  // namespace fusionnet
