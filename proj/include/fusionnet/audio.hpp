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

#ifndef FUSIONNET_AUDIO_HPP_
#define FUSIONNET_AUDIO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fusionnet {

// Mono PCM clip. Construct through make() so the invariants hold:
// non-empty, finite samples, positive sample rate.
class AudioClip {
 public:
  static AudioClip make(std::vector<double> samples, int sample_rate);

  std::span<const double> samples() const { return samples_; }
  int sample_rate() const { return sample_rate_; }
  std::size_t size() const { return samples_.size(); }

 private:
  AudioClip(std::vector<double> samples, int sample_rate)
      : samples_(std::move(samples)), sample_rate_(sample_rate) {}

  std::vector<double> samples_;
  int sample_rate_;
};

// 16-bit PCM RIFF/WAVE. Multi-channel input is downmixed by averaging.
AudioClip read_wav(const std::filesystem::path& path);
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// Integer-factor decimation behind a windowed-sinc low-pass at the new Nyquist.
AudioClip decimate(const AudioClip& clip, int factor);

}  // namespace fusionnet

#endif  // FUSIONNET_AUDIO_HPP_
