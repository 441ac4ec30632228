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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fusionnet/audio.hpp"
#include "fusionnet/error.hpp"

using fusionnet::AudioClip;
using fusionnet::DataError;

namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::vector<std::uint8_t> wav_bytes(std::uint16_t channels, std::uint16_t bits, const std::vector<std::int16_t>& pcm,
                                    std::uint32_t rate = 16000) {
  std::vector<std::uint8_t> b = {'R', 'I', 'F', 'F'};
  put32(b, static_cast<std::uint32_t>(36 + 2 * pcm.size()));
  for (char c : std::string("WAVEfmt ")) b.push_back(static_cast<std::uint8_t>(c));
  put32(b, 16);
  put16(b, 1);
  put16(b, channels);
  put32(b, rate);
  put32(b, rate * channels * bits / 8);
  put16(b, static_cast<std::uint16_t>(channels * bits / 8));
  put16(b, bits);
  for (char c : std::string("data")) b.push_back(static_cast<std::uint8_t>(c));
  put32(b, static_cast<std::uint32_t>(2 * pcm.size()));
  for (std::int16_t s : pcm) put16(b, static_cast<std::uint16_t>(s));
  return b;
}

}  // namespace

TEST(AudioClip, RejectsInvalidClips) {
  EXPECT_THROW(AudioClip::make({}, 16000), DataError);
  EXPECT_THROW(AudioClip::make({0.1}, 0), DataError);
  EXPECT_THROW(AudioClip::make({0.1, std::nan("")}, 16000), DataError);
  const AudioClip c = AudioClip::make({0.1, -0.2}, 8000);
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.sample_rate(), 8000);
}

TEST(Wav, DecodesMonoPcm) {
  const AudioClip c = fusionnet::decode_wav(wav_bytes(1, 16, {0, 16384, -32768, 32767}));
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c.sample_rate(), 16000);
  EXPECT_DOUBLE_EQ(c.samples()[1], 0.5);
  EXPECT_DOUBLE_EQ(c.samples()[2], -1.0);
}

TEST(Wav, DownmixesStereoByAveraging) {
  const AudioClip c = fusionnet::decode_wav(wav_bytes(2, 16, {16384, 0, -16384, -16384}));
  ASSERT_EQ(c.size(), 2u);
  EXPECT_DOUBLE_EQ(c.samples()[0], 0.25);
  EXPECT_DOUBLE_EQ(c.samples()[1], -0.5);
}

TEST(Wav, RejectsMalformedInput) {
  std::vector<std::uint8_t> junk(64, 7);
  EXPECT_THROW(fusionnet::decode_wav(junk), DataError);
  EXPECT_THROW(fusionnet::decode_wav(wav_bytes(1, 8, {1, 2})), DataError);
  auto truncated = wav_bytes(1, 16, {1, 2, 3, 4});
  truncated.resize(truncated.size() - 5);
  EXPECT_THROW(fusionnet::decode_wav(truncated), DataError);
  EXPECT_THROW(fusionnet::read_wav("/nonexistent/file.wav"), DataError);
}

TEST(Wav, RoundTripsWithinQuantisation) {
  std::vector<double> s(1000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.8 * std::sin(0.01 * static_cast<double>(i * i));
  const auto path = std::filesystem::temp_directory_path() / "fusionnet_test_roundtrip.wav";
  fusionnet::write_wav(path, AudioClip::make(s, 22050));
  const AudioClip back = fusionnet::read_wav(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), s.size());
  EXPECT_EQ(back.sample_rate(), 22050);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(back.samples()[i], s[i], 0.5 / 32768.0 + 1e-12);
}

TEST(Decimate, KeepsLowToneAndHalvesRate) {
  const int rate = 16000;
  std::vector<double> s(8000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::sin(2.0 * std::numbers::pi * 200.0 * static_cast<double>(i) / rate);
  }
  const AudioClip d = fusionnet::decimate(AudioClip::make(s, rate), 2);
  EXPECT_EQ(d.sample_rate(), rate / 2);
  EXPECT_EQ(d.size(), s.size() / 2);
  double peak = 0.0;
  for (std::size_t i = 200; i < d.size() - 200; ++i) peak = std::max(peak, std::abs(d.samples()[i]));
  EXPECT_NEAR(peak, 1.0, 0.02);
}

TEST(Decimate, RemovesToneAboveNewNyquist) {
  const int rate = 16000;
  std::vector<double> s(8000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::sin(2.0 * std::numbers::pi * 6000.0 * static_cast<double>(i) / rate);
  }
  const AudioClip d = fusionnet::decimate(AudioClip::make(s, rate), 2);
  double peak = 0.0;
  for (std::size_t i = 200; i < d.size() - 200; ++i) peak = std::max(peak, std::abs(d.samples()[i]));
  EXPECT_LT(peak, 0.05);
}
