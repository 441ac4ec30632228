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

#ifndef FUSIONNET_FEATURES_HPP_
#define FUSIONNET_FEATURES_HPP_

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusionnet/audio.hpp"

namespace fusionnet {

enum class FeatureKind : std::uint8_t { kMel = 0, kLogMel = 1, kMfcc = 2, kCqt = 3 };

inline constexpr FeatureKind kAllFeatureKinds[] = {FeatureKind::kMel, FeatureKind::kLogMel, FeatureKind::kMfcc,
                                                   FeatureKind::kCqt};

std::string_view to_string(FeatureKind kind);
// Accepts "Mel", "LogMel", "Mfcc", "Cqt" case-insensitively; throws UsageError otherwise.
FeatureKind parse_feature_kind(std::string_view name);

namespace feature_params {
inline constexpr std::size_t kWindow = 1024;
inline constexpr std::size_t kHop = 512;
inline constexpr std::size_t kMelBands = 40;
inline constexpr double kLogFloor = 1e-10;
inline constexpr std::size_t kMfccCoefficients = 13;
inline constexpr std::size_t kMfccBins = 3 * kMfccCoefficients;
inline constexpr int kDeltaWidth = 2;
inline constexpr int kCqtBinsPerOctave = 80;
inline constexpr double kCqtMinFrequency = 32.7;
inline constexpr std::size_t kCqtHop = 512;
}  // namespace feature_params

// Time x bin matrix, row-major: data[frame * n_bins + bin].
struct FeatureMap {
  FeatureKind kind = FeatureKind::kMel;
  std::size_t n_frames = 0;
  std::size_t n_bins = 0;
  std::vector<double> data;
  std::size_t frame_hop = feature_params::kHop;
  std::size_t window_size = feature_params::kWindow;

  double at(std::size_t frame, std::size_t bin) const { return data[frame * n_bins + bin]; }
  double& at(std::size_t frame, std::size_t bin) { return data[frame * n_bins + bin]; }
  std::span<const double> frame(std::size_t f) const { return {data.data() + f * n_bins, n_bins}; }

  // Throws DataError when shape, finiteness, or per-kind bin counts are violated.
  void validate() const;
};

struct SegmentSet {
  std::vector<FeatureMap> segments;
  std::size_t segment_length = 0;
  std::size_t hop = 0;
  std::string parent_id;
};

struct Spectrogram {
  std::size_t n_frames = 0;
  std::size_t n_bins = 0;
  std::vector<std::complex<double>> data;

  std::complex<double> at(std::size_t frame, std::size_t bin) const { return data[frame * n_bins + bin]; }
};

// Hann-windowed (periodic) short-time Fourier transform, unnormalised DFT.
Spectrogram stft(const AudioClip& clip, std::size_t window_size, std::size_t hop);

// HTK-scale triangular filters spanning 0 Hz .. Nyquist, [n_filters x (n_fft/2+1)].
std::vector<double> mel_filterbank(std::size_t n_filters, std::size_t n_fft, int sample_rate);
// Centre frequency (Hz) of filter m in the bank above.
double mel_center_frequency(std::size_t m, std::size_t n_filters, int sample_rate);
double hz_to_mel(double hz);
double mel_to_hz(double mel);

FeatureMap mel_features(const AudioClip& clip);
FeatureMap log_mel_features(const AudioClip& clip);
FeatureMap log_mel_from_mel(const FeatureMap& mel);
FeatureMap mfcc_features(const AudioClip& clip);
FeatureMap cqt_features(const AudioClip& clip);
FeatureMap extract_features(const AudioClip& clip, FeatureKind kind);

// Orthonormal DCT-II basis, [n_out x n_in] row-major.
std::vector<double> dct_matrix(std::size_t n_out, std::size_t n_in);
// Regression deltas over +-width frames with edge replication.
// `values` is [n_frames x n_cols] row-major.
std::vector<double> deltas(std::span<const double> values, std::size_t n_frames, std::size_t n_cols, int width);

std::vector<double> cqt_frequencies(int sample_rate);
// Kernel length (samples) of the constant-Q filter at `frequency`.
std::size_t cqt_kernel_length(double frequency, int sample_rate);

SegmentSet segment(const FeatureMap& fm, std::size_t length = 1024, std::size_t hop = 512,
                   std::string parent_id = {});

// Per-bin zero-mean / unit-variance scaling fitted on training maps only.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> stddev);

  static Standardizer fit(std::span<const FeatureMap* const> maps);

  FeatureMap apply(const FeatureMap& fm) const;
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

// "CAF1" flat binary: magic, kind u8, n_frames u32 LE, n_bins u32 LE, row-major float64 LE.
std::vector<std::uint8_t> encode_feature_map(const FeatureMap& fm);
FeatureMap decode_feature_map(std::span<const std::uint8_t> bytes);
void write_feature_map(const std::filesystem::path& path, const FeatureMap& fm);
FeatureMap read_feature_map(const std::filesystem::path& path);

}  // namespace fusionnet

#endif  // FUSIONNET_FEATURES_HPP_
