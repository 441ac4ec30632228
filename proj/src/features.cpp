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

#include "fusionnet/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numbers>

#include "fusionnet/error.hpp"

namespace fusionnet {

namespace fp = feature_params;

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kMel:
      return "Mel";
    case FeatureKind::kLogMel:
      return "LogMel";
    case FeatureKind::kMfcc:
      return "Mfcc";
    case FeatureKind::kCqt:
      return "Cqt";
  }
  return "?";
}

FeatureKind parse_feature_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (FeatureKind k : kAllFeatureKinds) {
    std::string cand(to_string(k));
    std::transform(cand.begin(), cand.end(), cand.begin(), [](unsigned char c) { return std::tolower(c); });
    if (cand == lower) return k;
  }
  throw UsageError("unknown feature kind '" + std::string(name) + "' (expected Mel, LogMel, Mfcc or Cqt)");
}

void FeatureMap::validate() const {
  if (n_frames == 0 || n_bins == 0) throw DataError("feature map must have at least one frame and one bin");
  if (data.size() != n_frames * n_bins) throw DataError("feature map data size does not match its shape");
  if ((kind == FeatureKind::kMel || kind == FeatureKind::kLogMel) && n_bins != fp::kMelBands) {
    throw DataError(std::string(to_string(kind)) + " map must have 40 bins, got " + std::to_string(n_bins));
  }
  if (kind == FeatureKind::kMfcc && n_bins != fp::kMfccBins) {
    throw DataError("Mfcc map must have 39 bins, got " + std::to_string(n_bins));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw DataError("feature map contains a non-finite entry");
  }
}

namespace {

// FFTW's planner is not re-entrant; execution on distinct arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Spectrogram stft(const AudioClip& clip, std::size_t window_size, std::size_t hop) {
  if (window_size < 2) throw UsageError("STFT window must be at least 2 samples");
  if (hop < 1) throw UsageError("STFT hop must be >= 1");
  if (clip.size() < window_size) {
    throw DataError("clip too short: " + std::to_string(clip.size()) + " samples for a " +
                    std::to_string(window_size) + "-sample window");
  }
  Spectrogram out;
  out.n_frames = (clip.size() - window_size) / hop + 1;
  out.n_bins = window_size / 2 + 1;
  out.data.resize(out.n_frames * out.n_bins);

  std::vector<double> window(window_size);
  for (std::size_t n = 0; n < window_size; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / window_size);
  }

  double* in = fftw_alloc_real(window_size);
  fftw_complex* spec = fftw_alloc_complex(out.n_bins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(window_size), in, spec, FFTW_ESTIMATE);
  }
  const auto samples = clip.samples();
  for (std::size_t f = 0; f < out.n_frames; ++f) {
    const std::size_t start = f * hop;
    for (std::size_t n = 0; n < window_size; ++n) in[n] = samples[start + n] * window[n];
    fftw_execute(plan);
    for (std::size_t k = 0; k < out.n_bins; ++k) out.data[f * out.n_bins + k] = {spec[k][0], spec[k][1]};
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(spec);
  fftw_free(in);
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double mel_center_frequency(std::size_t m, std::size_t n_filters, int sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  return mel_to_hz(top * static_cast<double>(m + 1) / static_cast<double>(n_filters + 1));
}

std::vector<double> mel_filterbank(std::size_t n_filters, std::size_t n_fft, int sample_rate) {
  const std::size_t n_bins = n_fft / 2 + 1;
  std::vector<double> edges(n_filters + 2);
  const double top = hz_to_mel(sample_rate / 2.0);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_filters + 1));
  }
  std::vector<double> bank(n_filters * n_bins, 0.0);
  for (std::size_t m = 0; m < n_filters; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      bank[m * n_bins + k] = w;
    }
  }
  return bank;
}

FeatureMap mel_features(const AudioClip& clip) {
  const Spectrogram spec = stft(clip, fp::kWindow, fp::kHop);
  const auto bank = mel_filterbank(fp::kMelBands, fp::kWindow, clip.sample_rate());
  FeatureMap fm;
  fm.kind = FeatureKind::kMel;
  fm.n_frames = spec.n_frames;
  fm.n_bins = fp::kMelBands;
  fm.data.assign(fm.n_frames * fm.n_bins, 0.0);
  std::vector<double> power(spec.n_bins);
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    for (std::size_t k = 0; k < spec.n_bins; ++k) power[k] = std::norm(spec.at(f, k));
    for (std::size_t m = 0; m < fp::kMelBands; ++m) {
      const double* w = bank.data() + m * spec.n_bins;
      double acc = 0.0;
      for (std::size_t k = 0; k < spec.n_bins; ++k) acc += w[k] * power[k];
      fm.at(f, m) = acc;
    }
  }
  return fm;
}

FeatureMap log_mel_from_mel(const FeatureMap& mel) {
  FeatureMap out = mel;
  out.kind = FeatureKind::kLogMel;
  for (double& v : out.data) v = std::log(v + fp::kLogFloor);
  return out;
}

FeatureMap log_mel_features(const AudioClip& clip) { return log_mel_from_mel(mel_features(clip)); }

std::vector<double> dct_matrix(std::size_t n_out, std::size_t n_in) {
  std::vector<double> basis(n_out * n_in);
  const double n = static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n_in; ++i) {
      basis[k * n_in + i] = scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * i + 1.0) / (2.0 * n));
    }
  }
  return basis;
}

std::vector<double> deltas(std::span<const double> values, std::size_t n_frames, std::size_t n_cols, int width) {
  double denom = 0.0;
  for (int n = 1; n <= width; ++n) denom += n * n;
  denom *= 2.0;
  std::vector<double> out(n_frames * n_cols, 0.0);
  const auto last = static_cast<long>(n_frames) - 1;
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      double acc = 0.0;
      for (int n = 1; n <= width; ++n) {
        const long ahead = std::min<long>(static_cast<long>(t) + n, last);
        const long behind = std::max<long>(static_cast<long>(t) - n, 0);
        acc += n * (values[ahead * n_cols + c] - values[behind * n_cols + c]);
      }
      out[t * n_cols + c] = acc / denom;
    }
  }
  return out;
}

FeatureMap mfcc_features(const AudioClip& clip) {
  const FeatureMap log_mel = log_mel_features(clip);
  const std::size_t nc = fp::kMfccCoefficients;
  const auto basis = dct_matrix(nc, fp::kMelBands);
  std::vector<double> statics(log_mel.n_frames * nc);
  for (std::size_t f = 0; f < log_mel.n_frames; ++f) {
    const auto row = log_mel.frame(f);
    for (std::size_t k = 0; k < nc; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < fp::kMelBands; ++i) acc += basis[k * fp::kMelBands + i] * row[i];
      statics[f * nc + k] = acc;
    }
  }
  const auto d1 = deltas(statics, log_mel.n_frames, nc, fp::kDeltaWidth);
  const auto d2 = deltas(d1, log_mel.n_frames, nc, fp::kDeltaWidth);

  FeatureMap fm;
  fm.kind = FeatureKind::kMfcc;
  fm.n_frames = log_mel.n_frames;
  fm.n_bins = fp::kMfccBins;
  fm.data.resize(fm.n_frames * fm.n_bins);
  for (std::size_t f = 0; f < fm.n_frames; ++f) {
    for (std::size_t k = 0; k < nc; ++k) {
      fm.at(f, k) = statics[f * nc + k];
      fm.at(f, nc + k) = d1[f * nc + k];
      fm.at(f, 2 * nc + k) = d2[f * nc + k];
    }
  }
  return fm;
}

namespace {

double cqt_q_factor() { return 1.0 / (std::exp2(1.0 / fp::kCqtBinsPerOctave) - 1.0); }

}  // namespace

std::vector<double> cqt_frequencies(int sample_rate) {
  std::vector<double> freqs;
  const double nyquist = sample_rate / 2.0;
  for (int b = 0;; ++b) {
    const double f = fp::kCqtMinFrequency * std::exp2(static_cast<double>(b) / fp::kCqtBinsPerOctave);
    if (f >= nyquist) break;
    freqs.push_back(f);
  }
  return freqs;
}

std::size_t cqt_kernel_length(double frequency, int sample_rate) {
  return static_cast<std::size_t>(std::ceil(cqt_q_factor() * sample_rate / frequency));
}

FeatureMap cqt_features(const AudioClip& clip) {
  const auto freqs = cqt_frequencies(clip.sample_rate());
  if (freqs.empty()) throw DataError("sample rate too low for a constant-Q transform from 32.7 Hz");
  const std::size_t longest = cqt_kernel_length(freqs.front(), clip.sample_rate());
  if (clip.size() < longest) {
    throw DataError("clip too short for the constant-Q transform: " + std::to_string(clip.size()) +
                    " samples, lowest kernel needs " + std::to_string(longest));
  }
  FeatureMap fm;
  fm.kind = FeatureKind::kCqt;
  // Same frame grid as the STFT features so that channels stay frame-aligned.
  fm.n_frames = (clip.size() - fp::kWindow) / fp::kCqtHop + 1;
  fm.n_bins = freqs.size();
  fm.frame_hop = fp::kCqtHop;
  fm.window_size = longest;
  fm.data.assign(fm.n_frames * fm.n_bins, 0.0);

  const auto x = clip.samples();
  // Kernels are centred on the STFT frame centre; samples outside the clip count as zero.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t b = 0; b < freqs.size(); ++b) {
    const std::size_t len = cqt_kernel_length(freqs[b], clip.sample_rate());
    std::vector<double> re(len), im(len);
    double norm = 0.0;
    for (std::size_t n = 0; n < len; ++n) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / len);
      const double phase = -2.0 * std::numbers::pi * freqs[b] *
                           (static_cast<double>(n) - static_cast<double>(len) / 2.0) / clip.sample_rate();
      re[n] = w * std::cos(phase);
      im[n] = w * std::sin(phase);
      norm += w;
    }
    const auto size = static_cast<long>(x.size());
    for (std::size_t f = 0; f < fm.n_frames; ++f) {
      const long start = static_cast<long>(f * fp::kCqtHop + fp::kWindow / 2) - static_cast<long>(len / 2);
      const long lo = std::max(0L, -start);
      const long hi = std::min(static_cast<long>(len), size - start);
      double acc_re = 0.0, acc_im = 0.0;
      for (long n = lo; n < hi; ++n) {
        acc_re += x[start + n] * re[n];
        acc_im += x[start + n] * im[n];
      }
      fm.data[f * fm.n_bins + b] = std::hypot(acc_re, acc_im) / norm;
    }
  }
  return fm;
}

FeatureMap extract_features(const AudioClip& clip, FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kMel:
      return mel_features(clip);
    case FeatureKind::kLogMel:
      return log_mel_features(clip);
    case FeatureKind::kMfcc:
      return mfcc_features(clip);
    case FeatureKind::kCqt:
      return cqt_features(clip);
  }
  throw UsageError("unhandled feature kind");
}

SegmentSet segment(const FeatureMap& fm, std::size_t length, std::size_t hop, std::string parent_id) {
  if (length < 1 || hop < 1) throw UsageError("segment length and hop must be >= 1");
  SegmentSet set;
  set.segment_length = length;
  set.hop = hop;
  set.parent_id = std::move(parent_id);
  auto cut = [&](std::size_t start) {
    FeatureMap s;
    s.kind = fm.kind;
    s.n_frames = length;
    s.n_bins = fm.n_bins;
    s.frame_hop = fm.frame_hop;
    s.window_size = fm.window_size;
    s.data.assign(length * fm.n_bins, 0.0);
    const std::size_t avail = std::min(length, fm.n_frames - start);
    std::copy_n(fm.data.begin() + static_cast<std::ptrdiff_t>(start * fm.n_bins), avail * fm.n_bins, s.data.begin());
    set.segments.push_back(std::move(s));
  };
  if (fm.n_frames < length) {
    cut(0);
    return set;
  }
  const std::size_t count = (fm.n_frames - length) / hop + 1;
  for (std::size_t k = 0; k < count; ++k) cut(k * hop);
  return set;
}

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  if (mean_.size() != stddev_.size()) throw DataError("standardizer mean/stddev length mismatch");
}

Standardizer Standardizer::fit(std::span<const FeatureMap* const> maps) {
  if (maps.empty()) throw DataError("cannot fit a standardizer on zero feature maps");
  const std::size_t bins = maps.front()->n_bins;
  std::vector<double> sum(bins, 0.0), sq(bins, 0.0);
  double count = 0.0;
  for (const FeatureMap* fm : maps) {
    if (fm->n_bins != bins) throw DataError("standardizer inputs disagree on bin count");
    for (std::size_t f = 0; f < fm->n_frames; ++f) {
      for (std::size_t b = 0; b < bins; ++b) sum[b] += fm->at(f, b);
    }
    count += static_cast<double>(fm->n_frames);
  }
  for (std::size_t b = 0; b < bins; ++b) sum[b] /= count;
  for (const FeatureMap* fm : maps) {
    for (std::size_t f = 0; f < fm->n_frames; ++f) {
      for (std::size_t b = 0; b < bins; ++b) {
        const double d = fm->at(f, b) - sum[b];
        sq[b] += d * d;
      }
    }
  }
  for (std::size_t b = 0; b < bins; ++b) {
    const double sd = std::sqrt(sq[b] / count);
    sq[b] = sd > 1e-8 ? sd : 1.0;
  }
  return Standardizer(std::move(sum), std::move(sq));
}

FeatureMap Standardizer::apply(const FeatureMap& fm) const {
  if (fm.n_bins != mean_.size()) {
    throw DataError("standardizer fitted on " + std::to_string(mean_.size()) + " bins, map has " +
                    std::to_string(fm.n_bins));
  }
  FeatureMap out = fm;
  for (std::size_t f = 0; f < out.n_frames; ++f) {
    for (std::size_t b = 0; b < out.n_bins; ++b) out.at(f, b) = (out.at(f, b) - mean_[b]) / stddev_[b];
  }
  return out;
}

namespace {

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint32_t load_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

constexpr std::size_t kHeaderBytes = 4 + 1 + 4 + 4;

}  // namespace

std::vector<std::uint8_t> encode_feature_map(const FeatureMap& fm) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 8 * fm.data.size());
  for (char c : {'C', 'A', 'F', '1'}) out.push_back(static_cast<std::uint8_t>(c));
  out.push_back(static_cast<std::uint8_t>(fm.kind));
  append_u32(out, static_cast<std::uint32_t>(fm.n_frames));
  append_u32(out, static_cast<std::uint32_t>(fm.n_bins));
  for (double v : fm.data) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
  }
  return out;
}

FeatureMap decode_feature_map(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), "CAF1", 4) != 0) {
    throw DataError("not a CAF1 feature file");
  }
  if (bytes[4] > static_cast<std::uint8_t>(FeatureKind::kCqt)) {
    throw DataError("CAF1 file has unknown feature kind " + std::to_string(bytes[4]));
  }
  FeatureMap fm;
  fm.kind = static_cast<FeatureKind>(bytes[4]);
  fm.n_frames = load_u32(bytes, 5);
  fm.n_bins = load_u32(bytes, 9);
  if (bytes.size() != kHeaderBytes + 8 * fm.n_frames * fm.n_bins) throw DataError("CAF1 payload size mismatch");
  fm.data.resize(fm.n_frames * fm.n_bins);
  for (std::size_t i = 0; i < fm.data.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[kHeaderBytes + 8 * i + b]) << (8 * b);
    fm.data[i] = std::bit_cast<double>(bits);
  }
  if (fm.kind == FeatureKind::kCqt) fm.frame_hop = fp::kCqtHop;
  return fm;
}

void write_feature_map(const std::filesystem::path& path, const FeatureMap& fm) {
  const auto bytes = encode_feature_map(fm);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

FeatureMap read_feature_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_feature_map(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace fusionnet
