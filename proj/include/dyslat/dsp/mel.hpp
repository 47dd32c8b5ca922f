// SPDX-License-Identifier: Apache-2.0
/**
 * @file   mel.hpp
 * @brief  HTK mel filterbank, log-mel extraction, per-word z-score and
 *         pseudo-inverse mel-to-linear mapping.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <dyslat/dsp/audio.hpp>
#include <dyslat/dsp/stft.hpp>
#include <dyslat/error.hpp>

namespace dyslat::dsp {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

struct MelFilterbank {
  Eigen::MatrixXd weights; ///< [n_mels x (fft_size/2 + 1)]
  double f_min = 0.0;
  double f_max = 0.0;
  int sample_rate = kDefaultSampleRate;
  std::size_t fft_size = 0;
  std::vector<double> centers_hz;

  std::size_t n_mels() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t bins() const { return static_cast<std::size_t>(weights.cols()); }
};

/// Triangular filters with centres equally spaced on the mel scale. A filter
/// narrower than one FFT bin is widened to reach at least one bin on each
/// side, so every row has a positive entry.
inline MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t fft_size,
                                    int sample_rate, double f_min,
                                    double f_max) {
  require(n_mels >= 1, ErrorCode::BadConfig, "n_mels must be >= 1");
  require(sample_rate > 0 && f_min >= 0.0 && f_min < f_max &&
            f_max <= sample_rate / 2.0,
          ErrorCode::BadFrequencyRange,
          "need 0 <= f_min < f_max <= sample_rate/2, got f_min=" +
            std::to_string(f_min) + " f_max=" + std::to_string(f_max));
  const std::size_t bins = fft_size / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate) / fft_size;
  const double mel_lo = hz_to_mel(f_min), mel_hi = hz_to_mel(f_max);

  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(n_mels + 1));

  MelFilterbank fb;
  fb.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_mels),
                                     static_cast<Eigen::Index>(bins));
  fb.f_min = f_min;
  fb.f_max = f_max;
  fb.sample_rate = sample_rate;
  fb.fft_size = fft_size;
  fb.centers_hz.resize(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double center = edges[m + 1];
    const double lower = std::min(edges[m], center - bin_hz);
    const double upper = std::max(edges[m + 2], center + bin_hz);
    fb.centers_hz[m] = center;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > lower && f <= center)
        w = (f - lower) / (center - lower);
      else if (f > center && f < upper)
        w = (upper - f) / (upper - center);
      fb.weights(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = w;
    }
  }
  return fb;
}

inline MelFilterbank default_filterbank(std::size_t n_mels = 128,
                                        const StftConfig &cfg = {},
                                        int sample_rate = kDefaultSampleRate) {
  return mel_filterbank(n_mels, cfg.fft_size, sample_rate, 0.0,
                        sample_rate / 2.0);
}

/// Natural-log mel magnitudes [n_mels x n_frames].
struct MelSpectrogram {
  Eigen::MatrixXd values;

  std::size_t n_mels() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t n_frames() const {
    return static_cast<std::size_t>(values.cols());
  }

  friend bool operator==(const MelSpectrogram &a, const MelSpectrogram &b) {
    return a.values.rows() == b.values.rows() &&
           a.values.cols() == b.values.cols() && a.values == b.values;
  }
};

inline constexpr double kDefaultLogFloor = 1e-5;

/// ln(max(fb * |stft|, floor)) on amplitude magnitudes.
inline MelSpectrogram melspectrogram(const AudioClip &clip,
                                     const StftConfig &cfg,
                                     const MelFilterbank &fb,
                                     double floor = kDefaultLogFloor) {
  require(floor > 0.0, ErrorCode::BadConfig, "log floor must be positive");
  require(fb.bins() == cfg.bins(), ErrorCode::ShapeMismatch,
          "filterbank bin count does not match the STFT size");
  for (double s : clip.samples)
    require(std::isfinite(s), ErrorCode::NonFiniteInput,
            "audio contains non-finite samples");
  const Eigen::MatrixXd magnitude = stft(clip, cfg).cwiseAbs();
  MelSpectrogram mel;
  mel.values = (fb.weights * magnitude).cwiseMax(floor).array().log().matrix();
  return mel;
}

/// Population z-score over all entries; a constant input maps to zeros.
inline MelSpectrogram zscore_normalize(const MelSpectrogram &mel) {
  require(mel.values.size() > 0, ErrorCode::EmptySequence,
          "z-score of an empty spectrogram");
  MelSpectrogram out;
  if (mel.values.maxCoeff() == mel.values.minCoeff()) {
    out.values = Eigen::MatrixXd::Zero(mel.values.rows(), mel.values.cols());
    return out;
  }
  const double n = static_cast<double>(mel.values.size());
  const double mean = mel.values.sum() / n;
  const double var = (mel.values.array() - mean).square().sum() / n;
  out.values = ((mel.values.array() - mean) / std::sqrt(var)).matrix();
  return out;
}

/// Moore-Penrose pseudo-inverse of the filterbank weights [bins x n_mels].
inline Eigen::MatrixXd filterbank_pseudo_inverse(const MelFilterbank &fb) {
  return fb.weights.completeOrthogonalDecomposition().pseudoInverse();
}

/// Linear magnitudes [bins x n_frames]: pinv(fb) * exp(mel), clamped at 0.
inline Eigen::MatrixXd mel_to_linear(const MelSpectrogram &mel,
                                     const Eigen::MatrixXd &pseudo_inverse) {
  require(static_cast<std::size_t>(pseudo_inverse.cols()) == mel.n_mels(),
          ErrorCode::ShapeMismatch,
          "mel has " + std::to_string(mel.n_mels()) +
            " bands but the filterbank has " +
            std::to_string(pseudo_inverse.cols()));
  return (pseudo_inverse * mel.values.array().exp().matrix()).cwiseMax(0.0);
}

inline Eigen::MatrixXd mel_to_linear(const MelSpectrogram &mel,
                                     const MelFilterbank &fb) {
  require(mel.n_mels() == fb.n_mels(), ErrorCode::ShapeMismatch,
          "mel has " + std::to_string(mel.n_mels()) +
            " bands but the filterbank has " + std::to_string(fb.n_mels()));
  return mel_to_linear(mel, filterbank_pseudo_inverse(fb));
}

} // namespace dyslat::dsp
