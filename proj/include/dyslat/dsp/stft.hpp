// SPDX-License-Identifier: Apache-2.0
/**
 * @file   stft.hpp
 * @brief  Short-time Fourier transform and its least-squares inverse.
 */
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <dyslat/dsp/audio.hpp>
#include <dyslat/error.hpp>

namespace dyslat::dsp {

enum class Window { hann };

/// Defaults: 50 ms frames, 12.5 ms shift at 16 kHz, 1024-point FFT.
struct StftConfig {
  std::size_t frame_length = 800;
  std::size_t frame_shift = 200;
  std::size_t fft_size = 1024;
  Window window = Window::hann;

  std::size_t bins() const { return fft_size / 2 + 1; }

  void validate() const {
    const bool pow2 = fft_size >= 2 && (fft_size & (fft_size - 1)) == 0;
    require(frame_shift >= 1 && frame_shift <= frame_length &&
              frame_length <= fft_size && pow2,
            ErrorCode::BadConfig,
            "invalid STFT config: need 1 <= frame_shift <= frame_length <= "
            "fft_size with fft_size a power of two");
  }

  /// 1 + floor((len - frame_length) / frame_shift), or 0 if len < frame_length.
  std::size_t frame_count(std::size_t samples) const {
    if (samples < frame_length)
      return 0;
    return 1 + (samples - frame_length) / frame_shift;
  }

  std::size_t signal_length(std::size_t frames) const {
    return frames == 0 ? 0 : frame_length + (frames - 1) * frame_shift;
  }
};

/// Periodic Hann window of the configured frame length.
inline Eigen::VectorXd analysis_window(const StftConfig &cfg) {
  const auto n = static_cast<Eigen::Index>(cfg.frame_length);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  return w;
}

using ComplexMatrix = Eigen::MatrixXcd;

/// Column t holds the one-sided DFT of the Hann-windowed frame starting at
/// sample t * frame_shift, zero-padded to fft_size.
inline ComplexMatrix stft(std::span<const double> samples,
                          const StftConfig &cfg) {
  cfg.validate();
  require(samples.size() >= cfg.frame_length, ErrorCode::InputTooShort,
          "clip of " + std::to_string(samples.size()) +
            " samples is shorter than one frame (" +
            std::to_string(cfg.frame_length) + ")");
  const std::size_t frames = cfg.frame_count(samples.size());
  const Eigen::VectorXd window = analysis_window(cfg);
  ComplexMatrix out(static_cast<Eigen::Index>(cfg.bins()),
                    static_cast<Eigen::Index>(frames));
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(cfg.fft_size, 0.0);
  std::vector<std::complex<double>> spectrum;
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * cfg.frame_shift;
    for (std::size_t i = 0; i < cfg.frame_length; ++i)
      frame[i] = samples[start + i] * window[static_cast<Eigen::Index>(i)];
    fft.fwd(spectrum, frame);
    for (std::size_t k = 0; k < cfg.bins(); ++k)
      out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) =
        spectrum[k];
  }
  return out;
}

inline ComplexMatrix stft(const AudioClip &clip, const StftConfig &cfg) {
  return stft(std::span<const double>(clip.samples), cfg);
}

/// Least-squares inverse STFT: the signal whose STFT is closest (in the
/// Frobenius sense over the full spectrum) to `spec`.
inline std::vector<double> istft(const ComplexMatrix &spec,
                                 const StftConfig &cfg) {
  cfg.validate();
  require(spec.rows() == static_cast<Eigen::Index>(cfg.bins()),
          ErrorCode::ShapeMismatch, "istft: spectrum has wrong bin count");
  const auto frames = static_cast<std::size_t>(spec.cols());
  const std::size_t length = cfg.signal_length(frames);
  const Eigen::VectorXd window = analysis_window(cfg);
  std::vector<double> num(length, 0.0), den(length, 0.0);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> half(cfg.bins());
  std::vector<double> frame;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < cfg.bins(); ++k)
      half[k] = spec(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t));
    // DC and Nyquist of a real signal carry no imaginary part
    half.front().imag(0.0);
    half.back().imag(0.0);
    fft.inv(frame, half, static_cast<Eigen::Index>(cfg.fft_size));
    const std::size_t start = t * cfg.frame_shift;
    for (std::size_t i = 0; i < cfg.frame_length; ++i) {
      const double w = window[static_cast<Eigen::Index>(i)];
      num[start + i] += w * frame[i];
      den[start + i] += w * w;
    }
  }
  for (std::size_t i = 0; i < length; ++i)
    num[i] = den[i] > 1e-20 ? num[i] / den[i] : 0.0;
  return num;
}

} // namespace dyslat::dsp
