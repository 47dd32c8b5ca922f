// SPDX-License-Identifier: Apache-2.0
/**
 * @file   griffin_lim.hpp
 * @brief  Griffin-Lim phase reconstruction from STFT magnitudes.
 */
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include <dyslat/dsp/audio.hpp>
#include <dyslat/dsp/stft.hpp>
#include <dyslat/error.hpp>
#include <dyslat/rng.hpp>

namespace dyslat::dsp {

/// ||  |S x| - target  || over the full two-sided spectrum of each frame,
/// i.e. interior bins of the one-sided matrices count twice. This is the
/// quantity the least-squares iteration provably never increases.
inline double spectral_distance(const ComplexMatrix &spec,
                                const Eigen::MatrixXd &target) {
  const Eigen::MatrixXd diff = spec.cwiseAbs() - target;
  const Eigen::Index last = diff.rows() - 1;
  double total = 2.0 * diff.squaredNorm();
  total -= diff.row(0).squaredNorm();
  total -= diff.row(last).squaredNorm();
  return std::sqrt(total);
}

struct GriffinLimResult {
  AudioClip clip;
  /// distance after the initial random-phase inversion and after each
  /// iteration (iterations + 1 entries)
  std::vector<double> distances;
};

/// Classical Griffin-Lim: start from seeded uniform phases in [-pi, pi), then
/// alternate least-squares inversion and magnitude projection.
inline GriffinLimResult griffin_lim(const Eigen::MatrixXd &magnitude,
                                    const StftConfig &cfg,
                                    std::size_t iterations, std::uint64_t seed,
                                    int sample_rate = kDefaultSampleRate) {
  cfg.validate();
  require(iterations >= 1, ErrorCode::BadConfig,
          "griffin_lim needs at least one iteration");
  require(magnitude.rows() == static_cast<Eigen::Index>(cfg.bins()) &&
            magnitude.cols() >= 1,
          ErrorCode::ShapeMismatch,
          "magnitude must have fft_size/2+1 rows and at least one frame");
  require(magnitude.allFinite(), ErrorCode::NonFiniteInput,
          "magnitude contains non-finite values");
  require(magnitude.minCoeff() >= 0.0, ErrorCode::BadMagnitude,
          "magnitudes must be non-negative");

  Rng rng(seed);
  ComplexMatrix estimate(magnitude.rows(), magnitude.cols());
  for (Eigen::Index t = 0; t < magnitude.cols(); ++t)
    for (Eigen::Index k = 0; k < magnitude.rows(); ++k)
      estimate(k, t) = std::polar(magnitude(k, t),
                                  rng.uniform(-std::numbers::pi, std::numbers::pi));

  GriffinLimResult result;
  result.clip.sample_rate = sample_rate;
  result.clip.samples = istft(estimate, cfg);
  ComplexMatrix spec = stft(result.clip.samples, cfg);
  result.distances.push_back(spectral_distance(spec, magnitude));
  for (std::size_t it = 0; it < iterations; ++it) {
    for (Eigen::Index t = 0; t < spec.cols(); ++t)
      for (Eigen::Index k = 0; k < spec.rows(); ++k) {
        const double a = std::abs(spec(k, t));
        estimate(k, t) = a > 0.0 ? spec(k, t) * (magnitude(k, t) / a)
                                 : std::complex<double>(magnitude(k, t), 0.0);
      }
    result.clip.samples = istft(estimate, cfg);
    spec = stft(result.clip.samples, cfg);
    result.distances.push_back(spectral_distance(spec, magnitude));
  }
  return result;
}

} // namespace dyslat::dsp
