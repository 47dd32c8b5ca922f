// SPDX-License-Identifier: Apache-2.0
/**
 * @file   loss.hpp
 * @brief  Joint detection / reconstruction objective.
 *
 *   L = alpha * CE(y, d) + (1 - alpha) * mean((Y_pred - Y_true)^2)
 *
 * with CE = -[y ln d + (1 - y) ln(1 - d)] and d clamped to [1e-7, 1 - 1e-7].
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include <dyslat/dsp/mel.hpp>
#include <dyslat/error.hpp>
#include <dyslat/neural/graph.hpp>
#include <dyslat/neural/ops.hpp>

namespace dyslat::train {

inline void check_alpha(double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::BadConfig,
          "alpha must lie in [0, 1]");
}

inline double cross_entropy(double d, int y) {
  require(y == 0 || y == 1, ErrorCode::BadConfig, "label must be 0 or 1");
  require(std::isfinite(d), ErrorCode::NonFiniteInput, "probability is not finite");
  d = std::clamp(d, nn::kProbabilityClamp, 1.0 - nn::kProbabilityClamp);
  return -(y * std::log(d) + (1 - y) * std::log(1.0 - d));
}

inline double reconstruction_error(const dsp::MelSpectrogram &pred,
                                   const dsp::MelSpectrogram &truth) {
  require(pred.values.rows() == truth.values.rows() &&
            pred.values.cols() == truth.values.cols(),
          ErrorCode::ShapeMismatch, "reconstruction shape mismatch");
  require(truth.values.size() > 0, ErrorCode::EmptySequence,
          "empty spectrogram");
  return (pred.values - truth.values).squaredNorm() /
         static_cast<double>(truth.values.size());
}

inline double joint_loss(double d, int y, const dsp::MelSpectrogram &pred,
                         const dsp::MelSpectrogram &truth, double alpha) {
  check_alpha(alpha);
  return alpha * cross_entropy(d, y) +
         (1.0 - alpha) * reconstruction_error(pred, truth);
}

struct LossVars {
  nn::Var total;
  double cross_entropy = 0.0; ///< 0 when the term is absent
  double reconstruction = 0.0;
};

/// Graph form. The cross-entropy term is built only when alpha > 0, so the
/// label is not needed otherwise. The reconstruction error is reported
/// whenever a prediction is supplied and enters the total only when alpha < 1.
inline LossVars joint_loss(nn::Var probs, std::optional<int> label, nn::Var mel_pred,
                           const nn::Tensor &mel_true, double alpha) {
  check_alpha(alpha);
  nn::Graph &g = probs.graph();
  LossVars out;
  nn::Var total = g.constant(nn::Tensor::scalar(0.0));
  if (alpha > 0.0) {
    require(label.has_value(), ErrorCode::BadConfig,
            "cross-entropy term needs a label");
    nn::Var ce = nn::binary_cross_entropy(probs, *label);
    out.cross_entropy = ce.value()[0];
    total = nn::add(total, nn::scale(ce, alpha));
  }
  require(alpha == 1.0 || mel_pred.valid(), ErrorCode::BadConfig,
          "reconstruction term needs a decoder output");
  if (mel_pred.valid()) {
    nn::Var l2 = nn::mean_squared_error(mel_pred, mel_true);
    out.reconstruction = l2.value()[0];
    if (alpha < 1.0)
      total = nn::add(total, nn::scale(l2, 1.0 - alpha));
  }
  out.total = total;
  return out;
}

} // namespace dyslat::train
