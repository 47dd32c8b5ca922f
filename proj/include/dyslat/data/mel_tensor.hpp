// SPDX-License-Identifier: Apache-2.0
/**
 * @file   mel_tensor.hpp
 * @brief  Conversions between MelSpectrogram and [n_mels x n_f] tensors.
 */
#pragma once

#include <dyslat/dsp/mel.hpp>
#include <dyslat/neural/tensor.hpp>

namespace dyslat::data {

inline nn::Tensor mel_to_tensor(const dsp::MelSpectrogram &mel) {
  nn::Tensor t(nn::Shape{mel.n_mels(), mel.n_frames()});
  for (std::size_t m = 0; m < mel.n_mels(); ++m)
    for (std::size_t f = 0; f < mel.n_frames(); ++f)
      t.at(m, f) = mel.values(static_cast<Eigen::Index>(m),
                              static_cast<Eigen::Index>(f));
  return t;
}

inline dsp::MelSpectrogram tensor_to_mel(const nn::Tensor &t) {
  dsp::MelSpectrogram mel;
  mel.values.resize(static_cast<Eigen::Index>(t.dim(0)),
                    static_cast<Eigen::Index>(t.dim(1)));
  for (std::size_t m = 0; m < t.dim(0); ++m)
    for (std::size_t f = 0; f < t.dim(1); ++f)
      mel.values(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(f)) =
        t.at(m, f);
  return mel;
}

} // namespace dyslat::data
