// SPDX-License-Identifier: Apache-2.0
/**
 * @file   mels_io.hpp
 * @brief  MELS binary format: "MELS", u32 version=1, u32 n_mels, u32 n_f,
 *         then n_mels*n_f little-endian float32 values in row-major order.
 */
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <dyslat/dsp/audio.hpp>
#include <dyslat/dsp/mel.hpp>
#include <dyslat/error.hpp>

namespace dyslat::dsp {

inline constexpr std::uint32_t kMelsVersion = 1;

inline std::vector<std::uint8_t> encode_mels(const MelSpectrogram &mel) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + 4 * static_cast<std::size_t>(mel.values.size()));
  detail::put_tag(out, "MELS");
  detail::put_u32(out, kMelsVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(mel.n_mels()));
  detail::put_u32(out, static_cast<std::uint32_t>(mel.n_frames()));
  for (Eigen::Index m = 0; m < mel.values.rows(); ++m)
    for (Eigen::Index t = 0; t < mel.values.cols(); ++t)
      detail::put_u32(out, std::bit_cast<std::uint32_t>(
                             static_cast<float>(mel.values(m, t))));
  return out;
}

inline MelSpectrogram decode_mels(const std::vector<std::uint8_t> &bytes) {
  require(bytes.size() >= 16 && std::memcmp(bytes.data(), "MELS", 4) == 0,
          ErrorCode::ParseError, "missing MELS header");
  const std::uint32_t version = detail::read_u32(bytes.data() + 4);
  require(version == kMelsVersion, ErrorCode::ParseError,
          "unsupported MELS version " + std::to_string(version));
  const std::uint32_t n_mels = detail::read_u32(bytes.data() + 8);
  const std::uint32_t n_f = detail::read_u32(bytes.data() + 12);
  const std::size_t count = static_cast<std::size_t>(n_mels) * n_f;
  require(bytes.size() == 16 + 4 * count, ErrorCode::ParseError,
          "MELS payload length does not match its header");
  MelSpectrogram mel;
  mel.values.resize(n_mels, n_f);
  const std::uint8_t *p = bytes.data() + 16;
  for (std::uint32_t m = 0; m < n_mels; ++m)
    for (std::uint32_t t = 0; t < n_f; ++t, p += 4)
      mel.values(m, t) = std::bit_cast<float>(detail::read_u32(p));
  return mel;
}

} // namespace dyslat::dsp
