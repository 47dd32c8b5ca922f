// SPDX-License-Identifier: Apache-2.0
/**
 * @file   config.hpp
 * @brief  Network widths and their JSON form.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <json.hpp>

#include <dyslat/error.hpp>
#include <dyslat/rng.hpp>

namespace dyslat::model {

/// Minimum frame count that survives two VALID 5x5 convolutions and two 2x2
/// pools with room for a short recurrent sequence.
inline constexpr std::size_t kMinFrames = 28;

/// How init_magnitude scales the Xavier bound. `mxnet` reads it as the
/// variance magnitude m of b = sqrt(m / fan_avg); `scaled` multiplies the
/// Glorot bound sqrt(6 / (fan_in + fan_out)) by it.
enum class InitConvention { mxnet, scaled };

NLOHMANN_JSON_SERIALIZE_ENUM(InitConvention, {{InitConvention::mxnet, "mxnet"},
                                              {InitConvention::scaled, "scaled"}})

struct ModelConfig {
  std::size_t n_mels = 128;
  std::size_t latent_dim = 2;
  std::size_t text_channels = 40;
  std::size_t text_gru = 27;
  std::size_t audio_channels = 20;
  std::size_t audio_gru = 20;
  std::size_t audio_dense = 20;
  std::size_t bottleneck = 96;
  std::size_t query_gru = 29;
  std::size_t decoder_gru = 128;
  std::size_t reduction = 2;
  std::size_t alphabet_size = 27;
  std::size_t kernel = 5;
  double dropout = 0.5;
  double init_magnitude = 2.24;
  InitConvention init_convention = InitConvention::mxnet;
  double teacher_forcing = 1.0;

  /// n_mels = 16 and every width divided by four (query stays text + 2).
  static ModelConfig reduced() {
    ModelConfig c;
    c.n_mels = 16;
    c.text_channels = 10;
    c.text_gru = 7;
    c.audio_channels = 5;
    c.audio_gru = 5;
    c.audio_dense = 5;
    c.bottleneck = 24;
    c.query_gru = 9;
    c.decoder_gru = 32;
    return c;
  }

  /// Factor handed to nn::xavier_init so the bound follows init_convention.
  double xavier_gain() const {
    return init_convention == InitConvention::mxnet ? std::sqrt(init_magnitude / 3.0)
                                                    : init_magnitude;
  }

  /// Mel rows left after the two conv + pool stages.
  std::size_t encoded_mels() const {
    return ((n_mels - (kernel - 1)) / 2 - (kernel - 1)) / 2;
  }

  void validate() const {
    require(latent_dim == 2, ErrorCode::BadConfig, "latent_dim must be 2");
    require(query_gru == text_gru + latent_dim, ErrorCode::BadConfig,
            "query_gru must equal text_gru + latent_dim (" +
              std::to_string(text_gru + latent_dim) + ")");
    require(kernel % 2 == 1, ErrorCode::BadConfig,
            "kernel size must be odd");
    require(n_mels >= 3 * kernel - 1, ErrorCode::BadConfig,
            "n_mels too small for the audio encoder");
    require(text_channels && text_gru && audio_channels && audio_gru &&
              audio_dense && bottleneck && decoder_gru && reduction &&
              alphabet_size,
            ErrorCode::BadConfig, "all widths must be positive");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::BadProbability,
            "dropout must lie in [0, 1)");
    require(init_magnitude > 0.0, ErrorCode::BadConfig,
            "init magnitude must be positive");
    require(teacher_forcing >= 0.0 && teacher_forcing <= 1.0,
            ErrorCode::BadConfig, "teacher_forcing must lie in [0, 1]");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
  ModelConfig, n_mels, latent_dim, text_channels, text_gru, audio_channels,
  audio_gru, audio_dense, bottleneck, query_gru, decoder_gru, reduction,
  alphabet_size, kernel, dropout, init_magnitude, init_convention, teacher_forcing)

/// FNV-1a over the canonical (key-sorted) JSON form.
inline std::uint64_t config_hash(const ModelConfig &cfg) {
  return hash_string(nlohmann::json(cfg).dump());
}

} // namespace dyslat::model
