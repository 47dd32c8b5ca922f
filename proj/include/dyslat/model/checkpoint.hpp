// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  Model checkpoints: parameter archive plus ModelConfig metadata.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include <dyslat/error.hpp>
#include <dyslat/model/config.hpp>
#include <dyslat/model/network.hpp>
#include <dyslat/neural/archive.hpp>

namespace dyslat::model {

struct Checkpoint {
  ModelConfig config;
  nn::ParamStore params;
  std::uint64_t seed = 0;
};

inline nlohmann::json checkpoint_metadata(const ModelConfig &cfg,
                                          std::uint64_t seed) {
  return {{"version", nn::kArchiveVersion},
          {"seed", seed},
          {"config_hash", config_hash(cfg)},
          {"model_config", cfg}};
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ck) {
  check_params(ck.params, ck.config);
  return nn::encode_archive(ck.params, checkpoint_metadata(ck.config, ck.seed));
}

/// Rejects archives whose stored hash disagrees with their config, or whose
/// config differs from `expected` when one is given.
inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t> &bytes,
                                    const std::optional<ModelConfig> &expected = {}) {
  nn::Archive archive = nn::decode_archive(bytes);
  const auto &meta = archive.metadata;
  Checkpoint ck;
  try {
    ck.config = meta.at("model_config").get<ModelConfig>();
    ck.seed = meta.at("seed").get<std::uint64_t>();
    const auto stored = meta.at("config_hash").get<std::uint64_t>();
    require(stored == config_hash(ck.config), ErrorCode::BadConfig,
            "checkpoint config hash does not match its stored config");
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorCode::ParseError, std::string("checkpoint metadata: ") + e.what());
  }
  ck.config.validate();
  if (expected)
    require(config_hash(*expected) == config_hash(ck.config), ErrorCode::BadConfig,
            "checkpoint was trained with a different model config");
  check_params(archive.params, ck.config);
  ck.params = std::move(archive.params);
  return ck;
}

inline void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ck) {
  dsp::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path,
                                  const std::optional<ModelConfig> &expected = {}) {
  return decode_checkpoint(dsp::read_file(path), expected);
}

} // namespace dyslat::model
