// SPDX-License-Identifier: Apache-2.0
/**
 * @file   archive.hpp
 * @brief  Binary parameter archive.
 *
 * Layout (little-endian):
 *   "DYSLCKPT", u32 format version, u32 metadata length, metadata JSON,
 *   u32 entry count, then per entry: u32 name length, name, u32 rank,
 *   rank x u32 dims, float32 values in row-major order.
 */
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include <dyslat/dsp/audio.hpp>
#include <dyslat/error.hpp>
#include <dyslat/neural/params.hpp>

namespace dyslat::nn {

inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr char kArchiveMagic[] = "DYSLCKPT";

struct Archive {
  ParamStore params;
  nlohmann::json metadata;
};

inline std::vector<std::uint8_t> encode_archive(const ParamStore &params,
                                                const nlohmann::json &metadata) {
  using dsp::detail::put_u32;
  std::vector<std::uint8_t> out(kArchiveMagic, kArchiveMagic + 8);
  put_u32(out, kArchiveVersion);
  const std::string meta = metadata.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto &name : params.names()) {
    const Tensor &t = params.value(name);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape())
      put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data())
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

namespace detail {

class Reader {
public:
  explicit Reader(const std::vector<std::uint8_t> &bytes) : bytes_(bytes) {}

  const std::uint8_t *take(std::size_t n) {
    require(n <= bytes_.size() - pos_, ErrorCode::ParseError,
            "checkpoint truncated at byte " + std::to_string(pos_));
    const std::uint8_t *p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() { return dsp::detail::read_u32(take(4)); }
  std::string text(std::size_t n) {
    const auto *p = take(n);
    return std::string(reinterpret_cast<const char *>(p), n);
  }
  bool done() const { return pos_ == bytes_.size(); }

private:
  const std::vector<std::uint8_t> &bytes_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline Archive decode_archive(const std::vector<std::uint8_t> &bytes) {
  detail::Reader in(bytes);
  require(std::memcmp(in.take(8), kArchiveMagic, 8) == 0, ErrorCode::ParseError,
          "not a dyslat checkpoint (bad magic)");
  const std::uint32_t version = in.u32();
  require(version == kArchiveVersion, ErrorCode::ParseError,
          "unsupported checkpoint version " + std::to_string(version));
  Archive archive;
  const std::string meta = in.text(in.u32());
  try {
    archive.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorCode::ParseError, std::string("checkpoint metadata: ") + e.what());
  }
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = in.text(in.u32());
    const std::uint32_t rank = in.u32();
    require(rank <= 8, ErrorCode::ParseError,
            "implausible rank for parameter '" + name + "'");
    Shape shape(rank);
    for (auto &d : shape)
      d = in.u32();
    Tensor t(shape);
    for (double &v : t.data())
      v = std::bit_cast<float>(in.u32());
    archive.params.add(name, std::move(t));
  }
  require(in.done(), ErrorCode::ParseError, "trailing bytes after checkpoint");
  return archive;
}

inline void save_archive(const std::filesystem::path &path,
                         const ParamStore &params,
                         const nlohmann::json &metadata) {
  dsp::write_file(path, encode_archive(params, metadata));
}

inline Archive load_archive(const std::filesystem::path &path) {
  return decode_archive(dsp::read_file(path));
}

} // namespace dyslat::nn
