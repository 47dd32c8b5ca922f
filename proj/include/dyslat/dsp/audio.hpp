// SPDX-License-Identifier: Apache-2.0
/**
 * @file   audio.hpp
 * @brief  AudioClip and RIFF/WAVE (PCM 16-bit mono) reading and writing.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <dyslat/error.hpp>

namespace dyslat::dsp {

inline constexpr int kDefaultSampleRate = 16000;

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

namespace detail {

inline std::uint32_t read_u32(const std::uint8_t *p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const std::uint8_t *p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u16(std::vector<std::uint8_t> &out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_tag(std::vector<std::uint8_t> &out, const char *tag) {
  out.insert(out.end(), tag, tag + 4);
}

} // namespace detail

/// Decodes a RIFF/WAVE byte buffer. Only PCM 16-bit mono at the expected
/// sample rate is accepted.
inline AudioClip parse_wav(const std::vector<std::uint8_t> &bytes,
                           int expected_rate = kDefaultSampleRate) {
  using detail::read_u16;
  using detail::read_u32;
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
            std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          ErrorCode::ParseError, "not a RIFF/WAVE stream");
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t *chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    require(body + size <= bytes.size(), ErrorCode::ParseError,
            "truncated WAVE chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(size >= 16, ErrorCode::ParseError, "short fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      require(have_fmt, ErrorCode::ParseError, "data chunk before fmt chunk");
      require(format == 1, ErrorCode::ParseError,
              "unsupported WAVE format " + std::to_string(format) +
                " (PCM required)");
      require(channels == 1, ErrorCode::ParseError,
              "expected mono audio, got " + std::to_string(channels) +
                " channels");
      require(bits == 16, ErrorCode::ParseError,
              "expected 16-bit samples, got " + std::to_string(bits));
      require(static_cast<int>(rate) == expected_rate, ErrorCode::ParseError,
              "expected " + std::to_string(expected_rate) + " Hz, got " +
                std::to_string(rate) + " Hz (resampling is not supported)");
      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto raw =
          static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        clip.samples[i] = raw / 32768.0;
      }
      return clip;
    }
    pos = body + size + (size & 1);
  }
  fail(ErrorCode::ParseError, "WAVE stream has no data chunk");
}

inline std::vector<std::uint8_t> encode_wav(const AudioClip &clip) {
  using namespace detail;
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(
      std::lround(std::clamp(clipped * 32768.0, -32768.0, 32767.0)));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError,
          "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path &path,
                       const std::vector<std::uint8_t> &bytes) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoError,
          "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline AudioClip read_wav(const std::filesystem::path &path,
                          int expected_rate = kDefaultSampleRate) {
  try {
    return parse_wav(read_file(path), expected_rate);
  } catch (const Error &e) {
    if (e.code() == ErrorCode::ParseError)
      fail(ErrorCode::ParseError, path.string() + ": " + e.what());
    throw;
  }
}

inline void write_wav(const std::filesystem::path &path, const AudioClip &clip) {
  write_file(path, encode_wav(clip));
}

/// Scales the clip so its peak magnitude equals `peak` (no-op on silence).
inline AudioClip peak_normalized(AudioClip clip, double peak = 0.9) {
  double mx = 0.0;
  for (double s : clip.samples)
    mx = std::max(mx, std::abs(s));
  if (mx > 0.0)
    for (double &s : clip.samples)
      s *= peak / mx;
  return clip;
}

} // namespace dyslat::dsp
