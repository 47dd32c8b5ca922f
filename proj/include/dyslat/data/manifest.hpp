// SPDX-License-Identifier: Apache-2.0
/**
 * @file   manifest.hpp
 * @brief  Corpus manifest: UTF-8 TSV with the header
 *         audio_path, transcript, speaker_id, dysarthric, intelligibility,
 *         repetition (tab separated; intelligibility may be empty).
 */
#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <dyslat/error.hpp>

namespace dyslat::data {

struct UtteranceRecord {
  std::string audio_path;
  std::string transcript;
  std::string speaker_id;
  int dysarthric = 0;
  std::optional<double> intelligibility;
  int repetition = 1;

  friend bool operator==(const UtteranceRecord &, const UtteranceRecord &) = default;
};

inline constexpr const char *kManifestHeader =
  "audio_path\ttranscript\tspeaker_id\tdysarthric\tintelligibility\trepetition";

namespace detail {

inline std::vector<std::string> split_tabs(const std::string &line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos)
      return out;
    start = tab + 1;
  }
}

inline std::string field_error(std::size_t line, const std::string &field,
                               const std::string &what) {
  return "manifest line " + std::to_string(line) + ": field '" + field + "' " + what;
}

} // namespace detail

inline std::vector<UtteranceRecord> parse_manifest(std::istream &in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError,
          "manifest line 1: missing header");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  if (line.starts_with("\xEF\xBB\xBF"))
    line.erase(0, 3);
  require(line == kManifestHeader, ErrorCode::ParseError,
          "manifest line 1: header must be '" + std::string(kManifestHeader) + "'");

  std::vector<UtteranceRecord> records;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    const auto f = detail::split_tabs(line);
    require(f.size() == 6, ErrorCode::ParseError,
            "manifest line " + std::to_string(n) + ": expected 6 fields, got " +
              std::to_string(f.size()));
    UtteranceRecord r;
    r.audio_path = f[0];
    r.transcript = f[1];
    r.speaker_id = f[2];
    require(!r.audio_path.empty(), ErrorCode::ParseError,
            detail::field_error(n, "audio_path", "is empty"));
    require(!r.transcript.empty(), ErrorCode::ParseError,
            detail::field_error(n, "transcript", "is empty"));
    require(!r.speaker_id.empty(), ErrorCode::ParseError,
            detail::field_error(n, "speaker_id", "is empty"));
    require(f[3] == "0" || f[3] == "1", ErrorCode::ParseError,
            detail::field_error(n, "dysarthric", "must be 0 or 1, got '" + f[3] + "'"));
    r.dysarthric = f[3] == "1";
    if (!f[4].empty()) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), v);
      require(ec == std::errc{} && ptr == f[4].data() + f[4].size() &&
                std::isfinite(v) && v >= 0.0 && v <= 100.0,
              ErrorCode::ParseError,
              detail::field_error(n, "intelligibility",
                                  "must be a number in [0, 100], got '" + f[4] + "'"));
      r.intelligibility = v;
    }
    int rep = 0;
    const auto [ptr, ec] = std::from_chars(f[5].data(), f[5].data() + f[5].size(), rep);
    require(ec == std::errc{} && ptr == f[5].data() + f[5].size() && rep >= 1,
            ErrorCode::ParseError,
            detail::field_error(n, "repetition",
                                "must be a positive integer, got '" + f[5] + "'"));
    r.repetition = rep;
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<UtteranceRecord> load_manifest(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), ErrorCode::IoError,
          "cannot open manifest " + path.string());
  return parse_manifest(in);
}

inline std::string format_manifest(const std::vector<UtteranceRecord> &records) {
  std::ostringstream out;
  out << kManifestHeader << '\n';
  for (const auto &r : records) {
    out << r.audio_path << '\t' << r.transcript << '\t' << r.speaker_id << '\t'
        << r.dysarthric << '\t';
    if (r.intelligibility) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, *r.intelligibility);
      out << std::string(buf, res.ptr);
    }
    out << '\t' << r.repetition << '\n';
  }
  return out.str();
}

inline void write_manifest(const std::filesystem::path &path,
                           const std::vector<UtteranceRecord> &records) {
  std::ofstream out(path, std::ios::binary);
  require(out.is_open(), ErrorCode::IoError, "cannot write manifest " + path.string());
  out << format_manifest(records);
  require(out.good(), ErrorCode::IoError, "failed writing manifest " + path.string());
}

/// Distinct speaker ids split by label.
struct SpeakerCounts {
  std::size_t dysarthric = 0;
  std::size_t control = 0;
  std::size_t total() const { return dysarthric + control; }
};

/// Counts speakers per class; a speaker listed under both labels is rejected.
inline SpeakerCounts count_speakers(const std::vector<UtteranceRecord> &records) {
  std::set<std::string> dys, ctl;
  for (const auto &r : records)
    (r.dysarthric ? dys : ctl).insert(r.speaker_id);
  for (const auto &s : dys)
    require(!ctl.contains(s), ErrorCode::ParseError,
            "speaker '" + s + "' appears with both labels");
  return {dys.size(), ctl.size()};
}

} // namespace dyslat::data
