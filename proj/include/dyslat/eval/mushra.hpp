// SPDX-License-Identifier: Apache-2.0
/**
 * @file   mushra.hpp
 * @brief  MUSHRA listening-test aggregation: medians, mean ranks and pairwise
 *         Wilcoxon tests over the six sweep conditions.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include <dyslat/error.hpp>
#include <dyslat/eval/stats.hpp>

namespace dyslat::eval {

/// The recording plus five reconstructions along latent dimension 1.
enum class MushraCondition { orig, d1_m05, d1_00, d1_05, d1_10, d1_15 };

inline constexpr std::size_t kMushraConditions = 6;

inline constexpr std::array<MushraCondition, kMushraConditions> kAllConditions{
  MushraCondition::orig,  MushraCondition::d1_m05, MushraCondition::d1_00,
  MushraCondition::d1_05, MushraCondition::d1_10,  MushraCondition::d1_15};

inline constexpr std::string_view condition_name(MushraCondition c) {
  switch (c) {
  case MushraCondition::orig: return "orig";
  case MushraCondition::d1_m05: return "d1=-0.5";
  case MushraCondition::d1_00: return "d1=0.0";
  case MushraCondition::d1_05: return "d1=0.5";
  case MushraCondition::d1_10: return "d1=1.0";
  case MushraCondition::d1_15: return "d1=1.5";
  }
  return "?";
}

inline std::optional<MushraCondition> parse_condition(std::string_view name) {
  for (auto c : kAllConditions)
    if (condition_name(c) == name)
      return c;
  return std::nullopt;
}

/// Latent dimension-1 value of a reconstruction condition (none for orig).
inline std::optional<double> condition_d1(MushraCondition c) {
  static constexpr std::array<double, kMushraConditions> values{0.0, -0.5, 0.0,
                                                                0.5, 1.0,  1.5};
  if (c == MushraCondition::orig)
    return std::nullopt;
  return values[static_cast<std::size_t>(c)];
}

struct MushraItem {
  std::string word;
  MushraCondition condition = MushraCondition::orig;
  std::string listener;
  double score = 0.0; ///< 0..100

  friend bool operator==(const MushraItem &, const MushraItem &) = default;
};

struct ConditionSummary {
  MushraCondition condition = MushraCondition::orig;
  double median = 0.0;
  double mean_rank = 0.0; ///< 1 = lowest score in its group, 6 = highest
  std::size_t n = 0;
};

struct MushraSummary {
  std::vector<ConditionSummary> conditions; ///< in kAllConditions order
  std::vector<MushraCondition> median_order; ///< best median first
  std::size_t groups = 0;
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// (word, listener) -> score per condition; every group must be complete.
inline std::map<std::pair<std::string, std::string>, std::array<double, kMushraConditions>>
mushra_groups(const std::vector<MushraItem> &items) {
  std::map<std::pair<std::string, std::string>,
           std::array<std::optional<double>, kMushraConditions>>
    partial;
  for (const auto &it : items) {
    require(std::isfinite(it.score) && it.score >= 0.0 && it.score <= 100.0,
            ErrorCode::BadConfig,
            "MUSHRA score must lie in [0, 100], got " + std::to_string(it.score));
    auto &slot = partial[{it.word, it.listener}][static_cast<std::size_t>(it.condition)];
    require(!slot.has_value(), ErrorCode::IncompleteMushraSet,
            "word '" + it.word + "', listener '" + it.listener + "' rates " +
              std::string(condition_name(it.condition)) + " twice");
    slot = it.score;
  }
  std::map<std::pair<std::string, std::string>, std::array<double, kMushraConditions>> out;
  for (const auto &[key, scores] : partial) {
    std::array<double, kMushraConditions> full{};
    for (std::size_t c = 0; c < kMushraConditions; ++c) {
      require(scores[c].has_value(), ErrorCode::IncompleteMushraSet,
              "word '" + key.first + "', listener '" + key.second + "' is missing " +
                std::string(condition_name(kAllConditions[c])));
      full[c] = *scores[c];
    }
    out.emplace(key, full);
  }
  return out;
}

inline std::array<double, kMushraConditions>
group_ranks(const std::array<double, kMushraConditions> &scores) {
  const auto r = average_ranks(std::vector<double>(scores.begin(), scores.end()));
  std::array<double, kMushraConditions> out{};
  std::copy(r.begin(), r.end(), out.begin());
  return out;
}

} // namespace detail

inline MushraSummary mushra_aggregate(const std::vector<MushraItem> &items) {
  require(!items.empty(), ErrorCode::IncompleteMushraSet, "no MUSHRA ratings");
  const auto groups = detail::mushra_groups(items);
  std::array<std::vector<double>, kMushraConditions> scores;
  std::array<double, kMushraConditions> rank_sum{};
  for (const auto &[key, s] : groups) {
    const auto ranks = detail::group_ranks(s);
    for (std::size_t c = 0; c < kMushraConditions; ++c) {
      scores[c].push_back(s[c]);
      rank_sum[c] += ranks[c];
    }
  }
  MushraSummary out;
  out.groups = groups.size();
  for (std::size_t c = 0; c < kMushraConditions; ++c)
    out.conditions.push_back({kAllConditions[c], detail::median(scores[c]),
                              rank_sum[c] / static_cast<double>(groups.size()),
                              scores[c].size()});
  std::vector<ConditionSummary> sorted = out.conditions;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto &a, const auto &b) { return a.median > b.median; });
  for (const auto &s : sorted)
    out.median_order.push_back(s.condition);
  return out;
}

struct MushraPair {
  MushraCondition a = MushraCondition::orig;
  MushraCondition b = MushraCondition::orig;
  std::optional<WilcoxonResult> test;
  std::optional<std::string> error;
};

/// Two-sided Wilcoxon signed-rank on the per-group ranks of every condition pair.
inline std::vector<MushraPair> mushra_pairwise(const std::vector<MushraItem> &items) {
  const auto groups = detail::mushra_groups(items);
  std::array<std::vector<double>, kMushraConditions> ranks;
  for (const auto &[key, s] : groups) {
    const auto r = detail::group_ranks(s);
    for (std::size_t c = 0; c < kMushraConditions; ++c)
      ranks[c].push_back(r[c]);
  }
  std::vector<MushraPair> out;
  for (std::size_t i = 0; i < kMushraConditions; ++i)
    for (std::size_t j = i + 1; j < kMushraConditions; ++j) {
      MushraPair p{kAllConditions[i], kAllConditions[j], std::nullopt, std::nullopt};
      try {
        p.test = wilcoxon_signed_rank(ranks[i], ranks[j]);
      } catch (const Error &e) {
        if (e.code() != ErrorCode::DegenerateInput)
          throw;
        p.error = e.what();
      }
      out.push_back(std::move(p));
    }
  return out;
}

inline nlohmann::json to_json(const MushraSummary &s) {
  nlohmann::json conds = nlohmann::json::array(), order = nlohmann::json::array();
  for (const auto &c : s.conditions)
    conds.push_back({{"condition", condition_name(c.condition)},
                     {"median", c.median},
                     {"mean_rank", c.mean_rank},
                     {"n", c.n}});
  for (auto c : s.median_order)
    order.push_back(condition_name(c));
  return {{"conditions", conds}, {"median_order", order}, {"groups", s.groups}};
}

// ---------------------------------------------------------------------------
// TSV: word, condition, listener, score

inline constexpr const char *kMushraHeader = "word\tcondition\tlistener\tscore";

inline std::vector<MushraItem> parse_mushra(std::istream &in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError,
          "MUSHRA line 1: missing header");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  require(line == kMushraHeader, ErrorCode::ParseError,
          "MUSHRA line 1: header must be '" + std::string(kMushraHeader) + "'");
  std::vector<MushraItem> out;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      f.push_back(line.substr(start, tab - start));
    f.push_back(line.substr(start));
    const std::string where = "MUSHRA line " + std::to_string(n) + ": ";
    require(f.size() == 4, ErrorCode::ParseError, where + "expected 4 fields");
    const auto cond = parse_condition(f[1]);
    require(cond.has_value(), ErrorCode::ParseError,
            where + "field 'condition' is not one of orig, d1=-0.5, d1=0.0, d1=0.5, "
                    "d1=1.0, d1=1.5");
    double score = 0.0;
    try {
      std::size_t used = 0;
      score = std::stod(f[3], &used);
      if (used != f[3].size())
        score = NAN;
    } catch (const std::exception &) {
      score = NAN;
    }
    require(std::isfinite(score) && score >= 0.0 && score <= 100.0, ErrorCode::ParseError,
            where + "field 'score' must be a number in [0, 100]");
    out.push_back({f[0], *cond, f[2], score});
  }
  return out;
}

inline std::string format_mushra(const std::vector<MushraItem> &items) {
  std::ostringstream out;
  out.precision(17);
  out << kMushraHeader << '\n';
  for (const auto &it : items)
    out << it.word << '\t' << condition_name(it.condition) << '\t' << it.listener << '\t'
        << it.score << '\n';
  return out.str();
}

inline std::vector<MushraItem> load_mushra(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), ErrorCode::IoError, "cannot open MUSHRA ratings " + path.string());
  return parse_mushra(in);
}

} // namespace dyslat::eval
