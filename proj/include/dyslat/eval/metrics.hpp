// SPDX-License-Identifier: Apache-2.0
/**
 * @file   metrics.hpp
 * @brief  Leave-one-speaker-out folds and word / speaker level detection metrics.
 */
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <dyslat/error.hpp>
#include <dyslat/eval/stats.hpp>

namespace dyslat::eval {

// ---------------------------------------------------------------------------
// Folds

struct LosoFold {
  std::string held_out_speaker;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

/// One fold per distinct speaker, in order of first appearance.
/// `speaker_of(item)` returns the item's speaker id.
template <class Item, class SpeakerOf>
std::vector<LosoFold> loso_folds(const std::vector<Item> &items, SpeakerOf speaker_of) {
  std::vector<std::string> speakers;
  for (const auto &item : items) {
    const std::string s = speaker_of(item);
    if (std::find(speakers.begin(), speakers.end(), s) == speakers.end())
      speakers.push_back(s);
  }
  require(speakers.size() >= 2, ErrorCode::InsufficientSpeakers,
          "leave-one-speaker-out needs at least 2 speakers, got " +
            std::to_string(speakers.size()));
  std::vector<LosoFold> folds;
  for (const auto &s : speakers) {
    LosoFold f;
    f.held_out_speaker = s;
    for (std::size_t i = 0; i < items.size(); ++i)
      (speaker_of(items[i]) == s ? f.test_indices : f.train_indices).push_back(i);
    folds.push_back(std::move(f));
  }
  return folds;
}

template <class Item>
std::vector<Item> select(const std::vector<Item> &items,
                         const std::vector<std::size_t> &indices) {
  std::vector<Item> out;
  out.reserve(indices.size());
  for (auto i : indices)
    out.push_back(items.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

/// One scored word: the predicted dysarthria probability and its true label.
struct Prediction {
  std::string word;
  std::string speaker;
  double p = 0.0;
  int y = 0;

  friend bool operator==(const Prediction &, const Prediction &) = default;
};

enum class MetricLevel { word, speaker };

NLOHMANN_JSON_SERIALIZE_ENUM(MetricLevel, {{MetricLevel::word, "word"},
                                           {MetricLevel::speaker, "speaker"}})

/// Precision and recall are absent (JSON null) when undefined: no predicted
/// positives or no actual positives respectively.
struct MetricsReport {
  MetricLevel level = MetricLevel::word;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  Interval ci95;
};

inline nlohmann::json to_json(const MetricsReport &m) {
  auto opt = [](const std::optional<double> &v) {
    return v ? nlohmann::json(*v) : nlohmann::json();
  };
  return {{"level", m.level},         {"n", m.n},
          {"correct", m.correct},     {"accuracy", m.accuracy},
          {"precision", opt(m.precision)}, {"recall", opt(m.recall)},
          {"ci95", {m.ci95.lo, m.ci95.hi}}};
}

/// p >= threshold counts as dysarthric.
inline int classify(double p, double threshold = 0.5) { return p >= threshold ? 1 : 0; }

namespace detail {

inline MetricsReport binary_metrics(const std::vector<std::pair<double, int>> &scored,
                                    double threshold, MetricLevel level) {
  require(!scored.empty(), ErrorCode::EmptySequence, "no predictions to score");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto &[p, y] : scored) {
    require(y == 0 || y == 1, ErrorCode::BadConfig, "labels must be 0 or 1");
    require(std::isfinite(p), ErrorCode::NonFiniteInput, "probability is not finite");
    const int yhat = classify(p, threshold);
    if (yhat && y)
      ++tp;
    else if (yhat)
      ++fp;
    else if (y)
      ++fn;
    else
      ++tn;
  }
  MetricsReport m;
  m.level = level;
  m.n = scored.size();
  m.correct = tp + tn;
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.n);
  if (tp + fp > 0)
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0)
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.ci95 = wilson_interval(m.correct, m.n);
  return m;
}

} // namespace detail

inline MetricsReport word_level_metrics(const std::vector<Prediction> &predictions,
                                        double threshold = 0.5) {
  std::vector<std::pair<double, int>> scored;
  for (const auto &p : predictions)
    scored.emplace_back(p.p, p.y);
  return detail::binary_metrics(scored, threshold, MetricLevel::word);
}

struct SpeakerScore {
  std::string speaker;
  double mean_p = 0.0;
  int y = 0;
  std::size_t words = 0;
};

/// Unweighted mean probability per speaker, in order of first appearance.
inline std::vector<SpeakerScore> speaker_scores(const std::vector<Prediction> &predictions) {
  std::vector<SpeakerScore> out;
  std::map<std::string, std::size_t> index;
  for (const auto &p : predictions) {
    auto [it, fresh] = index.try_emplace(p.speaker, out.size());
    if (fresh)
      out.push_back({p.speaker, 0.0, p.y, 0});
    auto &s = out[it->second];
    require(s.y == p.y, ErrorCode::BadConfig,
            "speaker '" + p.speaker + "' has words with both labels");
    s.mean_p += p.p;
    ++s.words;
  }
  for (auto &s : out)
    s.mean_p /= static_cast<double>(s.words);
  return out;
}

inline MetricsReport speaker_level_metrics(const std::vector<Prediction> &predictions,
                                           double threshold = 0.5) {
  std::vector<std::pair<double, int>> scored;
  for (const auto &s : speaker_scores(predictions))
    scored.emplace_back(s.mean_p, s.y);
  return detail::binary_metrics(scored, threshold, MetricLevel::speaker);
}

// ---------------------------------------------------------------------------
// Predictions TSV: word, speaker, p, y

inline constexpr const char *kPredictionsHeader = "word\tspeaker\tp\ty";

inline std::string format_predictions(const std::vector<Prediction> &predictions) {
  std::ostringstream out;
  out.precision(17);
  out << kPredictionsHeader << '\n';
  for (const auto &p : predictions)
    out << p.word << '\t' << p.speaker << '\t' << p.p << '\t' << p.y << '\n';
  return out.str();
}

inline std::vector<Prediction> parse_predictions(std::istream &in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError,
          "predictions line 1: missing header");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  require(line == kPredictionsHeader, ErrorCode::ParseError,
          "predictions line 1: header must be '" + std::string(kPredictionsHeader) + "'");
  std::vector<Prediction> out;
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
    const std::string where = "predictions line " + std::to_string(n) + ": ";
    require(f.size() == 4, ErrorCode::ParseError, where + "expected 4 fields");
    Prediction p{f[0], f[1], 0.0, 0};
    try {
      std::size_t used = 0;
      p.p = std::stod(f[2], &used);
      require(used == f[2].size(), ErrorCode::ParseError, "");
    } catch (const std::exception &) {
      throw Error(ErrorCode::ParseError, where + "field 'p' is not a number");
    }
    require(p.p >= 0.0 && p.p <= 1.0, ErrorCode::ParseError,
            where + "field 'p' must lie in [0, 1]");
    require(f[3] == "0" || f[3] == "1", ErrorCode::ParseError,
            where + "field 'y' must be 0 or 1");
    p.y = f[3] == "1";
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<Prediction> load_predictions(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), ErrorCode::IoError, "cannot open predictions " + path.string());
  return parse_predictions(in);
}

inline void write_predictions(const std::filesystem::path &path,
                              const std::vector<Prediction> &predictions) {
  std::ofstream out(path, std::ios::binary);
  require(out.is_open(), ErrorCode::IoError, "cannot write predictions " + path.string());
  out << format_predictions(predictions);
}

} // namespace dyslat::eval
