// SPDX-License-Identifier: Apache-2.0
/**
 * @file   loso.hpp
 * @brief  Leave-one-speaker-out training and evaluation, with JSON and
 *         plain-text reports.
 */
#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <dyslat/data/dataset.hpp>
#include <dyslat/eval/latent.hpp>
#include <dyslat/eval/metrics.hpp>
#include <dyslat/model/config.hpp>
#include <dyslat/train/trainer.hpp>

namespace dyslat::eval {

struct FoldResult {
  std::string held_out_speaker;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  train::TrainReport report;
};

struct LosoResult {
  std::vector<Prediction> predictions;
  std::vector<LatentSample> latents; ///< out-of-fold, one per test word
  std::vector<FoldResult> folds;
  MetricsReport word;
  MetricsReport speaker;
  double wall_clock_seconds = 0.0;
};

struct LosoHooks {
  /// Called after each fold with (fold index, total folds, result).
  std::function<void(std::size_t, std::size_t, const FoldResult &)> on_fold;
  train::TrainHooks train;
};

/// Trains one model per held-out speaker and scores the held-out words.
inline LosoResult run_loso(const std::vector<data::Example> &examples,
                           const model::ModelConfig &mc, const train::TrainConfig &tc,
                           const LosoHooks &hooks = {}) {
  const auto start = std::chrono::steady_clock::now();
  const auto folds =
    loso_folds(examples, [](const data::Example &e) { return e.record.speaker_id; });
  LosoResult out;
  for (std::size_t k = 0; k < folds.size(); ++k) {
    const auto &fold = folds[k];
    const auto train_set = select(examples, fold.train_indices);
    const auto test_set = select(examples, fold.test_indices);
    auto trained = train::train(train_set, mc, tc, hooks.train);
    const auto probs = train::predict(test_set, trained.params, mc);
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      const auto &r = test_set[i].record;
      out.predictions.push_back(
        {data::normalize_transcript(r.transcript), r.speaker_id, probs[i], r.dysarthric});
    }
    for (auto &s : latent_samples(test_set, trained.params, mc))
      out.latents.push_back(std::move(s));
    FoldResult fr{fold.held_out_speaker, train_set.size(), test_set.size(),
                  std::move(trained.report)};
    if (hooks.on_fold)
      hooks.on_fold(k, folds.size(), fr);
    out.folds.push_back(std::move(fr));
  }
  out.word = word_level_metrics(out.predictions);
  out.speaker = speaker_level_metrics(out.predictions);
  out.wall_clock_seconds =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// Reports

/// Version of the evaluation report layout; bump on incompatible changes.
inline constexpr int kReportVersion = 1;

struct EvalReport {
  std::string system = "multitask";
  MetricsReport word;
  MetricsReport speaker;
  std::vector<FoldResult> folds;
  std::optional<CorrelationReport> correlation;
  double wall_clock_seconds = 0.0;
};

inline nlohmann::json to_json(const EvalReport &r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto &f : r.folds)
    folds.push_back({{"held_out_speaker", f.held_out_speaker},
                     {"n_train", f.n_train},
                     {"n_test", f.n_test},
                     {"epochs", f.report.epochs.size()},
                     {"final_loss", f.report.epochs.empty()
                                      ? nlohmann::json()
                                      : nlohmann::json(f.report.epochs.back().loss)},
                     {"seconds", f.report.wall_clock_seconds}});
  return {{"version", kReportVersion},
          {"system", r.system},
          {"word", to_json(r.word)},
          {"speaker", to_json(r.speaker)},
          {"folds", folds},
          {"correlation", r.correlation ? to_json(*r.correlation) : nlohmann::json()},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

namespace detail {

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string cell(const std::optional<double> &v) { return v ? fixed3(*v) : "na"; }

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width)
    s.append(width - s.size(), ' ');
  return s;
}

} // namespace detail

/// Accuracy (with CI), precision and recall per system, split into word and
/// speaker sections.
inline std::string format_metrics_table(const std::vector<EvalReport> &rows) {
  std::size_t width = 6;
  for (const auto &r : rows)
    width = std::max(width, r.system.size());
  width += 2;
  std::ostringstream out;
  out << detail::pad("System", width) << detail::pad("Accuracy", 24)
      << detail::pad("Precision", 11) << "Recall\n";
  auto section = [&](const char *title, bool word) {
    out << "-- " << title << " --\n";
    for (const auto &r : rows) {
      const auto &m = word ? r.word : r.speaker;
      out << detail::pad(r.system, width)
          << detail::pad(detail::fixed3(m.accuracy) + " (" + detail::fixed3(m.ci95.lo) +
                           " - " + detail::fixed3(m.ci95.hi) + ")",
                         24)
          << detail::pad(detail::cell(m.precision), 11) << detail::cell(m.recall) << '\n';
    }
  };
  section("Word level", true);
  section("Speaker level", false);
  return out.str();
}

inline std::string format_correlation_table(const CorrelationReport &c) {
  std::ostringstream out;
  out << "Dimension  r        p\n";
  for (const auto &d : c.dimensions) {
    out << detail::pad(std::to_string(d.dimension), 11);
    if (d.result) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%-8.3f %.3g", d.result->r, d.result->p);
      out << buf << '\n';
    } else {
      out << "undefined (" << d.error.value_or("") << ")\n";
    }
  }
  return out.str();
}

} // namespace dyslat::eval
