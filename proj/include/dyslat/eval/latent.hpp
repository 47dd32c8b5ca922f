// SPDX-License-Identifier: Apache-2.0
/**
 * @file   latent.hpp
 * @brief  Correlation between the latent space and speaker intelligibility.
 */
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include <dyslat/data/dataset.hpp>
#include <dyslat/error.hpp>
#include <dyslat/eval/stats.hpp>
#include <dyslat/model/network.hpp>

namespace dyslat::eval {

/// One word's position in the latent space.
struct LatentSample {
  std::string speaker;
  std::string word;
  double l1 = 0.0;
  double l2 = 0.0;
  int label = 0;
  std::optional<double> intelligibility;
};

struct SpeakerLatent {
  std::string speaker;
  double l1 = 0.0;
  double l2 = 0.0;
  int label = 0;
  std::optional<double> intelligibility;
  std::size_t words = 0;
};

/// Pearson of one latent dimension against intelligibility; `error` holds the
/// reason when the correlation is undefined.
struct DimensionCorrelation {
  int dimension = 1;
  std::optional<PearsonResult> result;
  std::optional<std::string> error;
};

struct CorrelationReport {
  std::vector<LatentSample> samples;
  std::vector<SpeakerLatent> speakers;
  std::vector<DimensionCorrelation> dimensions;

  /// Largest |r| over the defined dimensions.
  std::optional<DimensionCorrelation> strongest() const {
    std::optional<DimensionCorrelation> best;
    for (const auto &d : dimensions)
      if (d.result && (!best || std::abs(d.result->r) > std::abs(best->result->r)))
        best = d;
    return best;
  }
};

/// Eval-mode latent of every example.
inline std::vector<LatentSample> latent_samples(const std::vector<data::Example> &examples,
                                                const nn::ParamStore &params,
                                                const model::ModelConfig &mc) {
  std::vector<LatentSample> out;
  out.reserve(examples.size());
  for (const auto &ex : examples) {
    nn::Graph g(false);
    const auto l = model::encode_audio(g, params, ex.mel, mc, nn::Mode::eval, 0).value();
    out.push_back({ex.record.speaker_id, data::normalize_transcript(ex.record.transcript),
                   l[0], l[1], ex.record.dysarthric, ex.record.intelligibility});
  }
  return out;
}

/// Per-speaker mean latents (first-appearance order).
inline std::vector<SpeakerLatent> speaker_latents(const std::vector<LatentSample> &samples) {
  std::vector<SpeakerLatent> out;
  std::map<std::string, std::size_t> index;
  for (const auto &s : samples) {
    auto [it, fresh] = index.try_emplace(s.speaker, out.size());
    if (fresh)
      out.push_back({s.speaker, 0.0, 0.0, s.label, s.intelligibility, 0});
    auto &m = out[it->second];
    m.l1 += s.l1;
    m.l2 += s.l2;
    ++m.words;
    if (!m.intelligibility)
      m.intelligibility = s.intelligibility;
  }
  for (auto &m : out) {
    m.l1 /= static_cast<double>(m.words);
    m.l2 /= static_cast<double>(m.words);
  }
  return out;
}

/// Pearson per dimension between speaker mean latents and intelligibility,
/// over speakers that carry an intelligibility score. Undefined correlations
/// (too few speakers, constant latent) are reported per dimension.
inline CorrelationReport latent_correlation_report(std::vector<LatentSample> samples) {
  CorrelationReport report;
  report.speakers = speaker_latents(samples);
  report.samples = std::move(samples);
  std::vector<double> intel, dim1, dim2;
  for (const auto &s : report.speakers)
    if (s.intelligibility) {
      intel.push_back(*s.intelligibility);
      dim1.push_back(s.l1);
      dim2.push_back(s.l2);
    }
  for (int d = 1; d <= 2; ++d) {
    DimensionCorrelation c;
    c.dimension = d;
    try {
      c.result = pearson(d == 1 ? dim1 : dim2, intel);
    } catch (const Error &e) {
      if (e.code() != ErrorCode::DegenerateInput)
        throw;
      c.error = e.what();
    }
    report.dimensions.push_back(std::move(c));
  }
  return report;
}

inline CorrelationReport latent_correlation_report(const std::vector<data::Example> &examples,
                                                   const nn::ParamStore &params,
                                                   const model::ModelConfig &mc) {
  return latent_correlation_report(latent_samples(examples, params, mc));
}

inline nlohmann::json to_json(const CorrelationReport &r) {
  auto opt = [](const std::optional<double> &v) {
    return v ? nlohmann::json(*v) : nlohmann::json();
  };
  nlohmann::json points = nlohmann::json::array(), speakers = nlohmann::json::array(),
                 dims = nlohmann::json::array();
  for (const auto &s : r.samples)
    points.push_back({{"speaker", s.speaker},
                      {"word", s.word},
                      {"l1", s.l1},
                      {"l2", s.l2},
                      {"label", s.label},
                      {"intelligibility", opt(s.intelligibility)}});
  for (const auto &s : r.speakers)
    speakers.push_back({{"speaker", s.speaker},
                        {"l1", s.l1},
                        {"l2", s.l2},
                        {"label", s.label},
                        {"intelligibility", opt(s.intelligibility)},
                        {"words", s.words}});
  for (const auto &d : r.dimensions) {
    nlohmann::json j{{"dimension", d.dimension}};
    j["r"] = d.result ? nlohmann::json(d.result->r) : nlohmann::json();
    j["p"] = d.result ? nlohmann::json(d.result->p) : nlohmann::json();
    j["n"] = d.result ? nlohmann::json(d.result->n) : nlohmann::json();
    j["error"] = d.error ? nlohmann::json(*d.error) : nlohmann::json();
    dims.push_back(std::move(j));
  }
  return {{"points", points}, {"speakers", speakers}, {"dimensions", dims}};
}

} // namespace dyslat::eval
