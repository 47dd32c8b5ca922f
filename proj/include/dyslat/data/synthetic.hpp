// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synthetic.hpp
 * @brief  Synthetic dysarthria-analog corpus.
 *
 * Each utterance is a harmonic series on a speaker-specific f0, shaped by
 * per-character formant targets. A speaker's severity s in [0, 1] controls
 * the dysarthric axes:
 *   - duration       D = (0.32 + 0.045 * n_chars) * (1 + s) seconds
 *   - intonation     pitch contour depth 0.3 * (1 - s)
 *   - amplitude      multiplicative jitter of depth 0.8 * s
 *   - dysfluency     each character is stuttered with probability 0.5 * s
 *   - voice quality  breath noise at relative level 0.15 * s
 * and the recorded intelligibility is 100 * (1 - s).
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include <dyslat/data/manifest.hpp>
#include <dyslat/data/text.hpp>
#include <dyslat/dsp/audio.hpp>
#include <dyslat/error.hpp>
#include <dyslat/rng.hpp>

namespace dyslat::data {

inline std::vector<std::string> default_words() {
  return {"up",    "down", "left",   "right", "yes",   "no",   "go",
          "stop",  "on",   "off",    "enter", "tab",   "shift", "alt",
          "delete", "space", "home", "end",   "back",  "next"};
}

struct SyntheticCorpusConfig {
  std::size_t n_speakers_per_class = 4;
  std::vector<std::string> words = default_words();
  /// One entry per dysarthric speaker; empty means evenly spaced in (0, 1).
  std::vector<double> severity = {0.3, 0.5, 0.7, 0.9};
  std::size_t repetitions = 1;
  std::uint64_t seed = 1;
  int sample_rate = dsp::kDefaultSampleRate;

  void validate() const {
    require(!words.empty(), ErrorCode::BadConfig, "synthetic corpus needs words");
    for (const auto &w : words)
      require(!normalize_transcript(w).empty(), ErrorCode::BadConfig,
              "synthetic word '" + w + "' is empty after normalisation");
    require(n_speakers_per_class >= 1, ErrorCode::BadConfig,
            "need at least one speaker per class");
    require(severity.empty() || severity.size() == n_speakers_per_class,
            ErrorCode::BadConfig,
            "severity list must have one entry per dysarthric speaker");
    for (double s : severity)
      require(s >= 0.0 && s <= 1.0, ErrorCode::BadConfig,
              "severity must lie in [0, 1]");
    require(repetitions >= 1, ErrorCode::BadConfig, "repetitions must be >= 1");
    require(sample_rate >= 8000, ErrorCode::BadConfig,
            "sample rate must be at least 8 kHz");
  }

  double severity_of(std::size_t dysarthric_index) const {
    if (!severity.empty())
      return severity.at(dysarthric_index);
    return static_cast<double>(dysarthric_index + 1) /
           static_cast<double>(n_speakers_per_class + 1);
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SyntheticCorpusConfig, n_speakers_per_class,
                                                words, severity, repetitions, seed, sample_rate)

struct SpeakerProfile {
  std::string id;
  int dysarthric = 0;
  double severity = 0.0;
  double f0 = 150.0;
  double formant_scale = 1.0;
};

struct SyntheticUtterance {
  dsp::AudioClip clip;
  UtteranceRecord record;
  double severity = 0.0;
};

inline double synthetic_duration(std::size_t n_chars, double severity) {
  return (0.32 + 0.045 * static_cast<double>(n_chars)) * (1.0 + severity);
}

namespace detail {

struct Formants {
  double f1, f2, f3;
};

/// Fixed, spread-out targets per letter; space is silent.
inline Formants letter_formants(char c) {
  const double i = static_cast<double>(c - 'a');
  auto frac = [](double x) { return x - std::floor(x); };
  return {300.0 + 550.0 * frac(0.618034 * i + 0.2),
          900.0 + 1500.0 * frac(0.381966 * i + 0.7), 2500.0 + 400.0 * frac(0.7 * i)};
}

inline std::string pad_id(char prefix, std::size_t n) {
  std::string digits = std::to_string(n);
  if (digits.size() < 2)
    digits.insert(0, 2 - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

inline double resonance(double f, double centre, double bandwidth) {
  const double x = (f - centre) / bandwidth;
  return 1.0 / (1.0 + x * x);
}

} // namespace detail

/// Control speakers C01.., then dysarthric D01.. with their severities.
inline std::vector<SpeakerProfile> synthetic_speakers(const SyntheticCorpusConfig &cfg) {
  std::vector<SpeakerProfile> out;
  for (int dys = 0; dys <= 1; ++dys)
    for (std::size_t i = 0; i < cfg.n_speakers_per_class; ++i) {
      SpeakerProfile p;
      p.id = detail::pad_id(dys ? 'D' : 'C', i + 1);
      p.dysarthric = dys;
      p.severity = dys ? cfg.severity_of(i) : 0.0;
      Rng rng(derive_seed(cfg.seed, {hash_string("speaker"), hash_string(p.id)}));
      p.f0 = rng.uniform(100.0, 220.0);
      p.formant_scale = rng.uniform(0.92, 1.08);
      out.push_back(p);
    }
  return out;
}

/// Renders one word for one speaker; `seed` fixes all random choices.
inline dsp::AudioClip synthesize_word(const std::string &word,
                                      const SpeakerProfile &spk, std::uint64_t seed,
                                      int sample_rate = dsp::kDefaultSampleRate) {
  const std::string text = normalize_transcript(word);
  require(!text.empty(), ErrorCode::EmptySequence, "cannot synthesise an empty word");
  const double s = spk.severity;
  const double fs = sample_rate;
  const double duration = synthetic_duration(text.size(), s);
  const auto n = static_cast<std::size_t>(std::llround(duration * fs));
  const double slot = duration / static_cast<double>(text.size());
  Rng rng(seed);

  std::vector<bool> stutter(text.size());
  for (std::size_t i = 0; i < text.size(); ++i)
    stutter[i] = text[i] != ' ' && rng.bernoulli(0.5 * s);

  // amplitude jitter knots every 25 ms
  const double knot = 0.025;
  std::vector<double> jitter(static_cast<std::size_t>(duration / knot) + 2);
  for (double &j : jitter)
    j = 1.0 + 0.8 * s * rng.uniform(-1.0, 1.0);

  const double nyquist_guard = std::min(4000.0, 0.45 * fs);
  const double contour_depth = 0.3 * (1.0 - s);
  const double breath = 0.15 * s;
  const double attack = 0.02, release = 0.04;

  std::vector<double> out(n);
  double phase = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / fs;
    const double x = t / duration;

    // formant trajectory: linear between slot centres
    const double pos = std::clamp(t / slot - 0.5, 0.0,
                                  static_cast<double>(text.size() - 1));
    const auto i0 = static_cast<std::size_t>(pos);
    const std::size_t i1 = std::min(i0 + 1, text.size() - 1);
    const double w = pos - static_cast<double>(i0);
    auto target = [&](std::size_t i) {
      return text[i] == ' ' ? detail::Formants{500, 1500, 2500}
                            : detail::letter_formants(text[i]);
    };
    const auto a = target(i0), b = target(i1);
    const double sc = spk.formant_scale;
    const double f1 = sc * ((1 - w) * a.f1 + w * b.f1);
    const double f2 = sc * ((1 - w) * a.f2 + w * b.f2);
    const double f3 = sc * ((1 - w) * a.f3 + w * b.f3);

    const double f0 =
      spk.f0 * (1.0 + contour_depth * (std::sin(std::numbers::pi * x) - 0.5));
    phase += 2.0 * std::numbers::pi * f0 / fs;

    double voiced = 0.0;
    for (int h = 1; h * f0 < nyquist_guard; ++h) {
      const double fh = h * f0;
      const double gain = detail::resonance(fh, f1, 90.0) +
                          0.7 * detail::resonance(fh, f2, 120.0) +
                          0.3 * detail::resonance(fh, f3, 160.0);
      voiced += gain * std::sin(h * phase) / std::sqrt(static_cast<double>(h));
    }

    // envelope: word edges, silent spaces, stutter gaps
    const auto ci = std::min(static_cast<std::size_t>(t / slot), text.size() - 1);
    double env = std::min({1.0, t / attack, (duration - t) / release});
    if (text[ci] == ' ')
      env = 0.0;
    if (stutter[ci]) {
      const double u = t / slot - static_cast<double>(ci);
      if (u > 0.4 && u < 0.6)
        env = 0.0;
    }
    const double jpos = t / knot;
    const auto j0 = static_cast<std::size_t>(jpos);
    const double jw = jpos - static_cast<double>(j0);
    env *= (1.0 - jw) * jitter[j0] + jw * jitter[std::min(j0 + 1, jitter.size() - 1)];

    const double noise = rng.uniform(-1.0, 1.0);
    out[k] = 0.25 * env * (voiced + breath * 4.0 * noise) + 0.002 * noise;
  }
  return dsp::peak_normalized({std::move(out), sample_rate}, 0.5);
}

/// All speakers x words x repetitions, deterministic in cfg.seed.
inline std::vector<SyntheticUtterance>
generate_synthetic_corpus(const SyntheticCorpusConfig &cfg) {
  cfg.validate();
  std::vector<SyntheticUtterance> corpus;
  for (const auto &spk : synthetic_speakers(cfg))
    for (std::size_t w = 0; w < cfg.words.size(); ++w)
      for (std::size_t rep = 1; rep <= cfg.repetitions; ++rep) {
        const std::uint64_t seed = derive_seed(
          cfg.seed, {hash_string(spk.id), hash_string(cfg.words[w]), rep});
        SyntheticUtterance u;
        u.clip = synthesize_word(cfg.words[w], spk, seed, cfg.sample_rate);
        u.severity = spk.severity;
        u.record.audio_path =
          spk.id + "/" + normalize_transcript(cfg.words[w]) + "_" + std::to_string(rep) +
          ".wav";
        u.record.transcript = cfg.words[w];
        u.record.speaker_id = spk.id;
        u.record.dysarthric = spk.dysarthric;
        u.record.intelligibility = 100.0 * (1.0 - spk.severity);
        u.record.repetition = static_cast<int>(rep);
        corpus.push_back(std::move(u));
      }
  return corpus;
}

/// Writes 16-bit WAVs under `dir` plus dir/manifest.tsv; returns the manifest path.
inline std::filesystem::path write_synthetic_corpus(
  const std::filesystem::path &dir, const std::vector<SyntheticUtterance> &corpus) {
  std::vector<UtteranceRecord> records;
  for (const auto &u : corpus) {
    const auto path = dir / u.record.audio_path;
    std::filesystem::create_directories(path.parent_path());
    dsp::write_wav(path, u.clip);
    records.push_back(u.record);
  }
  const auto manifest = dir / "manifest.tsv";
  write_manifest(manifest, records);
  return manifest;
}

} // namespace dyslat::data
