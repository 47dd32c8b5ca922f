// SPDX-License-Identifier: Apache-2.0
/**
 * @file   dataset.hpp
 * @brief  Feature extraction, in-memory examples and mini-batching.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <dyslat/data/manifest.hpp>
#include <dyslat/data/mel_tensor.hpp>
#include <dyslat/data/synthetic.hpp>
#include <dyslat/data/text.hpp>
#include <dyslat/dsp/audio.hpp>
#include <dyslat/dsp/mel.hpp>
#include <dyslat/dsp/stft.hpp>
#include <dyslat/error.hpp>
#include <dyslat/neural/tensor.hpp>
#include <dyslat/rng.hpp>

namespace dyslat::data {

/// Log-mel analysis followed by per-word z-score normalisation.
class FeatureExtractor {
public:
  explicit FeatureExtractor(std::size_t n_mels = 128, dsp::StftConfig stft = {},
                            int sample_rate = dsp::kDefaultSampleRate)
    : stft_(stft), sample_rate_(sample_rate),
      filterbank_(dsp::default_filterbank(n_mels, stft, sample_rate)) {
    stft_.validate();
  }

  dsp::MelSpectrogram operator()(const dsp::AudioClip &clip) const {
    require(clip.sample_rate == sample_rate_, ErrorCode::BadConfig,
            "clip sample rate " + std::to_string(clip.sample_rate) +
              " does not match the feature extractor (" +
              std::to_string(sample_rate_) + ")");
    return dsp::zscore_normalize(dsp::melspectrogram(clip, stft_, filterbank_));
  }

  std::size_t frames_for(std::size_t samples) const {
    return stft_.frame_count(samples);
  }
  const dsp::StftConfig &stft() const { return stft_; }
  const dsp::MelFilterbank &filterbank() const { return filterbank_; }
  int sample_rate() const { return sample_rate_; }

private:
  dsp::StftConfig stft_;
  int sample_rate_;
  dsp::MelFilterbank filterbank_;
};

/// A featurised utterance ready for the network.
struct Example {
  nn::Tensor mel; ///< [n_mels x n_f], z-scored
  TextOneHot text;
  UtteranceRecord record;
};

inline Example make_example(const dsp::AudioClip &clip, const UtteranceRecord &record,
                            const FeatureExtractor &features) {
  return {mel_to_tensor(features(clip)), encode_transcript(record.transcript), record};
}

inline std::vector<Example> featurize(const std::vector<SyntheticUtterance> &corpus,
                                      const FeatureExtractor &features) {
  std::vector<Example> out;
  out.reserve(corpus.size());
  for (const auto &u : corpus)
    out.push_back(make_example(u.clip, u.record, features));
  return out;
}

/// Loads every manifest row; relative audio paths resolve against the
/// manifest's directory.
inline std::vector<Example> load_examples(const std::filesystem::path &manifest,
                                          const FeatureExtractor &features) {
  const auto records = load_manifest(manifest);
  const auto base = manifest.parent_path();
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto &r : records) {
    std::filesystem::path audio = r.audio_path;
    if (audio.is_relative())
      audio = base / audio;
    out.push_back(make_example(dsp::read_wav(audio, features.sample_rate()), r, features));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batching

/// Seeded permutation of [0, n) cut into consecutive batches; the final
/// partial batch is kept.
inline std::vector<std::vector<std::size_t>>
batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
              std::uint64_t epoch) {
  require(batch_size >= 1, ErrorCode::BadConfig, "batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {hash_string("batches"), epoch}));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  return out;
}

struct Batch {
  std::vector<std::size_t> indices;
  nn::Tensor mels;  ///< [B x n_mels x max_f], zero padded
  nn::Tensor mask;  ///< [B x max_f], 1 on real frames
  std::vector<std::size_t> lengths;

  std::size_t size() const { return indices.size(); }

  /// Un-padded spectrogram of batch member b.
  nn::Tensor mel(std::size_t b) const {
    const std::size_t n_mels = mels.dim(1), max_f = mels.dim(2), len = lengths.at(b);
    nn::Tensor out(nn::Shape{n_mels, len});
    for (std::size_t m = 0; m < n_mels; ++m)
      for (std::size_t f = 0; f < len; ++f)
        out.at(m, f) = mels[(b * n_mels + m) * max_f + f];
    return out;
  }
};

inline std::vector<Batch> make_batches(const std::vector<Example> &examples,
                                       std::size_t batch_size, std::uint64_t seed,
                                       std::uint64_t epoch) {
  std::vector<Batch> out;
  for (auto &idx : batch_indices(examples.size(), batch_size, seed, epoch)) {
    Batch b;
    const std::size_t n_mels = examples[idx.front()].mel.dim(0);
    std::size_t max_f = 0;
    for (auto i : idx) {
      require(examples[i].mel.dim(0) == n_mels, ErrorCode::ShapeMismatch,
              "examples in a batch must share n_mels");
      max_f = std::max(max_f, examples[i].mel.dim(1));
    }
    b.mels = nn::Tensor(nn::Shape{idx.size(), n_mels, max_f});
    b.mask = nn::Tensor(nn::Shape{idx.size(), max_f});
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const nn::Tensor &m = examples[idx[k]].mel;
      const std::size_t len = m.dim(1);
      b.lengths.push_back(len);
      for (std::size_t r = 0; r < n_mels; ++r)
        for (std::size_t f = 0; f < len; ++f)
          b.mels[(k * n_mels + r) * max_f + f] = m.at(r, f);
      for (std::size_t f = 0; f < len; ++f)
        b.mask.at(k, f) = 1.0;
    }
    b.indices = std::move(idx);
    out.push_back(std::move(b));
  }
  return out;
}

} // namespace dyslat::data
