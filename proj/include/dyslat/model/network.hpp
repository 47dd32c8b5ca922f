// SPDX-License-Identifier: Apache-2.0
/**
 * @file   network.hpp
 * @brief  Multi-task network: audio encoder to a 2-D latent, text encoder,
 *         attention decoder and dysarthria detector.
 *
 * Graph-level builders take a Graph and return Vars so that the trainer can
 * backpropagate through them. The value-level wrappers at the bottom run an
 * inference graph and return plain results.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <dyslat/data/mel_tensor.hpp>
#include <dyslat/data/text.hpp>
#include <dyslat/dsp/mel.hpp>
#include <dyslat/error.hpp>
#include <dyslat/model/config.hpp>
#include <dyslat/neural/graph.hpp>
#include <dyslat/neural/ops.hpp>
#include <dyslat/neural/params.hpp>
#include <dyslat/rng.hpp>

namespace dyslat::model {

using nn::Graph;
using nn::Mode;
using nn::ParamStore;
using nn::Shape;
using nn::Tensor;
using nn::Var;

struct LatentPoint {
  double l1 = 0.0;
  double l2 = 0.0;

  friend bool operator==(const LatentPoint &, const LatentPoint &) = default;
};

struct DetectionResult {
  double p_dysarthric = 0.5;
  LatentPoint latent;
};

/// Optional instrumentation filled by the builders.
struct Trace {
  std::vector<Shape> audio_shapes; ///< after conv1, pool1, conv2, pool2
  Shape gru_input;                 ///< [T x C*F] fed to the audio GRU
  std::vector<std::vector<double>> attention; ///< weights per decoder step
  std::size_t decoder_steps = 0;
};

// ---------------------------------------------------------------------------
// Parameters

namespace detail {

inline void add_conv(ParamStore &p, const std::string &name, std::size_t out,
                     std::size_t in, const ModelConfig &c, std::uint64_t seed) {
  p.add(name + "/kernel",
        nn::xavier_init({out, in, c.kernel, c.kernel}, c.xavier_gain(),
                        derive_seed(seed, {hash_string(name + "/kernel")})));
  p.add(name + "/bias", Tensor(Shape{out}));
}

inline void add_dense(ParamStore &p, const std::string &name, std::size_t out,
                      std::size_t in, const ModelConfig &c, std::uint64_t seed) {
  p.add(name + "/weight",
        nn::xavier_init({out, in}, c.xavier_gain(),
                        derive_seed(seed, {hash_string(name + "/weight")})));
  p.add(name + "/bias", Tensor(Shape{out}));
}

inline void add_gru(ParamStore &p, const std::string &name, std::size_t hidden,
                    std::size_t in, const ModelConfig &c, std::uint64_t seed) {
  p.add(name + "/wx",
        nn::xavier_init({3 * hidden, in}, c.xavier_gain(),
                        derive_seed(seed, {hash_string(name + "/wx")})));
  p.add(name + "/wh",
        nn::xavier_init({3 * hidden, hidden}, c.xavier_gain(),
                        derive_seed(seed, {hash_string(name + "/wh")})));
  p.add(name + "/b", Tensor(Shape{3 * hidden}));
}

} // namespace detail

/// Xavier-initialised weights, zero biases; each tensor draws from a stream
/// derived from (seed, parameter name).
inline ParamStore init_params(const ModelConfig &c, std::uint64_t seed) {
  c.validate();
  ParamStore p;
  detail::add_conv(p, "audio_enc/cnn1", c.audio_channels, 1, c, seed);
  detail::add_conv(p, "audio_enc/cnn2", c.audio_channels, c.audio_channels, c, seed);
  detail::add_gru(p, "audio_enc/gru", c.audio_gru, c.audio_channels * c.encoded_mels(),
                  c, seed);
  detail::add_dense(p, "audio_enc/dense", c.audio_dense, c.audio_gru, c, seed);
  detail::add_dense(p, "audio_enc/latent", c.latent_dim, c.audio_dense, c, seed);

  detail::add_conv(p, "text_enc/cnn1", c.text_channels, 1, c, seed);
  detail::add_conv(p, "text_enc/cnn2", c.text_channels, c.text_channels, c, seed);
  detail::add_conv(p, "text_enc/cnn3", c.text_channels, c.text_channels, c, seed);
  detail::add_gru(p, "text_enc/gru", c.text_gru, c.text_channels * c.alphabet_size,
                  c, seed);

  const std::size_t block = c.reduction * c.n_mels;
  detail::add_dense(p, "decoder/bottleneck", c.bottleneck, block, c, seed);
  detail::add_gru(p, "decoder/query_gru", c.query_gru, c.bottleneck, c, seed);
  detail::add_gru(p, "decoder/gru", c.decoder_gru, c.query_gru + c.bottleneck, c,
                  seed);
  detail::add_dense(p, "decoder/projection", block, c.decoder_gru, c, seed);

  detail::add_dense(p, "detector/dense", 2, c.latent_dim, c, seed);
  return p;
}

/// Parameters feeding the latent and the detector (the classification path).
inline bool is_classifier_param(const std::string &name) {
  return name.starts_with("audio_enc/") || name.starts_with("detector/");
}

/// Same names and shapes as init_params, all zero.
inline ParamStore zero_params(const ModelConfig &c) {
  ParamStore p;
  const ParamStore ref = init_params(c, 0);
  for (const auto &name : ref.names())
    p.add(name, Tensor::zeros_like(ref.value(name)));
  return p;
}

/// Checks that a store has exactly the parameters of a config.
inline void check_params(const ParamStore &p, const ModelConfig &c) {
  const ParamStore ref = zero_params(c);
  require(p.size() == ref.size(), ErrorCode::ShapeMismatch,
          "parameter count " + std::to_string(p.size()) + " does not match config (" +
            std::to_string(ref.size()) + ")");
  for (const auto &name : ref.names()) {
    require(p.contains(name), ErrorCode::ShapeMismatch,
            "missing parameter '" + name + "'");
    require(p.value(name).shape() == ref.value(name).shape(),
            ErrorCode::ShapeMismatch,
            "parameter '" + name + "' has shape " +
              nn::shape_str(p.value(name).shape()) + ", expected " +
              nn::shape_str(ref.value(name).shape()));
  }
}

// ---------------------------------------------------------------------------
// Graph builders

/// Dropout sites; each combines with the caller's seed (and decoder step).
enum class Site : std::uint64_t {
  cnn1 = 1,
  cnn2,
  gru,
  dense,
  bottleneck,
  teacher
};

inline std::uint64_t site_seed(std::uint64_t seed, Site site,
                               std::uint64_t step = 0) {
  return derive_seed(seed, {static_cast<std::uint64_t>(site), step});
}

struct Binder {
  Graph &g;
  const ParamStore &params;

  Var operator()(const std::string &name) const { return g.parameter(params, name); }
  nn::GruWeights gru(const std::string &name) const {
    return {(*this)(name + "/wx"), (*this)(name + "/wh"), (*this)(name + "/b")};
  }
  Var conv(Var x, const std::string &name, nn::Padding pad) const {
    return nn::conv2d(x, (*this)(name + "/kernel"), (*this)(name + "/bias"), pad);
  }
  Var dense(Var x, const std::string &name, nn::Activation act) const {
    return nn::dense(x, (*this)(name + "/weight"), (*this)(name + "/bias"), act);
  }
};

inline Tensor mel_tensor(const dsp::MelSpectrogram &mel) {
  return data::mel_to_tensor(mel);
}

inline dsp::MelSpectrogram to_mel(const Tensor &t) { return data::tensor_to_mel(t); }

/// X [n_mels x n_f] -> latent [2].
inline Var encode_audio(Graph &g, const ParamStore &params, const Tensor &mel,
                        const ModelConfig &c, Mode mode, std::uint64_t seed,
                        Trace *trace = nullptr) {
  require(mel.rank() == 2 && mel.dim(0) == c.n_mels, ErrorCode::ShapeMismatch,
          "audio encoder expects " + std::to_string(c.n_mels) + " mel bands, got " +
            nn::shape_str(mel.shape()));
  require(mel.dim(1) >= kMinFrames, ErrorCode::InputTooShort,
          "audio encoder needs at least " + std::to_string(kMinFrames) +
            " frames, got " + std::to_string(mel.dim(1)));
  const Binder p{g, params};
  auto log = [trace](Var v) {
    if (trace)
      trace->audio_shapes.push_back(v.shape());
    return v;
  };
  Var x = g.constant(mel.reshaped(Shape{1, mel.dim(0), mel.dim(1)}));
  x = log(nn::relu(p.conv(x, "audio_enc/cnn1", nn::Padding::valid)));
  x = nn::dropout(x, c.dropout, mode, site_seed(seed, Site::cnn1));
  x = log(nn::maxpool2d(x));
  x = log(nn::relu(p.conv(x, "audio_enc/cnn2", nn::Padding::valid)));
  x = nn::dropout(x, c.dropout, mode, site_seed(seed, Site::cnn2));
  x = log(nn::maxpool2d(x));
  Var seq = nn::to_sequence(x);
  if (trace)
    trace->gru_input = seq.shape();
  Var h = nn::gru_forward(seq, c.audio_gru, p.gru("audio_enc/gru")).last_state;
  h = nn::dropout(h, c.dropout, mode, site_seed(seed, Site::gru));
  h = p.dense(h, "audio_enc/dense", nn::Activation::tanh);
  h = nn::dropout(h, c.dropout, mode, site_seed(seed, Site::dense));
  return p.dense(h, "audio_enc/latent", nn::Activation::linear);
}

/// One-hot [n_c x n_t] -> E_text [text_gru x n_t].
inline Var encode_text(Graph &g, const ParamStore &params, const Tensor &one_hot,
                       const ModelConfig &c) {
  require(one_hot.rank() == 2 && one_hot.dim(0) == c.alphabet_size,
          ErrorCode::ShapeMismatch,
          "text encoder expects " + std::to_string(c.alphabet_size) +
            " symbol rows, got " + nn::shape_str(one_hot.shape()));
  require(one_hot.dim(1) >= 1, ErrorCode::EmptySequence, "empty transcript");
  const Binder p{g, params};
  Var x = g.constant(one_hot.reshaped(Shape{1, one_hot.dim(0), one_hot.dim(1)}));
  for (const char *name : {"text_enc/cnn1", "text_enc/cnn2", "text_enc/cnn3"})
    x = nn::relu(p.conv(x, name, nn::Padding::same));
  auto seq = nn::gru_forward(nn::to_sequence(x), c.text_gru, p.gru("text_enc/gru"));
  return nn::transpose(seq.outputs);
}

/// Appends the latent to every column: [K x n_t] -> [(K+2) x n_t].
inline Var broadcast_concat(Var text, Var latent) {
  Graph &g = text.graph();
  require(text.value().rank() == 2, ErrorCode::ShapeMismatch,
          "broadcast_concat expects a matrix");
  const std::size_t n_t = text.shape()[1];
  Var ones = g.constant(Tensor(Shape{1, n_t}, 1.0));
  Var rows = nn::matmul(nn::reshape(latent, Shape{latent.value().size(), 1}), ones);
  if (rows.value().rank() == 1)
    rows = nn::reshape(rows, Shape{latent.value().size(), n_t});
  return nn::reshape(nn::concat({text, rows}),
                     Shape{text.shape()[0] + latent.value().size(), n_t});
}

inline std::size_t decoder_steps(std::size_t frames, std::size_t reduction) {
  return (frames + reduction - 1) / reduction;
}

/// Attention decoder producing [n_mels x frames]. In train mode the previous
/// block is taken from `teacher` (with probability teacher_forcing per step);
/// in eval mode it is always the model's own prediction.
inline Var decode(Graph &g, const ParamStore &params, Var encoded,
                  std::size_t frames, const ModelConfig &c, Mode mode,
                  const Tensor *teacher, std::uint64_t seed,
                  Trace *trace = nullptr) {
  require(frames >= 1, ErrorCode::BadConfig, "target_frames must be at least 1");
  require(encoded.value().rank() == 2 && encoded.shape()[0] == c.query_gru,
          ErrorCode::ShapeMismatch,
          "decoder memory must have " + std::to_string(c.query_gru) + " rows, got " +
            nn::shape_str(encoded.shape()));
  if (mode == Mode::train) {
    require(teacher != nullptr, ErrorCode::BadConfig,
            "train-mode decoding needs teacher frames");
    require(teacher->shape() == (Shape{c.n_mels, frames}), ErrorCode::ShapeMismatch,
            "teacher " + nn::shape_str(teacher->shape()) + " does not match [" +
              std::to_string(c.n_mels) + " x " + std::to_string(frames) + "]");
  }
  const Binder p{g, params};
  const std::size_t r = c.reduction, block = r * c.n_mels;
  const std::size_t steps = decoder_steps(frames, r);
  const auto query_w = p.gru("decoder/query_gru");
  const auto dec_w = p.gru("decoder/gru");

  Var prev = g.constant(Tensor(Shape{block}));
  Var query = g.constant(Tensor(Shape{c.query_gru}));
  Var state = g.constant(Tensor(Shape{c.decoder_gru}));
  std::vector<Var> outputs;
  outputs.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    if (s > 0) {
      bool forced = mode == Mode::train;
      if (forced && c.teacher_forcing < 1.0)
        forced = Rng(site_seed(seed, Site::teacher, s)).bernoulli(c.teacher_forcing);
      if (forced) {
        Tensor truth(Shape{block});
        for (std::size_t k = 0; k < r; ++k)
          for (std::size_t m = 0; m < c.n_mels; ++m)
            truth[k * c.n_mels + m] = teacher->at(m, (s - 1) * r + k);
        prev = g.constant(std::move(truth));
      } else {
        prev = outputs.back();
      }
    }
    Var b = p.dense(prev, "decoder/bottleneck", nn::Activation::relu);
    b = nn::dropout(b, c.dropout, mode, site_seed(seed, Site::bottleneck, s));
    query = nn::gru_cell(b, query, query_w);
    auto att = nn::dot_product_attention(query, encoded, encoded);
    if (trace) {
      const auto w = att.weights.value().data();
      trace->attention.emplace_back(w.begin(), w.end());
    }
    state = nn::gru_cell(nn::concat({att.context, b}), state, dec_w);
    outputs.push_back(p.dense(state, "decoder/projection", nn::Activation::linear));
  }
  if (trace)
    trace->decoder_steps = steps;
  // [steps x r*n_mels] is [steps*r x n_mels] frame rows in row-major order
  Var frames_rows = nn::reshape(nn::stack_rows(outputs), Shape{steps * r, c.n_mels});
  return nn::transpose(nn::leading_rows(frames_rows, frames));
}

/// latent [2] -> class probabilities [2]; index 1 is dysarthric.
inline Var detect(Graph &g, const ParamStore &params, Var latent) {
  const Binder p{g, params};
  return nn::softmax(p.dense(latent, "detector/dense", nn::Activation::tanh));
}

struct ForwardVars {
  Var latent; ///< [2]
  Var probs;  ///< [2]
  Var mel;    ///< [n_mels x n_f], invalid when the decoder is skipped
};

/// Full forward pass. `with_decoder = false` skips reconstruction.
inline ForwardVars forward(Graph &g, const ParamStore &params, const Tensor &mel,
                           const Tensor &one_hot, const ModelConfig &c, Mode mode,
                           std::uint64_t seed, bool with_decoder = true,
                           Trace *trace = nullptr) {
  ForwardVars out;
  out.latent = encode_audio(g, params, mel, c, mode, seed, trace);
  out.probs = detect(g, params, out.latent);
  if (with_decoder) {
    Var encoded = broadcast_concat(encode_text(g, params, one_hot, c), out.latent);
    out.mel = decode(g, params, encoded, mel.dim(1), c, mode,
                     mode == Mode::train ? &mel : nullptr, seed, trace);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Value-level inference

inline LatentPoint to_latent(const Tensor &t) { return {t[0], t[1]}; }

inline LatentPoint encode_audio(const dsp::MelSpectrogram &mel,
                                const ParamStore &params, const ModelConfig &c,
                                Trace *trace = nullptr) {
  Graph g(false);
  return to_latent(encode_audio(g, params, mel_tensor(mel), c, Mode::eval, 0, trace)
                     .value());
}

inline DetectionResult detect(const LatentPoint &l, const ParamStore &params) {
  require(std::isfinite(l.l1) && std::isfinite(l.l2), ErrorCode::NonFiniteInput,
          "latent must be finite");
  Graph g(false);
  Var probs = detect(g, params, g.constant(Tensor(Shape{2}, {l.l1, l.l2})));
  return {probs.value()[1], l};
}

struct ForwardResult {
  DetectionResult detection;
  dsp::MelSpectrogram mel;
};

/// Eval-mode forward pass.
inline ForwardResult forward(const dsp::MelSpectrogram &mel,
                             const data::TextOneHot &text,
                             const ParamStore &params, const ModelConfig &c,
                             Trace *trace = nullptr) {
  Graph g(false);
  auto vars = forward(g, params, mel_tensor(mel), text.matrix, c, Mode::eval, 0,
                      true, trace);
  return {{vars.probs.value()[1], to_latent(vars.latent.value())},
          to_mel(vars.mel.value())};
}

/// Decodes from a supplied latent, bypassing the audio encoder.
inline dsp::MelSpectrogram reconstruct_with_latent(const data::TextOneHot &text,
                                                   const LatentPoint &l,
                                                   std::size_t frames,
                                                   const ParamStore &params,
                                                   const ModelConfig &c,
                                                   Trace *trace = nullptr) {
  require(std::isfinite(l.l1) && std::isfinite(l.l2), ErrorCode::NonFiniteInput,
          "latent must be finite");
  Graph g(false);
  Var latent = g.constant(Tensor(Shape{2}, {l.l1, l.l2}));
  Var encoded = broadcast_concat(encode_text(g, params, text.matrix, c), latent);
  return to_mel(
    decode(g, params, encoded, frames, c, Mode::eval, nullptr, 0, trace).value());
}

} // namespace dyslat::model
