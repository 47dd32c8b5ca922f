// SPDX-License-Identifier: Apache-2.0
/**
 * @file   trainer.hpp
 * @brief  Mini-batch SGD on the joint objective.
 */
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include <dyslat/data/dataset.hpp>
#include <dyslat/error.hpp>
#include <dyslat/model/network.hpp>
#include <dyslat/neural/graph.hpp>
#include <dyslat/neural/params.hpp>
#include <dyslat/rng.hpp>
#include <dyslat/train/loss.hpp>

namespace dyslat::train {

enum class TrainMode { multitask, classifier_only, unsupervised };

NLOHMANN_JSON_SERIALIZE_ENUM(TrainMode, {{TrainMode::multitask, "multitask"},
                                         {TrainMode::classifier_only, "classifier_only"},
                                         {TrainMode::unsupervised, "unsupervised"}})

struct TrainConfig {
  double alpha = 0.5;
  double learning_rate = 0.03;
  std::size_t batch_size = 50;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::multitask;
  std::size_t patience = 10;
  std::size_t checkpoint_every = 10;

  void validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::BadConfig,
            "alpha must lie in [0, 1]");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::BadConfig,
            "learning_rate must be positive");
    require(batch_size >= 1, ErrorCode::BadConfig, "batch_size must be >= 1");
    require(epochs >= 1, ErrorCode::BadConfig, "epochs must be >= 1");
  }

  /// Weight actually applied: the modes pin alpha to 1 or 0.
  double effective_alpha() const {
    switch (mode) {
    case TrainMode::classifier_only:
      return 1.0;
    case TrainMode::unsupervised:
      return 0.0;
    default:
      return alpha;
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, alpha, learning_rate,
                                                batch_size, epochs, seed, mode,
                                                patience, checkpoint_every)

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double cross_entropy = 0.0;
  double reconstruction = 0.0;
  std::optional<double> accuracy; ///< absent when labels are not used
  std::optional<double> validation_loss;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double wall_clock_seconds = 0.0;
  bool stopped_early = false;
  std::size_t best_epoch = 0;
};

inline nlohmann::json to_json(const TrainReport &r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto &e : r.epochs) {
    nlohmann::json j{{"epoch", e.epoch},
                     {"loss", e.loss},
                     {"cross_entropy", e.cross_entropy},
                     {"reconstruction", e.reconstruction},
                     {"seconds", e.seconds}};
    j["accuracy"] = e.accuracy ? nlohmann::json(*e.accuracy) : nlohmann::json();
    j["validation_loss"] =
      e.validation_loss ? nlohmann::json(*e.validation_loss) : nlohmann::json();
    epochs.push_back(std::move(j));
  }
  return {{"epochs", epochs},
          {"wall_clock_seconds", r.wall_clock_seconds},
          {"stopped_early", r.stopped_early},
          {"best_epoch", r.best_epoch}};
}

/// Thrown when a step would produce non-finite parameters; carries the last
/// parameters that were still finite.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string &message, nn::ParamStore last_good,
                  std::size_t epoch)
    : Error(ErrorCode::NumericalDivergence, message),
      last_good_(std::move(last_good)), epoch_(epoch) {}

  const nn::ParamStore &last_good() const noexcept { return last_good_; }
  std::size_t epoch() const noexcept { return epoch_; }

private:
  nn::ParamStore last_good_;
  std::size_t epoch_;
};

/// w <- w - lr * grad for every parameter, then zero the gradients. Nothing
/// is modified if any gradient is non-finite.
inline void sgd_step(nn::ParamStore &params, double learning_rate) {
  for (const auto &name : params.names())
    require(params.grad(name).all_finite(), ErrorCode::NumericalDivergence,
            "non-finite gradient for '" + name + "'");
  for (const auto &name : params.names())
    params.value(name).vec() -= learning_rate * params.grad(name).vec();
  params.zero_grad();
}

struct TrainHooks {
  /// Called every time the trainer reads a label (index into the dataset).
  std::function<void(std::size_t)> on_label_read;
  /// Called with (epoch, params) every checkpoint_every epochs and with the
  /// best-so-far parameters when they improve (epoch tagged as best).
  std::function<void(std::size_t, const nn::ParamStore &, bool best)> on_checkpoint;
  std::function<void(const EpochStats &)> on_epoch;
};

struct TrainResult {
  nn::ParamStore params;
  TrainReport report;
};

/// Seed stream for the dropout masks of one example in one epoch.
inline std::uint64_t example_seed(std::uint64_t seed, std::size_t epoch,
                                  std::size_t index) {
  return derive_seed(seed, {hash_string("dropout"), epoch, index});
}

namespace detail {

inline bool uses_decoder(const TrainConfig &cfg) {
  return cfg.mode != TrainMode::classifier_only;
}

} // namespace detail

/// Mean joint loss over `examples` in eval mode.
inline double evaluate_loss(const std::vector<data::Example> &examples,
                            const nn::ParamStore &params, const model::ModelConfig &mc,
                            const TrainConfig &cfg) {
  const double alpha = cfg.effective_alpha();
  double total = 0.0;
  for (const auto &ex : examples) {
    nn::Graph g(false);
    auto vars = model::forward(g, params, ex.mel, ex.text.matrix, mc, nn::Mode::eval, 0,
                               detail::uses_decoder(cfg));
    std::optional<int> label;
    if (alpha > 0.0)
      label = ex.record.dysarthric;
    total += joint_loss(vars.probs, label, vars.mel, ex.mel, alpha).total.value()[0];
  }
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

/// Eval-mode dysarthria probability for each example (no decoder).
inline std::vector<double> predict(const std::vector<data::Example> &examples,
                                   const nn::ParamStore &params,
                                   const model::ModelConfig &mc) {
  std::vector<double> out;
  out.reserve(examples.size());
  for (const auto &ex : examples) {
    nn::Graph g(false);
    auto vars = model::forward(g, params, ex.mel, ex.text.matrix, mc, nn::Mode::eval, 0,
                               false);
    out.push_back(vars.probs.value()[1]);
  }
  return out;
}

/// Runs epochs x batches of forward / joint loss / backward / SGD. The batch
/// order and every dropout mask derive from cfg.seed, so equal inputs give
/// bit-identical parameters. With a validation set, training stops after
/// `patience` epochs without improvement and the best parameters are returned.
inline TrainResult train(const std::vector<data::Example> &dataset,
                         const model::ModelConfig &mc, const TrainConfig &cfg,
                         const TrainHooks &hooks = {},
                         const std::vector<data::Example> *validation = nullptr,
                         std::optional<nn::ParamStore> initial = std::nullopt) {
  cfg.validate();
  mc.validate();
  require(!dataset.empty(), ErrorCode::BadConfig, "training set is empty");
  const auto start = std::chrono::steady_clock::now();
  const double alpha = cfg.effective_alpha();
  const bool with_decoder = detail::uses_decoder(cfg);
  const bool labelled = alpha > 0.0;

  auto label = [&](std::size_t i) {
    if (hooks.on_label_read)
      hooks.on_label_read(i);
    return dataset[i].record.dysarthric;
  };

  nn::ParamStore params = initial ? std::move(*initial) : model::init_params(mc, cfg.seed);
  model::check_params(params, mc);
  params.zero_grad();

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::optional<nn::ParamStore> best_params;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    EpochStats stats;
    stats.epoch = epoch;
    for (const auto &batch : data::make_batches(dataset, cfg.batch_size, cfg.seed, epoch)) {
      const double weight = 1.0 / static_cast<double>(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k) {
        const std::size_t i = batch.indices[k];
        const nn::Tensor mel = batch.mel(k);
        try {
          nn::Graph g;
          auto vars = model::forward(g, params, mel, dataset[i].text.matrix, mc,
                                     nn::Mode::train, example_seed(cfg.seed, epoch, i),
                                     with_decoder);
          std::optional<int> y;
          if (labelled)
            y = label(i);
          auto loss = joint_loss(vars.probs, y, vars.mel, mel, alpha);
          require(std::isfinite(loss.total.value()[0]), ErrorCode::NumericalDivergence,
                  "non-finite loss");
          g.backward(loss.total, nn::Tensor::scalar(weight));
          g.accumulate_parameter_grads(params);
          stats.loss += loss.total.value()[0];
          stats.cross_entropy += loss.cross_entropy;
          stats.reconstruction += loss.reconstruction;
        } catch (const Error &e) {
          if (e.code() != ErrorCode::NonFiniteInput &&
              e.code() != ErrorCode::NumericalDivergence)
            throw;
          params.zero_grad();
          throw DivergenceError("training diverged in epoch " + std::to_string(epoch) +
                                  ": " + e.what(),
                                params, epoch);
        }
      }
      try {
        sgd_step(params, cfg.learning_rate);
      } catch (const Error &e) {
        params.zero_grad();
        throw DivergenceError("training diverged in epoch " + std::to_string(epoch) +
                                ": " + e.what(),
                              params, epoch);
      }
    }
    const double n = static_cast<double>(dataset.size());
    stats.loss /= n;
    stats.cross_entropy /= n;
    stats.reconstruction /= n;

    if (labelled) {
      const auto probs = predict(dataset, params, mc);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < dataset.size(); ++i)
        correct += (probs[i] >= 0.5 ? 1 : 0) == label(i);
      stats.accuracy = static_cast<double>(correct) / n;
    }

    bool improved = false;
    if (validation && !validation->empty()) {
      stats.validation_loss = evaluate_loss(*validation, params, mc, cfg);
      if (*stats.validation_loss < best_val) {
        best_val = *stats.validation_loss;
        best_params = params;
        result.report.best_epoch = epoch;
        since_best = 0;
        improved = true;
      } else {
        ++since_best;
      }
    } else {
      result.report.best_epoch = epoch;
    }

    stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.report.epochs.push_back(stats);
    if (hooks.on_epoch)
      hooks.on_epoch(stats);
    if (hooks.on_checkpoint) {
      if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
        hooks.on_checkpoint(epoch, params, false);
      if (improved)
        hooks.on_checkpoint(epoch, params, true);
    }
    if (best_params && since_best >= cfg.patience) {
      result.report.stopped_early = true;
      break;
    }
  }

  result.params = best_params ? std::move(*best_params) : std::move(params);
  result.report.wall_clock_seconds =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

} // namespace dyslat::train
