// SPDX-License-Identifier: Apache-2.0
/**
 * @file   cli.hpp
 * @brief  The `dyslat` command line: train, eval-loso, detect, reconstruct,
 *         sweep and serve.
 *
 * Exit codes: 0 success, 1 user error (bad arguments, bad input files, any
 * module error), 2 internal error.
 */
#pragma once

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <dyslat/data/dataset.hpp>
#include <dyslat/data/synthetic.hpp>
#include <dyslat/dsp/audio.hpp>
#include <dyslat/dsp/mels_io.hpp>
#include <dyslat/error.hpp>
#include <dyslat/eval/latent.hpp>
#include <dyslat/eval/loso.hpp>
#include <dyslat/model/checkpoint.hpp>
#include <dyslat/rng.hpp>
#include <dyslat/service/server.hpp>
#include <dyslat/train/trainer.hpp>

namespace dyslat::service {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;

/// The `--config` file: every section is optional.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  data::SyntheticCorpusConfig synthetic;
  std::string manifest;
  std::string out_dir = "dyslat_out";
  std::string checkpoint = "dyslat_out/checkpoint.dyslat";
  ServiceConfig service;
};

inline void from_json(const nlohmann::json &j, RunConfig &c) {
  static const std::set<std::string> known{"model",    "train",   "synthetic", "manifest",
                                           "out_dir",  "checkpoint", "service"};
  require(j.is_object(), ErrorCode::BadConfig, "config must be a JSON object");
  for (const auto &[key, value] : j.items())
    require(known.count(key) > 0, ErrorCode::BadConfig, "unknown config section '" + key + "'");
  try {
    c.model = j.value("model", c.model);
    c.train = j.value("train", c.train);
    c.synthetic = j.value("synthetic", c.synthetic);
    c.manifest = j.value("manifest", c.manifest);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.checkpoint = j.value("checkpoint", c.checkpoint);
    c.service = j.value("service", c.service);
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorCode::BadConfig, std::string("config: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  require(in.is_open(), ErrorCode::IoError, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error &e) {
    fail(ErrorCode::ParseError, "config " + path.string() + ": " + e.what());
  }
  return j.get<RunConfig>();
}

/// FNV-1a of the file bytes, as 16 hex digits.
inline std::string file_digest(const std::filesystem::path &path) {
  const auto bytes = dsp::read_file(path);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(
                  hash_string(std::string_view(reinterpret_cast<const char *>(bytes.data()),
                                               bytes.size()))));
  return buf;
}

/// Blocks until the server should exit; the default waits for SIGINT or
/// SIGTERM and reloads the checkpoint on SIGHUP.
using ServeWait = std::function<void(Service &, std::ostream &)>;

inline void wait_for_signals(Service &service, std::ostream &log) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGHUP);
  for (;;) {
    int sig = 0;
    if (sigwait(&set, &sig) != 0 || sig != SIGHUP)
      return;
    try {
      service.reload();
      log << "reloaded " << service.config().checkpoint_path().string() << '\n';
    } catch (const Error &e) {
      log << "reload failed, keeping the current model: " << e.what() << '\n';
    }
  }
}

class Cli {
public:
  Cli(std::ostream &out, std::ostream &err, ServeWait wait = wait_for_signals)
    : out_(out), err_(err), wait_(std::move(wait)) {}

  int run(int argc, const char *const *argv) {
    CLI::App app{"dyslat: dysarthria detection and latent-space speech reconstruction"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", config_path_, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", seed_, "training seed (overrides train.seed)");
    app.add_flag("--synthetic", synthetic_, "use the built-in synthetic corpus");

    auto *train = app.add_subcommand("train", "train a model and write checkpoints");
    train->add_option("--manifest", manifest_, "utterance manifest (TSV)");
    train->add_option("--out-dir", out_dir_, "output directory");

    auto *loso = app.add_subcommand("eval-loso", "leave-one-speaker-out evaluation");
    loso->add_option("--manifest", manifest_, "utterance manifest (TSV)");
    loso->add_option("--out-dir", out_dir_, "output directory");
    loso->add_flag("--skip-correlation", skip_correlation_,
                   "do not train the all-speaker model for the latent correlation");

    auto *detect = app.add_subcommand("detect", "dysarthria probability and latent of a WAV");
    detect->add_option("--wav", wav_, "16-bit mono PCM WAV")->required();
    detect->add_option("--checkpoint", checkpoint_, "model checkpoint");

    auto *recon = app.add_subcommand("reconstruct", "decode a transcript from a latent");
    recon->add_option("--transcript", transcript_, "word to synthesise")->required();
    recon->add_option("--latent", latent_, "latent point l1 l2")->expected(2);
    recon->add_option("--wav", wav_, "take the latent and frame count from this recording");
    recon->add_option("--frames", frames_, "output frame count")->check(CLI::Range(1, 2000));
    recon->add_option("--out", out_path_, "output MELS file")->required();
    recon->add_option("--audio", audio_path_, "also write a Griffin-Lim WAV here");
    recon->add_option("--checkpoint", checkpoint_, "model checkpoint");

    auto *sweep = app.add_subcommand("sweep", "reconstruct along latent dimension 1");
    sweep->add_option("--transcript", transcript_, "word to synthesise")->required();
    sweep->add_option("--frames", frames_, "output frame count")->check(CLI::Range(1, 2000));
    sweep->add_option("--wav", wav_, "take the frame count from this recording");
    sweep->add_option("--dim1", sweep_values_, "dimension-1 values")->expected(1, 64);
    sweep->add_option("--dim2", sweep_dim2_, "fixed dimension-2 value");
    sweep->add_option("--out-dir", out_dir_, "output directory");
    sweep->add_flag("--audio", sweep_audio_, "also write Griffin-Lim WAVs");
    sweep->add_option("--checkpoint", checkpoint_, "model checkpoint");

    auto *serve = app.add_subcommand("serve", "HTTP API for the exploration UI");
    serve->add_option("--port", port_, "listen port (0 picks one)");
    serve->add_option("--manifest", manifest_, "corpus for the latent map");
    serve->add_option("--checkpoint", checkpoint_, "model checkpoint");

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
      const int code = app.exit(e, out_, err_);
      return code == 0 ? kExitOk : kExitUser;
    }

    try {
      load_config();
      if (*train)
        return cmd_train();
      if (*loso)
        return cmd_eval_loso();
      if (*detect)
        return cmd_detect();
      if (*recon)
        return cmd_reconstruct();
      if (*sweep)
        return cmd_sweep();
      if (*serve)
        return cmd_serve();
    } catch (const Error &e) {
      err_ << "error: " << e.what() << '\n';
      return kExitUser;
    } catch (const std::exception &e) {
      err_ << "internal error: " << e.what() << '\n';
      return kExitInternal;
    }
    return kExitInternal;
  }

  const RunConfig &config() const { return cfg_; }

private:
  void load_config() {
    if (config_path_)
      cfg_ = load_run_config(*config_path_);
    if (seed_)
      cfg_.train.seed = *seed_;
    if (manifest_)
      cfg_.manifest = *manifest_;
    if (out_dir_)
      cfg_.out_dir = *out_dir_;
    cfg_.model.validate();
    cfg_.train.validate();
  }

  data::FeatureExtractor features(const model::ModelConfig &mc) const {
    return data::FeatureExtractor(mc.n_mels, {}, cfg_.synthetic.sample_rate);
  }

  std::vector<data::Example> corpus() const {
    if (synthetic_)
      return data::featurize(data::generate_synthetic_corpus(cfg_.synthetic),
                             features(cfg_.model));
    require(!cfg_.manifest.empty(), ErrorCode::BadConfig,
            "no corpus: pass --synthetic or --manifest");
    return data::load_examples(cfg_.manifest, features(cfg_.model));
  }

  /// --checkpoint, then DYSLAT_CHECKPOINT, then the config file.
  std::filesystem::path checkpoint_path() const {
    if (checkpoint_)
      return *checkpoint_;
    ServiceConfig sc;
    sc.checkpoint = cfg_.checkpoint;
    return sc.checkpoint_path();
  }

  model::Checkpoint load_model() const {
    const auto path = checkpoint_path();
    require(std::filesystem::exists(path), ErrorCode::IoError,
            "checkpoint not found: " + path.string());
    return model::load_checkpoint(path);
  }

  void write_json(const std::filesystem::path &path, const nlohmann::json &j) const {
    std::ofstream f(path);
    require(f.is_open(), ErrorCode::IoError, "cannot write " + path.string());
    f << j.dump(2) << '\n';
  }

  int cmd_train() {
    const auto examples = corpus();
    const std::filesystem::path dir = cfg_.out_dir;
    std::filesystem::create_directories(dir);
    const auto seed = cfg_.train.seed;
    train::TrainHooks hooks;
    hooks.on_epoch = [&](const train::EpochStats &s) {
      err_ << "epoch " << s.epoch << " loss " << s.loss << '\n';
    };
    hooks.on_checkpoint = [&](std::size_t epoch, const nn::ParamStore &p, bool best) {
      if (best)
        return;
      model::save_checkpoint(dir / ("checkpoint_epoch" + std::to_string(epoch) + ".dyslat"),
                             model::Checkpoint{cfg_.model, p, seed});
    };
    auto result = train::train(examples, cfg_.model, cfg_.train, hooks);
    const auto ck_path = dir / "checkpoint.dyslat";
    model::save_checkpoint(ck_path, model::Checkpoint{cfg_.model, std::move(result.params), seed});
    write_json(dir / "train_report.json", train::to_json(result.report));
    out_ << "checkpoint " << ck_path.string() << " fnv1a " << file_digest(ck_path) << '\n';
    return kExitOk;
  }

  int cmd_eval_loso() {
    const auto examples = corpus();
    const std::filesystem::path dir = cfg_.out_dir;
    std::filesystem::create_directories(dir);
    eval::LosoHooks hooks;
    hooks.on_fold = [&](std::size_t k, std::size_t n, const eval::FoldResult &f) {
      err_ << "fold " << k + 1 << "/" << n << " held out " << f.held_out_speaker << " ("
           << f.report.wall_clock_seconds << " s)\n";
    };
    auto loso = eval::run_loso(examples, cfg_.model, cfg_.train, hooks);
    eval::EvalReport report;
    report.system = nlohmann::json(cfg_.train.mode).get<std::string>();
    report.word = loso.word;
    report.speaker = loso.speaker;
    report.folds = loso.folds;
    report.wall_clock_seconds = loso.wall_clock_seconds;
    if (!skip_correlation_) {
      // one model sees every speaker so all latents share an orientation
      err_ << "training the all-speaker model for the latent correlation\n";
      const auto full = train::train(examples, cfg_.model, cfg_.train);
      report.correlation = eval::latent_correlation_report(examples, full.params, cfg_.model);
    }
    write_json(dir / "eval_report.json", eval::to_json(report));
    std::ofstream(dir / "predictions.tsv") << eval::format_predictions(loso.predictions);
    out_ << eval::format_metrics_table({report});
    if (report.correlation)
      out_ << '\n' << eval::format_correlation_table(*report.correlation);
    return kExitOk;
  }

  int cmd_detect() {
    const auto ck = load_model();
    const auto fx = features(ck.config);
    const auto clip = dsp::read_wav(*wav_, fx.sample_rate());
    const auto mel = fx(clip);
    const auto latent = model::encode_audio(mel, ck.params, ck.config);
    const auto d = model::detect(latent, ck.params);
    out_ << nlohmann::json{{"p_dysarthric", d.p_dysarthric},
                           {"latent", {latent.l1, latent.l2}},
                           {"n_frames", mel.n_frames()}}
              .dump()
         << '\n';
    return kExitOk;
  }

  /// Frame count and latent of the --wav recording, if one was given.
  std::optional<std::pair<std::size_t, model::LatentPoint>>
  reference(const model::Checkpoint &ck) const {
    if (!wav_)
      return std::nullopt;
    const auto fx = features(ck.config);
    const auto mel = fx(dsp::read_wav(*wav_, fx.sample_rate()));
    return std::pair{mel.n_frames(), model::encode_audio(mel, ck.params, ck.config)};
  }

  void write_outputs(const dsp::MelSpectrogram &mel, const model::Checkpoint &ck,
                     const std::filesystem::path &mels_path,
                     const std::optional<std::filesystem::path> &wav_path) const {
    dsp::write_file(mels_path, dsp::encode_mels(mel));
    if (wav_path) {
      const auto snap = make_snapshot(ck);
      dsp::write_wav(*wav_path, vocode(mel, *snap, cfg_.service.griffin_lim_iterations,
                                       cfg_.service.griffin_lim_seed));
    }
  }

  int cmd_reconstruct() {
    const auto ck = load_model();
    const auto ref = reference(ck);
    require(latent_.size() == 2 || ref, ErrorCode::BadConfig, "pass --latent or --wav");
    require(frames_ || ref, ErrorCode::BadConfig, "pass --frames or --wav");
    const model::LatentPoint l = latent_.size() == 2 ? model::LatentPoint{latent_[0], latent_[1]}
                                                     : ref->second;
    const std::size_t frames = frames_ ? *frames_ : ref->first;
    require(frames >= 1 && frames <= kMaxTargetFrames, ErrorCode::BadConfig,
            "frame count must lie in [1, 2000]");
    const auto text = data::encode_transcript(transcript_);
    const auto mel = model::reconstruct_with_latent(text, l, frames, ck.params, ck.config);
    write_outputs(mel, ck, *out_path_, audio_path_);
    out_ << "wrote " << out_path_->string() << " (" << mel.n_mels() << " x " << mel.n_frames()
         << ")\n";
    return kExitOk;
  }

  int cmd_sweep() {
    const auto ck = load_model();
    const auto ref = reference(ck);
    require(frames_ || ref, ErrorCode::BadConfig, "pass --frames or --wav");
    const std::size_t frames = frames_ ? *frames_ : ref->first;
    require(frames >= 1 && frames <= kMaxTargetFrames, ErrorCode::BadConfig,
            "frame count must lie in [1, 2000]");
    const std::filesystem::path dir = cfg_.out_dir;
    std::filesystem::create_directories(dir);
    const auto text = data::encode_transcript(transcript_);
    const auto word = data::normalize_transcript(transcript_);
    for (double d1 : sweep_values_) {
      char tag[64];
      std::snprintf(tag, sizeof tag, "%s_d1=%g", word.c_str(), d1);
      const auto mel = model::reconstruct_with_latent(text, {d1, sweep_dim2_}, frames, ck.params,
                                                      ck.config);
      const auto mels_path = dir / (std::string(tag) + ".mels");
      std::optional<std::filesystem::path> wav_path;
      if (sweep_audio_)
        wav_path = dir / (std::string(tag) + ".wav");
      write_outputs(mel, ck, mels_path, wav_path);
      out_ << mels_path.string() << '\n';
    }
    return kExitOk;
  }

  int cmd_serve() {
    ServiceConfig sc = cfg_.service;
    sc.checkpoint = checkpoint_path().string();
    if (port_)
      sc.port = *port_;
    if (!cfg_.manifest.empty())
      sc.manifest = cfg_.manifest;
    std::shared_ptr<const Snapshot> snap;
    if (synthetic_) {
      const auto ck = load_model();
      const auto examples = data::featurize(data::generate_synthetic_corpus(cfg_.synthetic),
                                            features(ck.config));
      snap = make_snapshot(ck, &examples);
    } else {
      require(std::filesystem::exists(sc.checkpoint_path()), ErrorCode::IoError,
              "checkpoint not found: " + sc.checkpoint_path().string());
      snap = load_snapshot(sc);
    }
    // handler threads inherit this mask, so only wait_ sees the signals
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    sigaddset(&set, SIGHUP);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    Service service(sc, std::move(snap));
    HttpServer server(service);
    const int port = server.start();
    out_ << "listening on " << sc.bind_address << ":" << port << std::endl;
    wait_(service, err_);
    server.stop();
    return kExitOk;
  }

  std::ostream &out_;
  std::ostream &err_;
  ServeWait wait_;
  RunConfig cfg_;

  std::optional<std::string> config_path_;
  std::optional<std::uint64_t> seed_;
  bool synthetic_ = false;
  std::optional<std::string> manifest_;
  std::optional<std::string> out_dir_;
  std::optional<std::string> checkpoint_;
  std::optional<std::string> wav_;
  std::string transcript_;
  std::vector<double> latent_;
  std::optional<std::size_t> frames_;
  std::optional<std::filesystem::path> out_path_;
  std::optional<std::filesystem::path> audio_path_;
  std::vector<double> sweep_values_{-0.5, 0.0, 0.5, 1.0, 1.5};
  double sweep_dim2_ = -0.1;
  bool sweep_audio_ = false;
  bool skip_correlation_ = false;
  std::optional<int> port_;
};

inline int run_cli(int argc, const char *const *argv, std::ostream &out = std::cout,
                   std::ostream &err = std::cerr) {
  return Cli(out, err).run(argc, argv);
}

} // namespace dyslat::service
