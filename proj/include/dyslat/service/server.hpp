// SPDX-License-Identifier: Apache-2.0
/**
 * @file   server.hpp
 * @brief  HTTP facade: /analyze, /reconstruct and /latent-map over an
 *         immutable model snapshot.
 */
#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <httplib.h>
#include <json.hpp>

#include <dyslat/data/dataset.hpp>
#include <dyslat/dsp/audio.hpp>
#include <dyslat/dsp/griffin_lim.hpp>
#include <dyslat/dsp/mel.hpp>
#include <dyslat/dsp/mels_io.hpp>
#include <dyslat/error.hpp>
#include <dyslat/eval/latent.hpp>
#include <dyslat/model/checkpoint.hpp>
#include <dyslat/model/network.hpp>
#include <dyslat/service/base64.hpp>

namespace dyslat::service {

/// Environment variable that overrides ServiceConfig::checkpoint.
inline constexpr const char *kCheckpointEnv = "DYSLAT_CHECKPOINT";

inline constexpr std::size_t kMaxTargetFrames = 2000;

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  std::string checkpoint = "checkpoint.dyslat";
  std::size_t max_concurrent = 2;
  std::size_t queue_depth = 4; ///< requests allowed to wait for a slot
  std::size_t griffin_lim_iterations = 60;
  std::uint64_t griffin_lim_seed = 0;
  std::string manifest; ///< corpus for the latent map; empty disables it

  void validate() const {
    require(port >= 0 && port <= 65535, ErrorCode::BadConfig, "port must lie in [0, 65535]");
    require(max_concurrent >= 1, ErrorCode::BadConfig, "max_concurrent must be >= 1");
    require(griffin_lim_iterations >= 1, ErrorCode::BadConfig,
            "griffin_lim_iterations must be >= 1");
  }

  /// The checkpoint path after the environment override.
  std::filesystem::path checkpoint_path() const {
    if (const char *env = std::getenv(kCheckpointEnv); env && *env)
      return env;
    return checkpoint;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ServiceConfig, bind_address, port, checkpoint,
                                                max_concurrent, queue_depth,
                                                griffin_lim_iterations, griffin_lim_seed,
                                                manifest)

// ---------------------------------------------------------------------------
// Snapshot

/// Everything a request reads. Published once, never mutated.
struct Snapshot {
  model::Checkpoint checkpoint;
  data::FeatureExtractor features;
  Eigen::MatrixXd pseudo_inverse; ///< of the filterbank, for mel -> linear
  std::optional<std::string> latent_map; ///< pre-rendered /latent-map body
};

inline std::shared_ptr<const Snapshot>
make_snapshot(model::Checkpoint ck, const std::vector<data::Example> *cache_corpus = nullptr) {
  data::FeatureExtractor features(ck.config.n_mels);
  auto pinv = dsp::filterbank_pseudo_inverse(features.filterbank());
  std::optional<std::string> map;
  if (cache_corpus) {
    const auto report = eval::latent_correlation_report(*cache_corpus, ck.params, ck.config);
    nlohmann::json j = eval::to_json(report);
    map = nlohmann::json{{"points", j.at("points")}, {"speakers", j.at("speakers")}}.dump();
  }
  return std::make_shared<const Snapshot>(
    Snapshot{std::move(ck), std::move(features), std::move(pinv), std::move(map)});
}

/// Loads the checkpoint (honouring DYSLAT_CHECKPOINT) and, when a manifest
/// is configured, builds the latent-map cache from it.
inline std::shared_ptr<const Snapshot> load_snapshot(const ServiceConfig &cfg) {
  auto ck = model::load_checkpoint(cfg.checkpoint_path());
  if (cfg.manifest.empty())
    return make_snapshot(std::move(ck));
  const auto corpus = data::load_examples(cfg.manifest, data::FeatureExtractor(ck.config.n_mels));
  return make_snapshot(std::move(ck), &corpus);
}

// ---------------------------------------------------------------------------
// Admission control

/// At most `active` jobs run at once and at most `queued` more may wait;
/// anything beyond that is turned away.
class AdmissionLimiter {
public:
  AdmissionLimiter(std::size_t active, std::size_t queued)
    : max_active_(active), max_waiting_(queued) {}

  class Ticket {
  public:
    explicit Ticket(AdmissionLimiter *owner) : owner_(owner) {}
    Ticket(Ticket &&o) noexcept : owner_(std::exchange(o.owner_, nullptr)) {}
    Ticket(const Ticket &) = delete;
    Ticket &operator=(const Ticket &) = delete;
    Ticket &operator=(Ticket &&) = delete;
    ~Ticket() {
      if (owner_)
        owner_->release();
    }

  private:
    AdmissionLimiter *owner_;
  };

  /// Blocks while the job is queued; empty when the queue is full.
  std::optional<Ticket> try_enter() {
    std::unique_lock lock(mutex_);
    if (active_ >= max_active_ && waiting_ >= max_waiting_)
      return std::nullopt;
    ++waiting_;
    cv_.wait(lock, [&] { return active_ < max_active_; });
    --waiting_;
    ++active_;
    return Ticket(this);
  }

  std::size_t active() const {
    std::lock_guard lock(mutex_);
    return active_;
  }

  std::size_t waiting() const {
    std::lock_guard lock(mutex_);
    return waiting_;
  }

private:
  void release() {
    {
      std::lock_guard lock(mutex_);
      --active_;
    }
    cv_.notify_one();
  }

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t max_active_, max_waiting_;
  std::size_t active_ = 0, waiting_ = 0;
};

// ---------------------------------------------------------------------------
// Handlers

struct Reply {
  int status = 200;
  std::string body; ///< JSON
};

inline std::string snake_case(std::string_view camel) {
  std::string out;
  for (char c : camel) {
    if (std::isupper(static_cast<unsigned char>(c))) {
      if (!out.empty())
        out += '_';
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      out += c;
    }
  }
  return out;
}

inline Reply error_reply(int status, std::string code, std::string message) {
  return {status, nlohmann::json{{"code", std::move(code)}, {"message", std::move(message)}}.dump()};
}

/// Maps a module error onto an HTTP status: too-short input and empty
/// transcripts are 422, everything else the client sent is 400.
inline Reply error_reply(const Error &e) {
  int status = 400;
  if (e.code() == ErrorCode::InputTooShort || e.code() == ErrorCode::EmptySequence)
    status = 422;
  return error_reply(status, snake_case(to_string(e.code())), e.what());
}

inline Reply busy_reply() {
  return error_reply(503, "over_capacity", "too many concurrent requests, retry later");
}

struct ReconstructRequest {
  std::string transcript;
  model::LatentPoint latent;
  std::size_t target_frames = 0;
  bool want_audio = false;
};

/// Validates the JSON body of /reconstruct; malformed fields are ParseError
/// (400), an empty transcript EmptySequence (422).
inline ReconstructRequest parse_reconstruct_request(const std::string &body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error &e) {
    fail(ErrorCode::ParseError, std::string("request body is not JSON: ") + e.what());
  }
  require(j.is_object(), ErrorCode::ParseError, "request body must be a JSON object");
  ReconstructRequest r;
  require(j.contains("transcript") && j["transcript"].is_string(), ErrorCode::ParseError,
          "field 'transcript' must be a string");
  r.transcript = j["transcript"].get<std::string>();
  require(j.contains("latent") && j["latent"].is_array() && j["latent"].size() == 2 &&
            j["latent"][0].is_number() && j["latent"][1].is_number(),
          ErrorCode::ParseError, "field 'latent' must be an array of two numbers");
  r.latent = {j["latent"][0].get<double>(), j["latent"][1].get<double>()};
  require(std::isfinite(r.latent.l1) && std::isfinite(r.latent.l2), ErrorCode::ParseError,
          "field 'latent' must be finite");
  require(j.contains("target_frames") && j["target_frames"].is_number_integer(),
          ErrorCode::ParseError, "field 'target_frames' must be an integer");
  const auto frames = j["target_frames"].get<std::int64_t>();
  require(frames >= 1 && frames <= static_cast<std::int64_t>(kMaxTargetFrames),
          ErrorCode::ParseError,
          "field 'target_frames' must lie in [1, " + std::to_string(kMaxTargetFrames) + "]");
  r.target_frames = static_cast<std::size_t>(frames);
  if (j.contains("want_audio")) {
    require(j["want_audio"].is_boolean(), ErrorCode::ParseError,
            "field 'want_audio' must be a boolean");
    r.want_audio = j["want_audio"].get<bool>();
  }
  require(!data::normalize_transcript(r.transcript).empty(), ErrorCode::EmptySequence,
          "transcript is empty after normalisation");
  return r;
}

/// Mel to waveform: pseudo-inverse back to linear magnitudes, then seeded
/// Griffin-Lim, peak-normalised.
inline dsp::AudioClip vocode(const dsp::MelSpectrogram &mel, const Snapshot &snap,
                             std::size_t iterations, std::uint64_t seed) {
  const auto magnitude = dsp::mel_to_linear(mel, snap.pseudo_inverse);
  auto result = dsp::griffin_lim(magnitude, snap.features.stft(), iterations, seed,
                                 snap.features.sample_rate());
  return dsp::peak_normalized(std::move(result.clip));
}

class Service {
public:
  Service(ServiceConfig cfg, std::shared_ptr<const Snapshot> snapshot)
    : cfg_(std::move(cfg)), snapshot_(std::move(snapshot)),
      limiter_(cfg_.max_concurrent, cfg_.queue_depth) {
    cfg_.validate();
    require(snapshot_ != nullptr, ErrorCode::BadConfig, "service needs a model snapshot");
  }

  const ServiceConfig &config() const { return cfg_; }

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
  }

  /// Requests already in flight finish on the snapshot they started with.
  void swap_snapshot(std::shared_ptr<const Snapshot> next) {
    require(next != nullptr, ErrorCode::BadConfig, "cannot swap in an empty snapshot");
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
  }

  void reload() { swap_snapshot(load_snapshot(cfg_)); }

  AdmissionLimiter &limiter() { return limiter_; }

  Reply analyze(const std::vector<std::uint8_t> &wav, const std::string &transcript) {
    auto ticket = limiter_.try_enter();
    if (!ticket)
      return busy_reply();
    const auto snap = snapshot();
    try {
      require(!data::normalize_transcript(transcript).empty(), ErrorCode::ParseError,
              "transcript must be non-empty");
      const auto clip = dsp::parse_wav(wav, snap->features.sample_rate());
      const auto n_frames = snap->features.frames_for(clip.samples.size());
      require(n_frames >= model::kMinFrames, ErrorCode::InputTooShort,
              "clip has " + std::to_string(n_frames) + " frames, need at least " +
                std::to_string(model::kMinFrames));
      const auto mel = snap->features(clip);
      const auto latent = model::encode_audio(mel, snap->checkpoint.params, snap->checkpoint.config);
      const auto detection = model::detect(latent, snap->checkpoint.params);
      return {200, nlohmann::json{{"p_dysarthric", detection.p_dysarthric},
                                  {"latent", {latent.l1, latent.l2}},
                                  {"n_frames", n_frames}}
                     .dump()};
    } catch (const Error &e) {
      return error_reply(e);
    }
  }

  Reply reconstruct(const std::string &body) {
    ReconstructRequest req;
    try {
      req = parse_reconstruct_request(body);
    } catch (const Error &e) {
      return error_reply(e);
    }
    auto ticket = limiter_.try_enter();
    if (!ticket)
      return busy_reply();
    const auto snap = snapshot();
    try {
      const auto &ck = snap->checkpoint;
      const auto mel = model::reconstruct_with_latent(data::encode_transcript(req.transcript),
                                                      req.latent, req.target_frames, ck.params,
                                                      ck.config);
      nlohmann::json out{{"mel", base64_encode(dsp::encode_mels(mel))}};
      if (req.want_audio) {
        const auto clip =
          vocode(mel, *snap, cfg_.griffin_lim_iterations, cfg_.griffin_lim_seed);
        out["wav"] = base64_encode(dsp::encode_wav(clip));
      }
      return {200, out.dump()};
    } catch (const Error &e) {
      return error_reply(e);
    }
  }

  Reply latent_map() const {
    const auto snap = snapshot();
    if (!snap->latent_map)
      return error_reply(404, "no_latent_cache",
                         "the server was started without an evaluation corpus");
    return {200, *snap->latent_map};
  }

  /// Registers the endpoints and JSON error bodies on an httplib server.
  void mount(httplib::Server &server) {
    auto send = [](httplib::Response &res, const Reply &r) {
      res.status = r.status;
      res.set_content(r.body, "application/json");
    };
    server.Post("/analyze", [this, send](const httplib::Request &req, httplib::Response &res) {
      if (!req.is_multipart_form_data() || !req.has_file("wav") || !req.has_file("transcript")) {
        send(res, error_reply(400, "bad_request",
                              "expected multipart/form-data with parts 'wav' and 'transcript'"));
        return;
      }
      const auto &wav = req.get_file_value("wav").content;
      send(res, analyze(std::vector<std::uint8_t>(wav.begin(), wav.end()),
                        req.get_file_value("transcript").content));
    });
    server.Post("/reconstruct", [this, send](const httplib::Request &req, httplib::Response &res) {
      send(res, reconstruct(req.body));
    });
    server.Get("/latent-map", [this, send](const httplib::Request &, httplib::Response &res) {
      send(res, latent_map());
    });
    server.set_error_handler([send](const httplib::Request &req, httplib::Response &res) {
      if (!res.body.empty())
        return;
      send(res, error_reply(res.status, res.status == 404 ? "not_found" : "http_error",
                            res.status == 404 ? "no route for " + req.method + " " + req.path
                                              : std::string(httplib::status_message(res.status))));
    });
    server.set_exception_handler(
      [send](const httplib::Request &, httplib::Response &res, std::exception_ptr ep) {
        std::string what = "unexpected error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception &e) {
          what = e.what();
        } catch (...) {
        }
        send(res, error_reply(500, "internal", what));
      });
  }

private:
  ServiceConfig cfg_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
  AdmissionLimiter limiter_;
};

/// An httplib server bound to a Service, listening on a background thread.
class HttpServer {
public:
  explicit HttpServer(Service &service) : service_(service) {
    service_.mount(server_);
    server_.set_payload_max_length(64u << 20);
  }
  ~HttpServer() { stop(); }

  /// Binds (port 0 picks a free port) and returns the bound port.
  int start() {
    const auto &cfg = service_.config();
    port_ = cfg.port == 0 ? server_.bind_to_any_port(cfg.bind_address)
                          : (server_.bind_to_port(cfg.bind_address, cfg.port) ? cfg.port : -1);
    require(port_ > 0, ErrorCode::IoError,
            "cannot bind " + cfg.bind_address + ":" + std::to_string(cfg.port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }

private:
  Service &service_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

} // namespace dyslat::service
