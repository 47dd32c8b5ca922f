// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include <dyslat/service/base64.hpp>
#include <dyslat/service/cli.hpp>
#include <dyslat/service/server.hpp>

using namespace dyslat;
using namespace dyslat::service;
using nlohmann::json;

namespace {

model::ModelConfig tiny_model() { return model::ModelConfig::reduced(); }

data::SyntheticCorpusConfig tiny_corpus() {
  data::SyntheticCorpusConfig c;
  c.n_speakers_per_class = 2;
  c.severity = {0.5, 0.9};
  c.words = {"up", "go", "stop"};
  return c;
}

std::vector<data::Example> tiny_examples() {
  return data::featurize(data::generate_synthetic_corpus(tiny_corpus()),
                         data::FeatureExtractor(tiny_model().n_mels));
}

/// A small model trained for a few epochs; shared by the whole suite.
const model::Checkpoint &trained() {
  static const model::Checkpoint ck = [] {
    train::TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 6;
    tc.seed = 5;
    auto r = train::train(tiny_examples(), tiny_model(), tc);
    return model::Checkpoint{tiny_model(), std::move(r.params), tc.seed};
  }();
  return ck;
}

std::vector<std::uint8_t> wav_of(std::size_t samples, double amplitude = 0.3, double hz = 220.0) {
  dsp::AudioClip clip;
  clip.sample_rate = dsp::kDefaultSampleRate;
  for (std::size_t i = 0; i < samples; ++i)
    clip.samples.push_back(amplitude * std::sin(2.0 * 3.141592653589793 * hz *
                                                static_cast<double>(i) / clip.sample_rate));
  return dsp::encode_wav(clip);
}

ServiceConfig service_config() {
  ServiceConfig c;
  c.port = 0;
  c.griffin_lim_iterations = 8;
  return c;
}

json reconstruct_body(double d1, double d2 = -0.1, std::size_t frames = 40, bool audio = false) {
  return {{"transcript", "up"}, {"latent", {d1, d2}}, {"target_frames", frames},
          {"want_audio", audio}};
}

std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("dyslat_service_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dyslat");
  std::vector<const char *> argv;
  for (const auto &a : args)
    argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = Cli(out, err).run(static_cast<int>(argv.size()), argv.data());
  return {code, out.str(), err.str()};
}

std::filesystem::path write_tiny_config(const std::filesystem::path &dir) {
  json j{{"model", tiny_model()},
         {"train", {{"epochs", 2}, {"batch_size", 6}}},
         {"synthetic", tiny_corpus()},
         {"out_dir", (dir / "run").string()},
         {"checkpoint", (dir / "run" / "checkpoint.dyslat").string()}};
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

} // namespace

// ---------------------------------------------------------------------------
// Base64

TEST(Base64, Rfc4648Vectors) {
  const std::pair<const char *, const char *> cases[] = {
    {"", ""},         {"f", "Zg=="},        {"fo", "Zm8="},       {"foo", "Zm9v"},
    {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"}};
  for (const auto &[plain, encoded] : cases) {
    const std::string p(plain);
    const std::vector<std::uint8_t> bytes(p.begin(), p.end());
    EXPECT_EQ(base64_encode(bytes), encoded);
    EXPECT_EQ(base64_decode(encoded), bytes);
  }
}

TEST(Base64, RoundTripProperty) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> bytes(rng.below(300));
    for (auto &b : bytes)
      b = static_cast<std::uint8_t>(rng.below(256));
    const auto text = base64_encode(bytes);
    EXPECT_EQ(text.size() % 4, 0u);
    EXPECT_EQ(base64_decode(text), bytes);
  }
}

TEST(Base64, RejectsMalformed) {
  EXPECT_THROW(base64_decode("abc"), Error);
  EXPECT_THROW(base64_decode("ab!d"), Error);
}

// ---------------------------------------------------------------------------
// Admission

TEST(Admission, CapAndQueue) {
  AdmissionLimiter limiter(1, 0);
  {
    auto a = limiter.try_enter();
    ASSERT_TRUE(a.has_value());
    EXPECT_EQ(limiter.active(), 1u);
    EXPECT_FALSE(limiter.try_enter().has_value());
  }
  EXPECT_EQ(limiter.active(), 0u);
  EXPECT_TRUE(limiter.try_enter().has_value());
}

TEST(Admission, QueuedJobRunsAfterRelease) {
  AdmissionLimiter limiter(1, 1);
  auto first = limiter.try_enter();
  std::atomic<bool> entered{false};
  std::thread waiter([&] {
    auto t = limiter.try_enter();
    entered = t.has_value();
  });
  while (limiter.waiting() == 0)
    std::this_thread::yield();
  // one running, one queued: the next caller is turned away
  EXPECT_FALSE(limiter.try_enter().has_value());
  EXPECT_FALSE(entered.load());
  first.reset();
  waiter.join();
  EXPECT_TRUE(entered.load());
}

TEST(Admission, NeverExceedsCapUnderLoad) {
  AdmissionLimiter limiter(2, 100);
  std::atomic<int> running{0}, peak{0}, served{0};
  std::vector<std::thread> pool;
  for (int i = 0; i < 16; ++i)
    pool.emplace_back([&] {
      auto t = limiter.try_enter();
      if (!t)
        return;
      const int now = ++running;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
      --running;
      ++served;
    });
  for (auto &t : pool)
    t.join();
  EXPECT_LE(peak.load(), 2);
  EXPECT_EQ(served.load(), 16);
}

// ---------------------------------------------------------------------------
// Handlers

class ServiceTest : public ::testing::Test {
protected:
  ServiceTest() : service(service_config(), make_snapshot(trained())) {}
  Service service;
};

TEST_F(ServiceTest, AnalyzeSilentClip) {
  const auto r = service.analyze(wav_of(16000, 0.0), "up");
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = json::parse(r.body);
  EXPECT_TRUE(std::isfinite(j["latent"][0].get<double>()));
  EXPECT_TRUE(std::isfinite(j["latent"][1].get<double>()));
  EXPECT_EQ(j["n_frames"], 77);
  const double p = j["p_dysarthric"];
  EXPECT_GT(p, 0.0);
  EXPECT_LT(p, 1.0);
}

TEST_F(ServiceTest, AnalyzeMatchesModel) {
  const auto wav = wav_of(12000);
  const auto j = json::parse(service.analyze(wav, "go").body);
  const auto &ck = trained();
  const auto mel = data::FeatureExtractor(ck.config.n_mels)(dsp::parse_wav(wav));
  const auto l = model::encode_audio(mel, ck.params, ck.config);
  EXPECT_EQ(j["latent"][0].get<double>(), l.l1);
  EXPECT_EQ(j["latent"][1].get<double>(), l.l2);
  EXPECT_EQ(j["p_dysarthric"].get<double>(), model::detect(l, ck.params).p_dysarthric);
}

TEST_F(ServiceTest, AnalyzeShortClipIs422) {
  const auto r = service.analyze(wav_of(1600), "up");
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(json::parse(r.body)["code"], "input_too_short");
  // 27 frames: one short of the minimum
  const auto n27 = dsp::StftConfig{}.signal_length(27);
  EXPECT_EQ(service.analyze(wav_of(n27), "up").status, 422);
  EXPECT_EQ(service.analyze(wav_of(n27 + 200), "up").status, 200);
}

TEST_F(ServiceTest, AnalyzeMalformedIs400) {
  const std::vector<std::uint8_t> junk{'R', 'I', 'F', 'F', 1, 2, 3};
  auto r = service.analyze(junk, "up");
  EXPECT_EQ(r.status, 400);
  const auto j = json::parse(r.body);
  EXPECT_EQ(j["code"], "parse_error");
  EXPECT_TRUE(j["message"].is_string());
  EXPECT_EQ(service.analyze(wav_of(16000), "").status, 400);
  EXPECT_EQ(service.analyze(wav_of(16000), "?!").status, 400);
}

TEST_F(ServiceTest, AnalyzeIsIdempotent) {
  const auto wav = wav_of(20000, 0.4, 300.0);
  EXPECT_EQ(service.analyze(wav, "up").body, service.analyze(wav, "up").body);
}

TEST_F(ServiceTest, ReconstructMatchesModel) {
  const auto r = service.reconstruct(reconstruct_body(0.5).dump());
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = json::parse(r.body);
  EXPECT_FALSE(j.contains("wav"));
  const auto mel = dsp::decode_mels(base64_decode(j["mel"].get<std::string>()));
  const auto &ck = trained();
  const auto want = model::reconstruct_with_latent(data::encode_transcript("up"), {0.5, -0.1},
                                                   40, ck.params, ck.config);
  ASSERT_EQ(mel.values.rows(), want.values.rows());
  ASSERT_EQ(mel.values.cols(), 40);
  EXPECT_EQ(mel.values, want.values.cast<float>().cast<double>());
}

TEST_F(ServiceTest, SweepGivesDistinctBlobs) {
  std::set<std::string> blobs;
  for (double d1 : {-0.5, 0.0, 0.5, 1.0, 1.5}) {
    const auto r = service.reconstruct(reconstruct_body(d1).dump());
    ASSERT_EQ(r.status, 200);
    blobs.insert(json::parse(r.body)["mel"].get<std::string>());
  }
  EXPECT_EQ(blobs.size(), 5u);
}

TEST_F(ServiceTest, ReconstructWithAudioIsSeeded) {
  const auto body = reconstruct_body(1.0, -0.1, 30, true).dump();
  const auto a = service.reconstruct(body), b = service.reconstruct(body);
  ASSERT_EQ(a.status, 200);
  EXPECT_EQ(a.body, b.body);
  const auto clip = dsp::parse_wav(base64_decode(json::parse(a.body)["wav"].get<std::string>()));
  EXPECT_EQ(clip.samples.size(), dsp::StftConfig{}.signal_length(30));
}

TEST_F(ServiceTest, ReconstructValidation) {
  EXPECT_EQ(service.reconstruct(reconstruct_body(0, 0, 1).dump()).status, 200);
  EXPECT_EQ(service.reconstruct(reconstruct_body(0, 0, 2000).dump()).status, 200);
  EXPECT_EQ(service.reconstruct(reconstruct_body(0, 0, 0).dump()).status, 400);
  EXPECT_EQ(service.reconstruct(reconstruct_body(0, 0, 2001).dump()).status, 400);

  auto body = reconstruct_body(0);
  body["transcript"] = "";
  EXPECT_EQ(service.reconstruct(body.dump()).status, 422);
  body["transcript"] = "123";
  EXPECT_EQ(service.reconstruct(body.dump()).status, 422);

  EXPECT_EQ(service.reconstruct("{not json").status, 400);
  EXPECT_EQ(service.reconstruct("[1,2]").status, 400);
  body = reconstruct_body(0);
  body["latent"] = {1.0};
  EXPECT_EQ(service.reconstruct(body.dump()).status, 400);
  body["latent"] = {1.0, "x"};
  EXPECT_EQ(service.reconstruct(body.dump()).status, 400);
  body = reconstruct_body(0);
  body["target_frames"] = 4.5;
  EXPECT_EQ(service.reconstruct(body.dump()).status, 400);
  body = reconstruct_body(0);
  body["want_audio"] = "yes";
  EXPECT_EQ(service.reconstruct(body.dump()).status, 400);
  body.erase("want_audio");
  EXPECT_EQ(service.reconstruct(body.dump()).status, 200);
}

TEST_F(ServiceTest, OverCapacityIs503) {
  ServiceConfig cfg = service_config();
  cfg.max_concurrent = 1;
  cfg.queue_depth = 0;
  Service busy(cfg, make_snapshot(trained()));
  auto hold = busy.limiter().try_enter();
  const auto a = busy.analyze(wav_of(16000), "up");
  EXPECT_EQ(a.status, 503);
  EXPECT_EQ(json::parse(a.body)["code"], "over_capacity");
  EXPECT_EQ(busy.reconstruct(reconstruct_body(0).dump()).status, 503);
  // validation failures are reported without taking a slot
  EXPECT_EQ(busy.reconstruct(reconstruct_body(0, 0, 0).dump()).status, 400);
  hold.reset();
  EXPECT_EQ(busy.analyze(wav_of(16000), "up").status, 200);
}

TEST_F(ServiceTest, LatentMapNeedsCache) {
  const auto r = service.latent_map();
  EXPECT_EQ(r.status, 404);
  EXPECT_EQ(json::parse(r.body)["code"], "no_latent_cache");
}

TEST(LatentMap, PointsAndSpeakerMeans) {
  const auto examples = tiny_examples();
  Service svc(service_config(), make_snapshot(trained(), &examples));
  const auto r = svc.latent_map();
  ASSERT_EQ(r.status, 200);
  const auto j = json::parse(r.body);
  ASSERT_EQ(j["points"].size(), examples.size());
  EXPECT_EQ(j["speakers"].size(), 4u);
  for (const auto &s : j["speakers"]) {
    double l1 = 0.0, l2 = 0.0;
    int n = 0;
    for (const auto &p : j["points"])
      if (p["speaker"] == s["speaker"]) {
        l1 += p["l1"].get<double>();
        l2 += p["l2"].get<double>();
        ++n;
      }
    EXPECT_EQ(n, s["words"].get<int>());
    EXPECT_NEAR(s["l1"].get<double>(), l1 / n, 1e-12);
    EXPECT_NEAR(s["l2"].get<double>(), l2 / n, 1e-12);
  }
  const auto &p0 = j["points"][0];
  for (const char *key : {"speaker", "word", "l1", "l2", "label", "intelligibility"})
    EXPECT_TRUE(p0.contains(key)) << key;
  // rebuilt from scratch: byte-identical
  EXPECT_EQ(make_snapshot(trained(), &examples)->latent_map, svc.snapshot()->latent_map);
  std::ofstream("latent_map_sample.json") << j.dump(2);
}

TEST(Snapshot, SwapIsAtomicAndInFlightKeepsItsModel) {
  Service svc(service_config(), make_snapshot(trained()));
  const auto before = svc.reconstruct(reconstruct_body(0.5).dump()).body;
  const auto old = svc.snapshot();
  auto other = trained();
  other.params = model::init_params(other.config, 99);
  svc.swap_snapshot(make_snapshot(other));
  EXPECT_NE(svc.reconstruct(reconstruct_body(0.5).dump()).body, before);
  EXPECT_EQ(old->checkpoint.params.names(), trained().params.names());
  svc.swap_snapshot(old);
  EXPECT_EQ(svc.reconstruct(reconstruct_body(0.5).dump()).body, before);
  EXPECT_THROW(svc.swap_snapshot(nullptr), Error);
}

TEST(Snapshot, ReloadFromCheckpointFile) {
  const auto dir = scratch_dir("reload");
  ServiceConfig cfg = service_config();
  cfg.checkpoint = (dir / "a.dyslat").string();
  model::save_checkpoint(cfg.checkpoint, trained());
  Service svc(cfg, load_snapshot(cfg));
  const auto before = svc.reconstruct(reconstruct_body(0.0).dump()).body;
  auto other = trained();
  other.params = model::init_params(other.config, 42);
  model::save_checkpoint(cfg.checkpoint, other);
  EXPECT_EQ(svc.reconstruct(reconstruct_body(0.0).dump()).body, before);
  svc.reload();
  EXPECT_NE(svc.reconstruct(reconstruct_body(0.0).dump()).body, before);
  std::filesystem::remove_all(dir);
}

TEST(ServiceConfigTest, JsonAndEnvironmentOverride) {
  ServiceConfig c;
  c.max_concurrent = 3;
  c.manifest = "m.tsv";
  const auto back = json(c).get<ServiceConfig>();
  EXPECT_EQ(back.max_concurrent, 3u);
  EXPECT_EQ(back.manifest, "m.tsv");
  EXPECT_EQ(back.griffin_lim_iterations, 60u);
  ::unsetenv(kCheckpointEnv);
  EXPECT_EQ(c.checkpoint_path(), c.checkpoint);
  ::setenv(kCheckpointEnv, "/elsewhere/model.dyslat", 1);
  EXPECT_EQ(c.checkpoint_path(), "/elsewhere/model.dyslat");
  ::unsetenv(kCheckpointEnv);
  c.max_concurrent = 0;
  EXPECT_THROW(c.validate(), Error);
}

// ---------------------------------------------------------------------------
// Over HTTP

class HttpTest : public ::testing::Test {
protected:
  HttpTest()
    : examples(tiny_examples()),
      service(service_config(), make_snapshot(trained(), &examples)), server(service) {
    port = server.start();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }

  std::vector<data::Example> examples;
  Service service;
  HttpServer server;
  int port = 0;
};

TEST_F(HttpTest, AnalyzeMultipart) {
  const auto wav = wav_of(16000);
  httplib::MultipartFormDataItems form{
    {"wav", std::string(wav.begin(), wav.end()), "clip.wav", "audio/wav"},
    {"transcript", "up", "", ""}};
  auto c = client();
  auto r = c.Post("/analyze", form);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(r->body, service.analyze(wav, "up").body);
  auto again = c.Post("/analyze", form);
  EXPECT_EQ(again->body, r->body);

  const auto short_wav = wav_of(1600);
  httplib::MultipartFormDataItems short_form{
    {"wav", std::string(short_wav.begin(), short_wav.end()), "s.wav", "audio/wav"},
    {"transcript", "up", "", ""}};
  EXPECT_EQ(c.Post("/analyze", short_form)->status, 422);

  auto raw = c.Post("/analyze", "not a form", "text/plain");
  EXPECT_EQ(raw->status, 400);
  EXPECT_EQ(json::parse(raw->body)["code"], "bad_request");
}

TEST_F(HttpTest, ReconstructAndLatentMap) {
  auto c = client();
  const auto body = reconstruct_body(1.5, -0.1, 24, true).dump();
  auto a = c.Post("/reconstruct", body, "application/json");
  auto b = c.Post("/reconstruct", body, "application/json");
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->status, 200);
  EXPECT_EQ(a->body, b->body);
  EXPECT_TRUE(json::parse(a->body).contains("wav"));
  EXPECT_EQ(c.Post("/reconstruct", reconstruct_body(0, 0, 5000).dump(), "application/json")->status,
            400);

  auto map = c.Get("/latent-map");
  ASSERT_TRUE(map);
  EXPECT_EQ(map->status, 200);
  EXPECT_EQ(json::parse(map->body)["points"].size(), examples.size());
  EXPECT_EQ(c.Get("/latent-map")->body, map->body);
}

TEST_F(HttpTest, UnknownRouteIsJson404) {
  auto r = client().Get("/nope");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 404);
  const auto j = json::parse(r->body);
  EXPECT_EQ(j["code"], "not_found");
  EXPECT_TRUE(j.contains("message"));
}

TEST_F(HttpTest, ConcurrentRequestsAgree) {
  const auto wav = wav_of(16000, 0.2, 180.0);
  const auto expected_analyze = service.analyze(wav, "stop").body;
  const auto body = reconstruct_body(0.25).dump();
  const auto expected_reconstruct = service.reconstruct(body).body;
  std::atomic<int> ok{0}, busy{0}, wrong{0};
  std::vector<std::thread> pool;
  for (int i = 0; i < 6; ++i)
    pool.emplace_back([&, i] {
      auto c = client();
      httplib::Result r;
      if (i % 2) {
        r = c.Post("/reconstruct", body, "application/json");
      } else {
        httplib::MultipartFormDataItems form{
          {"wav", std::string(wav.begin(), wav.end()), "c.wav", "audio/wav"},
          {"transcript", "stop", "", ""}};
        r = c.Post("/analyze", form);
      }
      if (!r)
        ++wrong;
      else if (r->status == 503)
        ++busy;
      else if (r->status == 200 &&
               r->body == (i % 2 ? expected_reconstruct : expected_analyze))
        ++ok;
      else
        ++wrong;
    });
  for (auto &t : pool)
    t.join();
  EXPECT_EQ(wrong.load(), 0);
  EXPECT_EQ(ok.load() + busy.load(), 6);
  EXPECT_GE(ok.load(), 1);
}

// ---------------------------------------------------------------------------
// CLI

TEST(Cli, TrainTwiceGivesIdenticalCheckpoints) {
  const auto dir = scratch_dir("train");
  const auto cfg = write_tiny_config(dir).string();
  const auto a = cli({"train", "--config", cfg, "--synthetic", "--seed", "7"});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = cli({"--config", cfg, "--synthetic", "--seed", "7", "train"});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("fnv1a"), std::string::npos);
  const auto c = cli({"train", "--config", cfg, "--synthetic", "--seed", "8"});
  EXPECT_NE(c.out, a.out);
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "train_report.json"));
  const auto report = json::parse(std::ifstream(dir / "run" / "train_report.json"));
  EXPECT_EQ(report["epochs"].size(), 2u);
  std::filesystem::remove_all(dir);
}

TEST(Cli, UserErrorsExitOne) {
  const auto missing = cli({"train", "--manifest", "/no/such/manifest.tsv"});
  EXPECT_EQ(missing.code, kExitUser);
  EXPECT_NE(missing.err.find("/no/such/manifest.tsv"), std::string::npos);
  EXPECT_EQ(cli({"train"}).code, kExitUser);
  EXPECT_EQ(cli({}).code, kExitUser);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUser);
  EXPECT_EQ(cli({"--config", "/no/such.json", "train"}).code, kExitUser);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);

  const auto dir = scratch_dir("badcfg");
  std::ofstream(dir / "typo.json") << R"({"trian": {}})";
  const auto typo = cli({"--config", (dir / "typo.json").string(), "--synthetic", "train"});
  EXPECT_EQ(typo.code, kExitUser);
  EXPECT_NE(typo.err.find("trian"), std::string::npos);
  std::ofstream(dir / "bad.json") << R"({"train": {"learning_rate": -1}})";
  EXPECT_EQ(cli({"--config", (dir / "bad.json").string(), "--synthetic", "train"}).code,
            kExitUser);
  std::filesystem::remove_all(dir);
}

TEST(Cli, InferenceCommandsHonourCheckpointOverride) {
  const auto dir = scratch_dir("infer");
  const auto cfg = write_tiny_config(dir).string();
  const auto ck = (dir / "elsewhere.dyslat").string();
  model::save_checkpoint(ck, trained());
  const auto wav = (dir / "clip.wav").string();
  dsp::write_file(wav, wav_of(16000));

  ::unsetenv(kCheckpointEnv);
  EXPECT_EQ(cli({"detect", "--config", cfg, "--wav", wav}).code, kExitUser);
  ::setenv(kCheckpointEnv, ck.c_str(), 1);
  const auto d = cli({"detect", "--config", cfg, "--wav", wav});
  ASSERT_EQ(d.code, kExitOk) << d.err;
  // checkpoints hold float32 weights, so compare against the reloaded model
  Service svc(service_config(), make_snapshot(model::load_checkpoint(ck)));
  EXPECT_EQ(json::parse(d.out), json::parse(svc.analyze(wav_of(16000), "up").body));

  const auto out = (dir / "r.mels").string();
  const auto r = cli({"reconstruct", "--config", cfg, "--transcript", "up", "--latent", "0.5",
                      "-0.1", "--frames", "40", "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto blob = json::parse(svc.reconstruct(reconstruct_body(0.5).dump()).body)["mel"];
  EXPECT_EQ(base64_encode(dsp::read_file(out)), blob.get<std::string>());
  EXPECT_EQ(cli({"reconstruct", "--config", cfg, "--transcript", "up", "--out", out}).code,
            kExitUser);

  const auto s = cli({"sweep", "--config", cfg, "--transcript", "up", "--frames", "40",
                      "--out-dir", (dir / "sweep").string()});
  ASSERT_EQ(s.code, kExitOk) << s.err;
  std::set<std::string> blobs;
  for (const auto &e : std::filesystem::directory_iterator(dir / "sweep"))
    blobs.insert(base64_encode(dsp::read_file(e.path())));
  EXPECT_EQ(blobs.size(), 5u);
  EXPECT_TRUE(blobs.count(blob.get<std::string>()));
  ::unsetenv(kCheckpointEnv);
  std::filesystem::remove_all(dir);
}

TEST(Cli, EvalLosoWritesReport) {
  const auto dir = scratch_dir("loso");
  const auto cfg = write_tiny_config(dir).string();
  const auto r = cli({"eval-loso", "--config", cfg, "--synthetic"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("Word level"), std::string::npos);
  EXPECT_NE(r.out.find("Speaker level"), std::string::npos);
  const auto report = json::parse(std::ifstream(dir / "run" / "eval_report.json"));
  EXPECT_EQ(report["folds"].size(), 4u);
  EXPECT_EQ(report["word"]["n"], 12);
  EXPECT_EQ(report["speaker"]["n"], 4);
  EXPECT_EQ(report["correlation"]["points"].size(), 12u);
  std::filesystem::copy_file(dir / "run" / "eval_report.json", "eval_report_cli.json",
                             std::filesystem::copy_options::overwrite_existing);
  const auto preds = eval::load_predictions(dir / "run" / "predictions.tsv");
  EXPECT_EQ(preds.size(), 12u);
  std::filesystem::remove_all(dir);
}
