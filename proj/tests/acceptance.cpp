// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per primary criterion.
//
//   acceptance [--only 1,5,...]
//
// Exit status is 0 only when every selected criterion passes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <dyslat/data/dataset.hpp>
#include <dyslat/data/synthetic.hpp>
#include <dyslat/dsp/audio.hpp>
#include <dyslat/dsp/griffin_lim.hpp>
#include <dyslat/dsp/stft.hpp>
#include <dyslat/eval/latent.hpp>
#include <dyslat/eval/loso.hpp>
#include <dyslat/eval/stats.hpp>
#include <dyslat/model/checkpoint.hpp>
#include <dyslat/model/network.hpp>
#include <dyslat/service/server.hpp>
#include <dyslat/train/loss.hpp>
#include <dyslat/train/trainer.hpp>

// after Eigen: <resolv.h> defines a _res macro
#include <httplib.h>

#include "gradcheck.hpp"
#include "signals.hpp"
#include "stats_oracle.hpp"

using namespace dyslat;
using nn::Graph;
using nn::Shape;
using nn::Tensor;
using nn::Var;
using test_grad::check_gradients;
using test_grad::random_tensor;
using test_grad::weighted_sum;

namespace {

// Pinned tolerances and budgets.
constexpr double kPrimitiveTolerance = 1e-4;
constexpr double kEndToEndTolerance = 1e-3;
constexpr int kInstances = 10;
constexpr double kGradientBudgetSeconds = 120.0;
constexpr double kGriffinLimBudgetSeconds = 60.0;
constexpr double kGriffinLimReduction = 5.0;
constexpr double kPValueTolerance = 1e-6;
constexpr double kMinWordAccuracy = 0.90;
constexpr double kMinAbsCorrelation = 0.7;
constexpr double kMaxCorrelationP = 0.05;
constexpr double kLosoBudgetSeconds = 1800.0;
constexpr double kHandLoss = 0.6116;
constexpr double kHandLossTolerance = 1e-4;

// Training used for the synthetic corpus.
constexpr std::size_t kEpochs = 20;
constexpr std::uint64_t kTrainSeed = 1;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

train::TrainConfig synthetic_training() {
  train::TrainConfig tc;
  tc.epochs = kEpochs;
  tc.seed = kTrainSeed;
  tc.checkpoint_every = kEpochs;
  return tc;
}

const model::ModelConfig &full_config() {
  static const model::ModelConfig c;
  return c;
}

/// The default 8-speaker, 20-word synthetic corpus at full feature width.
const std::vector<data::Example> &synthetic_corpus() {
  static const auto ex = data::featurize(data::generate_synthetic_corpus({}),
                                         data::FeatureExtractor(full_config().n_mels));
  return ex;
}

/// A model trained on every synthetic speaker.
const model::Checkpoint &synthetic_checkpoint() {
  static const model::Checkpoint ck = [] {
    auto trained = train::train(synthetic_corpus(), full_config(), synthetic_training());
    // round-trip through the archive so the model is exactly what a file holds
    return model::decode_checkpoint(model::encode_checkpoint(
      {full_config(), std::move(trained.params), kTrainSeed}));
  }();
  return ck;
}

// ---------------------------------------------------------------------------
// 1. Gradient integrity

struct GradTally {
  double worst = 0.0;
  std::size_t instances = 0;
  bool pass = true;

  void add(const test_grad::GradCheckResult &r) {
    worst = std::max(worst, r.max_relative_error);
    ++instances;
    pass = pass && r.max_relative_error < kPrimitiveTolerance && r.checked > 0;
  }
};

double end_to_end_error(std::size_t &checked) {
  const auto c = model::ModelConfig::reduced();
  nn::ParamStore p = model::init_params(c, 21);
  Rng rng(22);
  for (const auto &name : p.names())
    if (name.ends_with("/bias") || name.ends_with("/b"))
      p.value(name) = random_tensor(p.value(name).shape(), rng, -0.1, 0.1);
  const Tensor mel = random_tensor({c.n_mels, 30}, rng, -1.5, 1.5);
  const Tensor text = data::encode_transcript("tab").matrix;
  auto loss = [&](nn::ParamStore *grads) {
    Graph g;
    auto vars = model::forward(g, p, mel, text, c, nn::Mode::train, 77);
    auto l = train::joint_loss(vars.probs, 1, vars.mel, mel, 0.5);
    if (grads) {
      g.backward(l.total);
      g.accumulate_parameter_grads(*grads);
    }
    return l.total.value()[0];
  };
  loss(&p);
  const double h = 1e-5;
  double worst = 0.0;
  for (const auto &name : p.names()) {
    const std::size_t n = p.value(name).size();
    for (std::size_t s = 0; s < std::max<std::size_t>(1, n / 100); ++s) {
      const std::size_t i = rng.below(n);
      const double analytic = p.grad(name)[i];
      const double saved = p.value(name)[i];
      p.value(name)[i] = saved + h;
      const double up = loss(nullptr);
      p.value(name)[i] = saved - h;
      const double down = loss(nullptr);
      p.value(name)[i] = saved;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(analytic - numeric) /
                                std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
      ++checked;
    }
  }
  return worst;
}

Outcome gradient_integrity() {
  const auto start = Clock::now();
  std::vector<std::pair<std::string, GradTally>> tallies;
  auto run = [&](const std::string &name, const std::function<void(GradTally &, int)> &one) {
    GradTally t;
    for (int trial = 0; trial < kInstances; ++trial)
      one(t, trial);
    tallies.emplace_back(name, t);
  };
  Rng rng(2718);

  for (nn::Padding pad : {nn::Padding::valid, nn::Padding::same})
    run(pad == nn::Padding::valid ? "conv_valid" : "conv_same", [&](GradTally &t, int trial) {
      t.add(check_gradients(
        {random_tensor({2, 10, 10}, rng), random_tensor({3, 2, 5, 5}, rng),
         random_tensor({3}, rng)},
        [pad, trial](Graph &, const std::vector<Var> &v) {
          return weighted_sum(nn::conv2d(v[0], v[1], v[2], pad), trial);
        }));
    });
  run("maxpool", [&](GradTally &t, int trial) {
    t.add(check_gradients({random_tensor({2, 6, 8}, rng)},
                          [trial](Graph &, const std::vector<Var> &v) {
                            return weighted_sum(nn::maxpool2d(v[0]), trial);
                          }));
  });
  run("gru", [&](GradTally &t, int trial) {
    t.add(check_gradients(
      {random_tensor({3, 4}, rng), random_tensor({9, 4}, rng, -0.7, 0.7),
       random_tensor({9, 3}, rng, -0.7, 0.7), random_tensor({9}, rng, -0.3, 0.3)},
      [trial](Graph &, const std::vector<Var> &v) {
        return weighted_sum(nn::gru_forward(v[0], 3, {v[1], v[2], v[3]}).outputs, trial);
      }));
  });
  for (nn::Activation act : {nn::Activation::linear, nn::Activation::tanh, nn::Activation::relu})
    run("dense", [&](GradTally &t, int trial) {
      t.add(check_gradients(
        {random_tensor({7}, rng), random_tensor({5, 7}, rng), random_tensor({5}, rng)},
        [act, trial](Graph &, const std::vector<Var> &v) {
          return weighted_sum(nn::dense(v[0], v[1], v[2], act), trial);
        }));
    });
  run("attention", [&](GradTally &t, int trial) {
    t.add(check_gradients(
      {random_tensor({29}, rng, -0.5, 0.5), random_tensor({29, 12}, rng, -0.5, 0.5),
       random_tensor({29, 12}, rng)},
      [trial](Graph &, const std::vector<Var> &v) {
        return weighted_sum(nn::dot_product_attention(v[0], v[1], v[2]).context, trial);
      }));
  });
  run("softmax", [&](GradTally &t, int trial) {
    t.add(check_gradients({random_tensor({6}, rng, -3, 3)},
                          [trial](Graph &, const std::vector<Var> &v) {
                            return weighted_sum(nn::softmax(v[0]), trial);
                          }));
  });
  run("joint_loss", [&](GradTally &t, int trial) {
    const Tensor truth = random_tensor({4, 6}, rng);
    const double alpha = 0.1 + 0.08 * trial;
    const int label = trial % 2;
    t.add(check_gradients({random_tensor({2}, rng, -2, 2), random_tensor({4, 6}, rng)},
                          [&truth, alpha, label](Graph &, const std::vector<Var> &v) {
                            return train::joint_loss(nn::softmax(v[0]), label, v[1], truth,
                                                     alpha)
                              .total;
                          }));
  });

  Outcome out;
  std::ostringstream d;
  double worst = 0.0;
  std::size_t min_instances = ~std::size_t{0};
  std::map<std::string, std::size_t> per_primitive;
  for (const auto &[name, t] : tallies) {
    out.pass = out.pass && t.pass;
    worst = std::max(worst, t.worst);
    per_primitive[name] += t.instances;
  }
  for (const auto &[name, n] : per_primitive)
    min_instances = std::min(min_instances, n);
  std::size_t checked = 0;
  const double e2e = end_to_end_error(checked);
  const double elapsed = seconds_since(start);
  out.pass = out.pass && min_instances >= static_cast<std::size_t>(kInstances) &&
             e2e < kEndToEndTolerance && checked > 0 && elapsed < kGradientBudgetSeconds;
  d << per_primitive.size() << " primitives, >=" << min_instances
    << " instances each, max rel " << fmt("%.2e", worst) << " (< 1e-4); end-to-end "
    << fmt("%.2e", e2e) << " over " << checked << " params (< 1e-3); "
    << fmt("%.1f", elapsed) << " s (< 120)";
  out.detail = d.str();
  return out;
}

// ---------------------------------------------------------------------------
// 2. Shape contract

Outcome shape_contract() {
  const auto &c = full_config();
  const auto p = model::init_params(c, 42);
  Rng rng(1);
  const auto x = model::to_mel(random_tensor({128, 40}, rng, -2.0, 2.0));
  model::Trace trace;
  const auto l = model::encode_audio(x, p, c, &trace);
  const std::vector<Shape> expected{{20, 124, 36}, {20, 62, 18}, {20, 58, 14}, {20, 29, 7}};

  Graph g(false);
  const auto t = data::encode_transcript("backspace");
  Var e = model::broadcast_concat(model::encode_text(g, p, t.matrix, c),
                                  g.constant(Tensor(Shape{2}, {l.l1, l.l2})));
  Outcome out;
  out.pass = trace.audio_shapes == expected && std::isfinite(l.l1) && std::isfinite(l.l2) &&
             e.shape()[0] == 29;
  std::ostringstream d;
  for (std::size_t i = 0; i < trace.audio_shapes.size(); ++i) {
    const auto &s = trace.audio_shapes[i];
    d << (i ? " -> " : "") << (s.size() == 3 ? s[1] : 0) << "x" << (s.size() == 3 ? s[2] : 0);
  }
  d << ", latent [2], broadcast rows " << e.shape()[0];
  out.detail = d.str();
  return out;
}

// ---------------------------------------------------------------------------
// 3. Griffin-Lim

Outcome griffin_lim_contract() {
  const auto start = Clock::now();
  const dsp::StftConfig cfg;
  Rng rng(2024);
  std::size_t increases = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto frames = static_cast<Eigen::Index>(2 + rng.below(12));
    Eigen::MatrixXd mag(513, frames);
    for (Eigen::Index i = 0; i < mag.size(); ++i)
      mag.data()[i] = rng.uniform() * rng.uniform() * 3.0;
    const auto r = dsp::griffin_lim(mag, cfg, 15, trial);
    // relative slack of 1e-12 absorbs summation-order rounding only
    for (std::size_t i = 1; i < r.distances.size(); ++i)
      increases += r.distances[i] > r.distances[i - 1] * (1.0 + 1e-12);
  }
  const Eigen::MatrixXd chirp = dsp::stft(test_signals::speech_like_chirp(), cfg).cwiseAbs();
  const auto r = dsp::griffin_lim(chirp, cfg, 60, 42);
  const double reduction = r.distances.front() / r.distances.back();
  const double elapsed = seconds_since(start);
  Outcome out;
  out.pass = increases == 0 && reduction >= kGriffinLimReduction &&
             elapsed < kGriffinLimBudgetSeconds;
  out.detail = std::to_string(increases) + " increases over 20 random targets; chirp reduction " +
               fmt("%.2f", reduction) + "x after 60 iterations (>= 5); " +
               fmt("%.1f", elapsed) + " s (< 60)";
  return out;
}

// ---------------------------------------------------------------------------
// 4. Statistics oracles

Outcome statistics_oracles() {
  Rng rng(31);
  double worst_p = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng.below(60);
    std::vector<double> x(n), y(n);
    const double mix = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.uniform(-3.0, 3.0);
      y[i] = rng.uniform(-3.0, 3.0) + 2.0 * mix * x[i];
    }
    const auto r = eval::pearson(x, y);
    const double df = static_cast<double>(n - 2);
    const double ro = dyslat::oracle::pearson_r(x, y);
    const double t = ro * std::sqrt(df / (1.0 - ro * ro));
    worst_p = std::max(worst_p,
                       std::abs(r.p - dyslat::oracle::t_two_sided(t, static_cast<int>(n - 2))));
  }

  std::size_t wilcoxon_mismatch = 0;
  std::set<std::size_t> sizes;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial) % 10;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = std::round(rng.uniform(0.0, 8.0));
      b[i] = std::round(rng.uniform(0.0, 8.0));
    }
    if (a == b)
      b[0] += 1.0;
    const auto r = eval::wilcoxon_signed_rank(a, b, eval::WilcoxonMethod::exact);
    const auto o = dyslat::oracle::wilcoxon_enumerate(a, b);
    sizes.insert(n);
    wilcoxon_mismatch += r.p != o.p || r.w_plus != o.w_plus || r.w_minus != o.w_minus;
  }

  std::size_t wilson_cases = 0, wilson_misses = 0;
  for (std::size_t n = 1; n <= 200; ++n)
    for (std::size_t k = 0; k <= n; ++k) {
      const auto ci = eval::wilson_interval(k, n);
      const double p = static_cast<double>(k) / static_cast<double>(n);
      ++wilson_cases;
      wilson_misses += !(ci.lo <= p && p <= ci.hi);
    }

  Outcome out;
  out.pass = worst_p <= kPValueTolerance && wilcoxon_mismatch == 0 && sizes.size() == 10 &&
             wilson_misses == 0;
  out.detail = "Pearson max |p - oracle| " + fmt("%.2e", worst_p) + " over 200 (<= 1e-6); " +
               "Wilcoxon " + std::to_string(wilcoxon_mismatch) +
               " mismatches over 100 cases, n = 1..10; Wilson " +
               std::to_string(wilson_misses) + " misses over " + std::to_string(wilson_cases);
  return out;
}

// ---------------------------------------------------------------------------
// 5. Synthetic leave-one-speaker-out

Outcome synthetic_loso() {
  const auto start = Clock::now();
  const auto &corpus = synthetic_corpus();
  const auto loso = eval::run_loso(corpus, full_config(), synthetic_training());
  const auto out_of_fold = eval::latent_correlation_report(loso.latents);
  const auto all_speaker =
    eval::latent_correlation_report(corpus, synthetic_checkpoint().params, full_config());
  const double elapsed = seconds_since(start);

  auto describe = [](const eval::CorrelationReport &r) {
    std::string s;
    for (const auto &d : r.dimensions)
      s += " d" + std::to_string(d.dimension) + " " +
           (d.result ? "r=" + fmt("%.3f", d.result->r) + " p=" + fmt("%.2e", d.result->p)
                     : "undefined");
    return s;
  };
  const auto best = out_of_fold.strongest();
  const bool correlation_ok = best && std::abs(best->result->r) >= kMinAbsCorrelation &&
                              best->result->p < kMaxCorrelationP &&
                              best->result->n == 8;
  Outcome out;
  out.pass = loso.word.accuracy >= kMinWordAccuracy && loso.speaker.n == 8 &&
             loso.speaker.correct == 8 && correlation_ok && elapsed < kLosoBudgetSeconds;
  out.detail = "word " + fmt("%.3f", loso.word.accuracy) + " (" +
               std::to_string(loso.word.correct) + "/" + std::to_string(loso.word.n) +
               ", >= 0.90); speaker " + std::to_string(loso.speaker.correct) + "/" +
               std::to_string(loso.speaker.n) + "; held-out latent vs intelligibility" +
               describe(out_of_fold) + " (|r| >= 0.7, p < 0.05); all-speaker model" +
               describe(all_speaker) + "; " + fmt("%.0f", elapsed) + " s (< 1800)";
  return out;
}

// ---------------------------------------------------------------------------
// 6. Joint-loss degeneracies

bool params_identical(const nn::ParamStore &a, const nn::ParamStore &b) { return a == b; }

Outcome loss_degeneracies() {
  const auto c = model::ModelConfig::reduced();
  const auto corpus = data::featurize(data::generate_synthetic_corpus({}),
                                      data::FeatureExtractor(c.n_mels));
  const std::vector<data::Example> subset(corpus.begin(), corpus.begin() + 60);

  train::TrainConfig alpha_one;
  alpha_one.epochs = 3;
  alpha_one.batch_size = 20;
  alpha_one.seed = 7;
  alpha_one.alpha = 1.0;
  alpha_one.checkpoint_every = 1;
  auto classifier = alpha_one;
  classifier.mode = train::TrainMode::classifier_only;
  std::vector<nn::ParamStore> ta, tb;
  train::TrainHooks ha, hb;
  ha.on_checkpoint = [&](std::size_t, const nn::ParamStore &p, bool) { ta.push_back(p); };
  hb.on_checkpoint = [&](std::size_t, const nn::ParamStore &p, bool) { tb.push_back(p); };
  const auto a = train::train(subset, c, alpha_one, ha);
  const auto b = train::train(subset, c, classifier, hb);
  bool trajectory = ta.size() == 3 && tb.size() == 3 && params_identical(a.params, b.params);
  for (std::size_t e = 0; trajectory && e < ta.size(); ++e)
    trajectory = params_identical(ta[e], tb[e]);
  for (std::size_t e = 0; trajectory && e < a.report.epochs.size(); ++e)
    trajectory = a.report.epochs[e].cross_entropy == b.report.epochs[e].cross_entropy;

  std::size_t reads = 0;
  train::TrainHooks counting;
  counting.on_label_read = [&](std::size_t) { ++reads; };
  auto alpha_zero = alpha_one;
  alpha_zero.alpha = 0.0;
  alpha_zero.epochs = 2;
  train::train(subset, c, alpha_zero, counting);
  auto unsupervised = alpha_zero;
  unsupervised.mode = train::TrainMode::unsupervised;
  train::train(subset, c, unsupervised, counting);
  const std::size_t zero_reads = reads;
  auto half = alpha_zero;
  half.alpha = 0.5;
  half.epochs = 1;
  train::train(subset, c, half, counting);
  const bool instrumented = reads > zero_reads;

  const dsp::MelSpectrogram ones{Eigen::MatrixXd::Ones(2, 2)};
  const dsp::MelSpectrogram zeros{Eigen::MatrixXd::Zero(2, 2)};
  const double hand = train::joint_loss(0.2, 0, ones, zeros, 0.5);

  Outcome out;
  out.pass = trajectory && zero_reads == 0 && instrumented &&
             std::abs(hand - kHandLoss) <= kHandLossTolerance;
  out.detail = std::string("alpha=1 vs classifier-only: ") +
               (trajectory ? "bit-identical" : "DIFFERENT") + " over 3 epochs; alpha=0 label reads " +
               std::to_string(zero_reads) + (instrumented ? " (counter live at alpha=0.5)" : " (counter dead)") +
               "; hand example " + fmt("%.6f", hand) + " (0.6116 +- 1e-4)";
  return out;
}

// ---------------------------------------------------------------------------
// 7. Latent sweep

Outcome latent_sweep() {
  const auto &ck = synthetic_checkpoint();
  const auto t = data::encode_transcript("backspace");
  auto sweep = [&] {
    std::vector<dsp::MelSpectrogram> outs;
    for (double d1 : {-0.5, 0.0, 0.5, 1.0, 1.5})
      outs.push_back(model::reconstruct_with_latent(t, {d1, -0.1}, 40, ck.params, ck.config));
    return outs;
  };
  const auto first = sweep(), second = sweep();
  const bool deterministic = first == second;
  double min_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < first.size(); ++i)
    for (std::size_t j = i + 1; j < first.size(); ++j)
      min_distance = std::min(min_distance, (first[i].values - first[j].values).norm());

  std::size_t exact = 0, checked = 0;
  const auto &corpus = synthetic_corpus();
  for (std::size_t i = 0; i < corpus.size(); i += 23) {
    const auto &ex = corpus[i];
    const auto x = model::to_mel(ex.mel);
    const auto y = model::forward(x, ex.text, ck.params, ck.config);
    const auto l = model::encode_audio(x, ck.params, ck.config);
    exact += l == y.detection.latent &&
             model::reconstruct_with_latent(ex.text, l, x.n_frames(), ck.params, ck.config) ==
               y.mel;
    ++checked;
  }
  Outcome out;
  out.pass = deterministic && min_distance > 0.0 && exact == checked && checked > 0;
  out.detail = std::string("5 sweep outputs ") + (deterministic ? "repeatable" : "NOT repeatable") +
               ", min pairwise L2 " + fmt("%.3g", min_distance) + "; reconstruct(encode(X)) == Y on " +
               std::to_string(exact) + "/" + std::to_string(checked) + " corpus words";
  return out;
}

// ---------------------------------------------------------------------------
// 8. Determinism

Outcome determinism() {
  auto tc = synthetic_training();
  tc.epochs = 2;
  const auto once = [&] {
    auto r = train::train(synthetic_corpus(), full_config(), tc);
    return model::encode_checkpoint({full_config(), std::move(r.params), tc.seed});
  };
  const auto a = once(), b = once();
  const bool same_checkpoint = a == b;

  service::ServiceConfig sc;
  sc.port = 0;
  service::Service svc(sc, service::make_snapshot(synthetic_checkpoint(), &synthetic_corpus()));
  service::HttpServer server(svc);
  httplib::Client client("127.0.0.1", server.start());
  client.set_read_timeout(300, 0);

  const auto clip = data::generate_synthetic_corpus({}).at(5).clip;
  const auto wav = dsp::encode_wav(clip);
  const httplib::MultipartFormDataItems form{
    {"wav", std::string(wav.begin(), wav.end()), "clip.wav", "audio/wav"},
    {"transcript", "left", "", ""}};
  const std::string body =
    nlohmann::json{{"transcript", "enter"}, {"latent", {1.0, -0.1}}, {"target_frames", 40},
                   {"want_audio", true}}
      .dump();

  struct Probe {
    std::string name;
    std::function<httplib::Result()> call;
  };
  const std::vector<Probe> probes{
    {"/analyze", [&] { return client.Post("/analyze", form); }},
    {"/reconstruct", [&] { return client.Post("/reconstruct", body, "application/json"); }},
    {"/latent-map", [&] { return client.Get("/latent-map"); }}};
  std::string endpoints;
  bool idempotent = true;
  for (const auto &p : probes) {
    auto r1 = p.call(), r2 = p.call();
    const bool ok = r1 && r2 && r1->status == 200 && r2->status == 200 && r1->body == r2->body;
    idempotent = idempotent && ok;
    endpoints += (endpoints.empty() ? "" : ", ") + p.name + (ok ? " same" : " DIFFERENT");
  }
  server.stop();

  Outcome out;
  out.pass = same_checkpoint && idempotent;
  out.detail = std::string("two seeded trainings give ") +
               (same_checkpoint ? "identical" : "DIFFERENT") + " checkpoint bytes (" +
               std::to_string(a.size()) + " B); HTTP repeat: " + endpoints;
  return out;
}

struct Criterion {
  int id;
  const char *name;
  Outcome (*run)();
};

std::set<int> parse_only(int argc, char **argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      for (std::string item; std::getline(ss, item, ',');)
        only.insert(std::stoi(item));
    }
  return only;
}

} // namespace

int main(int argc, char **argv) {
  const std::vector<Criterion> criteria{
    {1, "gradient integrity", gradient_integrity},
    {2, "shape contract", shape_contract},
    {3, "griffin-lim", griffin_lim_contract},
    {4, "statistics oracles", statistics_oracles},
    {5, "synthetic loso", synthetic_loso},
    {6, "loss degeneracies", loss_degeneracies},
    {7, "latent sweep", latent_sweep},
    {8, "determinism", determinism}};
  const auto only = parse_only(argc, argv);
  int failures = 0;
  for (const auto &c : criteria) {
    if (!only.empty() && !only.count(c.id))
      continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
