#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "tunes/trainer.hpp"

using tunes::LrSchedule;
using tunes::ParamStore;
using tunes::SynthConfig;
using tunes::TrainConfig;
using tunes::TunesConfig;
using tunes::TunesNet;
using Mat = tunes::Matrix<double>;

namespace {

bool close(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol; }

TunesConfig tiny_config() {
  TunesConfig c;
  c.input_dim = 8;
  c.dim = 8;
  c.num_classes = 3;
  c.ffn_dim = 16;
  return c;
}

SynthConfig tiny_corpus(std::uint64_t seed, int videos, double noise) {
  SynthConfig c;
  c.seed = seed;
  c.num_videos = videos;
  c.num_classes = 3;
  c.feature_dim = 8;
  c.min_duration = 90;
  c.max_duration = 108;
  c.min_segment = 8;
  c.noise = noise;
  return c;
}

}  // namespace

TEST_CASE("adam single step by hand") {
  ParamStore<double> ps(1);
  auto* p = ps.add_constant("w", 1, 1, 0.0);
  tunes::Adam<double> opt(ps);

  p->grad = Mat::Constant(1, 1, 0.5);
  const double norm = opt.step(0.1);
  CHECK(close(norm, 0.5));
  // m-hat = g, v-hat = g^2 after bias correction at t = 1
  const double want = -0.1 * 0.5 / (0.5 + 1e-8);
  CHECK(close(p->value(0, 0), want, 1e-15));
  CHECK(p->grad.isZero(0));  // consumed
  CHECK(opt.steps() == 1);

  // a constant gradient keeps producing (almost) unit-scaled steps
  p->grad = Mat::Constant(1, 1, 0.5);
  opt.step(0.1);
  CHECK(close(p->value(0, 0), 2 * want, 1e-6));
}

TEST_CASE("global norm clipping rescales before the update") {
  ParamStore<double> ps(1);
  auto* a = ps.add_constant("a", 1, 1, 0.0);
  auto* b = ps.add_constant("b", 1, 1, 0.0);
  tunes::Adam<double> opt(ps);

  a->grad = Mat::Constant(1, 1, 3.0);
  b->grad = Mat::Constant(1, 1, 4.0);
  const double norm = opt.step(0.1);
  CHECK(close(norm, 5.0));  // pre-clip norm is reported
  // clipped gradients are (0.6, 0.8); adam normalizes magnitude away,
  // so both parameters move by nearly -lr
  CHECK(close(a->value(0, 0), -0.1 * 0.6 / (0.6 + 1e-8), 1e-15));
  CHECK(close(b->value(0, 0), -0.1 * 0.8 / (0.8 + 1e-8), 1e-15));

  // disabled clipping leaves small gradients untouched either way
  tunes::Adam<double>::Config cfg;
  cfg.clip_norm = 0;
  ParamStore<double> ps2(1);
  auto* c = ps2.add_constant("c", 1, 1, 0.0);
  tunes::Adam<double> opt2(ps2, cfg);
  c->grad = Mat::Constant(1, 1, 100.0);
  CHECK(close(opt2.step(0.1), 100.0));
  CHECK(close(c->value(0, 0), -0.1 * 100.0 / (100.0 + 1e-8), 1e-12));
}

TEST_CASE("zero_grad clears accumulated gradients") {
  ParamStore<double> ps(1);
  auto* p = ps.add_constant("w", 2, 2, 1.0);
  tunes::Adam<double> opt(ps);
  p->grad = Mat::Ones(2, 2);
  opt.zero_grad();
  CHECK(p->grad.isZero(0));
}

TEST_CASE("learning rate schedules") {
  CHECK(close(tunes::scheduled_lr(0.5, LrSchedule::constant, 7, 10), 0.5));
  CHECK(close(tunes::scheduled_lr(0.5, LrSchedule::cosine, 0, 10), 0.5));
  CHECK(close(tunes::scheduled_lr(1.0, LrSchedule::cosine, 1, 2), 0.5));
  CHECK(close(tunes::scheduled_lr(1.0, LrSchedule::cosine, 3, 4),
              0.5 * (1 + std::cos(3 * M_PI / 4))));
  // strictly decreasing and small at the end
  double prev = 1e9;
  for (int e = 0; e < 75; ++e) {
    const double lr = tunes::scheduled_lr(5e-4, LrSchedule::cosine, e, 75);
    CHECK(lr < prev);
    prev = lr;
  }
  CHECK(prev < 5e-4 * 0.001);

  CHECK_THROWS_AS(tunes::scheduled_lr(0.5, LrSchedule::cosine, 10, 10),
                  tunes::ConfigError);
  CHECK_THROWS_AS(tunes::scheduled_lr(0.5, LrSchedule::cosine, -1, 10),
                  tunes::ConfigError);
  CHECK(tunes::schedule_from_string("cosine") == LrSchedule::cosine);
  CHECK_THROWS_AS(tunes::schedule_from_string("linear"), tunes::ConfigError);
}

TEST_CASE("frame classifier learns a separable corpus") {
  const auto videos = tunes::synth_generate<double>(tiny_corpus(11, 4, 0.4));
  tunes::FrameClassifier<double> clf(8, 3, 5);
  clf.fit(videos, 10, 0.05);
  CHECK(clf.accuracy(videos) > 0.9);
}

TEST_CASE("training overfits a tiny corpus") {
  const auto videos = tunes::synth_generate<double>(tiny_corpus(12, 3, 0.8));
  TunesNet<double> net(tiny_config(), 3);

  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.lr = 2e-3;
  cfg.use_masking = false;
  cfg.use_augmentation = false;
  const auto result = tunes::train(net, videos, {}, cfg);

  CHECK(result.history.size() == 40);
  CHECK(result.history.front().train_loss > result.history.back().train_loss);
  for (const auto& s : result.history) {
    CHECK(close(s.lr, 2e-3));
    CHECK(s.grad_norm > 0);
  }
  // no validation set: the final parameters are the last epoch's
  CHECK(!result.best_val_selection);
  CHECK(result.selected_epoch == 39);

  CHECK(tunes::mean_accuracy(tunes::evaluate_videos(net, videos)) > 0.9);
}

TEST_CASE("constant schedule restores the best validation snapshot") {
  const auto all = tunes::synth_generate<double>(tiny_corpus(13, 5, 0.8));
  const std::vector<tunes::VideoSequence<double>> train_videos(all.begin(),
                                                               all.begin() + 3);
  const std::vector<tunes::VideoSequence<double>> val_videos(all.begin() + 3,
                                                             all.end());
  TunesNet<double> net(tiny_config(), 3);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.lr = 1e-3;
  const auto result = tunes::train(net, train_videos, val_videos, cfg);

  CHECK(result.best_val_selection);
  REQUIRE(result.selected_epoch >= 0);
  double best = -1;
  for (const auto& s : result.history) best = std::max(best, s.val_macro_jaccard);
  CHECK(close(result.selected_val, best));
  CHECK(close(result.history[result.selected_epoch].val_macro_jaccard, best));

  // the restored parameters reproduce the selected score exactly
  const double now = tunes::mean_macro_jaccard(tunes::evaluate_videos(net, val_videos));
  CHECK(close(now, result.selected_val));
}

TEST_CASE("cosine schedule keeps the last epoch") {
  const auto all = tunes::synth_generate<double>(tiny_corpus(14, 4, 0.8));
  const std::vector<tunes::VideoSequence<double>> train_videos(all.begin(),
                                                               all.begin() + 2);
  const std::vector<tunes::VideoSequence<double>> val_videos(all.begin() + 2,
                                                             all.end());
  TunesNet<double> net(tiny_config(), 3);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.schedule = LrSchedule::cosine;
  const auto result = tunes::train(net, train_videos, val_videos, cfg);
  CHECK(!result.best_val_selection);
  CHECK(result.selected_epoch == 3);
  CHECK(close(result.selected_val, result.history.back().val_macro_jaccard));
  const double now = tunes::mean_macro_jaccard(tunes::evaluate_videos(net, val_videos));
  CHECK(close(now, result.selected_val));
}

TEST_CASE("training is deterministic in the seed") {
  const auto videos = tunes::synth_generate<double>(tiny_corpus(15, 3, 0.8));
  TrainConfig cfg;
  cfg.epochs = 3;

  TunesNet<double> a(tiny_config(), 3);
  TunesNet<double> b(tiny_config(), 3);
  const auto ra = tunes::train(a, videos, {}, cfg);
  const auto rb = tunes::train(b, videos, {}, cfg);
  for (std::size_t e = 0; e < ra.history.size(); ++e) {
    CHECK(ra.history[e].train_loss == rb.history[e].train_loss);
    CHECK(ra.history[e].grad_norm == rb.history[e].grad_norm);
  }
  auto ia = a.params().begin();
  auto ib = b.params().begin();
  for (; ia != a.params().end(); ++ia, ++ib) {
    CHECK((ia->value - ib->value).isZero(0));
  }
}

TEST_CASE("an absurd learning rate aborts with a diagnostic") {
  const auto videos = tunes::synth_generate<double>(tiny_corpus(16, 2, 0.8));
  TunesNet<double> net(tiny_config(), 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 1e100;
  cfg.clip_norm = 0;
  CHECK_THROWS_AS(tunes::train(net, videos, {}, cfg), std::runtime_error);
}

TEST_CASE("evaluation truncates padded predictions to the true length") {
  std::mt19937_64 rng(17);
  tunes::VideoSequence<double> v;
  v.features = Mat::Zero(20, 8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    for (int d = 0; d < 8; ++d) v.features(t, d) = g(rng);
  }
  v.labels.assign(20, 1);
  v.labels[19] = 2;
  TunesNet<double> net(tiny_config(), 3);
  const auto ms = tunes::evaluate_videos(net, {v});
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].accuracy >= 0.0);
  CHECK(ms[0].accuracy <= 1.0);
  CHECK(ms[0].defined == std::vector<bool>{true, true, false});
}
