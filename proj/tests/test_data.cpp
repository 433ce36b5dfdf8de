#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "tunes/dataset.hpp"

using tunes::LabelSequence;
using tunes::SynthConfig;
using tunes::VideoSequence;
using Mat = tunes::Matrix<double>;

namespace {

VideoSequence<double> make_video(int T, int D, std::mt19937_64& rng, int C = 3) {
  std::normal_distribution<double> g(0.0, 1.0);
  VideoSequence<double> v;
  v.features.resize(T, D);
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d < D; ++d) v.features(t, d) = g(rng);
  }
  v.labels.resize(T);
  for (int t = 0; t < T; ++t) v.labels[t] = 1 + (t * C) / T;
  return v;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_all(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace

TEST_CASE("video files round trip") {
  std::mt19937_64 rng(71);
  const VideoSequence<double> v = make_video(23, 5, rng);
  const std::string path = "td_roundtrip.bin";
  tunes::write_video(path, v);
  const auto back = tunes::read_video<double>(path);
  CHECK(back.labels == v.labels);
  // payload is float32, so compare after the same narrowing
  CHECK((back.features.cast<float>() - v.features.cast<float>()).isZero(0));
  std::remove(path.c_str());
}

TEST_CASE("video parse errors carry byte offsets") {
  std::mt19937_64 rng(72);
  const VideoSequence<double> v = make_video(4, 2, rng);
  const std::string path = "td_bad.bin";
  tunes::write_video(path, v);
  const std::string good = read_all(path);

  // wrong magic
  std::string bad = good;
  bad[0] = 'X';
  write_all(path, bad);
  try {
    tunes::read_video<double>(path);
    CHECK(false);
  } catch (const tunes::ParseError& e) {
    CHECK(e.byte_offset == 0);
  }

  // zero frame count
  bad = good;
  bad[5] = bad[6] = bad[7] = bad[8] = '\0';
  write_all(path, bad);
  try {
    tunes::read_video<double>(path);
    CHECK(false);
  } catch (const tunes::ParseError& e) {
    CHECK(e.byte_offset == 5);
  }

  // zero label: labels start after both magics, T, D and the f32 payload
  const std::size_t label_at = 5 + 4 + 4 + 4 * 2 * 4 + 5;
  bad = good;
  bad[label_at + 2] = '\0';
  write_all(path, bad);
  try {
    tunes::read_video<double>(path);
    CHECK(false);
  } catch (const tunes::ParseError& e) {
    CHECK(e.byte_offset == label_at + 2);
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }

  // truncated payload
  write_all(path, good.substr(0, good.size() - 2));
  CHECK_THROWS_AS(tunes::read_video<double>(path), tunes::ParseError);

  // trailing garbage
  write_all(path, good + "zz");
  CHECK_THROWS_AS(tunes::read_video<double>(path), tunes::ParseError);

  std::remove(path.c_str());
}

TEST_CASE("manifest resolves relative paths against its own directory") {
  namespace fs = std::filesystem;
  std::mt19937_64 rng(73);
  const fs::path dir = fs::path("td_manifest_dir");
  fs::create_directories(dir);
  tunes::write_video((dir / "a.bin").string(), make_video(6, 2, rng));
  tunes::write_video((dir / "b.bin").string(), make_video(8, 2, rng));
  tunes::write_video((dir / "c.bin").string(), make_video(9, 2, rng));
  tunes::write_manifest((dir / "split.tsv").string(),
                        {{"train", "a.bin"}, {"train", "b.bin"}, {"test", "c.bin"}});

  const auto entries = tunes::read_manifest((dir / "split.tsv").string());
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].path == (dir / "a.bin").string());

  const auto train = tunes::load_split<double>((dir / "split.tsv").string(), "train");
  const auto test = tunes::load_split<double>((dir / "split.tsv").string(), "test");
  CHECK(train.size() == 2);
  CHECK(test.size() == 1);
  CHECK(train[0].frames() == 6);
  CHECK(test[0].frames() == 9);

  write_all((dir / "broken.tsv").string(), "train\ta.bin\njunk-without-tab\n");
  try {
    tunes::read_manifest((dir / "broken.tsv").string());
    CHECK(false);
  } catch (const tunes::ParseError& e) {
    CHECK(e.byte_offset == 12);
  }
  fs::remove_all(dir);
}

TEST_CASE("synthetic corpus walks phases in order with bounded durations") {
  SynthConfig cfg;
  cfg.seed = 5;
  cfg.num_videos = 8;
  cfg.feature_dim = 6;
  const auto vids = tunes::synth_generate<double>(cfg);
  REQUIRE(vids.size() == 8);
  for (const auto& v : vids) {
    CHECK(v.frames() >= cfg.min_duration);
    CHECK(v.frames() <= cfg.max_duration);
    CHECK(v.labels.front() == 1);
    CHECK(v.labels.back() == cfg.num_classes);
    std::set<int> present;
    int run = 1;
    for (int t = 0; t < v.frames(); ++t) {
      present.insert(v.labels[t]);
      if (t > 0) {
        CHECK(v.labels[t] >= v.labels[t - 1]);  // no revisits by default
        run = v.labels[t] == v.labels[t - 1] ? run + 1 : 1;
      }
    }
    CHECK(static_cast<int>(present.size()) == cfg.num_classes);
    CHECK(v.features.allFinite());
    // segment lengths respect the minimum
    int seg = 1;
    for (int t = 1; t < v.frames(); ++t) {
      if (v.labels[t] == v.labels[t - 1]) {
        ++seg;
      } else {
        CHECK(seg >= cfg.min_segment);
        seg = 1;
      }
    }
    CHECK(seg >= cfg.min_segment);
  }

  // same seed reproduces the corpus exactly
  const auto again = tunes::synth_generate<double>(cfg);
  for (std::size_t i = 0; i < vids.size(); ++i) {
    CHECK(again[i].labels == vids[i].labels);
    CHECK((again[i].features - vids[i].features).isZero(0));
  }
}

TEST_CASE("phase skipping drops exactly one later phase") {
  SynthConfig cfg;
  cfg.seed = 6;
  cfg.num_videos = 12;
  cfg.feature_dim = 4;
  cfg.p_skip = 1.0;
  for (const auto& v : tunes::synth_generate<double>(cfg)) {
    std::set<int> present(v.labels.begin(), v.labels.end());
    CHECK(static_cast<int>(present.size()) == cfg.num_classes - 1);
    CHECK(present.count(1) == 1);
  }
}

TEST_CASE("phase revisits insert a non-monotone segment") {
  SynthConfig cfg;
  cfg.seed = 7;
  cfg.num_videos = 6;
  cfg.feature_dim = 4;
  cfg.p_revisit = 1.0;
  for (const auto& v : tunes::synth_generate<double>(cfg)) {
    bool descent = false;
    for (int t = 1; t < v.frames(); ++t) descent |= v.labels[t] < v.labels[t - 1];
    CHECK(descent);
    std::set<int> present(v.labels.begin(), v.labels.end());
    CHECK(static_cast<int>(present.size()) == cfg.num_classes);
  }
}

TEST_CASE("frame-wise nearest-mean problem is neither trivial nor hopeless") {
  SynthConfig cfg;
  cfg.seed = 8;
  cfg.num_videos = 8;
  const double acc = tunes::nearest_mean_accuracy(
      tunes::synth_generate<double>(cfg), cfg.num_classes);
  CHECK(acc > 0.5);
  CHECK(acc < 0.99);
}

TEST_CASE("balanced sampling takes five windows per phase plus transitions") {
  std::mt19937_64 rng(74);
  LabelSequence labels;
  for (int p = 1; p <= 7; ++p) labels.insert(labels.end(), 50, p);
  const int T = static_cast<int>(labels.size());
  const int L = 64;
  const auto windows = tunes::balanced_sample_windows(labels, L, rng);
  CHECK(windows.size() == 5 * 7 + 6);
  for (const auto& w : windows) {
    CHECK(w.length == L);
    CHECK(w.start >= 0);
    CHECK(w.start + w.length <= T);
  }
  // transition windows sit at the end, centered on each boundary
  for (int k = 0; k < 6; ++k) {
    const int t = 50 * (k + 1);
    CHECK(windows[35 + k].start == std::clamp(t - L / 2, 0, T - L));
  }

  // a video with a missing phase yields fewer phase windows
  LabelSequence gappy;
  for (int p : {1, 2, 4, 5, 6, 7}) gappy.insert(gappy.end(), 50, p);
  CHECK(tunes::balanced_sample_windows(gappy, L, rng).size() == 5 * 6 + 5);

  CHECK_THROWS_AS(tunes::balanced_sample_windows(labels, 0, rng), tunes::ShapeError);
  CHECK_THROWS_AS(tunes::balanced_sample_windows(labels, T + 1, rng), tunes::ShapeError);
}

TEST_CASE("window extraction slices features and labels together") {
  std::mt19937_64 rng(75);
  const VideoSequence<double> v = make_video(30, 3, rng);
  const auto w = tunes::extract_window(v, {10, 8});
  CHECK(w.frames() == 8);
  CHECK((w.features - v.features.middleRows(10, 8)).isZero(0));
  CHECK(w.labels == LabelSequence(v.labels.begin() + 10, v.labels.begin() + 18));
  CHECK_THROWS_AS(tunes::extract_window(v, {25, 8}), tunes::ShapeError);
}

TEST_CASE("shift augmentation repeats the head and drops the tail") {
  std::mt19937_64 rng(76);
  const VideoSequence<double> v = make_video(12, 3, rng);
  const auto s = tunes::augment_shift(v, 4);
  CHECK(s.frames() == 12);
  for (int t = 0; t < 4; ++t) CHECK((s.features.row(t) - v.features.row(0)).isZero(0));
  for (int t = 4; t < 12; ++t) {
    CHECK((s.features.row(t) - v.features.row(t - 4)).isZero(0));
    CHECK(s.labels[t] == v.labels[t - 4]);
  }
  CHECK_THROWS_AS(tunes::augment_shift(v, 12), tunes::ShapeError);

  // the rng overload keeps length and stays within the shift bound
  for (int it = 0; it < 20; ++it) {
    const auto r = tunes::augment_shift(v, rng, 6);
    CHECK(r.frames() == 12);
  }
}

TEST_CASE("speed augmentation keeps features and labels in lockstep") {
  std::mt19937_64 rng(77);
  VideoSequence<double> v = make_video(200, 2, rng);
  // make each frame identifiable: feature 0 encodes the frame index
  for (int t = 0; t < 200; ++t) v.features(t, 0) = t;
  for (int it = 0; it < 20; ++it) {
    const auto s = tunes::augment_speed(v, rng, 0.1, 0.1);
    CHECK(s.frames() >= 1);
    int prev = -1;
    for (int t = 0; t < s.frames(); ++t) {
      const int src = static_cast<int>(s.features(t, 0));
      CHECK(s.labels[t] == v.labels[src]);
      CHECK(src >= prev);  // order preserved, repeats allowed
      prev = src;
    }
  }
  // dropping everything still leaves one frame
  const auto all = tunes::augment_speed(v, rng, 1.0, 0.0);
  CHECK(all.frames() == 1);
  CHECK_THROWS_AS(tunes::augment_speed(v, rng, 0.7, 0.7), tunes::ConfigError);
}

TEST_CASE("padding repeats the last frame up to the next multiple") {
  std::mt19937_64 rng(78);
  const VideoSequence<double> v = make_video(20, 3, rng);
  const auto p = tunes::pad_to_multiple(v, 18);
  CHECK(p.frames() == 36);
  CHECK((p.features.topRows(20) - v.features).isZero(0));
  for (int t = 20; t < 36; ++t) {
    CHECK((p.features.row(t) - v.features.row(19)).isZero(0));
    CHECK(p.labels[t] == v.labels[19]);
  }
  const auto q = tunes::pad_to_multiple(p, 18);
  CHECK(q.frames() == 36);
  CHECK(tunes::ceil_to_multiple(1, 18) == 18);
  CHECK(tunes::ceil_to_multiple(18, 18) == 18);
  CHECK(tunes::ceil_to_multiple(19, 18) == 36);
}

TEST_CASE("span masking hits its coverage target away from transitions") {
  std::mt19937_64 rng(79);
  const LabelSequence uniform(1800, 1);  // 100 tokens, no transitions
  for (int it = 0; it < 100; ++it) {
    const auto plan = tunes::plan_span_mask(uniform, rng);
    CHECK(plan.token_count == 100);
    CHECK(plan.target == 35);
    CHECK(plan.placed() == 35);
    CHECK(!plan.shortfall());
    const double cov = double(plan.placed()) / plan.token_count;
    CHECK(cov >= 0.30);
    CHECK(cov <= 0.40);

    std::set<int> seen;
    for (const auto& [start, len] : plan.spans) {
      CHECK(len >= 1);
      CHECK(len <= 17);
      for (int s = start; s < start + len; ++s) {
        CHECK(s >= 0);
        CHECK(s < 100);
        CHECK(seen.insert(s).second);  // disjoint spans
      }
    }
    CHECK(std::is_sorted(plan.rows.begin(), plan.rows.end()));
    CHECK(static_cast<int>(seen.size()) == plan.placed());
  }
}

TEST_CASE("span masking never covers a transition token") {
  std::mt19937_64 rng(80);
  LabelSequence labels;
  for (int p = 1; p <= 4; ++p) labels.insert(labels.end(), 45, p);  // T=180
  // transitions at 45, 90, 135 hit tokens 2, 5, 7
  for (int it = 0; it < 50; ++it) {
    const auto plan = tunes::plan_span_mask(labels, rng);
    for (int s : plan.rows) {
      CHECK(s != 2);
      CHECK(s != 5);
      CHECK(s != 7);
    }
  }
}

TEST_CASE("span masking reports a shortfall when little is maskable") {
  std::mt19937_64 rng(81);
  LabelSequence churn(180);
  for (int t = 0; t < 180; ++t) churn[t] = 1 + t % 2;  // every token blocked
  const auto plan = tunes::plan_span_mask(churn, rng);
  CHECK(plan.placed() == 0);
  CHECK(plan.shortfall());
  CHECK(plan.target == 4);
}

TEST_CASE("span mask planning is deterministic per seed") {
  const LabelSequence labels(1800, 1);
  std::mt19937_64 a(5), b(5), c(6);
  const auto pa = tunes::plan_span_mask(labels, a);
  const auto pb = tunes::plan_span_mask(labels, b);
  const auto pc = tunes::plan_span_mask(labels, c);
  CHECK(pa.spans == pb.spans);
  CHECK(pa.rows == pb.rows);
  CHECK(pa.spans != pc.spans);

  CHECK_THROWS_AS(tunes::plan_span_mask(LabelSequence(17, 1), a), tunes::ShapeError);
  CHECK_THROWS_AS(tunes::plan_span_mask(labels, a, 18, 1.5), tunes::ConfigError);
  CHECK_THROWS_AS(tunes::plan_span_mask(labels, a, 18, 0.35, 18), tunes::ConfigError);
}

TEST_CASE("a confusable phase pair shares one feature mean") {
  tunes::SynthConfig cfg;
  cfg.num_videos = 8;
  cfg.noise = 0.3;
  const double plain = tunes::nearest_mean_accuracy(
      tunes::synth_generate<double>(cfg), cfg.num_classes);

  cfg.confusable_a = 2;
  cfg.confusable_b = 5;
  const auto videos = tunes::synth_generate<double>(cfg);
  const double confused = tunes::nearest_mean_accuracy(videos, cfg.num_classes);

  // at low noise only the shared mean limits frame-wise separability
  CHECK(plain > 0.95);
  CHECK(confused < plain - 0.05);
  CHECK(confused > 0.5);

  tunes::SynthConfig bad = cfg;
  bad.confusable_b = 2;  // not distinct
  CHECK_THROWS_AS(tunes::synth_generate<double>(bad), tunes::ConfigError);
  bad.confusable_b = 8;  // outside [1, classes]
  CHECK_THROWS_AS(tunes::synth_generate<double>(bad), tunes::ConfigError);
  bad.confusable_a = 0;  // half-configured pair
  bad.confusable_b = 5;
  CHECK_THROWS_AS(tunes::synth_generate<double>(bad), tunes::ConfigError);
}
