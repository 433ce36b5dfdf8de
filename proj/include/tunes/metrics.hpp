#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "tunes/types.hpp"

namespace tunes {

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

/// Frame-wise argmax as 1-based labels; ties go to the lower phase index.
template <typename Scalar>
LabelSequence predict_labels(const Matrix<Scalar>& scores) {
  LabelSequence out(scores.rows());
  for (Eigen::Index t = 0; t < scores.rows(); ++t) {
    int best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(t, c) > scores(t, best)) best = static_cast<int>(c);
    }
    out[t] = best + 1;
  }
  return out;
}

inline double harmonic_mean(double a, double b) {
  return a + b > 0 ? 2 * a * b / (a + b) : 0.0;
}

/// Frame-wise scores for one video. A phase is only evaluated when it
/// occurs in the ground truth; absent phases carry NaN and are excluded
/// from the macro averages. Precision of a defined phase that was never
/// predicted is 0.
struct VideoMetrics {
  double accuracy = 0;
  std::vector<bool> defined;
  std::vector<double> precision, recall, jaccard, f1;
  double macro_precision = 0, macro_recall = 0, macro_jaccard = 0, macro_f1 = 0;
};

inline VideoMetrics video_metrics(const LabelSequence& truth,
                                  const LabelSequence& pred, int num_classes) {
  const int T = static_cast<int>(truth.size());
  if (T < 1) throw ShapeError("video_metrics: empty ground truth");
  if (pred.size() != truth.size()) {
    throw ShapeError("video_metrics: prediction length mismatch");
  }
  check_labels(truth, num_classes);
  check_labels(pred, num_classes);

  VideoMetrics m;
  m.defined.assign(num_classes, false);
  m.precision.assign(num_classes, kUndefined);
  m.recall.assign(num_classes, kUndefined);
  m.jaccard.assign(num_classes, kUndefined);
  m.f1.assign(num_classes, kUndefined);

  std::vector<long> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  long correct = 0;
  for (int t = 0; t < T; ++t) {
    const int y = truth[t] - 1;
    const int p = pred[t] - 1;
    m.defined[y] = true;
    if (y == p) {
      ++tp[y];
      ++correct;
    } else {
      ++fn[y];
      ++fp[p];
    }
  }
  m.accuracy = double(correct) / double(T);

  int n = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (!m.defined[c]) continue;
    ++n;
    m.precision[c] = tp[c] + fp[c] > 0 ? double(tp[c]) / double(tp[c] + fp[c]) : 0.0;
    m.recall[c] = double(tp[c]) / double(tp[c] + fn[c]);
    m.jaccard[c] = double(tp[c]) / double(tp[c] + fp[c] + fn[c]);
    m.f1[c] = double(2 * tp[c]) / double(2 * tp[c] + fp[c] + fn[c]);
    m.macro_precision += m.precision[c];
    m.macro_recall += m.recall[c];
    m.macro_jaccard += m.jaccard[c];
    m.macro_f1 += m.f1[c];
  }
  m.macro_precision /= n;
  m.macro_recall /= n;
  m.macro_jaccard /= n;
  m.macro_f1 /= n;
  return m;
}

/// Transition-tolerant rewrite: within `tolerance` frames after a ground
/// truth transition a prediction of the previous phase counts as correct,
/// and within `tolerance` frames before one a prediction of the upcoming
/// phase counts as correct. Tolerated frames are rewritten to the ground
/// truth; score the result with video_metrics.
inline LabelSequence relax_predictions(const LabelSequence& truth,
                                       const LabelSequence& pred,
                                       int tolerance = 10) {
  const int T = static_cast<int>(truth.size());
  if (pred.size() != truth.size()) {
    throw ShapeError("relax_predictions: prediction length mismatch");
  }
  if (tolerance < 0) throw ConfigError("relax_predictions: tolerance >= 0");

  // ground-truth segments [start, end) with their phase
  std::vector<std::array<int, 3>> segs;
  for (int t = 0; t < T;) {
    int e = t;
    while (e < T && truth[e] == truth[t]) ++e;
    segs.push_back({t, e, truth[t]});
    t = e;
  }

  LabelSequence out = pred;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto [start, end, phase] = segs[i];
    if (i > 0) {
      const int prev = segs[i - 1][2];
      for (int t = start; t < std::min(end, start + tolerance); ++t) {
        if (out[t] == prev) out[t] = phase;
      }
    }
    if (i + 1 < segs.size()) {
      const int next = segs[i + 1][2];
      for (int t = std::max(start, end - tolerance); t < end; ++t) {
        if (out[t] == next) out[t] = phase;
      }
    }
  }
  return out;
}

inline VideoMetrics relaxed_video_metrics(const LabelSequence& truth,
                                          const LabelSequence& pred,
                                          int num_classes, int tolerance = 10) {
  return video_metrics(truth, relax_predictions(truth, pred, tolerance),
                       num_classes);
}

// ---------------------------------------------------------------------------
// Aggregation over videos, runs and phases
// ---------------------------------------------------------------------------

inline double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? kUndefined : s / double(xs.size());
}

/// Sample standard deviation (n-1 denominator); NaN below two samples.
inline double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return kUndefined;
  const double m = mean_of(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / double(xs.size() - 1));
}

struct MetricAggregate {
  double mean = kUndefined;   // mean over runs of the per-run video mean
  double sd_videos = kUndefined;  // mean over runs of the per-run SD across videos
  double sd_runs = kUndefined;    // SD of the per-run means
};

/// `per_run[r][v]` holds one scalar per (run, video).
inline MetricAggregate aggregate_metric(
    const std::vector<std::vector<double>>& per_run) {
  if (per_run.empty()) throw ConfigError("aggregate_metric: no runs");
  MetricAggregate out;
  std::vector<double> run_means, run_sds;
  for (const auto& vids : per_run) {
    if (vids.empty()) throw ConfigError("aggregate_metric: run with no videos");
    run_means.push_back(mean_of(vids));
    run_sds.push_back(sample_sd(vids));
  }
  out.mean = mean_of(run_means);
  out.sd_runs = sample_sd(run_means);
  bool any_nan = false;
  for (double s : run_sds) any_nan = any_nan || std::isnan(s);
  out.sd_videos = any_nan ? kUndefined : mean_of(run_sds);
  return out;
}

/// SD across the per-phase means of a phase-decomposable metric. Input
/// `per_phase[c]` holds the metric value of phase c for every (run, video)
/// where the phase was defined.
inline double sd_over_phases(const std::vector<std::vector<double>>& per_phase) {
  std::vector<double> phase_means;
  for (const auto& xs : per_phase) {
    if (!xs.empty()) phase_means.push_back(mean_of(xs));
  }
  return sample_sd(phase_means);
}

/// Corpus-level F1: harmonic mean of the video-averaged macro precision and
/// macro recall of one run.
inline double corpus_f1(const std::vector<VideoMetrics>& videos) {
  if (videos.empty()) throw ConfigError("corpus_f1: no videos");
  std::vector<double> ps, rs;
  for (const auto& v : videos) {
    ps.push_back(v.macro_precision);
    rs.push_back(v.macro_recall);
  }
  return harmonic_mean(mean_of(ps), mean_of(rs));
}

}  // namespace tunes
