#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tunes/dataset.hpp"
#include "tunes/losses.hpp"
#include "tunes/metrics.hpp"
#include "tunes/model.hpp"
#include "tunes/optimizer.hpp"

namespace tunes {

struct TrainConfig {
  int epochs = 75;
  double lr = 5e-4;
  LrSchedule schedule = LrSchedule::constant;
  double clip_norm = 1.0;
  double lambda_smooth = 0.15;
  double mask_coverage = 0.35;
  bool use_masking = true;
  bool use_augmentation = true;
  std::uint64_t seed = 1;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double grad_norm = 0;  // mean pre-clip norm across updates
  double val_macro_jaccard = kUndefined;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int selected_epoch = -1;
  double selected_val = kUndefined;
  bool best_val_selection = false;
};

/// Frame predictions at full resolution, truncated back to each video's
/// true length.
template <typename Scalar>
std::vector<VideoMetrics> evaluate_videos(
    const TunesNet<Scalar>& net, const std::vector<VideoSequence<Scalar>>& videos) {
  std::vector<VideoMetrics> out;
  out.reserve(videos.size());
  for (const auto& v : videos) {
    const VideoSequence<Scalar> padded = pad_to_multiple(v, kChunk);
    Graph<Scalar> g(/*recording=*/false);
    const auto fwd = net.forward(g, padded.features);
    const Matrix<Scalar> scores = g.val(fwd.scores[0]).topRows(v.frames());
    out.push_back(video_metrics(v.labels, predict_labels(scores),
                                net.config().num_classes));
  }
  return out;
}

inline double mean_macro_jaccard(const std::vector<VideoMetrics>& ms) {
  std::vector<double> xs;
  for (const auto& m : ms) xs.push_back(m.macro_jaccard);
  return mean_of(xs);
}

inline double mean_accuracy(const std::vector<VideoMetrics>& ms) {
  std::vector<double> xs;
  for (const auto& m : ms) xs.push_back(m.accuracy);
  return mean_of(xs);
}

/// Trains on whole (padded) sequences, one video per update. With the
/// constant schedule the parameters that scored the best validation macro
/// Jaccard are restored at the end; with the cosine schedule the last epoch
/// wins. Aborts with a diagnostic when the loss stops being finite.
template <typename Scalar>
TrainResult train(TunesNet<Scalar>& net,
                  const std::vector<VideoSequence<Scalar>>& train_videos,
                  const std::vector<VideoSequence<Scalar>>& val_videos,
                  const TrainConfig& cfg) {
  if (train_videos.empty()) throw ConfigError("train: no training videos");
  if (cfg.epochs < 1) throw ConfigError("train: epochs >= 1");
  const int C = net.config().num_classes;

  std::vector<LabelSequence> train_labels;
  for (const auto& v : train_videos) train_labels.push_back(v.labels);
  const Vector<Scalar> gamma = median_frequency_weights<Scalar>(train_labels, C);

  typename Adam<Scalar>::Config ocfg;
  ocfg.clip_norm = Scalar(cfg.clip_norm);
  Adam<Scalar> opt(net.params(), ocfg);

  std::mt19937_64 rng_order(derive_seed(cfg.seed, 1));
  std::mt19937_64 rng_aug(derive_seed(cfg.seed, 2));
  std::mt19937_64 rng_mask(derive_seed(cfg.seed, 3));

  TrainResult result;
  result.best_val_selection = cfg.schedule == LrSchedule::constant && !val_videos.empty();
  std::vector<Matrix<Scalar>> best_params;
  double best_val = -1;

  std::vector<int> order(train_videos.size());
  std::iota(order.begin(), order.end(), 0);

  for (int e = 0; e < cfg.epochs; ++e) {
    const double lr = scheduled_lr(cfg.lr, cfg.schedule, e, cfg.epochs);
    std::shuffle(order.begin(), order.end(), rng_order);

    double loss_sum = 0, norm_sum = 0;
    for (int idx : order) {
      VideoSequence<Scalar> v = train_videos[idx];
      if (cfg.use_augmentation) {
        v = augment_shift(v, rng_aug);
        v = augment_speed(v, rng_aug);
      }
      v = pad_to_multiple(v, kChunk);

      const std::vector<int>* masked = nullptr;
      MaskPlan plan;
      if (cfg.use_masking) {
        plan = plan_span_mask(v.labels, rng_mask, kChunk, cfg.mask_coverage);
        if (!plan.rows.empty()) masked = &plan.rows;
      }

      Graph<Scalar> g;
      const auto fwd = net.forward(g, v.features, masked);
      std::array<Matrix<Scalar>, 4> preds;
      for (int i = 0; i < 4; ++i) preds[i] = g.val(fwd.scores[i]);

      std::array<Matrix<Scalar>, 4> grads;
      const TotalLoss<Scalar> tl =
          total_loss(preds, v.labels, gamma, Scalar(cfg.lambda_smooth), &grads);
      if (!std::isfinite(double(tl.value))) {
        throw std::runtime_error(
            "training diverged: non-finite loss at epoch " + std::to_string(e) +
            ", video " + std::to_string(idx));
      }
      loss_sum += double(tl.value);

      std::vector<std::pair<int, Matrix<Scalar>>> seeds;
      for (int i = 0; i < 4; ++i) seeds.emplace_back(fwd.scores[i], grads[i]);
      g.backward(seeds);
      norm_sum += double(opt.step(Scalar(lr)));
    }

    EpochStats s;
    s.epoch = e;
    s.lr = lr;
    s.train_loss = loss_sum / double(train_videos.size());
    s.grad_norm = norm_sum / double(train_videos.size());
    if (!val_videos.empty()) {
      s.val_macro_jaccard = mean_macro_jaccard(evaluate_videos(net, val_videos));
    }
    result.history.push_back(s);

    if (result.best_val_selection && s.val_macro_jaccard > best_val) {
      best_val = s.val_macro_jaccard;
      result.selected_epoch = e;
      result.selected_val = best_val;
      best_params.clear();
      for (const Parameter<Scalar>& p : net.params()) best_params.push_back(p.value);
    }
  }

  if (result.best_val_selection && !best_params.empty()) {
    std::size_t i = 0;
    for (Parameter<Scalar>& p : net.params()) p.value = best_params[i++];
  } else {
    result.selected_epoch = cfg.epochs - 1;
    result.selected_val = result.history.back().val_macro_jaccard;
  }
  return result;
}

/// Per-frame softmax-regression baseline: a single linear layer trained
/// with unweighted cross entropy, no temporal context at all.
template <typename Scalar>
class FrameClassifier {
 public:
  FrameClassifier(int input_dim, int num_classes, std::uint64_t seed)
      : params_(derive_seed(seed, 0)),
        proj_(params_, "baseline", input_dim, num_classes),
        num_classes_(num_classes) {}

  void fit(const std::vector<VideoSequence<Scalar>>& videos, int epochs,
           Scalar lr) {
    const Vector<Scalar> ones = Vector<Scalar>::Ones(num_classes_);
    Adam<Scalar> opt(params_);
    std::mt19937_64 rng(derive_seed(1, 4));
    std::vector<int> order(videos.size());
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < epochs; ++e) {
      std::shuffle(order.begin(), order.end(), rng);
      for (int idx : order) {
        Graph<Scalar> g;
        const int s = proj_.apply(g, g.leaf(videos[idx].features));
        Matrix<Scalar> grad;
        cross_entropy_loss(g.val(s), videos[idx].labels, ones, &grad);
        g.backward({{s, grad}});
        opt.step(lr);
      }
    }
  }

  LabelSequence predict(const Matrix<Scalar>& features) const {
    const Matrix<Scalar> scores =
        (features * proj_.weight->value).rowwise() + proj_.bias->value.row(0);
    return predict_labels(scores);
  }

  double accuracy(const std::vector<VideoSequence<Scalar>>& videos) const {
    std::vector<double> xs;
    for (const auto& v : videos) {
      xs.push_back(video_metrics(v.labels, predict(v.features), num_classes_).accuracy);
    }
    return mean_of(xs);
  }

 private:
  ParamStore<Scalar> params_;
  Linear<Scalar> proj_;
  int num_classes_;
};

}  // namespace tunes
