#pragma once

#include <algorithm>
#include <array>

#include "tunes/types.hpp"

namespace tunes {

/// Length-reduction factors of the four prediction scales.
inline constexpr std::array<int, 4> kScales{1, 3, 9, 18};

namespace detail {

template <typename Scalar>
Matrix<Scalar> log_softmax_rows(const Matrix<Scalar>& scores) {
  Matrix<Scalar> out(scores.rows(), scores.cols());
  for (Eigen::Index t = 0; t < scores.rows(); ++t) {
    const Scalar m = scores.row(t).maxCoeff();
    const Scalar lse =
        m + std::log((scores.row(t).array() - m).exp().sum());
    out.row(t) = scores.row(t).array() - lse;
  }
  return out;
}

// log(sigmoid(x)) without overflow for large |x|
template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace detail

/// Median frequency balancing: gamma_p = median(freq) / freq_p, with freq_p
/// the fraction of training frames labeled p. A class that never occurs has
/// no defined weight and is reported as an error.
template <typename Scalar>
Vector<Scalar> median_frequency_weights(const std::vector<LabelSequence>& labels,
                                        int num_classes) {
  if (num_classes < 1) throw ConfigError("median_frequency_weights: C >= 1");
  std::vector<long> counts(num_classes, 0);
  long total = 0;
  for (const LabelSequence& seq : labels) {
    check_labels(seq, num_classes);
    for (int y : seq) {
      ++counts[y - 1];
      ++total;
    }
  }
  if (total == 0) throw ConfigError("median_frequency_weights: no labels");
  for (int p = 0; p < num_classes; ++p) {
    if (counts[p] == 0) {
      throw ConfigError("median_frequency_weights: class " + std::to_string(p + 1) +
                        " absent from training data, weight undefined");
    }
  }
  Vector<Scalar> freq(num_classes);
  for (int p = 0; p < num_classes; ++p) freq[p] = Scalar(counts[p]) / Scalar(total);
  std::vector<Scalar> sorted(freq.data(), freq.data() + num_classes);
  std::sort(sorted.begin(), sorted.end());
  const Scalar median =
      num_classes % 2 == 1
          ? sorted[num_classes / 2]
          : (sorted[num_classes / 2 - 1] + sorted[num_classes / 2]) / Scalar(2);
  Vector<Scalar> gamma(num_classes);
  for (int p = 0; p < num_classes; ++p) gamma[p] = median / freq[p];
  return gamma;
}

/// Class-weighted cross entropy, mean over frames:
///   L = -(1/T) sum_t gamma_{y_t} log softmax(scores_t)_{y_t}
template <typename Scalar>
Scalar cross_entropy_loss(const Matrix<Scalar>& scores, const LabelSequence& labels,
                          const Vector<Scalar>& gamma,
                          Matrix<Scalar>* grad = nullptr) {
  const Eigen::Index T = scores.rows();
  const Eigen::Index C = scores.cols();
  if (static_cast<Eigen::Index>(labels.size()) != T) {
    throw ShapeError("cross_entropy_loss: label length mismatch");
  }
  if (gamma.size() != C) throw ShapeError("cross_entropy_loss: weight length mismatch");
  check_labels(labels, static_cast<int>(C));

  const Matrix<Scalar> logp = detail::log_softmax_rows(scores);
  Scalar loss = 0;
  if (grad) grad->setZero(T, C);
  for (Eigen::Index t = 0; t < T; ++t) {
    const int y = labels[t] - 1;
    const Scalar w = gamma[y];
    loss -= w * logp(t, y);
    if (grad) {
      grad->row(t) = (w / Scalar(T)) * logp.row(t).array().exp().matrix();
      (*grad)(t, y) -= w / Scalar(T);
    }
  }
  return loss / Scalar(T);
}

/// Truncated mean squared step of frame-wise log probabilities:
///   L = 1/((T-1)C) sum_{t>=2} sum_p min(|log S_t,p - sg(log S_{t-1},p)|, tau)^2
/// The previous step is behind a stop-gradient, so the gradient flows only
/// through the time-t term.
template <typename Scalar>
Scalar smoothing_loss(const Matrix<Scalar>& scores, Scalar tau = Scalar(4),
                      Matrix<Scalar>* grad = nullptr) {
  const Eigen::Index T = scores.rows();
  const Eigen::Index C = scores.cols();
  if (T < 2) throw ShapeError("smoothing_loss: T >= 2 required");

  const Matrix<Scalar> logp = detail::log_softmax_rows(scores);
  const Scalar norm = Scalar(1) / (Scalar(T - 1) * Scalar(C));
  Scalar loss = 0;
  if (grad) grad->setZero(T, C);
  for (Eigen::Index t = 1; t < T; ++t) {
    Vector<Scalar> g_logp = Vector<Scalar>::Zero(C);
    for (Eigen::Index p = 0; p < C; ++p) {
      const Scalar diff = logp(t, p) - logp(t - 1, p);
      const Scalar delta = std::abs(diff);
      const Scalar clipped = std::min(delta, tau);
      loss += norm * clipped * clipped;
      if (grad && delta < tau) {
        g_logp[p] = Scalar(2) * norm * clipped * (diff >= 0 ? Scalar(1) : Scalar(-1));
      }
    }
    if (grad) {
      // chain through log-softmax of row t only (row t-1 is detached)
      const Vector<Scalar> probs = logp.row(t).array().exp().matrix().transpose();
      const Scalar gsum = g_logp.sum();
      grad->row(t) += (g_logp - gsum * probs).transpose();
    }
  }
  return loss;
}

/// One-hot encode then max-pool with kernel = stride = factor. Windows that
/// contain a phase transition end up multi-hot.
template <typename Scalar>
Matrix<Scalar> downsample_labels(const LabelSequence& labels, int factor,
                                 int num_classes) {
  const int T = static_cast<int>(labels.size());
  if (factor < 1) throw ConfigError("downsample_labels: factor >= 1");
  if (T % factor != 0) {
    throw ShapeError("downsample_labels: T=" + std::to_string(T) +
                     " not divisible by factor " + std::to_string(factor));
  }
  check_labels(labels, num_classes);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(T / factor, num_classes);
  for (int t = 0; t < T; ++t) out(t / factor, labels[t] - 1) = Scalar(1);
  return out;
}

/// Binary cross entropy with the class weight on the positive term only:
///   L = -(1/(SC)) sum_{s,p} [gamma_p y_{s,p} log sig(x) + (1-y_{s,p}) log(1-sig(x))]
template <typename Scalar>
Scalar bce_loss(const Matrix<Scalar>& scores, const Matrix<Scalar>& targets,
                const Vector<Scalar>& gamma, Matrix<Scalar>* grad = nullptr) {
  const Eigen::Index S = scores.rows();
  const Eigen::Index C = scores.cols();
  if (targets.rows() != S || targets.cols() != C) {
    throw ShapeError("bce_loss: target shape mismatch");
  }
  if (gamma.size() != C) throw ShapeError("bce_loss: weight length mismatch");

  const Scalar norm = Scalar(1) / (Scalar(S) * Scalar(C));
  Scalar loss = 0;
  if (grad) grad->setZero(S, C);
  for (Eigen::Index s = 0; s < S; ++s) {
    for (Eigen::Index p = 0; p < C; ++p) {
      const Scalar x = scores(s, p);
      const Scalar y = targets(s, p);
      loss -= norm * (gamma[p] * y * detail::log_sigmoid(x) +
                      (Scalar(1) - y) * detail::log_sigmoid(-x));
      if (grad) {
        const Scalar sig = Scalar(1) / (Scalar(1) + std::exp(-x));
        (*grad)(s, p) = norm * (gamma[p] * y * (sig - Scalar(1)) +
                                (Scalar(1) - y) * sig);
      }
    }
  }
  return loss;
}

template <typename Scalar>
struct TotalLoss {
  Scalar value = 0;
  Scalar ce = 0;
  Scalar smooth = 0;
  std::array<Scalar, 3> bce{};  // scales 3, 9, 18
};

/// Multi-scale objective: class-weighted CE plus smoothing on the
/// full-resolution scores, class-weighted BCE against max-pooled labels on
/// the three reduced scales.
template <typename Scalar>
TotalLoss<Scalar> total_loss(const std::array<Matrix<Scalar>, 4>& preds,
                             const LabelSequence& labels,
                             const Vector<Scalar>& gamma,
                             Scalar lambda_smooth = Scalar(0.15),
                             std::array<Matrix<Scalar>, 4>* grads = nullptr) {
  const int T = static_cast<int>(labels.size());
  const int C = static_cast<int>(gamma.size());
  for (int i = 0; i < 4; ++i) {
    if (T % kScales[i] != 0 || preds[i].rows() != T / kScales[i] ||
        preds[i].cols() != C) {
      throw ShapeError("total_loss: scale " + std::to_string(kScales[i]) +
                       " prediction shape mismatch");
    }
  }

  TotalLoss<Scalar> out;
  Matrix<Scalar> g_ce, g_sm;
  out.ce = cross_entropy_loss(preds[0], labels, gamma, grads ? &g_ce : nullptr);
  out.smooth = smoothing_loss(preds[0], Scalar(4), grads ? &g_sm : nullptr);
  if (grads) (*grads)[0] = g_ce + lambda_smooth * g_sm;
  out.value = out.ce + lambda_smooth * out.smooth;
  for (int k = 1; k < 4; ++k) {
    const Matrix<Scalar> target = downsample_labels<Scalar>(labels, kScales[k], C);
    out.bce[k - 1] =
        bce_loss(preds[k], target, gamma, grads ? &(*grads)[k] : nullptr);
    out.value += out.bce[k - 1];
  }
  return out;
}

}  // namespace tunes
