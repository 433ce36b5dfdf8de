#pragma once

#include <cmath>
#include <vector>

#include "tunes/params.hpp"

namespace tunes {

enum class LrSchedule { constant, cosine };

inline LrSchedule schedule_from_string(const std::string& s) {
  if (s == "constant") return LrSchedule::constant;
  if (s == "cosine") return LrSchedule::cosine;
  throw ConfigError("unknown schedule \"" + s + "\" (expected constant or cosine)");
}

inline const char* to_string(LrSchedule s) {
  return s == LrSchedule::constant ? "constant" : "cosine";
}

/// Learning rate for `epoch` in [0, total). Cosine anneals from `base`
/// toward zero: 0.5 * base * (1 + cos(pi * epoch / total)).
inline double scheduled_lr(double base, LrSchedule s, int epoch, int total) {
  if (epoch < 0 || total < 1 || epoch >= total) {
    throw ConfigError("scheduled_lr: need 0 <= epoch < total");
  }
  if (s == LrSchedule::constant) return base;
  return 0.5 * base * (1.0 + std::cos(M_PI * double(epoch) / double(total)));
}

/// Adam over every parameter in a store, with global gradient-norm
/// clipping applied before the moment updates.
template <typename Scalar>
class Adam {
 public:
  struct Config {
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);
    Scalar clip_norm = Scalar(1);  // <= 0 disables clipping
  };

  explicit Adam(ParamStore<Scalar>& params, Config cfg = {})
      : params_(&params), cfg_(cfg) {
    for (Parameter<Scalar>& p : params) {
      m_.push_back(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
    }
  }

  /// One update from the accumulated gradients; clears them afterwards.
  /// Returns the pre-clip global gradient norm.
  Scalar step(Scalar lr) {
    Scalar sq = 0;
    for (Parameter<Scalar>& p : *params_) sq += p.grad.squaredNorm();
    const Scalar norm = std::sqrt(sq);
    const Scalar scale =
        cfg_.clip_norm > 0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : Scalar(1);

    ++t_;
    const Scalar bc1 = Scalar(1) - std::pow(cfg_.beta1, Scalar(t_));
    const Scalar bc2 = Scalar(1) - std::pow(cfg_.beta2, Scalar(t_));
    std::size_t i = 0;
    for (Parameter<Scalar>& p : *params_) {
      const Matrix<Scalar> g = p.grad * scale;
      m_[i] = cfg_.beta1 * m_[i] + (Scalar(1) - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (Scalar(1) - cfg_.beta2) * g.cwiseProduct(g);
      p.value.array() -=
          lr * (m_[i].array() / bc1) /
          ((v_[i].array() / bc2).sqrt() + cfg_.eps);
      p.grad.setZero();
      ++i;
    }
    return norm;
  }

  void zero_grad() {
    for (Parameter<Scalar>& p : *params_) p.grad.setZero();
  }

  long steps() const { return t_; }

 private:
  ParamStore<Scalar>* params_;
  Config cfg_;
  std::vector<Matrix<Scalar>> m_, v_;
  long t_ = 0;
};

}  // namespace tunes
