#pragma once

#include <deque>
#include <random>
#include <string>

#include "tunes/graph.hpp"

namespace tunes {

/// Owns every trainable tensor of a model in registration order. Layers keep
/// stable pointers into the store; the optimizer and checkpoint code iterate
/// it. Registration order is deterministic for a given config, which keeps
/// parameter counts and training runs reproducible.
template <typename Scalar>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  Parameter<Scalar>* add_uniform(const std::string& name, int rows, int cols,
                                 Scalar limit) {
    std::uniform_real_distribution<double> dist(-double(limit), double(limit));
    Matrix<Scalar> v(rows, cols);
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) v(r, c) = Scalar(dist(rng_));
    }
    store_.emplace_back(name, std::move(v));
    return &store_.back();
  }

  Parameter<Scalar>* add_normal(const std::string& name, int rows, int cols,
                                Scalar stddev) {
    std::normal_distribution<double> dist(0.0, double(stddev));
    Matrix<Scalar> v(rows, cols);
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) v(r, c) = Scalar(dist(rng_));
    }
    store_.emplace_back(name, std::move(v));
    return &store_.back();
  }

  Parameter<Scalar>* add_constant(const std::string& name, int rows, int cols,
                                  Scalar value) {
    store_.emplace_back(name, Matrix<Scalar>::Constant(rows, cols, value));
    return &store_.back();
  }

  long count_scalars() const {
    long n = 0;
    for (const auto& p : store_) n += static_cast<long>(p.size());
    return n;
  }

  auto begin() { return store_.begin(); }
  auto end() { return store_.end(); }
  auto begin() const { return store_.begin(); }
  auto end() const { return store_.end(); }
  std::size_t size() const { return store_.size(); }

  Parameter<Scalar>* find(const std::string& name) {
    for (auto& p : store_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

 private:
  std::deque<Parameter<Scalar>> store_;
  std::mt19937_64 rng_;
};

/// y = x W + b
template <typename Scalar>
struct Linear {
  Parameter<Scalar>* weight = nullptr;
  Parameter<Scalar>* bias = nullptr;

  Linear() = default;
  Linear(ParamStore<Scalar>& params, const std::string& name, int in, int out) {
    const Scalar limit = Scalar(1) / std::sqrt(Scalar(in));
    weight = params.add_uniform(name + ".weight", in, out, limit);
    bias = params.add_uniform(name + ".bias", 1, out, limit);
  }

  int apply(Graph<Scalar>& g, int x) const {
    return g.add_bias(g.matmul(x, g.param(*weight)), g.param(*bias));
  }
};

}  // namespace tunes
