#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tunes {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Frame-wise phase labels, 1-based: values in [1, C].
using LabelSequence = std::vector<int>;

enum class CausalityMode { causal, acausal };

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// File-format violation; `byte_offset` points at the first bad/missing byte.
struct ParseError : std::runtime_error {
  std::size_t byte_offset;
  ParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
};

template <typename Scalar>
void check_sequence(const Matrix<Scalar>& seq, const char* what = "sequence") {
  if (seq.rows() < 1 || seq.cols() < 1) {
    throw ShapeError(std::string(what) + ": T >= 1 and C >= 1 required");
  }
  if (!seq.allFinite()) {
    throw ShapeError(std::string(what) + ": non-finite entries");
  }
}

inline void check_labels(const LabelSequence& labels, int num_classes) {
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 1 || labels[t] > num_classes) {
      throw ShapeError("label out of range [1," + std::to_string(num_classes) +
                       "] at frame " + std::to_string(t));
    }
  }
}

/// Deterministic stream derivation so that independent RNG consumers
/// (init, sampling, augmentation) never share a sequence.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace tunes
