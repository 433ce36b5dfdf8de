#pragma once

#include <random>
#include <string>
#include <vector>

#include "tunes/model.hpp"

namespace tunes {

struct AuditConfig {
  int frames = 72;     // test sequence length, multiple of kChunk
  int min_pairs = 200;  // (output row, class) pairs across all scales
  std::uint64_t seed = 7;
};

struct AuditViolation {
  int scale = 0;      // length reduction of the head
  int row = 0;        // output row that was seeded
  int cls = 0;
  int input_row = 0;  // first future input row with a nonzero gradient
  double value = 0;
};

struct AuditResult {
  bool applicable = true;  // offline models are not audited
  bool passed = false;
  long pairs = 0;
  long violating_pairs = 0;
  std::vector<AuditViolation> violations;  // first few, for the report
  std::vector<std::string> suspects;       // acausal ops found in the model
  std::string note;
};

/// Backpropagates a unit seed from every head and demands bit-zero input
/// gradients at every frame later than the seeded output's anchor. Output
/// row s of the head at reduction chi may depend on input frames up to
/// s * chi only; anything later is a causality leak. Gradients in the tape
/// are structurally exact, so the check needs no tolerance.
template <typename Scalar>
AuditResult audit_causality(const TunesNet<Scalar>& net, const AuditConfig& cfg) {
  AuditResult res;
  if (net.config().mode == Mode::offline) {
    res.applicable = false;
    res.passed = true;
    res.note = "offline model: centered operators are acausal by design, audit skipped";
    return res;
  }
  if (cfg.frames < kChunk || cfg.frames % kChunk != 0) {
    throw ConfigError("audit: frames must be a positive multiple of " +
                      std::to_string(kChunk));
  }

  for (const auto& [name, mode] : net.temporal_op_modes()) {
    if (mode == CausalityMode::acausal) res.suspects.push_back(name);
  }

  const int T = cfg.frames;
  const int D = net.config().input_dim;
  const int C = net.config().num_classes;

  std::mt19937_64 rng(derive_seed(cfg.seed, 5));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix<Scalar> features(T, D);
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d < D; ++d) features(t, d) = Scalar(gauss(rng));
  }

  Graph<Scalar> g;
  const auto fwd = net.forward(g, features);

  int total_rows = 0;
  for (int i = 0; i < 4; ++i) total_rows += T / kScales[i];
  const int classes_per_row =
      std::min(C, std::max(1, (cfg.min_pairs + total_rows - 1) / total_rows));

  bool any_nonzero = false;
  for (int i = 0; i < 4; ++i) {
    const int chi = kScales[i];
    const int S = T / chi;
    for (int s = 0; s < S; ++s) {
      for (int k = 0; k < classes_per_row; ++k) {
        const int c = (s + k * (C / classes_per_row + 1)) % C;
        Matrix<Scalar> seed = Matrix<Scalar>::Zero(S, C);
        seed(s, c) = Scalar(1);
        g.backward({{fwd.scores[i], seed}});
        const Matrix<Scalar> din = g.grad_or_zero(fwd.input);
        ++res.pairs;

        if ((din.array() != Scalar(0)).any()) any_nonzero = true;
        const int anchor = s * chi;
        for (int r = anchor + 1; r < T; ++r) {
          Eigen::Index bad = -1;
          for (Eigen::Index d = 0; d < din.cols(); ++d) {
            if (din(r, d) != Scalar(0)) {
              bad = d;
              break;
            }
          }
          if (bad >= 0) {
            ++res.violating_pairs;
            if (res.violations.size() < 10) {
              res.violations.push_back(
                  {chi, s, c, r, double(din(r, bad))});
            }
            break;
          }
        }
      }
    }
  }

  res.passed = res.violating_pairs == 0;
  if (!any_nonzero) {
    res.passed = false;
    res.note = "input gradients were identically zero; audit would be vacuous";
  } else if (!res.passed && !res.suspects.empty()) {
    res.note = "acausal operators present: " + res.suspects[0];
    for (std::size_t i = 1; i < res.suspects.size(); ++i) {
      res.note += ", " + res.suspects[i];
    }
  }
  if (res.pairs < cfg.min_pairs) {
    res.passed = false;
    res.note += (res.note.empty() ? "" : "; ");
    res.note += "only " + std::to_string(res.pairs) + " pairs checked, wanted " +
                std::to_string(cfg.min_pairs);
  }
  return res;
}

}  // namespace tunes
