#pragma once

#include <sys/resource.h>

#include <chrono>
#include <fstream>
#include <new>
#include <random>
#include <string>
#include <vector>

#include "tunes/metrics.hpp"
#include "tunes/model.hpp"

namespace tunes {

/// Peak resident set size in kB: VmHWM from /proc/self/status, falling back
/// to getrusage. -1 when neither source works.
inline long peak_rss_kb() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      try {
        return std::stol(line.substr(6));
      } catch (...) {
        break;
      }
    }
  }
  rusage ru{};
  if (getrusage(RUSAGE_SELF, &ru) == 0) return ru.ru_maxrss;
  return -1;
}

/// Resets the VmHWM counter so per-measurement peaks are meaningful.
/// Returns false (and the next peak is a process-lifetime high-water mark)
/// where /proc/self/clear_refs is unavailable.
inline bool reset_peak_rss() {
  std::ofstream f("/proc/self/clear_refs");
  if (!f) return false;
  f << "5";
  f.flush();
  return static_cast<bool>(f);
}

struct BenchmarkConfig {
  std::vector<int> lengths = {450, 900, 1800, 3600, 7200};
  int warmup = 100;
  int reps = 1000;
  std::uint64_t seed = 3;
};

struct BenchmarkRow {
  int length = 0;
  double latency_ms_mean = kUndefined;
  double latency_ms_sd = kUndefined;
  long peak_rss_kb = -1;
  bool peak_was_reset = false;
  bool oom = false;
};

/// Forward-only latency and peak memory per sequence length, single
/// threaded, no tape recording. An allocation failure is reported as a data
/// point instead of killing the run.
template <typename Scalar>
std::vector<BenchmarkRow> run_benchmark(const TunesNet<Scalar>& net,
                                        const BenchmarkConfig& cfg) {
  if (cfg.warmup < 0 || cfg.reps < 1) throw ConfigError("benchmark: bad protocol");
  std::mt19937_64 rng(derive_seed(cfg.seed, 6));
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<BenchmarkRow> rows;
  for (int L : cfg.lengths) {
    if (L < kChunk || L % kChunk != 0) {
      throw ConfigError("benchmark: length " + std::to_string(L) +
                        " is not a multiple of " + std::to_string(kChunk));
    }
    BenchmarkRow row;
    row.length = L;
    try {
      Matrix<Scalar> features(L, net.config().input_dim);
      for (Eigen::Index t = 0; t < features.rows(); ++t) {
        for (Eigen::Index d = 0; d < features.cols(); ++d) {
          features(t, d) = Scalar(gauss(rng));
        }
      }

      row.peak_was_reset = reset_peak_rss();
      for (int i = 0; i < cfg.warmup; ++i) {
        Graph<Scalar> g(/*recording=*/false);
        net.forward(g, features);
      }

      std::vector<double> ms(cfg.reps);
      for (int i = 0; i < cfg.reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Graph<Scalar> g(/*recording=*/false);
        net.forward(g, features);
        const auto t1 = std::chrono::steady_clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
      }
      row.latency_ms_mean = mean_of(ms);
      row.latency_ms_sd = sample_sd(ms);
      row.peak_rss_kb = tunes::peak_rss_kb();
    } catch (const std::bad_alloc&) {
      row.oom = true;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace tunes
