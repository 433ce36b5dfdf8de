#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "tunes/binary_io.hpp"
#include "tunes/types.hpp"

namespace tunes {

/// One video: frame features (T x D) with frame-wise phase labels (1-based).
template <typename Scalar>
struct VideoSequence {
  Matrix<Scalar> features;
  LabelSequence labels;

  int frames() const { return static_cast<int>(features.rows()); }
};

// ---------------------------------------------------------------------------
// On-disk format: "FSEQ1", u32 T, u32 D, T*D float32 row-major, then
// "PHSE1", T uint8 labels. All integers little-endian. T >= 1, labels >= 1.
// ---------------------------------------------------------------------------

template <typename Scalar>
void write_video(const std::string& path, const VideoSequence<Scalar>& v) {
  const int T = v.frames();
  const int D = static_cast<int>(v.features.cols());
  if (T < 1 || D < 1) throw ShapeError("write_video: empty sequence");
  if (static_cast<int>(v.labels.size()) != T) {
    throw ShapeError("write_video: label/feature length mismatch");
  }
  for (int y : v.labels) {
    if (y < 1 || y > 255) throw ShapeError("write_video: label outside [1,255]");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  io::Writer w{f};
  w.magic("FSEQ1");
  w.u32(static_cast<std::uint32_t>(T));
  w.u32(static_cast<std::uint32_t>(D));
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d < D; ++d) w.f32(static_cast<float>(v.features(t, d)));
  }
  w.magic("PHSE1");
  for (int y : v.labels) w.u8(static_cast<std::uint8_t>(y));
  if (!f) throw std::runtime_error("write failed for " + path);
}

template <typename Scalar>
VideoSequence<Scalar> read_video(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  io::Reader r{f};
  r.magic("FSEQ1", "feature section");

  std::size_t at = r.offset;
  const std::uint32_t T = r.u32("frame count");
  if (T == 0) throw ParseError("frame count is zero", at);
  at = r.offset;
  const std::uint32_t D = r.u32("feature dim");
  if (D == 0) throw ParseError("feature dim is zero", at);

  VideoSequence<Scalar> v;
  v.features.resize(T, D);
  for (std::uint32_t t = 0; t < T; ++t) {
    for (std::uint32_t d = 0; d < D; ++d) {
      v.features(t, d) = Scalar(r.f32("feature data"));
    }
  }
  r.magic("PHSE1", "label section");
  v.labels.resize(T);
  for (std::uint32_t t = 0; t < T; ++t) {
    at = r.offset;
    const std::uint8_t y = r.u8("label");
    if (y == 0) throw ParseError("label is zero (labels are 1-based)", at);
    v.labels[t] = y;
  }
  if (f.peek() != std::ifstream::traits_type::eof()) {
    throw ParseError("trailing bytes after label section", r.offset);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Manifest: one "<split>\t<path>" line per video. Relative paths resolve
// against the manifest's directory.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string split;
  std::string path;
};

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(f, line)) {
    const std::size_t line_at = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw ParseError("manifest line is not \"<split>\\t<path>\"", line_at);
    }
    ManifestEntry e;
    e.split = line.substr(0, tab);
    std::filesystem::path p(line.substr(tab + 1));
    e.path = p.is_absolute() ? p.string() : (base / p).string();
    out.push_back(std::move(e));
  }
  return out;
}

inline void write_manifest(const std::string& path,
                           const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  for (const ManifestEntry& e : entries) f << e.split << '\t' << e.path << '\n';
  if (!f) throw std::runtime_error("write failed for " + path);
}

template <typename Scalar>
std::vector<VideoSequence<Scalar>> load_split(const std::string& manifest_path,
                                              const std::string& split) {
  std::vector<VideoSequence<Scalar>> out;
  for (const ManifestEntry& e : read_manifest(manifest_path)) {
    if (e.split == split) out.push_back(read_video<Scalar>(e.path));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic phase-labeled sequences
// ---------------------------------------------------------------------------

/// Videos walk through phases 1..C in order. Features are a per-phase mean
/// (shared across the whole corpus) plus stationary AR(1) noise, so a
/// frame-wise classifier is informative but imperfect and temporal context
/// pays off. `p_skip` drops one random phase from a video; `p_revisit`
/// re-inserts an earlier phase later on (a recurring-phase workflow).
struct SynthConfig {
  std::uint64_t seed = 1;
  int num_videos = 32;
  int num_classes = 7;
  int feature_dim = 64;
  int min_duration = 300;
  int max_duration = 420;
  int min_segment = 12;
  double mean_scale = 1.0;
  double noise = 3.5;
  double ar_coeff = 0.8;
  double p_skip = 0.0;
  double p_revisit = 0.0;
  // two phases sharing one feature mean, frame-wise indistinguishable;
  // 0 = none
  int confusable_a = 0;
  int confusable_b = 0;
};

template <typename Scalar>
std::vector<VideoSequence<Scalar>> synth_generate(const SynthConfig& cfg) {
  if (cfg.num_videos < 1) throw ConfigError("synth: num_videos >= 1");
  if (cfg.num_classes < 1 || cfg.num_classes > 255) {
    throw ConfigError("synth: num_classes in [1,255]");
  }
  if (cfg.feature_dim < 1) throw ConfigError("synth: feature_dim >= 1");
  if (cfg.min_duration < 1 || cfg.max_duration < cfg.min_duration) {
    throw ConfigError("synth: bad duration range");
  }
  if (cfg.min_duration < cfg.min_segment * (cfg.num_classes + 1)) {
    throw ConfigError("synth: min_duration too short for the phase count");
  }

  std::mt19937_64 rng(derive_seed(cfg.seed, 17));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix<double> means(cfg.num_classes, cfg.feature_dim);
  for (int p = 0; p < cfg.num_classes; ++p) {
    for (int d = 0; d < cfg.feature_dim; ++d) {
      means(p, d) = cfg.mean_scale * gauss(rng);
    }
  }
  if (cfg.confusable_a != 0 || cfg.confusable_b != 0) {
    if (cfg.confusable_a < 1 || cfg.confusable_a > cfg.num_classes ||
        cfg.confusable_b < 1 || cfg.confusable_b > cfg.num_classes ||
        cfg.confusable_a == cfg.confusable_b) {
      throw ConfigError("synth: confusable pair must be two distinct phases");
    }
    means.row(cfg.confusable_b - 1) = means.row(cfg.confusable_a - 1);
  }

  std::vector<VideoSequence<Scalar>> out;
  out.reserve(cfg.num_videos);
  for (int v = 0; v < cfg.num_videos; ++v) {
    std::uniform_int_distribution<int> dur(cfg.min_duration, cfg.max_duration);
    const int T = dur(rng);

    std::vector<int> phases;
    for (int p = 1; p <= cfg.num_classes; ++p) phases.push_back(p);
    if (cfg.num_classes >= 2 && unit(rng) < cfg.p_skip) {
      std::uniform_int_distribution<int> pick(1, cfg.num_classes - 1);
      phases.erase(phases.begin() + pick(rng));
    }
    if (phases.size() >= 3 && unit(rng) < cfg.p_revisit) {
      std::uniform_int_distribution<int> at(2, static_cast<int>(phases.size()) - 1);
      const int j = at(rng);
      std::uniform_int_distribution<int> earlier(0, j - 2);
      const int p = phases[earlier(rng)];
      if (phases[j - 1] != p && phases[j] != p) {
        phases.insert(phases.begin() + j, p);
      }
    }

    // proportional segment lengths, each at least min_segment, summing to T
    const int n = static_cast<int>(phases.size());
    std::vector<double> w(n);
    double wsum = 0;
    for (double& x : w) {
      x = 0.5 + unit(rng);
      wsum += x;
    }
    std::vector<int> len(n);
    int lsum = 0;
    for (int i = 0; i < n; ++i) {
      len[i] = std::max(cfg.min_segment, static_cast<int>(std::lround(T * w[i] / wsum)));
      lsum += len[i];
    }
    while (lsum != T) {
      const int i = static_cast<int>(
          (lsum > T ? std::max_element(len.begin(), len.end())
                    : std::min_element(len.begin(), len.end())) -
          len.begin());
      len[i] += lsum > T ? -1 : 1;
      lsum += lsum > T ? -1 : 1;
    }

    VideoSequence<Scalar> vid;
    vid.labels.reserve(T);
    for (int i = 0; i < n; ++i) {
      vid.labels.insert(vid.labels.end(), len[i], phases[i]);
    }

    vid.features.resize(T, cfg.feature_dim);
    std::vector<double> state(cfg.feature_dim);
    const double a = cfg.ar_coeff;
    const double fresh = std::sqrt(std::max(0.0, 1.0 - a * a));
    for (int d = 0; d < cfg.feature_dim; ++d) state[d] = cfg.noise * gauss(rng);
    for (int t = 0; t < T; ++t) {
      for (int d = 0; d < cfg.feature_dim; ++d) {
        if (t > 0) state[d] = a * state[d] + fresh * cfg.noise * gauss(rng);
        vid.features(t, d) = Scalar(means(vid.labels[t] - 1, d) + state[d]);
      }
    }
    out.push_back(std::move(vid));
  }
  return out;
}

/// Accuracy of classifying every frame by the nearest per-class feature
/// mean estimated from the same corpus. A sanity gauge for how hard the
/// frame-wise problem is.
template <typename Scalar>
double nearest_mean_accuracy(const std::vector<VideoSequence<Scalar>>& videos,
                             int num_classes) {
  if (videos.empty()) throw ConfigError("nearest_mean_accuracy: no videos");
  const int D = static_cast<int>(videos[0].features.cols());
  Matrix<double> sum = Matrix<double>::Zero(num_classes, D);
  std::vector<long> count(num_classes, 0);
  for (const auto& v : videos) {
    check_labels(v.labels, num_classes);
    for (int t = 0; t < v.frames(); ++t) {
      sum.row(v.labels[t] - 1) += v.features.row(t).template cast<double>();
      ++count[v.labels[t] - 1];
    }
  }
  for (int p = 0; p < num_classes; ++p) {
    if (count[p] > 0) sum.row(p) /= double(count[p]);
  }
  long correct = 0, total = 0;
  for (const auto& v : videos) {
    for (int t = 0; t < v.frames(); ++t) {
      int best = -1;
      double best_d = 0;
      for (int p = 0; p < num_classes; ++p) {
        if (count[p] == 0) continue;
        const double d =
            (v.features.row(t).template cast<double>() - sum.row(p)).squaredNorm();
        if (best < 0 || d < best_d) {
          best = p;
          best_d = d;
        }
      }
      correct += best + 1 == v.labels[t];
      ++total;
    }
  }
  return double(correct) / double(total);
}

// ---------------------------------------------------------------------------
// Balanced window sampling
// ---------------------------------------------------------------------------

struct WindowSample {
  int start = 0;
  int length = 0;
};

/// Five windows per phase present in the video (uniform anchor frame within
/// the phase, window centered there and clamped to the video) plus one
/// window centered on each phase transition.
inline std::vector<WindowSample> balanced_sample_windows(const LabelSequence& labels,
                                                         int length,
                                                         std::mt19937_64& rng) {
  const int T = static_cast<int>(labels.size());
  if (length < 1 || length > T) {
    throw ShapeError("balanced_sample_windows: window length must be in [1,T]");
  }
  auto clamp_start = [&](int anchor) {
    return std::clamp(anchor - length / 2, 0, T - length);
  };

  std::vector<std::vector<int>> frames_of(256);
  for (int t = 0; t < T; ++t) frames_of[labels[t]].push_back(t);

  std::vector<WindowSample> out;
  for (int p = 1; p < 256; ++p) {
    if (frames_of[p].empty()) continue;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(frames_of[p].size()) - 1);
    for (int i = 0; i < 5; ++i) {
      out.push_back({clamp_start(frames_of[p][pick(rng)]), length});
    }
  }
  for (int t = 1; t < T; ++t) {
    if (labels[t] != labels[t - 1]) out.push_back({clamp_start(t), length});
  }
  return out;
}

template <typename Scalar>
VideoSequence<Scalar> extract_window(const VideoSequence<Scalar>& v,
                                     const WindowSample& w) {
  if (w.start < 0 || w.length < 1 || w.start + w.length > v.frames()) {
    throw ShapeError("extract_window: out of range");
  }
  VideoSequence<Scalar> out;
  out.features = v.features.middleRows(w.start, w.length);
  out.labels.assign(v.labels.begin() + w.start, v.labels.begin() + w.start + w.length);
  return out;
}

// ---------------------------------------------------------------------------
// Sequence augmentation
// ---------------------------------------------------------------------------

/// Shifts the sequence `delta` frames to the right: the first frame and its
/// label repeat at the front, the tail is dropped. Length is preserved.
template <typename Scalar>
VideoSequence<Scalar> augment_shift(const VideoSequence<Scalar>& v, int delta) {
  const int T = v.frames();
  if (delta < 0 || delta >= T) throw ShapeError("augment_shift: delta must be in [0,T)");
  VideoSequence<Scalar> out;
  out.features.resize(T, v.features.cols());
  out.labels.resize(T);
  for (int t = 0; t < T; ++t) {
    const int src = std::max(0, t - delta);
    out.features.row(t) = v.features.row(src);
    out.labels[t] = v.labels[src];
  }
  return out;
}

template <typename Scalar>
VideoSequence<Scalar> augment_shift(const VideoSequence<Scalar>& v,
                                    std::mt19937_64& rng, int max_delta = 18) {
  std::uniform_int_distribution<int> pick(0, std::min(max_delta, v.frames() - 1));
  return augment_shift(v, pick(rng));
}

/// Local speed perturbation: each frame is independently dropped (p_drop) or
/// duplicated (p_dup), labels in lockstep. Never returns an empty sequence.
template <typename Scalar>
VideoSequence<Scalar> augment_speed(const VideoSequence<Scalar>& v,
                                    std::mt19937_64& rng, double p_drop = 0.05,
                                    double p_dup = 0.05) {
  if (p_drop < 0 || p_dup < 0 || p_drop + p_dup > 1) {
    throw ConfigError("augment_speed: need p_drop, p_dup >= 0 and p_drop + p_dup <= 1");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> keep;
  for (int t = 0; t < v.frames(); ++t) {
    const double u = unit(rng);
    if (u < p_drop) continue;
    keep.push_back(t);
    if (u < p_drop + p_dup) keep.push_back(t);
  }
  if (keep.empty()) keep.push_back(0);
  VideoSequence<Scalar> out;
  out.features.resize(keep.size(), v.features.cols());
  out.labels.resize(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.features.row(i) = v.features.row(keep[i]);
    out.labels[i] = v.labels[keep[i]];
  }
  return out;
}

inline int ceil_to_multiple(int n, int multiple) {
  return ((n + multiple - 1) / multiple) * multiple;
}

/// Pads to a multiple of `multiple` frames by repeating the last frame and
/// its label.
template <typename Scalar>
VideoSequence<Scalar> pad_to_multiple(const VideoSequence<Scalar>& v, int multiple) {
  const int T = v.frames();
  if (T < 1) throw ShapeError("pad_to_multiple: empty sequence");
  const int padded = ceil_to_multiple(T, multiple);
  if (padded == T) return v;
  VideoSequence<Scalar> out;
  out.features.resize(padded, v.features.cols());
  out.features.topRows(T) = v.features;
  out.labels = v.labels;
  out.labels.resize(padded, v.labels.back());
  for (int t = T; t < padded; ++t) out.features.row(t) = v.features.row(T - 1);
  return out;
}

// ---------------------------------------------------------------------------
// Span masking
// ---------------------------------------------------------------------------

/// Token spans chosen for mask replacement at the bottleneck. `rows` is the
/// flattened, sorted list of masked token indices.
struct MaskPlan {
  std::vector<std::pair<int, int>> spans;  // (start token, span length)
  std::vector<int> rows;
  int token_count = 0;
  int target = 0;

  int placed() const { return static_cast<int>(rows.size()); }
  bool shortfall() const { return placed() < target; }
};

/// Plans disjoint token spans covering about `coverage` of the bottleneck
/// sequence. A token summarizes `chunk` frames; tokens whose frame window
/// contains a phase transition are never masked, so the plan may fall short
/// of its target on transition-dense videos (reported, not fatal).
inline MaskPlan plan_span_mask(const LabelSequence& labels, std::mt19937_64& rng,
                               int chunk = 18, double coverage = 0.35,
                               int max_span = 17) {
  const int T = static_cast<int>(labels.size());
  if (T < chunk || T % chunk != 0) {
    throw ShapeError("plan_span_mask: label length must be a positive multiple of the chunk");
  }
  if (coverage < 0 || coverage > 1) throw ConfigError("plan_span_mask: coverage in [0,1]");
  if (max_span < 1 || max_span >= chunk) {
    throw ConfigError("plan_span_mask: span lengths must be in [1, chunk)");
  }

  const int S = T / chunk;
  MaskPlan plan;
  plan.token_count = S;
  plan.target = static_cast<int>(std::lround(coverage * S));

  std::vector<bool> free(S, true);
  for (int s = 0; s < S; ++s) {
    for (int t = s * chunk; t < (s + 1) * chunk; ++t) {
      if (t > 0 && labels[t] != labels[t - 1]) {
        free[s] = false;
        break;
      }
    }
  }

  int placed = 0;
  while (placed < plan.target) {
    // maximal runs of still-free tokens
    std::vector<std::pair<int, int>> runs;
    int longest = 0;
    for (int s = 0; s < S;) {
      if (!free[s]) {
        ++s;
        continue;
      }
      int e = s;
      while (e < S && free[e]) ++e;
      runs.emplace_back(s, e - s);
      longest = std::max(longest, e - s);
      s = e;
    }
    if (longest == 0) break;

    std::uniform_int_distribution<int> draw(1, std::min(max_span, plan.target - placed));
    const int len = std::min(draw(rng), longest);
    long positions = 0;
    for (const auto& [start, rl] : runs) {
      if (rl >= len) positions += rl - len + 1;
    }
    std::uniform_int_distribution<long> where(0, positions - 1);
    long at = where(rng);
    for (const auto& [start, rl] : runs) {
      if (rl < len) continue;
      if (at >= rl - len + 1) {
        at -= rl - len + 1;
        continue;
      }
      const int span_start = start + static_cast<int>(at);
      plan.spans.emplace_back(span_start, len);
      for (int s = span_start; s < span_start + len; ++s) free[s] = false;
      placed += len;
      break;
    }
  }

  for (int s = 0; s < S; ++s) {
    bool masked = false;
    for (const auto& [start, len] : plan.spans) {
      if (s >= start && s < start + len) {
        masked = true;
        break;
      }
    }
    if (masked) plan.rows.push_back(s);
  }
  return plan;
}

}  // namespace tunes
