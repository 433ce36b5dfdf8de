#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tunes/audit.hpp"
#include "tunes/benchmark.hpp"
#include "tunes/report.hpp"
#include "tunes/trainer.hpp"

namespace fs = std::filesystem;
using tunes::TrainConfig;
using tunes::TunesConfig;
using tunes::TunesNet;
using tunes::VideoMetrics;
using tunes::VideoSequence;

namespace {

// --set key=value overrides on top of the model config. Values are parsed
// as JSON so numbers and booleans work; anything unparseable is a string.
TunesConfig apply_overrides(TunesConfig cfg, const std::vector<std::string>& sets) {
  nlohmann::json j = cfg;
  for (const std::string& kv : sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw tunes::ConfigError("--set expects key=value, got \"" + kv + "\"");
    }
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    if (!j.contains(key)) throw tunes::ConfigError("unknown config key \"" + key + "\"");
    try {
      j[key] = nlohmann::json::parse(val);
    } catch (const nlohmann::json::exception&) {
      j[key] = val;
    }
  }
  return j.get<TunesConfig>();
}

fs::path make_run_dir(const std::string& dir) {
  fs::create_directories(dir);
  return fs::path(dir);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
}

int infer_num_classes(const std::vector<std::vector<VideoSequence<double>>*>& splits) {
  int c = 0;
  for (const auto* vs : splits) {
    for (const auto& v : *vs) {
      for (int y : v.labels) c = std::max(c, y);
    }
  }
  if (c < 1) throw tunes::ConfigError("no labels found in the data");
  return c;
}

struct ScoredSplit {
  std::vector<VideoMetrics> strict, relaxed;
};

ScoredSplit score_split(const TunesNet<double>& net,
                        const std::vector<VideoSequence<double>>& videos,
                        int tolerance) {
  ScoredSplit out;
  const int C = net.config().num_classes;
  for (const auto& v : videos) {
    const auto padded = tunes::pad_to_multiple(v, tunes::kChunk);
    tunes::Graph<double> g(false);
    const auto fwd = net.forward(g, padded.features);
    const tunes::LabelSequence pred =
        tunes::predict_labels(tunes::Matrix<double>(
            g.val(fwd.scores[0]).topRows(v.frames())));
    out.strict.push_back(tunes::video_metrics(v.labels, pred, C));
    out.relaxed.push_back(tunes::relaxed_video_metrics(v.labels, pred, C, tolerance));
  }
  return out;
}

void append_metric_rows(std::vector<std::vector<std::string>>& rows,
                        const std::string& prefix,
                        const std::vector<VideoMetrics>& ms) {
  auto col = [&](auto pick) {
    std::vector<double> xs;
    for (const auto& m : ms) xs.push_back(pick(m));
    return xs;
  };
  const std::vector<std::pair<std::string, std::vector<double>>> cols = {
      {"accuracy", col([](const VideoMetrics& m) { return m.accuracy; })},
      {"macro_precision", col([](const VideoMetrics& m) { return m.macro_precision; })},
      {"macro_recall", col([](const VideoMetrics& m) { return m.macro_recall; })},
      {"macro_jaccard", col([](const VideoMetrics& m) { return m.macro_jaccard; })},
      {"macro_f1", col([](const VideoMetrics& m) { return m.macro_f1; })},
  };
  for (const auto& [name, xs] : cols) {
    rows.push_back({prefix + name, "mean", tunes::fmt_num(tunes::mean_of(xs))});
    rows.push_back({prefix + name, "sd_videos", tunes::fmt_num(tunes::sample_sd(xs))});
  }
  rows.push_back({prefix + "corpus_f1", "value", tunes::fmt_num(tunes::corpus_f1(ms))});
}

void write_split_metrics(const fs::path& path, const ScoredSplit& s) {
  std::vector<std::vector<std::string>> rows;
  append_metric_rows(rows, "", s.strict);
  append_metric_rows(rows, "relaxed_", s.relaxed);
  tunes::write_csv(path.string(), {"metric", "statistic", "value"}, rows);
}

void write_history(const fs::path& dir, const tunes::TrainResult& result) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : result.history) {
    rows.push_back({std::to_string(s.epoch), tunes::fmt_num(s.lr),
                    tunes::fmt_num(s.train_loss), tunes::fmt_num(s.grad_norm),
                    tunes::fmt_num(s.val_macro_jaccard)});
  }
  tunes::write_csv((dir / "history.csv").string(),
                   {"epoch", "lr", "train_loss", "grad_norm", "val_macro_jaccard"},
                   rows);

  tunes::PlotSeries loss{"train loss", {}, {}};
  tunes::PlotSeries val{"val macro Jaccard", {}, {}};
  for (const auto& s : result.history) {
    loss.x.push_back(s.epoch);
    loss.y.push_back(s.train_loss);
    if (!std::isnan(s.val_macro_jaccard)) {
      val.x.push_back(s.epoch);
      val.y.push_back(s.val_macro_jaccard);
    }
  }
  tunes::write_svg_line_plot((dir / "loss_curve.svg").string(), "Training loss",
                             "epoch", "loss", {loss});
  if (!val.x.empty()) {
    tunes::write_svg_line_plot((dir / "val_curve.svg").string(),
                               "Validation macro Jaccard", "epoch",
                               "macro Jaccard", {val});
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal U-Net with attention for phase-labeled sequences"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string synth_out;
  tunes::SynthConfig sc;
  int n_train = 20, n_val = 5, n_test = 10;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", sc.seed);
  synth->add_option("--train", n_train, "Training videos");
  synth->add_option("--val", n_val, "Validation videos");
  synth->add_option("--test", n_test, "Test videos");
  synth->add_option("--classes", sc.num_classes);
  synth->add_option("--dim", sc.feature_dim);
  synth->add_option("--min-duration", sc.min_duration);
  synth->add_option("--max-duration", sc.max_duration);
  synth->add_option("--noise", sc.noise);
  synth->add_option("--ar", sc.ar_coeff, "AR(1) coefficient of the noise");
  synth->add_option("--mean-scale", sc.mean_scale);
  synth->add_option("--p-skip", sc.p_skip, "Probability a video skips one phase");
  synth->add_option("--p-revisit", sc.p_revisit, "Probability a video revisits a phase");
  synth->add_option("--confusable-a", sc.confusable_a);
  synth->add_option("--confusable-b", sc.confusable_b);

  // ---- train ----
  auto* train = app.add_subcommand("train", "Train a model");
  std::string train_data, train_run, train_mode = "online";
  TrainConfig tc;
  std::uint64_t model_seed = 1;
  std::vector<std::string> train_sets;
  bool no_masking = false, no_augmentation = false;
  bool ablate_attention = false, ablate_conv = false, no_alternation = false;
  int blocks_override = 0;
  std::string schedule_name = "constant";
  train->add_option("--data", train_data, "Manifest file")->required();
  train->add_option("--run", train_run, "Run directory")->required();
  train->add_option("--mode", train_mode, "online or offline");
  train->add_option("--epochs", tc.epochs);
  train->add_option("--lr", tc.lr);
  train->add_option("--schedule", schedule_name, "constant or cosine");
  train->add_option("--clip-norm", tc.clip_norm);
  train->add_option("--lambda-smooth", tc.lambda_smooth);
  train->add_option("--mask-coverage", tc.mask_coverage);
  train->add_option("--seed", tc.seed, "Training seed");
  train->add_option("--model-seed", model_seed);
  train->add_option("--blocks", blocks_override, "Transformer blocks in the bottleneck");
  train->add_flag("--no-masking", no_masking);
  train->add_flag("--no-augmentation", no_augmentation);
  train->add_flag("--ablate-attention", ablate_attention, "Conv-only bottleneck");
  train->add_flag("--ablate-conv", ablate_conv, "No conv in the transformer blocks");
  train->add_flag("--no-alternation", no_alternation, "Unmasked offline attention");
  train->add_option("--set", train_sets, "Config override key=value")->take_all();

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on one split");
  std::string eval_data, eval_run, eval_ckpt, eval_split = "test";
  int eval_tolerance = 10;
  eval->add_option("--data", eval_data, "Manifest file")->required();
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--run", eval_run, "Run directory")->required();
  eval->add_option("--split", eval_split);
  eval->add_option("--tolerance", eval_tolerance, "Relaxed-metric boundary tolerance");

  // ---- benchmark ----
  auto* bench = app.add_subcommand("benchmark", "Forward latency and peak memory");
  std::string bench_run, bench_mode = "offline";
  tunes::BenchmarkConfig bc;
  std::vector<std::string> bench_sets;
  bench->add_option("--run", bench_run, "Run directory")->required();
  bench->add_option("--mode", bench_mode);
  bench->add_option("--lengths", bc.lengths)->delimiter(',');
  bench->add_option("--warmup", bc.warmup);
  bench->add_option("--reps", bc.reps);
  bench->add_option("--seed", bc.seed);
  bench->add_option("--set", bench_sets, "Config override key=value")->take_all();

  // ---- audit-causality ----
  auto* audit = app.add_subcommand("audit-causality",
                                   "Prove frame-wise causality via exact gradients");
  std::string audit_run, audit_mode = "online";
  tunes::AuditConfig ac;
  std::uint64_t audit_model_seed = 1;
  bool negative_control = false;
  std::vector<std::string> audit_sets;
  audit->add_option("--run", audit_run, "Run directory (optional)");
  audit->add_option("--mode", audit_mode);
  audit->add_option("--frames", ac.frames);
  audit->add_option("--min-pairs", ac.min_pairs);
  audit->add_option("--seed", ac.seed);
  audit->add_option("--model-seed", audit_model_seed);
  audit->add_flag("--negative-control", negative_control,
                  "Force an acausal downsample; the audit must fail");
  audit->add_option("--set", audit_sets, "Config override key=value")->take_all();

  // ---- ablate ----
  auto* ablate = app.add_subcommand("ablate", "Train and score model variants");
  std::string ab_data, ab_run, ab_mode = "online", ab_what;
  std::vector<double> ab_values;
  int ab_seeds = 5;
  TrainConfig ab_tc;
  ablate->add_option("--data", ab_data, "Manifest file")->required();
  ablate->add_option("--run", ab_run, "Run directory")->required();
  ablate
      ->add_option("--what", ab_what,
                   "attention | conv | masking | augmentation | alternation | blocks | lr")
      ->required();
  ablate->add_option("--values", ab_values, "Sweep values for blocks or lr")
      ->delimiter(',');
  ablate->add_option("--seeds", ab_seeds, "Seeds per variant");
  ablate->add_option("--mode", ab_mode);
  ablate->add_option("--epochs", ab_tc.epochs);
  ablate->add_option("--lr", ab_tc.lr);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      sc.num_videos = n_train + n_val + n_test;
      const auto videos = tunes::synth_generate<double>(sc);
      const fs::path dir = make_run_dir(synth_out);
      fs::create_directories(dir / "videos");
      std::vector<tunes::ManifestEntry> entries;
      for (int i = 0; i < sc.num_videos; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "videos/video_%03d.bin", i);
        tunes::write_video((dir / name).string(), videos[i]);
        const char* split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
        entries.push_back({split, name});
      }
      tunes::write_manifest((dir / "manifest.tsv").string(), entries);
      nlohmann::json j{{"seed", sc.seed},
                       {"train", n_train},
                       {"val", n_val},
                       {"test", n_test},
                       {"classes", sc.num_classes},
                       {"dim", sc.feature_dim},
                       {"min_duration", sc.min_duration},
                       {"max_duration", sc.max_duration},
                       {"noise", sc.noise},
                       {"ar", sc.ar_coeff},
                       {"mean_scale", sc.mean_scale},
                       {"p_skip", sc.p_skip},
                       {"p_revisit", sc.p_revisit},
                       {"confusable_a", sc.confusable_a},
                       {"confusable_b", sc.confusable_b}};
      write_json(dir / "synth_config.json", j);
      tunes::write_run_manifest(dir.string());
      std::cout << "wrote " << sc.num_videos << " videos (" << n_train << " train, "
                << n_val << " val, " << n_test << " test) under " << dir.string()
                << "\n";
      const double nm = tunes::nearest_mean_accuracy(videos, sc.num_classes);
      std::cout << "nearest-mean frame accuracy: " << tunes::fmt_num(nm, 4) << "\n";
    }

    if (*train) {
      auto train_videos = tunes::load_split<double>(train_data, "train");
      auto val_videos = tunes::load_split<double>(train_data, "val");
      if (train_videos.empty()) throw tunes::ConfigError("no train videos in " + train_data);

      TunesConfig mc = train_mode == "offline" ? TunesConfig::offline_default()
                                               : TunesConfig::online_default();
      mc.mode = tunes::mode_from_string(train_mode);
      mc.input_dim = static_cast<int>(train_videos[0].features.cols());
      mc.num_classes = infer_num_classes({&train_videos, &val_videos});
      if (blocks_override > 0) mc.num_transformer_blocks = blocks_override;
      if (ablate_attention) mc.use_attention = false;
      if (ablate_conv) mc.use_conv_in_transformer = false;
      if (no_alternation) mc.alternate_offline_masks = false;
      mc = apply_overrides(mc, train_sets);

      tc.schedule = tunes::schedule_from_string(schedule_name);
      tc.use_masking = !no_masking;
      tc.use_augmentation = !no_augmentation;

      const fs::path dir = make_run_dir(train_run);
      nlohmann::json echo;
      echo["model"] = mc;
      echo["train"] = {{"epochs", tc.epochs},
                       {"lr", tc.lr},
                       {"schedule", tunes::to_string(tc.schedule)},
                       {"clip_norm", tc.clip_norm},
                       {"lambda_smooth", tc.lambda_smooth},
                       {"mask_coverage", tc.mask_coverage},
                       {"use_masking", tc.use_masking},
                       {"use_augmentation", tc.use_augmentation},
                       {"seed", tc.seed},
                       {"model_seed", model_seed}};
      write_json(dir / "config.json", echo);

      TunesNet<double> net(mc, model_seed);
      std::cout << "training " << tunes::to_string(mc.mode) << " model, "
                << net.count_parameters() << " parameters, " << train_videos.size()
                << " train / " << val_videos.size() << " val videos\n";
      const auto result = tunes::train(net, train_videos, val_videos, tc);
      for (const auto& s : result.history) {
        std::cout << "epoch " << s.epoch << "  loss " << tunes::fmt_num(s.train_loss, 5)
                  << "  |g| " << tunes::fmt_num(s.grad_norm, 4);
        if (!std::isnan(s.val_macro_jaccard)) {
          std::cout << "  val J " << tunes::fmt_num(s.val_macro_jaccard, 4);
        }
        std::cout << "\n";
      }
      if (result.best_val_selection) {
        std::cout << "restored epoch " << result.selected_epoch << " (val J "
                  << tunes::fmt_num(result.selected_val, 4) << ")\n";
      }

      net.save((dir / "checkpoint.bin").string());
      write_history(dir, result);
      if (!val_videos.empty()) {
        write_split_metrics(dir / "metrics.csv", score_split(net, val_videos, 10));
      }
      tunes::write_run_manifest(dir.string());
    }

    if (*eval) {
      const auto videos = tunes::load_split<double>(eval_data, eval_split);
      if (videos.empty()) {
        throw tunes::ConfigError("no \"" + eval_split + "\" videos in " + eval_data);
      }
      const auto net = TunesNet<double>::load(eval_ckpt);
      const fs::path dir = make_run_dir(eval_run);
      const auto scored = score_split(net, videos, eval_tolerance);
      write_split_metrics(dir / "metrics.csv", scored);

      std::vector<std::vector<std::string>> rows;
      for (std::size_t i = 0; i < videos.size(); ++i) {
        rows.push_back({std::to_string(i), std::to_string(videos[i].frames()),
                        tunes::fmt_num(scored.strict[i].accuracy),
                        tunes::fmt_num(scored.strict[i].macro_jaccard),
                        tunes::fmt_num(scored.relaxed[i].accuracy),
                        tunes::fmt_num(scored.relaxed[i].macro_jaccard)});
      }
      tunes::write_csv((dir / "per_video.csv").string(),
                       {"video", "frames", "accuracy", "macro_jaccard",
                        "relaxed_accuracy", "relaxed_macro_jaccard"},
                       rows);
      tunes::write_run_manifest(dir.string());

      std::vector<double> accs, jacs;
      for (const auto& m : scored.strict) {
        accs.push_back(m.accuracy);
        jacs.push_back(m.macro_jaccard);
      }
      std::cout << eval_split << ": accuracy " << tunes::fmt_num(tunes::mean_of(accs), 4)
                << ", macro Jaccard " << tunes::fmt_num(tunes::mean_of(jacs), 4)
                << " over " << videos.size() << " videos\n";
    }

    if (*bench) {
      TunesConfig mc = bench_mode == "offline" ? TunesConfig::offline_default()
                                               : TunesConfig::online_default();
      mc.mode = tunes::mode_from_string(bench_mode);
      mc = apply_overrides(mc, bench_sets);
      TunesNet<float> net(mc, 1);
      std::cout << "benchmarking " << tunes::to_string(mc.mode) << " model, "
                << net.count_parameters() << " parameters, " << bc.warmup
                << " warm-up + " << bc.reps << " timed repetitions per length\n";
      const auto rows = tunes::run_benchmark(net, bc);

      const fs::path dir = make_run_dir(bench_run);
      nlohmann::json echo;
      echo["model"] = mc;
      echo["benchmark"] = {{"lengths", bc.lengths},
                           {"warmup", bc.warmup},
                           {"reps", bc.reps},
                           {"seed", bc.seed}};
      write_json(dir / "config.json", echo);

      std::vector<std::vector<std::string>> csv;
      tunes::PlotSeries lat{"mean latency", {}, {}};
      tunes::PlotSeries mem{"peak RSS", {}, {}};
      for (const auto& r : rows) {
        csv.push_back({std::to_string(r.length), tunes::fmt_num(r.latency_ms_mean),
                       tunes::fmt_num(r.latency_ms_sd), std::to_string(r.peak_rss_kb),
                       r.peak_was_reset ? "1" : "0", r.oom ? "1" : "0"});
        std::cout << "T=" << r.length << "  ";
        if (r.oom) {
          std::cout << "out of memory\n";
          continue;
        }
        std::cout << tunes::fmt_num(r.latency_ms_mean, 5) << " ms (sd "
                  << tunes::fmt_num(r.latency_ms_sd, 4) << "), peak "
                  << r.peak_rss_kb << " kB"
                  << (r.peak_was_reset ? "" : " (lifetime high-water mark)") << "\n";
        lat.x.push_back(r.length);
        lat.y.push_back(r.latency_ms_mean);
        mem.x.push_back(r.length);
        mem.y.push_back(double(r.peak_rss_kb));
      }
      tunes::write_csv((dir / "benchmark.csv").string(),
                       {"length", "latency_ms_mean", "latency_ms_sd", "peak_rss_kb",
                        "peak_was_reset", "oom"},
                       csv);
      tunes::write_svg_line_plot((dir / "latency.svg").string(),
                                 "Forward latency vs sequence length", "frames",
                                 "latency (ms)", {lat}, true, true);
      tunes::write_svg_line_plot((dir / "memory.svg").string(),
                                 "Peak memory vs sequence length", "frames",
                                 "peak RSS (kB)", {mem}, true, false);
      tunes::write_run_manifest(dir.string());
    }

    if (*audit) {
      TunesConfig mc = audit_mode == "offline" ? TunesConfig::offline_default()
                                               : TunesConfig::online_default();
      mc.mode = tunes::mode_from_string(audit_mode);
      mc.negative_control_acausal_downsample = negative_control;
      mc = apply_overrides(mc, audit_sets);
      TunesNet<double> net(mc, audit_model_seed);
      const auto res = tunes::audit_causality(net, ac);

      if (!res.applicable) {
        std::cout << "audit not applicable: " << res.note << "\n";
      } else {
        std::cout << (res.passed ? "audit passed: " : "audit FAILED: ") << res.pairs
                  << " (row, class) pairs, " << res.violating_pairs
                  << " with future-frame gradients\n";
        if (!res.note.empty()) std::cout << res.note << "\n";
        for (const auto& v : res.violations) {
          std::cout << "  scale " << v.scale << ", output row " << v.row << ", class "
                    << v.cls << ": d(input row " << v.input_row
                    << ") = " << tunes::fmt_num(v.value) << "\n";
        }
      }

      if (!audit_run.empty()) {
        const fs::path dir = make_run_dir(audit_run);
        nlohmann::json j{{"applicable", res.applicable},
                         {"passed", res.passed},
                         {"pairs", res.pairs},
                         {"violating_pairs", res.violating_pairs},
                         {"suspects", res.suspects},
                         {"note", res.note},
                         {"frames", ac.frames},
                         {"min_pairs", ac.min_pairs},
                         {"negative_control", negative_control}};
        write_json(dir / "audit.json", j);
        tunes::write_run_manifest(dir.string());
      }
      if (!res.passed) return 2;
    }

    if (*ablate) {
      auto train_videos = tunes::load_split<double>(ab_data, "train");
      auto val_videos = tunes::load_split<double>(ab_data, "val");
      auto test_videos = tunes::load_split<double>(ab_data, "test");
      if (train_videos.empty() || test_videos.empty()) {
        throw tunes::ConfigError("ablate needs train and test splits in " + ab_data);
      }

      struct Variant {
        std::string name;
        TunesConfig model;
        TrainConfig train;
      };
      TunesConfig base = ab_mode == "offline" ? TunesConfig::offline_default()
                                              : TunesConfig::online_default();
      base.mode = tunes::mode_from_string(ab_mode);
      base.input_dim = static_cast<int>(train_videos[0].features.cols());
      base.num_classes = infer_num_classes({&train_videos, &val_videos, &test_videos});

      std::vector<Variant> variants;
      auto flag_pair = [&](const std::string& on, const std::string& off,
                           auto mutate) {
        variants.push_back({on, base, ab_tc});
        Variant v{off, base, ab_tc};
        mutate(v);
        variants.push_back(std::move(v));
      };
      if (ab_what == "attention") {
        flag_pair("full", "conv_only",
                  [](Variant& v) { v.model.use_attention = false; });
      } else if (ab_what == "conv") {
        flag_pair("full", "no_transformer_conv",
                  [](Variant& v) { v.model.use_conv_in_transformer = false; });
      } else if (ab_what == "masking") {
        flag_pair("masking", "no_masking",
                  [](Variant& v) { v.train.use_masking = false; });
      } else if (ab_what == "augmentation") {
        flag_pair("augmentation", "no_augmentation",
                  [](Variant& v) { v.train.use_augmentation = false; });
      } else if (ab_what == "alternation") {
        flag_pair("alternating", "unmasked",
                  [](Variant& v) { v.model.alternate_offline_masks = false; });
      } else if (ab_what == "blocks" || ab_what == "lr") {
        if (ab_values.empty()) {
          ab_values = ab_what == "blocks" ? std::vector<double>{2, 4, 6, 8, 10}
                                          : std::vector<double>{1e-4, 3e-4, 5e-4, 1e-3};
        }
        for (double x : ab_values) {
          Variant v{ab_what + "_" + tunes::fmt_num(x), base, ab_tc};
          if (ab_what == "blocks") {
            v.model.num_transformer_blocks = static_cast<int>(x);
          } else {
            v.train.lr = x;
          }
          variants.push_back(std::move(v));
        }
      } else {
        throw tunes::ConfigError("unknown ablation \"" + ab_what + "\"");
      }

      const fs::path dir = make_run_dir(ab_run);
      std::vector<std::vector<std::string>> detail, summary;
      tunes::PlotSeries sweep{"test macro Jaccard", {}, {}};
      for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        const Variant& var = variants[vi];
        std::vector<double> accs, jacs;
        for (int s = 0; s < ab_seeds; ++s) {
          TrainConfig tcfg = var.train;
          tcfg.seed = tunes::derive_seed(tcfg.seed, 1000 + s);
          TunesNet<double> net(var.model, tunes::derive_seed(7, vi * 100 + s));
          tunes::train(net, train_videos, val_videos, tcfg);
          const auto ms = tunes::evaluate_videos(net, test_videos);
          const double acc = tunes::mean_accuracy(ms);
          const double jac = tunes::mean_macro_jaccard(ms);
          accs.push_back(acc);
          jacs.push_back(jac);
          detail.push_back({var.name, std::to_string(s), tunes::fmt_num(acc),
                            tunes::fmt_num(jac)});
          std::cout << var.name << " seed " << s << ": accuracy "
                    << tunes::fmt_num(acc, 4) << ", macro Jaccard "
                    << tunes::fmt_num(jac, 4) << "\n";
        }
        summary.push_back({var.name, "accuracy", tunes::fmt_num(tunes::mean_of(accs)),
                           tunes::fmt_num(tunes::sample_sd(accs))});
        summary.push_back({var.name, "macro_jaccard",
                           tunes::fmt_num(tunes::mean_of(jacs)),
                           tunes::fmt_num(tunes::sample_sd(jacs))});
        if (ab_what == "blocks" || ab_what == "lr") {
          sweep.x.push_back(ab_values[vi]);
          sweep.y.push_back(tunes::mean_of(jacs));
        }
      }
      tunes::write_csv((dir / "ablation.csv").string(),
                       {"variant", "seed", "accuracy", "macro_jaccard"}, detail);
      tunes::write_csv((dir / "summary.csv").string(),
                       {"variant", "metric", "mean", "sd_runs"}, summary);
      if (!sweep.x.empty()) {
        tunes::write_svg_line_plot((dir / "sweep.svg").string(),
                                   "Ablation sweep: " + ab_what, ab_what,
                                   "test macro Jaccard", {sweep}, ab_what == "lr",
                                   false);
      }
      tunes::write_run_manifest(dir.string());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
