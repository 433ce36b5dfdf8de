#pragma once

#include <array>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tunes/attention.hpp"
#include "tunes/binary_io.hpp"
#include "tunes/losses.hpp"

namespace tunes {

/// Online = strictly causal everywhere, usable frame by frame.
/// Offline = centered convolutions plus alternating attention masks.
enum class Mode { online, offline };

inline const char* to_string(Mode m) {
  return m == Mode::online ? "online" : "offline";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "online") return Mode::online;
  if (s == "offline") return Mode::offline;
  throw ConfigError("unknown mode \"" + s + "\" (expected online or offline)");
}

/// Sequence-length reduction of the U shape: three downsampling stages.
inline constexpr std::array<int, 3> kDownFactors{3, 3, 2};
inline constexpr std::array<int, 3> kUpFactors{2, 3, 3};
/// Product of the downsample factors; input lengths must be multiples.
inline constexpr int kChunk = 18;
inline constexpr int kEncoderDilation = 1;
inline constexpr int kDecoderDilation = 18;

struct TunesConfig {
  int input_dim = 2048;
  int dim = 64;
  int num_classes = 7;
  int kernel = 3;
  int conv_blocks_per_stage = 2;
  int num_transformer_blocks = 2;
  int heads = 1;
  int ffn_dim = 256;
  Mode mode = Mode::online;

  // ablation switches, all on for the full model
  bool use_conv_in_transformer = true;
  bool use_attention = true;
  bool alternate_offline_masks = true;

  // debug-only: forces the first encoder downsample acausal so causality
  // audits can prove they detect a leak; never valid for real training
  bool negative_control_acausal_downsample = false;

  static TunesConfig online_default() { return TunesConfig{}; }

  static TunesConfig offline_default() {
    TunesConfig c;
    c.mode = Mode::offline;
    c.num_transformer_blocks = 8;
    return c;
  }

  void validate() const {
    if (input_dim < 1 || dim < 1 || num_classes < 1 || ffn_dim < 1) {
      throw ConfigError("config: dimensions must be >= 1");
    }
    if (kernel < 1) throw ConfigError("config: kernel must be >= 1");
    if (conv_blocks_per_stage < 1 || num_transformer_blocks < 1 || heads < 1) {
      throw ConfigError("config: block and head counts must be >= 1");
    }
    if (mode == Mode::offline && kernel % 2 == 0) {
      throw ConfigError("config: offline mode needs an odd kernel");
    }
    if (negative_control_acausal_downsample && mode == Mode::offline) {
      throw ConfigError(
          "config: the acausal-downsample negative control only makes sense "
          "in online mode");
    }
  }
};

inline void to_json(nlohmann::json& j, const TunesConfig& c) {
  j = nlohmann::json{
      {"input_dim", c.input_dim},
      {"dim", c.dim},
      {"num_classes", c.num_classes},
      {"kernel", c.kernel},
      {"conv_blocks_per_stage", c.conv_blocks_per_stage},
      {"num_transformer_blocks", c.num_transformer_blocks},
      {"heads", c.heads},
      {"ffn_dim", c.ffn_dim},
      {"mode", to_string(c.mode)},
      {"use_conv_in_transformer", c.use_conv_in_transformer},
      {"use_attention", c.use_attention},
      {"alternate_offline_masks", c.alternate_offline_masks},
      {"negative_control_acausal_downsample", c.negative_control_acausal_downsample},
  };
}

inline void from_json(const nlohmann::json& j, TunesConfig& c) {
  const TunesConfig d;
  c.input_dim = j.value("input_dim", d.input_dim);
  c.dim = j.value("dim", d.dim);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.kernel = j.value("kernel", d.kernel);
  c.conv_blocks_per_stage = j.value("conv_blocks_per_stage", d.conv_blocks_per_stage);
  c.num_transformer_blocks = j.value("num_transformer_blocks", d.num_transformer_blocks);
  c.heads = j.value("heads", d.heads);
  c.ffn_dim = j.value("ffn_dim", d.ffn_dim);
  c.mode = mode_from_string(j.value("mode", std::string(to_string(d.mode))));
  c.use_conv_in_transformer = j.value("use_conv_in_transformer", d.use_conv_in_transformer);
  c.use_attention = j.value("use_attention", d.use_attention);
  c.alternate_offline_masks = j.value("alternate_offline_masks", d.alternate_offline_masks);
  c.negative_control_acausal_downsample =
      j.value("negative_control_acausal_downsample", d.negative_control_acausal_downsample);
}

/// Temporal U-Net with a Transformer bottleneck.
///
/// Encoder: convolutional stages at full, 1/3 and 1/9 resolution, each
/// followed by a learned downsample. Bottleneck at 1/18: optional span-mask
/// replacement, learned start/end tokens, Transformer blocks, tokens
/// stripped. Decoder: learned upsample, weighted skip connection from the
/// matching encoder stage, widely dilated convolutional blocks. A linear
/// head produces frame scores at every scale (1, 3, 9, 18).
template <typename Scalar>
class TunesNet {
 public:
  struct Forward {
    /// scores[i] holds the node id of the head at reduction kScales[i].
    std::array<int, 4> scores{};
    /// Leaf id of the raw input features (gradient target for audits).
    int input = 0;
  };

  TunesNet(const TunesConfig& config, std::uint64_t seed)
      : cfg_(config), params_(derive_seed(seed, 0)) {
    cfg_.validate();
    const CausalityMode cm =
        cfg_.mode == Mode::online ? CausalityMode::causal : CausalityMode::acausal;

    input_proj_ = Linear<Scalar>(params_, "input_proj", cfg_.input_dim, cfg_.dim);

    for (int i = 0; i < 3; ++i) {
      const std::string sn = "encoder.stage" + std::to_string(i);
      for (int j = 0; j < cfg_.conv_blocks_per_stage; ++j) {
        encoder_[i].blocks.emplace_back(params_, sn + ".block" + std::to_string(j),
                                        cfg_.dim, cfg_.kernel, kEncoderDilation, cm);
      }
      CausalityMode dm = cm;
      if (cfg_.negative_control_acausal_downsample && i == 0) {
        dm = CausalityMode::acausal;
      }
      encoder_[i].down = Downsample<Scalar>(params_, "encoder.down" + std::to_string(i),
                                            cfg_.dim, kDownFactors[i], dm);
    }

    mask_token_ = params_.add_normal("bottleneck.mask_token", 1, cfg_.dim, Scalar(0.02));
    start_token_ = params_.add_normal("bottleneck.start_token", 1, cfg_.dim, Scalar(0.02));
    end_token_ = params_.add_normal("bottleneck.end_token", 1, cfg_.dim, Scalar(0.02));

    for (int b = 0; b < cfg_.num_transformer_blocks; ++b) {
      blocks_.emplace_back(params_, "bottleneck.block" + std::to_string(b), cfg_.dim,
                           cfg_.heads, cfg_.ffn_dim, cfg_.kernel, cm,
                           cfg_.use_conv_in_transformer, cfg_.use_attention);
    }

    heads_[3] = Linear<Scalar>(params_, "head.scale18", cfg_.dim, cfg_.num_classes);
    for (int i = 0; i < 3; ++i) {
      const std::string sn = "decoder.stage" + std::to_string(i);
      decoder_[i].up = Upsample<Scalar>(params_, sn + ".up", cfg_.dim, kUpFactors[i]);
      decoder_[i].skip_scale = params_.add_constant(sn + ".skip_scale", 1, 1, Scalar(1));
      for (int j = 0; j < cfg_.conv_blocks_per_stage; ++j) {
        decoder_[i].blocks.emplace_back(params_, sn + ".block" + std::to_string(j),
                                        cfg_.dim, cfg_.kernel, kDecoderDilation, cm);
      }
      heads_[2 - i] = Linear<Scalar>(params_, "head.scale" + std::to_string(kScales[2 - i]),
                                     cfg_.dim, cfg_.num_classes);
    }
  }

  /// Bottleneck sequence length: one token per chunk plus start/end tokens.
  static int bottleneck_tokens(int frames) { return frames / kChunk + 2; }

  TunesNet(const TunesNet&) = delete;
  TunesNet& operator=(const TunesNet&) = delete;
  TunesNet(TunesNet&&) = default;
  TunesNet& operator=(TunesNet&&) = default;

  /// Builds the whole network on the tape. `masked_tokens` lists bottleneck
  /// rows (at 1/18 resolution, before boundary tokens) to replace with the
  /// learned mask embedding; pass nullptr outside training.
  Forward forward(Graph<Scalar>& g, const Matrix<Scalar>& features,
                  const std::vector<int>* masked_tokens = nullptr) const {
    check_sequence(features, "features");
    if (features.cols() != cfg_.input_dim) {
      throw ShapeError("forward: expected " + std::to_string(cfg_.input_dim) +
                       " feature channels, got " + std::to_string(features.cols()));
    }
    const int T = static_cast<int>(features.rows());
    if (T % kChunk != 0) {
      throw ShapeError("forward: sequence length " + std::to_string(T) +
                       " is not a multiple of " + std::to_string(kChunk));
    }

    Forward out;
    out.input = g.leaf(features, /*needs_grad=*/true);
    int x = input_proj_.apply(g, out.input);

    std::array<int, 3> skips{};
    for (int i = 0; i < 3; ++i) {
      for (const auto& b : encoder_[i].blocks) x = b.apply(g, x);
      skips[i] = x;
      x = encoder_[i].down.apply(g, x);
    }

    if (masked_tokens && !masked_tokens->empty()) {
      x = g.replace_rows(x, *masked_tokens, g.param(*mask_token_));
    }
    x = g.concat_rows({g.param(*start_token_), x, g.param(*end_token_)});

    const int S = bottleneck_tokens(T);
    const std::vector<MaskKind> schedule = attention_schedule();
    std::map<MaskKind, AttentionMask> masks;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      auto it = masks.find(schedule[i]);
      if (it == masks.end()) {
        it = masks.emplace(schedule[i], AttentionMask::make(schedule[i], S, S)).first;
      }
      x = blocks_[i].apply(g, x, it->second);
    }
    x = g.slice_rows(x, 1, T / kChunk);
    out.scores[3] = heads_[3].apply(g, x);

    for (int i = 0; i < 3; ++i) {
      const auto& d = decoder_[i];
      x = g.add(d.up.apply(g, x),
                g.scale_by(skips[2 - i], g.param(*d.skip_scale)));
      for (const auto& b : d.blocks) x = b.apply(g, x);
      out.scores[2 - i] = heads_[2 - i].apply(g, x);
    }
    return out;
  }

  const TunesConfig& config() const { return cfg_; }
  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }
  long count_parameters() const { return params_.count_scalars(); }

  /// Attention mask kind used by each Transformer block, in order.
  std::vector<MaskKind> attention_schedule() const {
    std::vector<MaskKind> out(cfg_.num_transformer_blocks);
    for (int i = 0; i < cfg_.num_transformer_blocks; ++i) {
      if (cfg_.mode == Mode::online) {
        out[i] = MaskKind::causal;
      } else if (!cfg_.alternate_offline_masks) {
        out[i] = MaskKind::none;
      } else {
        out[i] = i % 2 == 0 ? MaskKind::causal : MaskKind::anticausal;
      }
    }
    return out;
  }

  /// Name and causality mode of every temporal operator, for audits that
  /// must point at the op responsible for a leak.
  std::vector<std::pair<std::string, CausalityMode>> temporal_op_modes() const {
    std::vector<std::pair<std::string, CausalityMode>> out;
    for (int i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < encoder_[i].blocks.size(); ++j) {
        out.emplace_back("encoder.stage" + std::to_string(i) + ".block" + std::to_string(j),
                         encoder_[i].blocks[j].dconv.mode);
      }
      out.emplace_back("encoder.down" + std::to_string(i), encoder_[i].down.mode);
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      if (blocks_[b].use_conv) {
        out.emplace_back("bottleneck.block" + std::to_string(b) + ".conv",
                         blocks_[b].conv.dconv.mode);
      }
    }
    for (int i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < decoder_[i].blocks.size(); ++j) {
        out.emplace_back("decoder.stage" + std::to_string(i) + ".block" + std::to_string(j),
                         decoder_[i].blocks[j].dconv.mode);
      }
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    io::Writer w{f};
    w.magic("TUNC1");
    nlohmann::json j = cfg_;
    const std::string js = j.dump();
    w.u32(static_cast<std::uint32_t>(js.size()));
    w.str(js);
    w.u32(static_cast<std::uint32_t>(params_.size()));
    for (const Parameter<Scalar>& p : params_) {
      w.u32(static_cast<std::uint32_t>(p.name.size()));
      w.str(p.name);
      w.u32(static_cast<std::uint32_t>(p.value.rows()));
      w.u32(static_cast<std::uint32_t>(p.value.cols()));
      for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
        for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
          w.f32(static_cast<float>(p.value(r, c)));
        }
      }
    }
    if (!f) throw std::runtime_error("write failed for " + path);
  }

  static TunesNet load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    io::Reader r{f};
    r.magic("TUNC1", "checkpoint");

    const std::size_t cfg_at = r.offset;
    const std::uint32_t jlen = r.u32("config length");
    const std::string js = r.str(jlen, "config json");
    TunesConfig cfg;
    try {
      cfg = nlohmann::json::parse(js).get<TunesConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad checkpoint config: ") + e.what(), cfg_at);
    }

    TunesNet net(cfg, /*seed=*/0);
    const std::uint32_t n = r.u32("parameter count");
    if (n != net.params_.size()) {
      throw ParseError("checkpoint holds " + std::to_string(n) +
                           " parameters, model wants " +
                           std::to_string(net.params_.size()),
                       r.offset - 4);
    }
    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::size_t rec_at = r.offset;
      const std::uint32_t nlen = r.u32("parameter name length");
      const std::string name = r.str(nlen, "parameter name");
      const std::uint32_t rows = r.u32("parameter rows");
      const std::uint32_t cols = r.u32("parameter cols");
      Parameter<Scalar>* p = net.params_.find(name);
      if (!p) throw ParseError("unknown parameter \"" + name + "\"", rec_at);
      if (!seen.insert(name).second) {
        throw ParseError("duplicate parameter \"" + name + "\"", rec_at);
      }
      if (p->value.rows() != static_cast<Eigen::Index>(rows) ||
          p->value.cols() != static_cast<Eigen::Index>(cols)) {
        throw ParseError("shape mismatch for \"" + name + "\"", rec_at);
      }
      for (std::uint32_t rr = 0; rr < rows; ++rr) {
        for (std::uint32_t cc = 0; cc < cols; ++cc) {
          p->value(rr, cc) = Scalar(r.f32("parameter data"));
        }
      }
    }
    if (f.peek() != std::ifstream::traits_type::eof()) {
      throw ParseError("trailing bytes after checkpoint", r.offset);
    }
    return net;
  }

 private:
  struct EncoderStage {
    std::vector<ConvBlock<Scalar>> blocks;
    Downsample<Scalar> down;
  };
  struct DecoderStage {
    Upsample<Scalar> up;
    Parameter<Scalar>* skip_scale = nullptr;
    std::vector<ConvBlock<Scalar>> blocks;
  };

  TunesConfig cfg_;
  ParamStore<Scalar> params_;
  Linear<Scalar> input_proj_;
  std::array<EncoderStage, 3> encoder_;
  Parameter<Scalar>* mask_token_ = nullptr;
  Parameter<Scalar>* start_token_ = nullptr;
  Parameter<Scalar>* end_token_ = nullptr;
  std::vector<TransformerBlock<Scalar>> blocks_;
  std::array<DecoderStage, 3> decoder_;
  std::array<Linear<Scalar>, 4> heads_;
};

}  // namespace tunes
