#pragma once

#include <functional>
#include <initializer_list>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tunes/types.hpp"

namespace tunes {

/// A named trainable tensor. Gradients accumulate across backward passes
/// until the optimizer clears them.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)) {
    grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
  }
  Eigen::Index size() const { return value.size(); }
};

/// Dynamic reverse-mode tape over Eigen matrices. A graph is built per
/// forward pass; backward() seeds gradients at chosen nodes and sweeps the
/// tape in reverse. Gradients are structurally exact: entries with no path
/// to a seed stay bit-zero, which the causality audits rely on.
template <typename Scalar>
class Graph {
 public:
  using Mat = Matrix<Scalar>;
  using NodeId = int;

  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  NodeId leaf(Mat value, bool needs_grad = false) {
    Node n;
    n.value = std::move(value);
    n.kind = "leaf";
    n.needs_grad = recording_ && needs_grad;
    return push(std::move(n));
  }

  NodeId param(Parameter<Scalar>& p) {
    Node n;
    n.value = p.value;
    n.kind = "param";
    n.tag = p.name;
    n.needs_grad = recording_;
    if (n.needs_grad) {
      Parameter<Scalar>* pp = &p;
      NodeId id = static_cast<NodeId>(nodes_.size());
      n.back = [pp, id](Graph& g) { pp->grad += g.nodes_[id].grad; };
    }
    return push(std::move(n));
  }

  // y = a * b
  NodeId matmul(NodeId a, NodeId b) {
    require(val(a).cols() == val(b).rows(), "matmul: inner dims");
    Node n = from({a, b}, "matmul");
    n.value.noalias() = val(a) * val(b);
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [a, b, id](Graph& g) {
        const Mat& dy = g.nodes_[id].grad;
        if (g.nodes_[a].needs_grad) g.acc(a, dy * g.val(b).transpose());
        if (g.nodes_[b].needs_grad) g.acc(b, g.val(a).transpose() * dy);
      };
    }
    return push(std::move(n));
  }

  // y = a * b^T
  NodeId matmul_nt(NodeId a, NodeId b) {
    require(val(a).cols() == val(b).cols(), "matmul_nt: inner dims");
    Node n = from({a, b}, "matmul_nt");
    n.value.noalias() = val(a) * val(b).transpose();
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [a, b, id](Graph& g) {
        const Mat& dy = g.nodes_[id].grad;
        if (g.nodes_[a].needs_grad) g.acc(a, dy * g.val(b));
        if (g.nodes_[b].needs_grad) g.acc(b, dy.transpose() * g.val(a));
      };
    }
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) {
    require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
            "add: shape mismatch");
    Node n = from({a, b}, "add");
    n.value = val(a) + val(b);
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [a, b, id](Graph& g) {
        const Mat& dy = g.nodes_[id].grad;
        if (g.nodes_[a].needs_grad) g.acc(a, dy);
        if (g.nodes_[b].needs_grad) g.acc(b, dy);
      };
    }
    return push(std::move(n));
  }

  // y = a .rowwise() + bias, bias is 1 x C
  NodeId add_bias(NodeId a, NodeId bias) {
    require(val(bias).rows() == 1 && val(bias).cols() == val(a).cols(),
            "add_bias: bias must be 1 x C");
    Node n = from({a, bias}, "add_bias");
    n.value = val(a).rowwise() + val(bias).row(0);
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [a, bias, id](Graph& g) {
        const Mat& dy = g.nodes_[id].grad;
        if (g.nodes_[a].needs_grad) g.acc(a, dy);
        if (g.nodes_[bias].needs_grad) g.acc(bias, dy.colwise().sum());
      };
    }
    return push(std::move(n));
  }

  NodeId scale(NodeId a, Scalar c) {
    Node n = from({a}, "scale");
    n.value = val(a) * c;
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [a, c, id](Graph& g) { g.acc(a, g.nodes_[id].grad * c); };
    }
    return push(std::move(n));
  }

  // y = s * a with s a learnable 1x1 node (skip-connection weights)
  NodeId scale_by(NodeId a, NodeId s) {
    require(val(s).rows() == 1 && val(s).cols() == 1, "scale_by: s must be 1x1");
    Node n = from({a, s}, "scale_by");
    n.value = val(a) * val(s)(0, 0);
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [a, s, id](Graph& g) {
        const Mat& dy = g.nodes_[id].grad;
        if (g.nodes_[a].needs_grad) g.acc(a, dy * g.val(s)(0, 0));
        if (g.nodes_[s].needs_grad) {
          Mat ds(1, 1);
          ds(0, 0) = (dy.array() * g.val(a).array()).sum();
          g.acc(s, ds);
        }
      };
    }
    return push(std::move(n));
  }

  NodeId gelu(NodeId a) {
    Node n = from({a}, "gelu");
    n.value = val(a).unaryExpr([](Scalar x) {
      return Scalar(0.5) * x * (Scalar(1) + std::erf(x * Scalar(M_SQRT1_2)));
    });
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [a, id](Graph& g) {
        const Mat& x = g.val(a);
        Mat d = x.unaryExpr([](Scalar v) {
          const Scalar cdf =
              Scalar(0.5) * (Scalar(1) + std::erf(v * Scalar(M_SQRT1_2)));
          const Scalar pdf = std::exp(Scalar(-0.5) * v * v) *
                             Scalar(0.3989422804014326779);
          return cdf + v * pdf;
        });
        g.acc(a, g.nodes_[id].grad.cwiseProduct(d));
      };
    }
    return push(std::move(n));
  }

  /// Unrolls sliding windows into rows: output row r, tap i holds input row
  /// r*stride + i*dilation - pad_left, or zeros where that index falls
  /// outside [0, T). One op covers causal/acausal convolution and strided
  /// downsampling; gradients scatter back to exactly the gathered rows.
  NodeId im2col(NodeId a, int kernel, int dilation, int stride, int pad_left,
                int out_rows) {
    require(kernel >= 1 && dilation >= 1 && stride >= 1 && out_rows >= 1,
            "im2col: bad geometry");
    const Eigen::Index T = val(a).rows();
    const Eigen::Index C = val(a).cols();
    Node n = from({a}, "im2col");
    n.value = Mat::Zero(out_rows, kernel * C);
    for (int r = 0; r < out_rows; ++r) {
      for (int i = 0; i < kernel; ++i) {
        const long src = static_cast<long>(r) * stride + static_cast<long>(i) * dilation - pad_left;
        if (src >= 0 && src < T) {
          n.value.block(r, i * C, 1, C) = val(a).row(src);
        }
      }
    }
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [a, kernel, dilation, stride, pad_left, out_rows, id](Graph& g) {
        const Mat& dy = g.nodes_[id].grad;
        const Eigen::Index T = g.val(a).rows();
        const Eigen::Index C = g.val(a).cols();
        Mat dx = Mat::Zero(T, C);
        for (int r = 0; r < out_rows; ++r) {
          for (int i = 0; i < kernel; ++i) {
            const long src = static_cast<long>(r) * stride + static_cast<long>(i) * dilation - pad_left;
            if (src >= 0 && src < T) {
              dx.row(src) += dy.block(r, i * C, 1, C);
            }
          }
        }
        g.acc(a, std::move(dx));
      };
    }
    return push(std::move(n));
  }

  /// T x (f*C)  ->  (T*f) x C, row t*f+j taken from column block j of row t.
  /// This is the scatter step of a transposed convolution with kernel =
  /// stride = f.
  NodeId expand_rows(NodeId a, int factor) {
    require(factor >= 1 && val(a).cols() % factor == 0, "expand_rows: cols % factor != 0");
    const Eigen::Index T = val(a).rows();
    const Eigen::Index C = val(a).cols() / factor;
    Node n = from({a}, "expand_rows");
    n.value.resize(T * factor, C);
    for (Eigen::Index t = 0; t < T; ++t) {
      for (int j = 0; j < factor; ++j) {
        n.value.row(t * factor + j) = val(a).block(t, j * C, 1, C);
      }
    }
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [a, factor, id](Graph& g) {
        const Mat& dy = g.nodes_[id].grad;
        const Eigen::Index T = g.val(a).rows();
        const Eigen::Index C = g.val(a).cols() / factor;
        Mat dx(T, factor * C);
        for (Eigen::Index t = 0; t < T; ++t) {
          for (int j = 0; j < factor; ++j) {
            dx.block(t, j * C, 1, C) = dy.row(t * factor + j);
          }
        }
        g.acc(a, std::move(dx));
      };
    }
    return push(std::move(n));
  }

  NodeId concat_rows(const std::vector<NodeId>& parts) {
    require(!parts.empty(), "concat_rows: empty");
    Eigen::Index rows = 0;
    const Eigen::Index cols = val(parts[0]).cols();
    for (NodeId p : parts) {
      require(val(p).cols() == cols, "concat_rows: col mismatch");
      rows += val(p).rows();
    }
    Node n = from(parts, "concat_rows");
    n.value.resize(rows, cols);
    Eigen::Index at = 0;
    for (NodeId p : parts) {
      n.value.middleRows(at, val(p).rows()) = val(p);
      at += val(p).rows();
    }
    if (n.needs_grad) {
      NodeId id = next_id();
      std::vector<NodeId> ps = parts;
      n.back = [ps, id](Graph& g) {
        const Mat& dy = g.nodes_[id].grad;
        Eigen::Index at = 0;
        for (NodeId p : ps) {
          const Eigen::Index r = g.val(p).rows();
          if (g.nodes_[p].needs_grad) g.acc(p, dy.middleRows(at, r));
          at += r;
        }
      };
    }
    return push(std::move(n));
  }

  NodeId slice_rows(NodeId a, int start, int count) {
    require(start >= 0 && count >= 1 && start + count <= val(a).rows(),
            "slice_rows: out of range");
    Node n = from({a}, "slice_rows");
    n.value = val(a).middleRows(start, count);
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [a, start, count, id](Graph& g) {
        Mat dx = Mat::Zero(g.val(a).rows(), g.val(a).cols());
        dx.middleRows(start, count) = g.nodes_[id].grad;
        g.acc(a, std::move(dx));
      };
    }
    return push(std::move(n));
  }

  NodeId concat_cols(const std::vector<NodeId>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    Eigen::Index cols = 0;
    const Eigen::Index rows = val(parts[0]).rows();
    for (NodeId p : parts) {
      require(val(p).rows() == rows, "concat_cols: row mismatch");
      cols += val(p).cols();
    }
    Node n = from(parts, "concat_cols");
    n.value.resize(rows, cols);
    Eigen::Index at = 0;
    for (NodeId p : parts) {
      n.value.middleCols(at, val(p).cols()) = val(p);
      at += val(p).cols();
    }
    if (n.needs_grad) {
      NodeId id = next_id();
      std::vector<NodeId> ps = parts;
      n.back = [ps, id](Graph& g) {
        const Mat& dy = g.nodes_[id].grad;
        Eigen::Index at = 0;
        for (NodeId p : ps) {
          const Eigen::Index c = g.val(p).cols();
          if (g.nodes_[p].needs_grad) g.acc(p, dy.middleCols(at, c));
          at += c;
        }
      };
    }
    return push(std::move(n));
  }

  /// Row-wise softmax over the allowed entries; disallowed entries get
  /// weight exactly 0 and receive exactly zero gradient. A query row with
  /// no allowed key is an error, never a silent NaN.
  NodeId masked_softmax(NodeId scores, const MaskMatrix& allowed) {
    require(allowed.rows() == val(scores).rows() &&
                allowed.cols() == val(scores).cols(),
            "masked_softmax: mask shape");
    const Eigen::Index S = val(scores).rows();
    const Eigen::Index T = val(scores).cols();
    Node n = from({scores}, "masked_softmax");
    n.value = Mat::Zero(S, T);
    for (Eigen::Index s = 0; s < S; ++s) {
      Scalar m = -std::numeric_limits<Scalar>::infinity();
      bool any = false;
      for (Eigen::Index t = 0; t < T; ++t) {
        if (allowed(s, t)) {
          any = true;
          m = std::max(m, val(scores)(s, t));
        }
      }
      if (!any) {
        throw std::invalid_argument(
            "masked_softmax: fully masked query row " + std::to_string(s));
      }
      Scalar sum = 0;
      for (Eigen::Index t = 0; t < T; ++t) {
        if (allowed(s, t)) {
          const Scalar e = std::exp(val(scores)(s, t) - m);
          n.value(s, t) = e;
          sum += e;
        }
      }
      n.value.row(s) /= sum;
    }
    if (n.needs_grad) {
      NodeId id = next_id();
      n.back = [scores, id](Graph& g) {
        const Mat& p = g.nodes_[id].value;
        const Mat& dy = g.nodes_[id].grad;
        Mat dz(p.rows(), p.cols());
        for (Eigen::Index s = 0; s < p.rows(); ++s) {
          const Scalar dot = p.row(s).dot(dy.row(s));
          dz.row(s) = p.row(s).cwiseProduct(dy.row(s)) - dot * p.row(s);
        }
        g.acc(scores, std::move(dz));
      };
    }
    return push(std::move(n));
  }

  /// Copies `a` and overwrites the listed rows with the (learned) 1 x C row
  /// `emb` -- the span-masking replacement.
  NodeId replace_rows(NodeId a, const std::vector<int>& rows, NodeId emb) {
    require(val(emb).rows() == 1 && val(emb).cols() == val(a).cols(),
            "replace_rows: emb must be 1 x C");
    for (int r : rows) {
      require(r >= 0 && r < val(a).rows(), "replace_rows: row out of range");
    }
    Node n = from({a, emb}, "replace_rows");
    n.value = val(a);
    for (int r : rows) n.value.row(r) = val(emb).row(0);
    if (n.needs_grad) {
      NodeId id = next_id();
      std::vector<int> rs = rows;
      n.back = [a, emb, rs, id](Graph& g) {
        Mat dx = g.nodes_[id].grad;
        Mat de = Mat::Zero(1, dx.cols());
        for (int r : rs) {
          de.row(0) += dx.row(r);
          dx.row(r).setZero();
        }
        if (g.nodes_[a].needs_grad) g.acc(a, std::move(dx));
        if (g.nodes_[emb].needs_grad) g.acc(emb, std::move(de));
      };
    }
    return push(std::move(n));
  }

  const Mat& val(NodeId id) const { return nodes_[id].value; }

  /// Gradient accumulated at `id` by the most recent backward(); zero-sized
  /// if the node was never reached.
  const Mat& grad(NodeId id) const { return nodes_[id].grad; }

  Mat grad_or_zero(NodeId id) const {
    if (nodes_[id].grad.size() == 0) {
      return Mat::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
    }
    return nodes_[id].grad;
  }

  void set_tag(NodeId id, std::string tag) { nodes_[id].tag = std::move(tag); }
  const std::string& tag(NodeId id) const { return nodes_[id].tag; }

  /// Kinds of every op recorded on the tape, for structural assertions.
  std::set<std::string> kinds() const {
    std::set<std::string> out;
    for (const Node& n : nodes_) out.insert(n.kind);
    return out;
  }

  /// Seeds gradients at the given nodes and sweeps the tape in reverse.
  /// Prior gradients on the tape are cleared; Parameter::grad accumulates.
  void backward(const std::vector<std::pair<NodeId, Mat>>& seeds) {
    if (!recording_) {
      throw std::logic_error("backward() on a non-recording graph");
    }
    for (Node& n : nodes_) {
      n.grad.resize(0, 0);
      n.touched = false;
    }
    for (const auto& [id, seed] : seeds) {
      require(seed.rows() == val(id).rows() && seed.cols() == val(id).cols(),
              "backward: seed shape");
      acc(id, seed);
    }
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (nodes_[i].touched && nodes_[i].back) nodes_[i].back(*this);
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    bool touched = false;
    const char* kind = "leaf";
    std::string tag;
    std::function<void(Graph&)> back;
  };

  NodeId next_id() const { return static_cast<NodeId>(nodes_.size()); }

  Node from(const std::vector<NodeId>& parents, const char* kind) const {
    Node n;
    n.kind = kind;
    if (recording_) {
      for (NodeId p : parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
    }
    return n;
  }

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  template <typename Expr>
  void acc(NodeId id, Expr&& g) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      n.grad = std::forward<Expr>(g);
    } else {
      n.grad += g;
    }
    n.touched = true;
  }

  static void require(bool ok, const char* msg) {
    if (!ok) throw ShapeError(msg);
  }

  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace tunes
