#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mud/common.hpp"

namespace mud::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Reverse-mode tape over dense matrices. Ops evaluate eagerly; backward()
// replays pullbacks in reverse creation order. Node granularity is whole
// matrix ops, so the tape stays short and Eigen does the arithmetic.
template <class S>
class Graph {
 public:
  using Id = int32_t;

  Graph() { nodes_.reserve(512); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf referencing external storage (parameters). The pointee must stay
  /// alive and unmodified until the graph is discarded.
  Id leaf(const Mat<S>* ext, bool needs_grad) {
    Node n;
    n.ext = ext;
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id constant(Mat<S> v) {
    Node n;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  const Mat<S>& val(Id i) const { return nodes_[i].ext ? *nodes_[i].ext : nodes_[i].value; }

  const Mat<S>& grad(Id i) {
    touch_grad(i);
    return nodes_[i].grad;
  }

  bool has_grad(Id i) const { return nodes_[i].grad.size() != 0; }

  // ---- arithmetic ----

  Id matmul(Id a, Id b) {
    Id o = make(val(a) * val(b), a, b);
    set_pull(o, [this, o, a, b] {
      const Mat<S>& g = nodes_[o].grad;
      if (wants(a)) acc(a, g * val(b).transpose());
      if (wants(b)) acc(b, val(a).transpose() * g);
    });
    return o;
  }

  Id matmul_nt(Id a, Id b) {  // A * B^T
    Id o = make(val(a) * val(b).transpose(), a, b);
    set_pull(o, [this, o, a, b] {
      const Mat<S>& g = nodes_[o].grad;
      if (wants(a)) acc(a, g * val(b));
      if (wants(b)) acc(b, g.transpose() * val(a));
    });
    return o;
  }

  Id add(Id a, Id b) {
    Id o = make(val(a) + val(b), a, b);
    set_pull(o, [this, o, a, b] {
      const Mat<S>& g = nodes_[o].grad;
      if (wants(a)) acc(a, g);
      if (wants(b)) acc(b, g);
    });
    return o;
  }

  Id sub(Id a, Id b) {
    Id o = make(val(a) - val(b), a, b);
    set_pull(o, [this, o, a, b] {
      const Mat<S>& g = nodes_[o].grad;
      if (wants(a)) acc(a, g);
      if (wants(b)) acc(b, -g);
    });
    return o;
  }

  Id mul(Id a, Id b) {  // elementwise
    Id o = make(val(a).cwiseProduct(val(b)), a, b);
    set_pull(o, [this, o, a, b] {
      const Mat<S>& g = nodes_[o].grad;
      if (wants(a)) acc(a, g.cwiseProduct(val(b)));
      if (wants(b)) acc(b, g.cwiseProduct(val(a)));
    });
    return o;
  }

  Id scale(Id a, S k) {
    Id o = make(val(a) * k, a);
    set_pull(o, [this, o, a, k] {
      if (wants(a)) acc(a, nodes_[o].grad * k);
    });
    return o;
  }

  Id add_const(Id a, S k) {
    Id o = make((val(a).array() + k).matrix(), a);
    set_pull(o, [this, o, a] {
      if (wants(a)) acc(a, nodes_[o].grad);
    });
    return o;
  }

  /// out = A * s with s a 1x1 node.
  Id mul_scalar(Id a, Id s) {
    Id o = make(val(a) * val(s)(0, 0), a, s);
    set_pull(o, [this, o, a, s] {
      const Mat<S>& g = nodes_[o].grad;
      if (wants(a)) acc(a, g * val(s)(0, 0));
      if (wants(s)) {
        Mat<S> d(1, 1);
        d(0, 0) = g.cwiseProduct(val(a)).sum();
        acc(s, d);
      }
    });
    return o;
  }

  /// Broadcast add of a 1xD row vector over the rows of M (bias add).
  Id add_rowvec(Id m, Id r) {
    Id o = make(val(m).rowwise() + val(r).row(0), m, r);
    set_pull(o, [this, o, m, r] {
      const Mat<S>& g = nodes_[o].grad;
      if (wants(m)) acc(m, g);
      if (wants(r)) acc(r, g.colwise().sum());
    });
    return o;
  }

  /// Broadcast elementwise product of a 1xD row vector over rows of M.
  Id mul_rowvec(Id m, Id r) {
    Id o = make((val(m).array().rowwise() * val(r).row(0).array()).matrix(), m, r);
    set_pull(o, [this, o, m, r] {
      const Mat<S>& g = nodes_[o].grad;
      if (wants(m)) acc(m, (g.array().rowwise() * val(r).row(0).array()).matrix());
      if (wants(r)) acc(r, g.cwiseProduct(val(m)).colwise().sum());
    });
    return o;
  }

  Id softmax_rows(Id a) {
    Mat<S> p = val(a);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      auto row = p.row(i);
      row = (row.array() - row.maxCoeff()).exp().matrix();
      row /= row.sum();
    }
    Id o = make(std::move(p), a);
    set_pull(o, [this, o, a] {
      if (!wants(a)) return;
      const Mat<S>& g = nodes_[o].grad;
      const Mat<S>& p2 = nodes_[o].value;
      Mat<S> gp = g.cwiseProduct(p2);
      Mat<S> d = gp;
      for (Eigen::Index i = 0; i < d.rows(); ++i)
        d.row(i) -= gp.row(i).sum() * p2.row(i);
      acc(a, d);
    });
    return o;
  }

  /// Rowwise standardization (x - mean) / (std + eps); parameter-free.
  Id layernorm_rows(Id a, S eps) {
    const Mat<S>& x = val(a);
    const auto d = static_cast<S>(x.cols());
    Mat<S> y(x.rows(), x.cols());
    Mat<S> stds(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const S m = x.row(i).mean();
      Eigen::Matrix<S, 1, Eigen::Dynamic> u = (x.row(i).array() - m).matrix();
      const S sd = std::sqrt(u.squaredNorm() / d);
      stds(i, 0) = sd;
      y.row(i) = u / (sd + eps);
    }
    Id o = make(std::move(y), a);
    nodes_[o].aux = std::move(stds);
    set_pull(o, [this, o, a, eps, d] {
      if (!wants(a)) return;
      const Mat<S>& g = nodes_[o].grad;
      const Mat<S>& x2 = val(a);
      const Mat<S>& stds2 = nodes_[o].aux;
      Mat<S> out(x2.rows(), x2.cols());
      for (Eigen::Index i = 0; i < x2.rows(); ++i) {
        const S m = x2.row(i).mean();
        Eigen::Matrix<S, 1, Eigen::Dynamic> u = (x2.row(i).array() - m).matrix();
        const S sd = stds2(i, 0);
        const S den = sd + eps;
        const S gm = g.row(i).mean();
        const S gu = g.row(i).cwiseProduct(u).sum();
        const S coef = gu / (d * std::max(sd, S(1e-30)) * den * den);
        out.row(i) = ((g.row(i).array() - gm) / den - coef * u.array()).matrix();
      }
      acc(a, out);
    });
    return o;
  }

  // ---- activations ----

  Id sigmoid_(Id a) {
    Mat<S> y = ((-val(a).array()).exp() + S(1)).inverse().matrix();
    Id o = make(std::move(y), a);
    set_pull(o, [this, o, a] {
      if (!wants(a)) return;
      const Mat<S>& y2 = nodes_[o].value;
      acc(a, (nodes_[o].grad.array() * y2.array() * (S(1) - y2.array())).matrix());
    });
    return o;
  }

  Id tanh_(Id a) {
    Id o = make(val(a).array().tanh().matrix(), a);
    set_pull(o, [this, o, a] {
      if (!wants(a)) return;
      const Mat<S>& y = nodes_[o].value;
      acc(a, (nodes_[o].grad.array() * (S(1) - y.array().square())).matrix());
    });
    return o;
  }

  Id silu(Id a) {
    Mat<S> sg = ((-val(a).array()).exp() + S(1)).inverse().matrix();
    Id o = make(val(a).cwiseProduct(sg), a);
    nodes_[o].aux = std::move(sg);
    set_pull(o, [this, o, a] {
      if (!wants(a)) return;
      const Mat<S>& sg2 = nodes_[o].aux;
      const Mat<S>& x = val(a);
      acc(a, (nodes_[o].grad.array() *
              (sg2.array() * (S(1) + x.array() * (S(1) - sg2.array())))).matrix());
    });
    return o;
  }

  Id gelu(Id a) {
    // tanh approximation
    const S c = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
    const S k = static_cast<S>(0.044715);
    const Mat<S>& x = val(a);
    Mat<S> t = (c * (x.array() + k * x.array().cube())).tanh().matrix();
    Id o = make((S(0.5) * x.array() * (S(1) + t.array())).matrix(), a);
    nodes_[o].aux = std::move(t);
    set_pull(o, [this, o, a, c, k] {
      if (!wants(a)) return;
      const Mat<S>& x2 = val(a);
      const Mat<S>& t2 = nodes_[o].aux;
      auto dt = (S(1) - t2.array().square()) * c * (S(1) + S(3) * k * x2.array().square());
      acc(a, (nodes_[o].grad.array() *
              (S(0.5) * (S(1) + t2.array()) + S(0.5) * x2.array() * dt)).matrix());
    });
    return o;
  }

  // ---- structure ----

  Id transpose(Id a) {
    Id o = make(val(a).transpose(), a);
    set_pull(o, [this, o, a] {
      if (wants(a)) acc(a, nodes_[o].grad.transpose());
    });
    return o;
  }

  Id slice_rows(Id a, int r0, int n) {
    Id o = make(val(a).middleRows(r0, n), a);
    set_pull(o, [this, o, a, r0, n] {
      if (!wants(a)) return;
      touch_grad(a);
      nodes_[a].grad.middleRows(r0, n) += nodes_[o].grad;
    });
    return o;
  }

  Id slice_cols(Id a, int c0, int n) {
    Id o = make(val(a).middleCols(c0, n), a);
    set_pull(o, [this, o, a, c0, n] {
      if (!wants(a)) return;
      touch_grad(a);
      nodes_[a].grad.middleCols(c0, n) += nodes_[o].grad;
    });
    return o;
  }

  Id concat_rows(std::span<const Id> ids) {
    Eigen::Index rows = 0;
    const Eigen::Index cols = val(ids[0]).cols();
    for (Id i : ids) {
      require(val(i).cols() == cols, ErrorKind::Shape, "concat_rows: column mismatch");
      rows += val(i).rows();
    }
    Mat<S> v(rows, cols);
    Eigen::Index at = 0;
    bool ng = false;
    for (Id i : ids) {
      v.middleRows(at, val(i).rows()) = val(i);
      at += val(i).rows();
      ng = ng || nodes_[i].needs_grad;
    }
    Id o = constant(std::move(v));
    nodes_[o].needs_grad = ng;
    std::vector<Id> srcs(ids.begin(), ids.end());
    set_pull(o, [this, o, srcs = std::move(srcs)] {
      Eigen::Index at2 = 0;
      for (Id i : srcs) {
        const auto r = val(i).rows();
        if (wants(i)) {
          touch_grad(i);
          nodes_[i].grad += nodes_[o].grad.middleRows(at2, r);
        }
        at2 += r;
      }
    });
    return o;
  }

  Id concat_cols(std::span<const Id> ids) {
    Eigen::Index cols = 0;
    const Eigen::Index rows = val(ids[0]).rows();
    for (Id i : ids) {
      require(val(i).rows() == rows, ErrorKind::Shape, "concat_cols: row mismatch");
      cols += val(i).cols();
    }
    Mat<S> v(rows, cols);
    Eigen::Index at = 0;
    bool ng = false;
    for (Id i : ids) {
      v.middleCols(at, val(i).cols()) = val(i);
      at += val(i).cols();
      ng = ng || nodes_[i].needs_grad;
    }
    Id o = constant(std::move(v));
    nodes_[o].needs_grad = ng;
    std::vector<Id> srcs(ids.begin(), ids.end());
    set_pull(o, [this, o, srcs = std::move(srcs)] {
      Eigen::Index at2 = 0;
      for (Id i : srcs) {
        const auto c = val(i).cols();
        if (wants(i)) {
          touch_grad(i);
          nodes_[i].grad += nodes_[o].grad.middleCols(at2, c);
        }
        at2 += c;
      }
    });
    return o;
  }

  Id mean_rows(Id a) {
    const auto n = static_cast<S>(val(a).rows());
    Id o = make(val(a).colwise().mean(), a);
    set_pull(o, [this, o, a, n] {
      if (!wants(a)) return;
      touch_grad(a);
      nodes_[a].grad.rowwise() += (nodes_[o].grad / n).row(0);
    });
    return o;
  }

  Id sum(Id a) {
    Mat<S> v(1, 1);
    v(0, 0) = val(a).sum();
    Id o = make(std::move(v), a);
    set_pull(o, [this, o, a] {
      if (!wants(a)) return;
      touch_grad(a);
      nodes_[a].grad.array() += nodes_[o].grad(0, 0);
    });
    return o;
  }

  Id sq_sum(Id a) {
    Mat<S> v(1, 1);
    v(0, 0) = val(a).squaredNorm();
    Id o = make(std::move(v), a);
    set_pull(o, [this, o, a] {
      if (wants(a)) acc(a, S(2) * nodes_[o].grad(0, 0) * val(a));
    });
    return o;
  }

  /// Elementwise sqrt(x + eps); used for unsquared norms on 1x1 nodes.
  Id sqrt_eps(Id a, S eps) {
    Mat<S> y = (val(a).array() + eps).sqrt().matrix();
    Id o = make(std::move(y), a);
    set_pull(o, [this, o, a] {
      if (!wants(a)) return;
      acc(a, (nodes_[o].grad.array() * S(0.5) / nodes_[o].value.array()).matrix());
    });
    return o;
  }

  /// Rotary position embedding over rows: feature pairs (2i, 2i+1) of row r
  /// rotate by angle pos[r] * 10000^(-i/(D/2)).
  Id rope(Id a, std::vector<int> pos) {
    const Mat<S>& x = val(a);
    require(x.cols() % 2 == 0, ErrorKind::Shape, "rope: feature dim must be even");
    require(static_cast<Eigen::Index>(pos.size()) == x.rows(), ErrorKind::Shape,
            "rope: position count mismatch");
    Id o = make(rope_apply(x, pos, false), a);
    set_pull(o, [this, o, a, pos = std::move(pos)] {
      if (wants(a)) acc(a, rope_apply(nodes_[o].grad, pos, true));
    });
    return o;
  }

  void backward(Id root) {
    require(val(root).rows() == 1 && val(root).cols() == 1, ErrorKind::Usage,
            "backward: root must be scalar");
    touch_grad(root);
    nodes_[root].grad(0, 0) = S(1);
    for (Id i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.pull && n.grad.size() != 0) n.pull();
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<S> value;
    const Mat<S>* ext = nullptr;
    Mat<S> grad;
    Mat<S> aux;  // op-specific cache (softmax probs live in value; stds, etc.)
    std::function<void()> pull;
    bool needs_grad = false;
  };

  static Mat<S> rope_apply(const Mat<S>& x, const std::vector<int>& pos, bool inverse) {
    const int half = static_cast<int>(x.cols()) / 2;
    Mat<S> y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
        double ang = pos[static_cast<size_t>(r)] * freq;
        if (inverse) ang = -ang;
        const S c = static_cast<S>(std::cos(ang));
        const S s = static_cast<S>(std::sin(ang));
        const S x0 = x(r, 2 * i), x1 = x(r, 2 * i + 1);
        y(r, 2 * i) = x0 * c - x1 * s;
        y(r, 2 * i + 1) = x0 * s + x1 * c;
      }
    }
    return y;
  }

  template <class Expr>
  Id make(Expr&& v, Id a, Id b = -1) {
    Node n;
    n.value = std::forward<Expr>(v);
    n.needs_grad = nodes_[a].needs_grad || (b >= 0 && nodes_[b].needs_grad);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  template <class F>
  void set_pull(Id o, F&& f) {
    if (nodes_[o].needs_grad) nodes_[o].pull = std::forward<F>(f);
  }

  bool wants(Id i) const { return nodes_[i].needs_grad; }

  void touch_grad(Id i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) {
      const Mat<S>& v = n.ext ? *n.ext : n.value;
      n.grad = Mat<S>::Zero(v.rows(), v.cols());
    }
  }

  template <class Expr>
  void acc(Id i, Expr&& g) {
    touch_grad(i);
    nodes_[i].grad += g;
  }

  std::vector<Node> nodes_;
};

}  // namespace mud::nn
