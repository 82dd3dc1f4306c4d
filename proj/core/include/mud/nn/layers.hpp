#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mud/nn/params.hpp"
#include "mud/schedule.hpp"

namespace mud::nn {

template <class S>
using Id = typename Graph<S>::Id;

// Row-vector convention throughout: activations are L x d, weights are
// in x out, y = x W (+ b).
template <class S>
struct Linear {
  int W = -1, b = -1;

  static Linear create(ParamStore<S>& ps, const std::string& name, int in, int out, Rng& rng,
                       Init init = Init::FanInUniform, bool bias = true) {
    Linear l;
    l.W = ps.add(name + ".w", in, out, init, rng);
    if (bias) l.b = ps.add(name + ".b", 1, out, Init::Zero, rng);
    return l;
  }

  Id<S> apply(Graph<S>& g, const Binding<S>& bd, Id<S> x) const {
    Id<S> y = g.matmul(x, bd[W]);
    if (b >= 0) y = g.add_rowvec(y, bd[b]);
    return y;
  }
};

/// Two-layer perceptron with SiLU or GELU between.
template <class S>
struct Mlp {
  Linear<S> l1, l2;
  bool use_silu = false;

  static Mlp create(ParamStore<S>& ps, const std::string& name, int in, int hidden, int out,
                    Rng& rng, bool silu_act = false, Init last_init = Init::FanInUniform) {
    Mlp m;
    m.l1 = Linear<S>::create(ps, name + ".l1", in, hidden, rng);
    m.l2 = Linear<S>::create(ps, name + ".l2", hidden, out, rng, last_init);
    m.use_silu = silu_act;
    return m;
  }

  Id<S> apply(Graph<S>& g, const Binding<S>& bd, Id<S> x) const {
    Id<S> h = l1.apply(g, bd, x);
    h = use_silu ? g.silu(h) : g.gelu(h);
    return l2.apply(g, bd, h);
  }
};

/// Multi-head attention; scaling 1/sqrt(d_qk) with d_qk = d / heads.
template <class S>
struct Mha {
  Linear<S> q, k, v, o;
  int heads = 1, dim = 0;

  static Mha create(ParamStore<S>& ps, const std::string& name, int d, int heads, Rng& rng,
                    Init out_init = Init::FanInUniform) {
    require(d % heads == 0, ErrorKind::Config, "attention width not divisible by heads");
    Mha m;
    m.heads = heads;
    m.dim = d;
    m.q = Linear<S>::create(ps, name + ".q", d, d, rng, Init::FanInUniform, false);
    m.k = Linear<S>::create(ps, name + ".k", d, d, rng, Init::FanInUniform, false);
    m.v = Linear<S>::create(ps, name + ".v", d, d, rng, Init::FanInUniform, false);
    m.o = Linear<S>::create(ps, name + ".o", d, d, rng, out_init, false);
    return m;
  }

  Id<S> apply(Graph<S>& g, const Binding<S>& bd, Id<S> xq, Id<S> xkv) const {
    const int dk = dim / heads;
    Id<S> Q = q.apply(g, bd, xq);
    Id<S> K = k.apply(g, bd, xkv);
    Id<S> V = v.apply(g, bd, xkv);
    std::vector<Id<S>> outs;
    outs.reserve(heads);
    const S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dk)));
    for (int h = 0; h < heads; ++h) {
      Id<S> Qh = g.slice_cols(Q, h * dk, dk);
      Id<S> Kh = g.slice_cols(K, h * dk, dk);
      Id<S> Vh = g.slice_cols(V, h * dk, dk);
      Id<S> scores = g.scale(g.matmul_nt(Qh, Kh), inv);
      outs.push_back(g.matmul(g.softmax_rows(scores), Vh));
    }
    return o.apply(g, bd, g.concat_cols(outs));
  }

  Id<S> self(Graph<S>& g, const Binding<S>& bd, Id<S> x) const { return apply(g, bd, x, x); }
};

/// GRU cell with packed gates [r z n]; PyTorch-style update
///   n = tanh(x Wxn + bxn + r (.) (h Whn + bhn)).
template <class S>
struct GruCell {
  Linear<S> wx, wh;  // in x 3h, h x 3h (both with bias)
  int hidden = 0;

  static GruCell create(ParamStore<S>& ps, const std::string& name, int in, int hidden,
                        Rng& rng) {
    GruCell c;
    c.hidden = hidden;
    c.wx = Linear<S>::create(ps, name + ".wx", in, 3 * hidden, rng);
    c.wh = Linear<S>::create(ps, name + ".wh", hidden, 3 * hidden, rng);
    return c;
  }

  Id<S> step(Graph<S>& g, const Binding<S>& bd, Id<S> x, Id<S> h) const {
    Id<S> gx = wx.apply(g, bd, x);
    Id<S> gh = wh.apply(g, bd, h);
    Id<S> r = g.sigmoid_(g.add(g.slice_cols(gx, 0, hidden), g.slice_cols(gh, 0, hidden)));
    Id<S> z = g.sigmoid_(g.add(g.slice_cols(gx, hidden, hidden), g.slice_cols(gh, hidden, hidden)));
    Id<S> n = g.tanh_(g.add(g.slice_cols(gx, 2 * hidden, hidden),
                            g.mul(r, g.slice_cols(gh, 2 * hidden, hidden))));
    // h' = (1 - z) (.) n + z (.) h  ==  n + z (.) (h - n)
    return g.add(n, g.mul(z, g.sub(h, n)));
  }
};

/// Bidirectional GRU over token rows; output is L x (2*hidden).
template <class S>
struct BiGru {
  GruCell<S> fwd, bwd;

  static BiGru create(ParamStore<S>& ps, const std::string& name, int in, int hidden, Rng& rng) {
    BiGru b;
    b.fwd = GruCell<S>::create(ps, name + ".f", in, hidden, rng);
    b.bwd = GruCell<S>::create(ps, name + ".b", in, hidden, rng);
    return b;
  }

  Id<S> apply(Graph<S>& g, const Binding<S>& bd, Id<S> tokens) const {
    const int L = static_cast<int>(g.val(tokens).rows());
    Id<S> h0 = g.constant(Mat<S>::Zero(1, fwd.hidden));
    std::vector<Id<S>> of(L), ob(L);
    Id<S> h = h0;
    for (int i = 0; i < L; ++i) {
      h = fwd.step(g, bd, g.slice_rows(tokens, i, 1), h);
      of[i] = h;
    }
    h = h0;
    for (int i = L - 1; i >= 0; --i) {
      h = bwd.step(g, bd, g.slice_rows(tokens, i, 1), h);
      ob[i] = h;
    }
    std::vector<Id<S>> rows(L);
    for (int i = 0; i < L; ++i) {
      std::vector<Id<S>> pair{of[i], ob[i]};
      rows[i] = g.concat_cols(pair);
    }
    return g.concat_rows(rows);
  }
};

/// Sinusoidal timestep encoding pushed through FFN -> SiLU -> FFN.
template <class S>
struct TimestepProj {
  Linear<S> f1, f2;
  int d = 0;

  static TimestepProj create(ParamStore<S>& ps, const std::string& name, int d, Rng& rng) {
    TimestepProj t;
    t.d = d;
    t.f1 = Linear<S>::create(ps, name + ".f1", d, d, rng);
    t.f2 = Linear<S>::create(ps, name + ".f2", d, d, rng);
    return t;
  }

  Id<S> apply(Graph<S>& g, const Binding<S>& bd, double t) const {
    VecD psi = timestep_embedding(t, d);
    Mat<S> row(1, d);
    for (int i = 0; i < d; ++i) row(0, i) = static_cast<S>(psi[i]);
    return f2.apply(g, bd, g.silu(f1.apply(g, bd, g.constant(std::move(row)))));
  }
};

/// RoPE over rows with consecutive positions starting at 0.
template <class S>
Id<S> rope_rows(Graph<S>& g, Id<S> x) {
  std::vector<int> pos(static_cast<size_t>(g.val(x).rows()));
  for (size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
  return g.rope(x, std::move(pos));
}

}  // namespace mud::nn
