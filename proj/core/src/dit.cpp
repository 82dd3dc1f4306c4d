#include "mud/dit.hpp"

#include "mud/aligner.hpp"

#include <algorithm>
#include <cmath>

namespace mud {

const Preset& preset_by_name(const std::string& name) {
  static const std::vector<Preset> presets = {
      {"small", 1, 64, 4, 3, 64, 8},
      {"base", 1, 64, 4, 6, 128, 8},
      {"large", 2, 64, 4, 8, 256, 8},
  };
  for (const auto& p : presets)
    if (p.name == name) return p;
  throw Error(ErrorKind::Config, "unknown preset: " + name + " (expected small|base|large)");
}

MatD csi_patch_tokens(const MatC& H, int patch_x, int patch_y) {
  const int rows = static_cast<int>(H.rows());
  const int cols = static_cast<int>(H.cols());
  const int gr = (rows + patch_x - 1) / patch_x;
  const int gc = (cols + patch_y - 1) / patch_y;
  MatD tok = MatD::Zero(gr * gc, 2 * patch_x * patch_y);
  for (int pi = 0; pi < gr; ++pi) {
    for (int pj = 0; pj < gc; ++pj) {
      const int row = pi * gc + pj;
      for (int r = 0; r < patch_x; ++r) {
        for (int c = 0; c < patch_y; ++c) {
          const int rr = pi * patch_x + r;
          const int cc = pj * patch_y + c;
          if (rr >= rows || cc >= cols) continue;  // zero padding
          const int k = r * patch_y + c;
          tok(row, k) = H(rr, cc).real();
          tok(row, patch_x * patch_y + k) = H(rr, cc).imag();
        }
      }
    }
  }
  return tok;
}

MatD y_tokens(const VecC& y) { return realify(y); }

template <class S>
DiTModel<S>::DiTModel(DiTConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0xd17));
  const int d = cfg_.width;
  sig_ = nn::Mlp<S>::create(ps_, "sig", 2, d, d, rng);

  auto make_cond = [&](const std::string& name, int in_dim, int gate_in) {
    CondModule m;
    m.patch = nn::Linear<S>::create(ps_, name + ".patch", in_dim, d, rng);
    m.tokmlp = nn::Mlp<S>::create(ps_, name + ".tok", d, d, d, rng);
    m.tproj = nn::TimestepProj<S>::create(ps_, name + ".tproj", d, rng);
    m.attn = nn::Mha<S>::create(ps_, name + ".attn", d, cfg_.heads, rng);
    m.gate = nn::Mlp<S>::create(ps_, name + ".gate", gate_in, d, d, rng, /*silu=*/true);
    m.gru = nn::BiGru<S>::create(ps_, name + ".gru", d, d / 2, rng);
    return m;
  };
  csi_ = make_cond("csi", 2 * cfg_.patch_x * cfg_.patch_y, 3 * d);
  ye_ = make_cond("ye", 2, 2 * d);

  user_tab_ = ps_.add("tab.user", 64, d, nn::Init::Gaussian002, rng);
  nr_tab_ = ps_.add("tab.nr", 256, d, nn::Init::Gaussian002, rng);
  nt_tab_ = ps_.add("tab.nt", 256, d, nn::Init::Gaussian002, rng);
  ucount_tab_ = ps_.add("tab.ucount", 64, d, nn::Init::Gaussian002, rng);

  xattn_ = nn::Mha<S>::create(ps_, "xattn", d, cfg_.heads, rng);
  xhead_ = nn::Linear<S>::create(ps_, "xhead", d, d, rng);

  blocks_.reserve(cfg_.depth);
  for (int b = 0; b < cfg_.depth; ++b) {
    Block blk;
    const std::string nm = "blk" + std::to_string(b);
    // AdaLN-Zero: the modulation projector's output layer starts at zero.
    blk.mod = nn::Mlp<S>::create(ps_, nm + ".mod", d, d, 4 * d + 1, rng, /*silu=*/true,
                                 nn::Init::Zero);
    blk.attn = nn::Mha<S>::create(ps_, nm + ".attn", d, cfg_.heads, rng);
    blk.ffn = nn::Mlp<S>::create(ps_, nm + ".ffn", d, 4 * d, d, rng);
    blocks_.push_back(blk);
  }
  // zero-initialized head: the untrained model predicts zero noise, so the
  // x0 conversion starts as the identity on its input state
  head_ = nn::Linear<S>::create(ps_, "head", d, 2, rng, nn::Init::Zero);
}

template <class S>
nn::Id<S> DiTModel<S>::table_row(nn::Graph<S>& g, const nn::Binding<S>& bd, int table,
                                 int idx) const {
  const int rows = static_cast<int>(ps_.at(table).value.rows());
  return g.slice_rows(bd[table], std::clamp(idx, 0, rows - 1), 1);
}

template <class S>
nn::Id<S> DiTModel<S>::cond_module_forward(nn::Graph<S>& g, const nn::Binding<S>& bd,
                                           const CondModule& m, const MatD& tokens, int t,
                                           nn::Id<S> gate_in) const {
  nn::Id<S> tok = g.constant(tokens.cast<S>());
  tok = nn::rope_rows(g, m.tokmlp.apply(g, bd, m.patch.apply(g, bd, tok)));
  nn::Id<S> temb = m.tproj.apply(g, bd, static_cast<double>(t));
  std::vector<nn::Id<S>> seq{tok, temb};
  nn::Id<S> branch1 = g.mean_rows(m.attn.self(g, bd, g.concat_rows(seq)));
  nn::Id<S> branch2 = g.mul(m.gate.apply(g, bd, gate_in), g.mean_rows(m.gru.apply(g, bd, tok)));
  return g.add(branch1, branch2);
}

template <class S>
nn::Id<S> DiTModel<S>::condition(nn::Graph<S>& g, const nn::Binding<S>& bd,
                                 const CondView& view) const {
  require(!view.H_hat.empty() && view.y != nullptr, ErrorKind::Usage,
          "condition: empty view");
  require(view.user_ids.size() == view.H_hat.size(), ErrorKind::Shape,
          "condition: user id count mismatch");
  require(view.t >= 0 && view.t <= cfg_.T, ErrorKind::Usage, "condition: timestep range");

  std::vector<nn::Id<S>> ch;
  ch.reserve(view.H_hat.size());
  for (size_t u = 0; u < view.H_hat.size(); ++u) {
    const MatC& H = *view.H_hat[u];
    require(static_cast<int>(H.rows()) == view.nr, ErrorKind::Shape,
            "condition: channel row mismatch");
    std::vector<nn::Id<S>> aux{
        table_row(g, bd, user_tab_, view.user_ids[u]),
        table_row(g, bd, nr_tab_, view.nr),
        table_row(g, bd, nt_tab_, static_cast<int>(H.cols())),
    };
    nn::Id<S> gate_in = g.concat_cols(aux);  // [u_emb, s_emb]
    ch.push_back(cond_module_forward(g, bd, csi_,
                                     csi_patch_tokens(H, cfg_.patch_x, cfg_.patch_y), view.t,
                                     gate_in));
  }
  std::vector<nn::Id<S>> auxy{
      table_row(g, bd, ucount_tab_, view.users),
      table_row(g, bd, nr_tab_, view.nr),
  };
  nn::Id<S> cy = cond_module_forward(g, bd, ye_, y_tokens(*view.y), view.t,
                                     g.concat_cols(auxy));
  nn::Id<S> ckv = g.concat_rows(ch);
  nn::Id<S> att = xattn_.apply(g, bd, cy, ckv);
  return xhead_.apply(g, bd, g.add(att, cy));
}

template <class S>
nn::Id<S> DiTModel<S>::predict_eps(nn::Graph<S>& g, const nn::Binding<S>& bd, nn::Id<S> z,
                                   nn::Id<S> c) const {
  require(g.val(z).cols() == 2, ErrorKind::Shape, "predict_eps: expected L x 2 input");
  const int d = cfg_.width;
  nn::Id<S> Z = nn::rope_rows(g, sig_.apply(g, bd, z));
  for (const auto& blk : blocks_) {
    nn::Id<S> m = blk.mod.apply(g, bd, c);
    nn::Id<S> g1 = g.add_const(g.slice_cols(m, 0, d), S(1));
    nn::Id<S> b1 = g.slice_cols(m, d, d);
    nn::Id<S> g2 = g.add_const(g.slice_cols(m, 2 * d, d), S(1));
    nn::Id<S> b2 = g.slice_cols(m, 3 * d, d);
    nn::Id<S> alpha = g.slice_cols(m, 4 * d, 1);
    nn::Id<S> zin = g.add_rowvec(g.mul_rowvec(g.layernorm_rows(Z, S(1e-6)), g1), b1);
    nn::Id<S> att = blk.attn.self(g, bd, zin);
    nn::Id<S> zres = g.add(g.mul_scalar(att, alpha), zin);
    nn::Id<S> zmod = g.add_rowvec(g.mul_rowvec(g.layernorm_rows(zres, S(1e-6)), g2), b2);
    Z = g.add(zres, blk.ffn.apply(g, bd, zmod));
  }
  return head_.apply(g, bd, Z);
}

template <class S>
MatD DiTModel<S>::infer_eps(const MatD& z_vp, const CondView& view) const {
  nn::Graph<S> g;
  auto bd = nn::bind(g, ps_, false);
  nn::Id<S> c = condition(g, bd, view);
  nn::Id<S> out = predict_eps(g, bd, g.constant(z_vp.cast<S>()), c);
  return g.val(out).template cast<double>();
}

template class DiTModel<float>;
template class DiTModel<double>;

MatD eps_to_x0(const MatD& x_t, const MatD& eps, int t, const NoiseSchedule& sched) {
  const double a = sched.abar(t);
  return (x_t - std::sqrt(1.0 - a) * eps) / std::sqrt(a);
}

MatD eps_for_ve_state(const DiT& model, const MatD& s_ve, int t, const CondView& view,
                      const NoiseSchedule& sched) {
  CondView v = view;
  v.t = t;
  return model.infer_eps(std::sqrt(sched.abar(t)) * s_ve, v);
}

std::vector<double> make_sigma_grid(const NoiseSchedule& sched, int points) {
  require(points >= 2, ErrorKind::Config, "make_sigma_grid: need >= 2 points");
  const double lo = sched.sigma(1);
  const double hi = sched.sigma(sched.T);
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i)
    grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
  return grid;
}

int teacher_steps_available(int t_start, const NoiseSchedule& sched,
                            const std::vector<double>& grid) {
  const double s0 = sched.sigma(t_start);
  int below = 0;
  for (double gpt : grid)
    if (gpt < s0) ++below;
  return below + 1;  // grid points below the start, plus the final hop to 0
}

MatD teacher_sample(const DiT& model, const MatD& s_ve, int t_start, const CondView& view,
                    const NoiseSchedule& sched, const std::vector<double>& grid, int n_steps) {
  require(n_steps >= 1, ErrorKind::Usage, "teacher_sample: n_steps must be >= 1");
  if (t_start == 0) return s_ve;  // already at the clean end of the trajectory
  require(n_steps <= teacher_steps_available(t_start, sched, grid), ErrorKind::Usage,
          "teacher_sample: n_steps exceeds available grid");

  // Decreasing sigma sequence: start, the n_steps-1 largest grid points below
  // the start, then 0.
  std::vector<double> seq;
  seq.push_back(sched.sigma(t_start));
  std::vector<double> below;
  for (double gpt : grid)
    if (gpt < seq[0]) below.push_back(gpt);
  std::sort(below.begin(), below.end(), std::greater<>());
  for (int i = 0; i < n_steps - 1 && i < static_cast<int>(below.size()); ++i)
    seq.push_back(below[i]);
  seq.push_back(0.0);

  MatD s = s_ve;
  int t_cur = t_start;
  for (size_t k = 0; k + 1 < seq.size(); ++k) {
    const MatD eps = eps_for_ve_state(model, s, t_cur, view, sched);
    s += (seq[k + 1] - seq[k]) * eps;
    t_cur = sched.timestep_of_sigma(seq[k + 1]);
  }
  return s;
}

}  // namespace mud
