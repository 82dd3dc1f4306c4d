#include "mud/dit.hpp"
#include "mud/train.hpp"
#include "testing.hpp"

using namespace mud;

namespace {

DiTConfig tiny_cfg() {
  DiTConfig d;
  d.depth = 2;
  d.width = 16;
  d.heads = 2;
  d.T = 1000;
  return d;
}

MatC crandn(int r, int c, Rng& rng) {
  MatC m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.cnormal();
  return m;
}

CondView make_view(const std::vector<MatC>& H, const VecC& y, int t) {
  CondView v;
  for (size_t u = 0; u < H.size(); ++u) {
    v.H_hat.push_back(&H[u]);
    v.user_ids.push_back(static_cast<int>(u));
  }
  v.y = &y;
  v.users = static_cast<int>(H.size());
  v.nr = static_cast<int>(y.size());
  v.t = t;
  return v;
}

void test_patch_tokens() {
  Rng rng(1);
  // 16x4 with patch 4x4 -> 4 tokens
  const MatC H = crandn(16, 4, rng);
  REQUIRE(csi_patch_tokens(H, 4, 4).rows() == 4);
  // 8x1 with patch 4x4 -> 2 tokens, padded columns are zero
  const MatC H2 = crandn(8, 1, rng);
  const MatD tok = csi_patch_tokens(H2, 4, 4);
  REQUIRE(tok.rows() == 2 && tok.cols() == 32);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) {
      REQUIRE(tok(r, c * 4 + 1) == 0.0);  // padded column entries
      REQUIRE(tok(r, c * 4 + 0) == H2(r * 4 + c, 0).real());
    }
  pass("csi patch tokens: counts and zero padding");
}

void test_shapes_and_heterogeneity() {
  DiT model(tiny_cfg(), 7);
  Rng rng(2);
  // one parameter set runs on (U, Nr) in {(2,8),(4,16),(8,32)} with ragged N_t
  const std::vector<std::pair<int, int>> combos{{2, 8}, {4, 16}, {8, 32}};
  for (auto [users, nr] : combos) {
    std::vector<MatC> H;
    int L = 0;
    for (int u = 0; u < users; ++u) {
      const int nt = 1 + (u % 3);
      H.push_back(crandn(nr, nt, rng));
      L += nt;
    }
    const VecC y = crandn(nr, 1, rng).col(0);
    const MatD z = MatD::Random(L, 2);
    const MatD eps = model.infer_eps(z, make_view(H, y, 312));
    REQUIRE(eps.rows() == L && eps.cols() == 2);
    REQUIRE(eps.allFinite());
  }
  pass("heterogeneity: one checkpoint across (U, N_r) combos with ragged N_t");
}

void test_condition_permutation_invariance() {
  DiT model(tiny_cfg(), 7);
  Rng rng(3);
  const int nr = 8;
  std::vector<MatC> H{crandn(nr, 1, rng), crandn(nr, 2, rng), crandn(nr, 1, rng)};
  const VecC y = crandn(nr, 1, rng).col(0);

  nn::Graph<float> g;
  auto bd = nn::bind(g, model.params(), false);
  auto c1 = model.condition(g, bd, make_view(H, y, 100));

  // permute users but keep each user's identity embedding: keys/values are
  // order-free under softmax attention
  std::vector<MatC> Hp{H[2], H[0], H[1]};
  CondView vp = make_view(Hp, y, 100);
  vp.user_ids = {2, 0, 1};
  auto c2 = model.condition(g, bd, vp);
  REQUIRE((g.val(c1) - g.val(c2)).norm() < 1e-5f);
  pass("fuse_conditions is invariant to user permutation");
}

void test_adaln_zero_init() {
  // with the zero-initialized modulation projector the gated attention branch
  // vanishes: the block output equals Z_in + FFN path exactly; with the
  // zero-initialized output head the eps prediction is exactly zero
  DiT model(tiny_cfg(), 7);
  Rng rng(4);
  std::vector<MatC> H{crandn(8, 1, rng), crandn(8, 1, rng)};
  const VecC y = crandn(8, 1, rng).col(0);
  const MatD z = MatD::Random(2, 2);
  const MatD eps = model.infer_eps(z, make_view(H, y, 55));
  REQUIRE(eps.norm() == 0.0);
  pass("adaln-zero init: zero noise prediction at initialization");
}

void test_block_gradcheck() {
  // one denoising block + condition fusion at toy dims, 64-bit finite
  // differences < 1e-3 relative (acceptance gate item)
  DiTConfig cfg;
  cfg.depth = 1;
  cfg.width = 8;
  cfg.heads = 2;
  DiTModel<double> model(cfg, 11);
  Rng rng(5);
  std::vector<MatC> H{crandn(4, 1, rng), crandn(4, 2, rng)};
  const VecC y = crandn(4, 1, rng).col(0);
  const MatD z = MatD::Random(3, 2);
  const MatD target = MatD::Random(3, 2);

  // move off the zero init so every branch is active
  Rng prng(6);
  auto& ps = model.params();
  for (int p = 0; p < ps.count(); ++p)
    for (Eigen::Index r = 0; r < ps.at(p).value.rows(); ++r)
      for (Eigen::Index c = 0; c < ps.at(p).value.cols(); ++c)
        ps.at(p).value(r, c) += 0.05 * prng.normal();

  auto eval = [&](bool want_grads, std::vector<nn::Mat<double>>* out) {
    nn::Graph<double> g;
    auto bd = nn::bind(g, ps, true);
    auto c = model.condition(g, bd, make_view(H, y, 123));
    auto pred = model.predict_eps(g, bd, g.constant(z), c);
    auto loss = g.sq_sum(g.sub(pred, g.constant(target)));
    if (want_grads) {
      g.backward(loss);
      nn::harvest_grads(g, bd, ps, *out);
    }
    return g.val(loss)(0, 0);
  };

  std::vector<nn::Mat<double>> grads;
  eval(true, &grads);
  // spot-check a subset of parameters per group (full sweep is slow)
  double worst = 0.0;
  Rng pick(7);
  for (int p = 0; p < ps.count(); ++p) {
    auto& val = ps.at(p).value;
    for (int probe = 0; probe < 3; ++probe) {
      const auto r = static_cast<Eigen::Index>(pick.below(static_cast<uint64_t>(val.rows())));
      const auto c = static_cast<Eigen::Index>(pick.below(static_cast<uint64_t>(val.cols())));
      const double keep = val(r, c);
      const double h = 1e-6;
      val(r, c) = keep + h;
      const double fp = eval(false, nullptr);
      val(r, c) = keep - h;
      const double fm = eval(false, nullptr);
      val(r, c) = keep;
      const double fd = (fp - fm) / (2 * h);
      const double an = grads[static_cast<size_t>(p)].size() ? grads[static_cast<size_t>(p)](r, c) : 0.0;
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  REQUIRE_MSG(worst < 1e-3, "worst rel grad error %.3g", worst);
  pass("dit block + condition gradients < 1e-3 vs finite differences");
}

void test_teacher_sampler() {
  const NoiseSchedule sched = default_schedule();
  const auto grid = make_sigma_grid(sched, 18);
  REQUIRE(grid.size() == 18);
  for (size_t i = 1; i < grid.size(); ++i) REQUIRE(grid[i] > grid[i - 1]);
  REQUIRE_NEAR(grid.front(), sched.sigma(1), 1e-12);
  REQUIRE_NEAR(grid.back(), sched.sigma(sched.T), 1e-9);

  DiT model(tiny_cfg(), 7);
  Rng rng(8);
  std::vector<MatC> H{crandn(8, 1, rng), crandn(8, 1, rng)};
  const VecC y = crandn(8, 1, rng).col(0);
  const CondView view = make_view(H, y, 0);
  MatD s(2, 2);
  s << 0.3, -0.2, 0.7, 0.1;

  // zero-noise start: empty iteration returns the input
  REQUIRE((teacher_sample(model, s, 0, view, sched, grid, 1) - s).norm() == 0.0);

  // at the zero-initialized head, every Euler step adds exactly zero
  const MatD out = teacher_sample(model, s, 400, view, sched, grid, 5);
  REQUIRE((out - s).norm() == 0.0);

  // step budget exceeding the available grid is a usage error
  const int avail = teacher_steps_available(400, sched, grid);
  REQUIRE_THROWS_KIND(teacher_sample(model, s, 400, view, sched, grid, avail + 1),
                      ErrorKind::Usage);
  pass("teacher sampler: grid, empty iteration, step budget checks");
}

void test_eps_to_x0() {
  const NoiseSchedule sched = default_schedule();
  Rng rng(9);
  MatD x0(3, 2), eps(3, 2);
  for (int i = 0; i < 6; ++i) {
    x0(i / 2, i % 2) = rng.normal();
    eps(i / 2, i % 2) = rng.normal();
  }
  const int t = 417;
  const MatD xt = forward_diffuse(x0, t, eps, sched);
  REQUIRE((eps_to_x0(xt, eps, t, sched) - x0).norm() < 1e-10);
  pass("eps_to_x0 inverts forward diffusion given the true noise");
}

}  // namespace

int main() {
  test_patch_tokens();
  test_shapes_and_heterogeneity();
  test_condition_permutation_invariance();
  test_adaln_zero_init();
  test_block_gradcheck();
  test_teacher_sampler();
  test_eps_to_x0();
  return 0;
}
