#include "mud/aligner.hpp"
#include "mud/train.hpp"
#include "testing.hpp"

using namespace mud;

namespace {

AlignerConfig small_cfg() { return {1, 64, 4, 1000}; }

void test_identity_at_init() {
  // zero-initialized noise branch: for any (t_src, t_dst) the module reduces
  // to the decode(inp(.)) round trip, which starts as the identity pair
  Aligner al(small_cfg(), 42);
  Rng rng(1);
  for (int nt : {1, 2, 4, 8}) {
    VecC x(nt);
    for (int i = 0; i < nt; ++i) x[i] = rng.cnormal();
    const VecC out = al.align(x, 700, 100);
    REQUIRE(out.size() == nt);
    for (int i = 0; i < nt; ++i) REQUIRE(std::isfinite(out[i].real()));
  }
  // single token sits at rotary position 0, so the init round trip is exact
  VecC x1(1);
  x1[0] = cxd(0.3, -0.8);
  const VecC out1 = al.align(x1, 500, 500);
  REQUIRE_NEAR(std::abs(out1[0] - x1[0]), 0.0, 1e-6);
  pass("aligner initialization: identity round trip, shape preserving");
}

void test_contract_checks() {
  Aligner al(small_cfg(), 42);
  VecC x(2);
  x[0] = cxd(1, 0);
  x[1] = cxd(0, 1);
  REQUIRE_THROWS_KIND(al.align(x, 100, 200), ErrorKind::Usage);  // t_dst > t_src
  AlignerConfig bad = small_cfg();
  bad.width = 63;
  bool threw = false;
  try {
    Aligner a2(bad, 1);
  } catch (const Error& e) {
    threw = e.kind() == ErrorKind::Config;
  }
  REQUIRE(threw);
  pass("aligner contract checks (timestep order, config validation)");
}

void test_zero_epochs_and_determinism() {
  const NoiseSchedule sched = default_schedule();
  Rng rng(7);
  std::vector<VecC> data;
  const Constellation q = make_constellation(Modulation::QPSK);
  for (int i = 0; i < 64; ++i) {
    VecC x(1);
    x[0] = q.points[rng.below_int(4)];
    data.push_back(x);
  }
  TrainConfig tc;
  tc.epochs = 0;
  tc.batch_size = 16;
  tc.learning_rate = 2e-3;
  tc.seed = 5;
  tc.threads = 2;

  Aligner al(small_cfg(), 3);
  std::vector<nn::Mat<float>> before;
  for (int p = 0; p < al.params().count(); ++p) before.push_back(al.params().at(p).value);
  auto trace = train_aligner(al, data, sched, tc);
  REQUIRE(trace.empty());
  for (int p = 0; p < al.params().count(); ++p)
    REQUIRE((al.params().at(p).value - before[p]).norm() == 0.0f);

  // determinism: two runs, identical loss traces bit-for-bit
  tc.epochs = 2;
  Aligner a1(small_cfg(), 3), a2(small_cfg(), 3);
  const auto t1 = train_aligner(a1, data, sched, tc);
  const auto t2 = train_aligner(a2, data, sched, tc);
  REQUIRE(t1.size() == 2 && t1 == t2);
  for (int p = 0; p < a1.params().count(); ++p)
    REQUIRE((a1.params().at(p).value - a2.params().at(p).value).norm() == 0.0f);
  pass("aligner training: zero-epoch identity and bit-exact determinism");
}

void test_overfit_one_sample() {
  // loss on a single repeated sample drops by >= 10x over 200 steps
  const NoiseSchedule sched = default_schedule();
  std::vector<VecC> data;
  VecC x(2);
  x[0] = cxd(M_SQRT1_2, M_SQRT1_2);
  x[1] = cxd(-M_SQRT1_2, M_SQRT1_2);
  data.push_back(x);

  TrainConfig tc;
  tc.epochs = 200;  // one sample per epoch = one step per epoch
  tc.batch_size = 1;
  tc.learning_rate = 2e-3;
  tc.seed = 11;
  tc.threads = 1;
  Aligner al(small_cfg(), 9);
  const auto trace = train_aligner(al, data, sched, tc);
  const double first = trace[0];
  double best = 1e30;
  for (double v : trace) best = std::min(best, v);
  REQUIRE_MSG(best < first / 10.0, "first %.4f best %.4f", first, best);
  pass("aligner overfits a single sample by >= 10x");
}

void test_alignment_improves_denoising() {
  // after brief training on a 1-user QPSK task, aligning a noisy state to a
  // cleaner timestep reduces squared error vs the raw noisy state
  const NoiseSchedule sched = default_schedule();
  Rng rng(13);
  const Constellation q = make_constellation(Modulation::QPSK);
  std::vector<VecC> data;
  for (int i = 0; i < 2000; ++i) {
    VecC x(1);
    x[0] = q.points[rng.below_int(4)];
    data.push_back(x);
  }
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 64;
  tc.learning_rate = 2e-3;
  tc.seed = 17;
  tc.threads = 2;
  Aligner al(small_cfg(), 21);
  train_aligner(al, data, sched, tc);

  const int t_src = 400, t_dst = 100;
  double mse_raw = 0.0, mse_aligned = 0.0;
  int n = 0;
  for (int rep = 0; rep < 500; ++rep) {
    VecC x(1);
    x[0] = q.points[rng.below_int(4)];
    const MatD x0 = realify(x);
    MatD eps(1, 2);
    eps(0, 0) = rng.normal();
    eps(0, 1) = rng.normal();
    const MatD xs = forward_diffuse(x0, t_src, eps, sched);
    const MatD xd = forward_diffuse(x0, t_dst, eps, sched);
    const VecC aligned = al.align(complexify(xs), t_src, t_dst);
    mse_raw += (complexify(xs) - complexify(xd)).squaredNorm();
    mse_aligned += (aligned - complexify(xd)).squaredNorm();
    ++n;
  }
  REQUIRE_MSG(mse_aligned < mse_raw, "aligned %.4f raw %.4f", mse_aligned / n, mse_raw / n);
  pass("trained aligner moves states toward the destination timestep");
}

}  // namespace

int main() {
  test_identity_at_init();
  test_contract_checks();
  test_zero_epochs_and_determinism();
  test_overfit_one_sample();
  test_alignment_improves_denoising();
  return 0;
}
