#include "mud/distill.hpp"
#include "testing.hpp"

using namespace mud;

namespace {

MatC crandn(int r, int c, Rng& rng) {
  MatC m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.cnormal();
  return m;
}

std::vector<DemodSample> toy_data(int n, uint64_t seed) {
  SystemConfig cfg;
  cfg.users = 2;
  cfg.tx_antennas = {1, 1};
  cfg.rx_antennas = 4;
  cfg.constellation = Modulation::QPSK;
  cfg.snr_db = 5.0;
  cfg.est_mse = {0.1, 0.1};
  Rng rng(seed);
  std::vector<DemodSample> out;
  for (int i = 0; i < n; ++i) out.push_back(draw_sample(cfg, rng));
  return out;
}

void test_adaptive_weight() {
  Rng rng(1);
  std::vector<MatC> H{crandn(4, 1, rng), crandn(4, 1, rng)};
  double e = 0.0;
  for (const auto& h : H) e += h.squaredNorm();

  // sigmoid midpoint: ratio == s0 -> 1/2
  const double s0 = e / (2.0 * 0.5);
  REQUIRE_NEAR(adaptive_weight(H, 0.5, 2, 0.7, s0), 0.5, 1e-12);
  // huge noise -> 0; zero noise -> 1 by convention
  REQUIRE(adaptive_weight(H, 1e12, 2, 10.0, 5.0) < 1e-6);
  REQUIRE(adaptive_weight(H, 0.0, 2, 1.0, 1.0) == 1.0);
  // closed-form sigmoid: k0=1, s0=0, ratio=ln 3 -> 0.75
  std::vector<MatC> Hs{MatC::Zero(1, 1)};
  Hs[0](0, 0) = std::sqrt(std::log(3.0));
  REQUIRE_NEAR(adaptive_weight(Hs, 1.0, 1, 1.0, 0.0), 0.75, 1e-12);
  // strictly increasing in channel energy
  double prev = 0.0;
  for (double scale : {0.2, 0.6, 1.0, 1.5, 2.0}) {
    std::vector<MatC> Hc{scale * H[0], scale * H[1]};
    const double v = adaptive_weight(Hc, 0.5, 2, 0.1, s0);
    REQUIRE(v > prev && v > 0.0 && v < 1.0);
    prev = v;
  }
  pass("adaptive weight: midpoint, limits, closed form, monotone");
}

void test_consistency_loss() {
  MatD a = MatD::Zero(2, 2), b = MatD::Zero(2, 2);
  REQUIRE(consistency_loss(a, b, 1.0) == 0.0);
  REQUIRE(consistency_loss(a, b, 0.0) == 0.0);
  b(0, 0) = 1.0;  // unit difference vector
  REQUIRE_NEAR(consistency_loss(a, b, 2.0), 2.0, 1e-15);
  REQUIRE_NEAR(consistency_loss(a, b, 1.0), 1.0, 1e-15);
  pass("consistency loss: zero cases and unsquared-norm scaling");
}

DiTConfig tiny_cfg() {
  DiTConfig d;
  d.depth = 1;
  d.width = 16;
  d.heads = 2;
  return d;
}

void test_ema_contract() {
  const NoiseSchedule sched = default_schedule();
  auto data = toy_data(16, 3);

  // mu = 1: the EMA never departs from the student's initial (= teacher) values
  DiT teacher(tiny_cfg(), 1);
  {
    DiT student(tiny_cfg(), 0), ema(tiny_cfg(), 0);
    DistillConfig dc;
    dc.epochs = 1;
    dc.batch_size = 8;
    dc.learning_rate = 1e-3;
    dc.mu = 1.0;
    dc.seed = 5;
    dc.threads = 2;
    distill_run(teacher, student, ema, data, sched, dc);
    for (int p = 0; p < ema.params().count(); ++p)
      REQUIRE((ema.params().at(p).value - teacher.params().at(p).value).norm() == 0.0f);
  }
  // mu = 0: the EMA tracks the student exactly after every step
  {
    DiT student(tiny_cfg(), 0), ema(tiny_cfg(), 0);
    DistillConfig dc;
    dc.epochs = 1;
    dc.batch_size = 8;
    dc.learning_rate = 1e-3;
    dc.mu = 0.0;
    dc.seed = 5;
    dc.threads = 2;
    distill_run(teacher, student, ema, data, sched, dc);
    for (int p = 0; p < ema.params().count(); ++p)
      REQUIRE((ema.params().at(p).value - student.params().at(p).value).norm() == 0.0f);
  }
  pass("ema contract: mu = 1 freezes, mu = 0 copies");
}

void test_distill_determinism_and_s0() {
  const NoiseSchedule sched = default_schedule();
  auto data = toy_data(32, 7);
  DiT teacher(tiny_cfg(), 2);
  DistillConfig dc;
  dc.epochs = 2;
  dc.batch_size = 8;
  dc.learning_rate = 1e-3;
  dc.seed = 9;
  dc.threads = 2;

  DiT s1(tiny_cfg(), 0), e1(tiny_cfg(), 0);
  DiT s2(tiny_cfg(), 0), e2(tiny_cfg(), 0);
  auto r1 = distill_run(teacher, s1, e1, data, sched, dc);
  auto r2 = distill_run(teacher, s2, e2, data, sched, dc);
  REQUIRE(r1.loss_trace == r2.loss_trace);
  for (int p = 0; p < s1.params().count(); ++p)
    REQUIRE((s1.params().at(p).value - s2.params().at(p).value).norm() == 0.0f);

  // s0 default: the training-set median of the channel-energy ratio
  std::vector<double> ratios;
  for (const auto& s : data)
    ratios.push_back(channel_energy_ratio(s.estimates.H_hat, s.noise_var, 2));
  std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
  REQUIRE_NEAR(r1.s0, ratios[ratios.size() / 2], 1e-12);

  // explicit s0 respected
  dc.s0 = 3.5;
  DiT s3(tiny_cfg(), 0), e3(tiny_cfg(), 0);
  REQUIRE_NEAR(distill_run(teacher, s3, e3, data, sched, dc).s0, 3.5, 1e-15);
  pass("distillation: bit-exact determinism and s0 resolution");
}

void test_student_single_step() {
  const NoiseSchedule sched = default_schedule();
  DiT model(tiny_cfg(), 4);
  Rng rng(5);
  std::vector<MatC> H{crandn(4, 1, rng), crandn(4, 1, rng)};
  const VecC y = crandn(4, 1, rng).col(0);
  CondView v;
  for (size_t u = 0; u < H.size(); ++u) {
    v.H_hat.push_back(&H[u]);
    v.user_ids.push_back(static_cast<int>(u));
  }
  v.y = &y;
  v.users = 2;
  v.nr = 4;
  v.t = 300;
  MatD s(2, 2);
  s << 0.4, 0.4, -0.4, 0.2;
  const MatD out = student_single_step(model, s, 300, v, sched);
  REQUIRE(out.rows() == 2 && out.cols() == 2);
  // zero-init head: the single step is the identity, and t = 0 is always so
  REQUIRE((out - s).norm() == 0.0);
  REQUIRE((student_single_step(model, s, 0, v, sched) - s).norm() == 0.0);
  pass("student single step: shape and identity at zero init");
}

}  // namespace

int main() {
  test_adaptive_weight();
  test_consistency_loss();
  test_ema_contract();
  test_distill_determinism_and_s0();
  test_student_single_step();
  return 0;
}
