#include "mud/rng.hpp"
#include "mud/schedule.hpp"
#include "testing.hpp"

using namespace mud;

namespace {

void test_linear_schedule() {
  // hand product at T=2
  const NoiseSchedule s2 = linear_beta_schedule(2, 0.1, 0.2);
  REQUIRE_NEAR(s2.alpha_bar[0], 0.9, 1e-15);
  REQUIRE_NEAR(s2.alpha_bar[1], 0.72, 1e-15);
  REQUIRE_NEAR(s2.sigma_grid[0], std::sqrt(0.1 / 0.9), 1e-15);

  const NoiseSchedule s = default_schedule();
  REQUIRE(s.T == 1000);
  double prod = 1.0;
  for (int t = 1; t <= s.T; ++t) {
    REQUIRE(s.beta[t - 1] > 0.0 && s.beta[t - 1] < 1.0);
    prod *= 1.0 - s.beta[t - 1];
    REQUIRE_NEAR(s.alpha_bar[t - 1], prod, 1e-12);  // independent cumulative product
    if (t > 1) {
      REQUIRE(s.alpha_bar[t - 1] < s.alpha_bar[t - 2]);
      REQUIRE(s.sigma_grid[t - 1] > s.sigma_grid[t - 2]);
    }
  }
  REQUIRE_THROWS_KIND(linear_beta_schedule(1, 0.1, 0.2), ErrorKind::Config);
  REQUIRE_THROWS_KIND(linear_beta_schedule(10, 0.2, 0.1), ErrorKind::Config);
  pass("linear beta schedule: products, monotonicity, validation");
}

void test_forward_diffuse() {
  const NoiseSchedule s = default_schedule();
  MatD x0(3, 2);
  x0 << 1, -1, 0.5, 0.25, -2, 0;
  const MatD zero = MatD::Zero(3, 2);
  REQUIRE((forward_diffuse(x0, 0, zero, s) - x0).norm() == 0.0);  // t=0 extension
  const MatD xt = forward_diffuse(x0, 500, zero, s);
  REQUIRE_NEAR((xt - std::sqrt(s.abar(500)) * x0).norm(), 0.0, 1e-15);
  REQUIRE_THROWS_KIND(forward_diffuse(x0, 1001, zero, s), ErrorKind::Usage);
  REQUIRE_THROWS_KIND(forward_diffuse(x0, 1, MatD::Zero(2, 2), s), ErrorKind::Shape);

  // Monte-Carlo variance at t=250: Var(x_t) = 1 - abar within 2%
  Rng rng(11);
  const int t = 250, n = 100000;
  double m = 0.0, v = 0.0;
  MatD one(1, 1), eps(1, 1);
  one(0, 0) = 0.7;
  for (int i = 0; i < n; ++i) {
    eps(0, 0) = rng.normal();
    const double val = forward_diffuse(one, t, eps, s)(0, 0);
    m += val;
    v += val * val;
  }
  m /= n;
  v = v / n - m * m;
  REQUIRE_NEAR(m, std::sqrt(s.abar(t)) * 0.7, 0.01);
  REQUIRE_NEAR(v / (1.0 - s.abar(t)), 1.0, 0.02);
  pass("forward diffusion: deterministic paths and marginal moments");
}

void test_timestep_embedding() {
  const VecD e0 = timestep_embedding(0.0, 8);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(e0[i] == 0.0);
    REQUIRE(e0[4 + i] == 1.0);
  }
  // omega[0] = 1 -> first component sin(t)
  const VecD e2 = timestep_embedding(2.0, 8);
  REQUIRE_NEAR(e2[0], std::sin(2.0), 1e-15);
  for (double t : {0.0, 1.0, 13.0, 999.0}) {
    const VecD e = timestep_embedding(t, 16);
    for (int i = 0; i < e.size(); ++i) REQUIRE(e[i] >= -1.0 && e[i] <= 1.0);
  }
  REQUIRE_THROWS_KIND(timestep_embedding(1.0, 7), ErrorKind::Config);
  pass("sinusoidal timestep embedding");
}

void test_source_timestep() {
  const NoiseSchedule s = default_schedule();
  REQUIRE(compute_source_timestep(0.0, s) == 0);
  // unit step by construction
  const double unit = (s.abar(1) - s.abar(s.T)) / (s.T - 1);
  REQUIRE(compute_source_timestep(unit, s) == 1);
  // direct evaluation of the formula at sbar^2 = 0.5
  const double expect = 0.5 * (s.T - 1) / (s.abar(1) - s.abar(s.T));
  REQUIRE(compute_source_timestep(0.5, s) ==
          static_cast<int>(std::lround(std::min(expect, double(s.T - 1)))));
  // monotone nondecreasing on a grid, clamped to [0, T-1]
  int prev = -1;
  for (int k = 0; k <= 100; ++k) {
    const int t = compute_source_timestep(0.02 * k, s);
    REQUIRE(t >= prev && t >= 0 && t <= s.T - 1);
    prev = t;
  }
  REQUIRE(compute_source_timestep(1e9, s) == s.T - 1);
  pass("source timestep formula: zero, unit step, monotone, clamped");
}

void test_align_target() {
  REQUIRE(align_target({5, 9, 3}) == 3);
  REQUIRE(align_target({7}) == 7);
  REQUIRE(align_target({4, 4}) == 4);
  REQUIRE_THROWS_KIND(align_target({}), ErrorKind::Usage);
  // min over random sets
  Rng rng(3);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<int> v(1 + rng.below_int(8));
    int mn = 1 << 30;
    for (auto& t : v) {
      t = rng.below_int(1000);
      mn = std::min(mn, t);
    }
    REQUIRE(align_target(v) == mn);
  }
  pass("alignment target is the minimum timestep");
}

void test_sigma_inverse() {
  const NoiseSchedule s = default_schedule();
  REQUIRE(s.timestep_of_sigma(0.0) == 0);
  for (int t : {1, 10, 100, 500, 999, 1000}) REQUIRE(s.timestep_of_sigma(s.sigma(t)) == t);
  REQUIRE(s.timestep_of_sigma(1e9) == s.T);
  pass("sigma grid inversion is the identity on grid points");
}

}  // namespace

int main() {
  test_linear_schedule();
  test_forward_diffuse();
  test_timestep_embedding();
  test_source_timestep();
  test_align_target();
  test_sigma_inverse();
  return 0;
}
