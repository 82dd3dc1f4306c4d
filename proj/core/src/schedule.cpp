#include "mud/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace mud {

NoiseSchedule linear_beta_schedule(int T, double beta_1, double beta_T) {
  require(T >= 2, ErrorKind::Config, "linear_beta_schedule: T must be >= 2");
  require(beta_1 > 0.0 && beta_1 <= beta_T && beta_T < 1.0, ErrorKind::Config,
          "linear_beta_schedule: need 0 < beta_1 <= beta_T < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha_bar.resize(T);
  s.sigma_grid.resize(T);
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double b = beta_1 + (beta_T - beta_1) * static_cast<double>(t - 1) / (T - 1);
    prod *= 1.0 - b;
    s.beta[t - 1] = b;
    s.alpha_bar[t - 1] = prod;
    s.sigma_grid[t - 1] = std::sqrt((1.0 - prod) / prod);
  }
  return s;
}

int NoiseSchedule::timestep_of_sigma(double s) const {
  if (s <= 0.0) return 0;
  const auto it = std::lower_bound(sigma_grid.begin(), sigma_grid.end(), s);
  if (it == sigma_grid.begin()) {
    // below sigma(1): closer to 0 or to sigma(1)?
    return (s < sigma_grid.front() / 2.0) ? 0 : 1;
  }
  if (it == sigma_grid.end()) return T;
  const int hi = static_cast<int>(it - sigma_grid.begin()) + 1;
  const int lo = hi - 1;
  return (s - sigma(lo) <= sigma(hi) - s) ? lo : hi;
}

MatD forward_diffuse(const MatD& x0, int t, const MatD& eps, const NoiseSchedule& sched) {
  require(t >= 0 && t <= sched.T, ErrorKind::Usage, "forward_diffuse: t out of range");
  require(eps.rows() == x0.rows() && eps.cols() == x0.cols(), ErrorKind::Shape,
          "forward_diffuse: eps shape mismatch");
  const double a = sched.abar(t);
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * eps;
}

VecD timestep_embedding(double t, int d_emb) {
  require(d_emb >= 4 && d_emb % 2 == 0, ErrorKind::Config,
          "timestep_embedding: d_emb must be even and >= 4");
  const int half = d_emb / 2;
  VecD out(d_emb);
  for (int j = 0; j < half; ++j) {
    const double w = std::pow(10000.0, -static_cast<double>(j) / (half - 1));
    out[j] = std::sin(t * w);
    out[half + j] = std::cos(t * w);
  }
  return out;
}

int compute_source_timestep(double sbar_sq, const NoiseSchedule& sched) {
  require(sbar_sq >= 0.0, ErrorKind::Usage, "compute_source_timestep: negative noise power");
  const double denom = sched.abar(1) - sched.abar(sched.T);
  const double t = sbar_sq * static_cast<double>(sched.T - 1) / denom;
  const double clamped = std::clamp(t, 0.0, static_cast<double>(sched.T - 1));
  return static_cast<int>(std::lround(clamped));
}

int align_target(const std::vector<int>& t_hat) {
  require(!t_hat.empty(), ErrorKind::Usage, "align_target: empty timestep set");
  return *std::min_element(t_hat.begin(), t_hat.end());
}

}  // namespace mud
