#pragma once

#include <vector>

#include "mud/common.hpp"

namespace mud {

// Discrete DDPM schedule plus the derived variance-exploding sigma grid
// sigma(t) = sqrt((1 - abar_t) / abar_t) used by the distillation teacher.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;        // beta_1..beta_T          (index t-1)
  std::vector<double> alpha_bar;   // abar_1..abar_T          (index t-1)
  std::vector<double> sigma_grid;  // sigma(1)..sigma(T)      (index t-1)

  /// abar extended with abar(0) = 1.
  double abar(int t) const {
    require(t >= 0 && t <= T, ErrorKind::Usage, "abar: timestep out of range");
    return t == 0 ? 1.0 : alpha_bar[t - 1];
  }
  /// sigma extended with sigma(0) = 0.
  double sigma(int t) const {
    require(t >= 0 && t <= T, ErrorKind::Usage, "sigma: timestep out of range");
    return t == 0 ? 0.0 : sigma_grid[t - 1];
  }
  /// Nearest integer timestep for a VE noise scale (inverse of sigma()).
  int timestep_of_sigma(double s) const;
};

NoiseSchedule linear_beta_schedule(int T, double beta_1, double beta_T);

inline NoiseSchedule default_schedule() { return linear_beta_schedule(1000, 1e-4, 0.02); }

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, elementwise; t in [0, T]
/// with the t = 0 extension returning x0.
MatD forward_diffuse(const MatD& x0, int t, const MatD& eps, const NoiseSchedule& sched);

/// Sinusoidal timestep encoding [sin(t w), cos(t w)],
/// w[j] = 10000^(-j / (d/2 - 1)); d must be even and >= 4.
VecD timestep_embedding(double t, int d_emb);

/// Source timestep for a coarse estimate with equivalent noise power
/// sbar_sq: round(sbar_sq (T-1) / (abar_1 - abar_T)) clamped to [0, T-1].
int compute_source_timestep(double sbar_sq, const NoiseSchedule& sched);

/// Destination timestep shared by all users: the minimum of the set.
int align_target(const std::vector<int>& t_hat);

}  // namespace mud
