#pragma once

#include <vector>

#include "mud/dit.hpp"
#include "mud/train.hpp"

namespace mud {

struct DistillConfig {
  int epochs = 80;
  int batch_size = 64;
  double learning_rate = 8e-4;
  double mu = 0.2;    // EMA weight: theta_minus <- mu theta_minus + (1-mu) theta
  double k0 = 0.1;    // adaptive-weight slope
  double s0 = -1.0;   // adaptive-weight center; < 0 -> training-set median
  int grid_points = 18;
  std::vector<double> lambda_weights;  // lambda(t_n); empty -> all ones
  uint64_t seed = 0;
  int threads = 0;

  void validate() const {
    require(epochs >= 0 && batch_size >= 1, ErrorKind::Config, "DistillConfig: invalid counts");
    require(learning_rate > 0.0, ErrorKind::Config, "DistillConfig: learning_rate must be > 0");
    require(mu >= 0.0 && mu <= 1.0, ErrorKind::Config, "DistillConfig: mu must be in [0,1]");
    require(k0 > 0.0, ErrorKind::Config, "DistillConfig: k0 must be > 0");
    require(grid_points >= 2, ErrorKind::Config, "DistillConfig: grid needs >= 2 points");
    for (double l : lambda_weights)
      require(l >= 0.0, ErrorKind::Config, "DistillConfig: lambda weights must be >= 0");
  }
};

/// eta_d = sigmoid(k0 (sum_u ||H_hat_u||_F^2 / (U sigma_n^2) - s0));
/// sigma_n^2 = 0 returns 1 (infinite-SNR convention).
double adaptive_weight(const std::vector<MatC>& H_hat, double sigma_n_sq, int users, double k0,
                       double s0);

/// lambda * ||a - b||_F (unsquared Frobenius norm).
double consistency_loss(const MatD& student_out_next, const MatD& ema_out_cur, double lambda_t);

struct DistillResult {
  std::vector<double> loss_trace;
  double s0 = 0.0;  // resolved adaptive-weight center
};

/// Communication-aware consistency distillation. The student starts from the
/// teacher's parameters and is trained so that its x0 predictions at adjacent
/// grid noise levels agree (consistency, EMA target) while matching the clean
/// symbols (MSE), with the adaptive per-sample weight trading the two off.
/// `student` and `ema` must be models with the teacher's configuration.
DistillResult distill_run(const DiT& teacher, DiT& student, DiT& ema,
                          const std::vector<DemodSample>& data, const NoiseSchedule& sched,
                          const DistillConfig& cfg, const EpochCallback& on_epoch = {});

/// Single forward pass mapping a VE state at t_align to clean symbols:
/// x0 = s - sigma(t) * eps_theta(sqrt(abar) s | t, c).
MatD student_single_step(const DiT& student, const MatD& s_ve, int t_align, const CondView& view,
                         const NoiseSchedule& sched);

/// Channel-energy-to-noise ratio entering the adaptive weight.
double channel_energy_ratio(const std::vector<MatC>& H_hat, double sigma_n_sq, int users);

}  // namespace mud
