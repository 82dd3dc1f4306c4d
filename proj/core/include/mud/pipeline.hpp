#pragma once

#include <vector>

#include "mud/aligner.hpp"
#include "mud/distill.hpp"
#include "mud/dit.hpp"
#include "mud/linear.hpp"
#include "mud/schedule.hpp"

namespace mud {

struct GroupingPlan {
  std::vector<std::vector<int>> groups;  // user indices, strongest first
  int threshold = 0;                     // N_thres
  std::vector<int> oversize;             // users admitted alone above the bound
};

/// h_u = ||H_hat_u||_F^2 / (N_r N_t_u).
double channel_strength(const MatC& H_hat_u);

/// Stable descending sort of user indices by strength (ties keep lower index
/// first).
std::vector<int> rank_users(const std::vector<double>& strengths);

/// Greedy packing of the ranked users into groups whose stream sums stay
/// within the threshold; a single user exceeding it is admitted alone and
/// flagged.
GroupingPlan greedy_group(const std::vector<int>& order, const std::vector<int>& tx_antennas,
                          int n_thres);

/// y^(i) = y^(0) - sum over processed groups of H_hat_u x_out_u.
VecC sic_residual(const VecC& y0, const std::vector<MatC>& H_hat,
                  const std::vector<VecC>& x_out, const GroupingPlan& plan,
                  int upto_group);

struct DemodTiming {
  double coarse_us = 0.0;
  double align_us = 0.0;
  double refine_us = 0.0;
  double total_us = 0.0;
  int network_calls = 0;
};

struct DemodResult {
  std::vector<VecC> x_out;                   // refined symbols per user
  std::vector<std::vector<uint8_t>> bits;    // decided bits per user
  std::vector<int> timesteps;                // per-user source timesteps
  std::vector<VecC> residuals;               // y^(i) entering each group
  GroupingPlan plan;
  DemodTiming timing;
};

// How the pipeline maps a coarse estimate's noise power to a source timestep.
//  PaperFormula    - compute_source_timestep on the closed-form equivalent
//                    noise power (linear approximation, as written)
//  SigmaBridge     - invert sigma(t)^2 = sbar^2 / (2 N_t) on the closed-form
//                    power: the state's per-component noise scale
//  EmpiricalBridge - sigma inversion on the buffer-measured LMMSE error
//                    power; default (the closed form overstates the
//                    channel-error term, the linear formula additionally
//                    overstates the level, and either breaks refinement)
enum class TimestepMapping { PaperFormula, SigmaBridge, EmpiricalBridge };

int pipeline_timestep(double sbar_sq, int n_t, const NoiseSchedule& sched, TimestepMapping map);

/// Per-user noise power for the chosen mapping (closed-form or empirical).
double pipeline_noise_power(const MemoryBuffer& buffer, int user, double sigma_n_sq,
                            double sigma_H_sq, TimestepMapping map);

struct PipelineModels {
  const Aligner* aligner = nullptr;
  const DiT* student = nullptr;   // single-step refiner
  const DiT* teacher = nullptr;   // multi-step sampler (optional)
};

enum class RefineMode { StudentSingleStep, TeacherMultiStep };

struct PipelineOptions {
  int n_thres = 0;  // 0 -> N_r
  TimestepMapping mapping = TimestepMapping::SigmaBridge;
  bool use_aligner = true;
  RefineMode refine = RefineMode::StudentSingleStep;
  int teacher_steps = 10;             // cap; clipped to the available grid
  const std::vector<double>* grid = nullptr;  // required for TeacherMultiStep
};

/// Full receive chain: rank -> group -> per group: group-restricted LMMSE on
/// the running residual, per-user timesteps, alignment to the group minimum,
/// one-step refinement, hard decision, interference subtraction.
DemodResult demodulate(const DemodSample& sample, const PipelineModels& models,
                       const NoiseSchedule& sched, const MemoryBuffer& buffer,
                       const Constellation& constellation, const PipelineOptions& opts = {});

enum class BaselineMethod { LS, LMMSE };

/// Single-shot linear demodulation + hard decision (no grouping, no network).
DemodResult demodulate_baseline(const DemodSample& sample, BaselineMethod method,
                                const Constellation& constellation);

}  // namespace mud
