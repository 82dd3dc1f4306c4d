#pragma once

#include <string>
#include <vector>

#include "mud/nn/layers.hpp"
#include "mud/schedule.hpp"
#include "mud/system.hpp"

namespace mud {

struct DiTConfig {
  int depth = 6;
  int width = 128;
  int heads = 8;
  int patch_x = 4;
  int patch_y = 4;
  int T = 1000;

  void validate() const {
    require(depth >= 1 && width >= 8 && heads >= 1, ErrorKind::Config, "DiTConfig: invalid sizes");
    require(width % heads == 0, ErrorKind::Config, "DiTConfig: width % heads != 0");
    require(width % 2 == 0, ErrorKind::Config, "DiTConfig: width must be even");
    require(patch_x >= 1 && patch_y >= 1, ErrorKind::Config, "DiTConfig: invalid patch");
  }
};

// Model presets (aligner + denoiser sizes).
struct Preset {
  std::string name;
  int aligner_depth, aligner_width, aligner_heads;
  int dit_depth, dit_width, dit_heads;
};
const Preset& preset_by_name(const std::string& name);  // small | base | large

// Conditioning inputs for one denoising problem (a whole sample or one SIC
// group): per-user channel estimates, the (residual) received vector, the
// group user count, receive antenna count, and a diffusion timestep.
struct CondView {
  std::vector<const MatC*> H_hat;
  std::vector<int> user_ids;  // embedding index per member
  const VecC* y = nullptr;
  int users = 0;
  int nr = 0;
  int t = 0;
};

/// Non-overlapping patch tokens of the realified channel (2 channels,
/// zero-padded to patch multiples); rows ordered row-major over the patch
/// grid, features ordered [re-block, im-block] each row-major in the patch.
MatD csi_patch_tokens(const MatC& H, int patch_x, int patch_y);

/// One token per receive antenna: [Re y_i, Im y_i].
MatD y_tokens(const VecC& y);

template <class S>
class DiTModel {
 public:
  DiTModel(DiTConfig cfg, uint64_t seed);

  const DiTConfig& config() const { return cfg_; }
  nn::ParamStore<S>& params() { return ps_; }
  const nn::ParamStore<S>& params() const { return ps_; }

  /// Fused condition vector c (1 x d) from CSI embeddings and the received
  /// signal embedding at the view's timestep.
  nn::Id<S> condition(nn::Graph<S>& g, const nn::Binding<S>& bd, const CondView& view) const;

  /// Noise prediction for the VP state z (L x 2, realified) under condition c.
  nn::Id<S> predict_eps(nn::Graph<S>& g, const nn::Binding<S>& bd, nn::Id<S> z,
                        nn::Id<S> c) const;

  /// Inference without gradients.
  MatD infer_eps(const MatD& z_vp, const CondView& view) const;

 private:
  struct CondModule {
    nn::Linear<S> patch;
    nn::Mlp<S> tokmlp;
    nn::TimestepProj<S> tproj;
    nn::Mha<S> attn;
    nn::Mlp<S> gate;
    nn::BiGru<S> gru;
  };
  struct Block {
    nn::Mlp<S> mod;  // c -> [gamma1 beta1 gamma2 beta2 alpha]
    nn::Mha<S> attn;
    nn::Mlp<S> ffn;
  };

  nn::Id<S> cond_module_forward(nn::Graph<S>& g, const nn::Binding<S>& bd, const CondModule& m,
                                const MatD& tokens, int t, nn::Id<S> gate_in) const;
  nn::Id<S> table_row(nn::Graph<S>& g, const nn::Binding<S>& bd, int table, int idx) const;

  DiTConfig cfg_;
  nn::ParamStore<S> ps_;
  nn::Mlp<S> sig_;
  CondModule csi_, ye_;
  int user_tab_ = -1, nr_tab_ = -1, nt_tab_ = -1, ucount_tab_ = -1;
  nn::Mha<S> xattn_;
  nn::Linear<S> xhead_;
  std::vector<Block> blocks_;
  nn::Linear<S> head_;
};

using DiT = DiTModel<float>;

/// x0 = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
MatD eps_to_x0(const MatD& x_t, const MatD& eps, int t, const NoiseSchedule& sched);

/// Noise prediction for a VE state s (x0 + sigma(t) eps): evaluates the
/// VP-trained network at sqrt(abar_t) * s.
MatD eps_for_ve_state(const DiT& model, const MatD& s_ve, int t, const CondView& view,
                      const NoiseSchedule& sched);

/// Geometric sigma grid over [sigma(1), sigma(T)] used by the distillation
/// teacher; increasing, `points` entries.
std::vector<double> make_sigma_grid(const NoiseSchedule& sched, int points);

/// Probability-flow Euler sampler over a decreasing sub-grid from
/// sigma(t_start) to 0 in n_steps steps. Throws Usage if n_steps exceeds the
/// available grid points below sigma(t_start) plus one.
MatD teacher_sample(const DiT& model, const MatD& s_ve, int t_start, const CondView& view,
                    const NoiseSchedule& sched, const std::vector<double>& grid, int n_steps);

/// Number of Euler steps available from sigma(t_start) on this grid.
int teacher_steps_available(int t_start, const NoiseSchedule& sched,
                            const std::vector<double>& grid);

}  // namespace mud
