#pragma once

#include <string>
#include <vector>

#include "mud/nn/layers.hpp"
#include "mud/schedule.hpp"
#include "mud/system.hpp"

namespace mud {

struct AlignerConfig {
  int depth = 1;
  int width = 64;
  int heads = 4;
  int T = 1000;

  void validate() const {
    require(depth >= 1 && width >= 4 && heads >= 1, ErrorKind::Config,
            "AlignerConfig: invalid sizes");
    require(width % heads == 0, ErrorKind::Config, "AlignerConfig: width % heads != 0");
    require(width % 2 == 0, ErrorKind::Config, "AlignerConfig: width must be even");
  }
};

// Timestep-conditioned per-user denoiser: projects the realified estimate to
// signal tokens, appends destination/source timestep tokens, runs a small
// Transformer encoder, and subtracts the zero-initialized noise projection
// from the position-embedded tokens before decoding.
template <class S>
class AlignerModel {
 public:
  AlignerModel(AlignerConfig cfg, uint64_t seed);

  const AlignerConfig& config() const { return cfg_; }
  nn::ParamStore<S>& params() { return ps_; }
  const nn::ParamStore<S>& params() const { return ps_; }

  /// x_src: N_t x 2 tokens (VP state, realified). Requires t_dst <= t_src.
  nn::Id<S> forward(nn::Graph<S>& g, const nn::Binding<S>& bd, nn::Id<S> x_src, int t_src,
                    int t_dst) const;

  /// Inference on a complex estimate (no gradients).
  VecC align(const VecC& x_src, int t_src, int t_dst) const;

 private:
  struct Layer {
    nn::Mha<S> attn;
    nn::Mlp<S> ffn;
  };

  AlignerConfig cfg_;
  nn::ParamStore<S> ps_;
  nn::Linear<S> inp_, noise_, dec_;
  nn::TimestepProj<S> tproj_;
  std::vector<Layer> layers_;
};

/// N_t x 2 [Re, Im] view of a complex vector.
MatD realify(const VecC& v);
VecC complexify(const MatD& m);

template <class S>
nn::Mat<S> to_scalar(const MatD& m) {
  return m.cast<S>();
}

using Aligner = AlignerModel<float>;

}  // namespace mud
