#pragma once

#include <cstdint>
#include <vector>

#include "mud/aligner.hpp"
#include "mud/dit.hpp"
#include "mud/system.hpp"

namespace mud {

/// Bit error rate: differing bits / total bits, aggregated over users.
double ber(const std::vector<std::vector<uint8_t>>& decided,
           const std::vector<std::vector<uint8_t>>& truth);

/// Error count and total for aggregation across samples.
struct BitErrors {
  int64_t errors = 0;
  int64_t total = 0;
  void add(const std::vector<std::vector<uint8_t>>& decided,
           const std::vector<std::vector<uint8_t>>& truth);
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(errors) / total; }
};

/// Successfully delivered bits per unit duration (channel uses by default).
double throughput(const std::vector<std::vector<uint8_t>>& decided,
                  const std::vector<std::vector<uint8_t>>& truth, double duration);

struct FlopsBreakdown {
  double aligner = 0.0;
  double condition = 0.0;   // CSI/y embeddings + fusion (per network pass)
  double blocks = 0.0;      // denoising blocks + heads (per network pass)
  double total = 0.0;       // full pipeline at the given step count
};

/// Analytic multiply-accumulate count for one demodulation pass: attention
/// 2 L^2 d + 4 L d^2, affine layers in x out, embeddings counted once; block
/// stack and conditions multiplied by the inference step count.
FlopsBreakdown flops_estimate(const AlignerConfig& acfg, const DiTConfig& dcfg,
                              const SystemConfig& sys, int n_inference_steps);

}  // namespace mud
