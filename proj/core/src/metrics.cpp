#include "mud/metrics.hpp"

namespace mud {

void BitErrors::add(const std::vector<std::vector<uint8_t>>& decided,
                    const std::vector<std::vector<uint8_t>>& truth) {
  require(decided.size() == truth.size(), ErrorKind::Shape, "ber: user count mismatch");
  for (size_t u = 0; u < decided.size(); ++u) {
    require(decided[u].size() == truth[u].size(), ErrorKind::Shape,
            "ber: bit length mismatch at user " + std::to_string(u));
    for (size_t i = 0; i < decided[u].size(); ++i)
      errors += (decided[u][i] & 1) != (truth[u][i] & 1);
    total += static_cast<int64_t>(decided[u].size());
  }
}

double ber(const std::vector<std::vector<uint8_t>>& decided,
           const std::vector<std::vector<uint8_t>>& truth) {
  BitErrors b;
  b.add(decided, truth);
  return b.rate();
}

double throughput(const std::vector<std::vector<uint8_t>>& decided,
                  const std::vector<std::vector<uint8_t>>& truth, double duration) {
  require(duration > 0.0, ErrorKind::Config, "throughput: nonpositive duration");
  BitErrors b;
  b.add(decided, truth);
  return static_cast<double>(b.total - b.errors) / duration;
}

namespace {

double affine(double in, double out) { return in * out; }
double attention(double L, double d) { return 2.0 * L * L * d + 4.0 * L * d * d; }
double mlp2(double in, double hidden, double out, double L = 1.0) {
  return L * (affine(in, hidden) + affine(hidden, out));
}
double gru_pass(double L, double in, double hidden) {
  // bidirectional, 3 gates each direction
  return 2.0 * L * 3.0 * (affine(in, hidden) + affine(hidden, hidden));
}

}  // namespace

FlopsBreakdown flops_estimate(const AlignerConfig& acfg, const DiTConfig& dcfg,
                              const SystemConfig& sys, int n_inference_steps) {
  require(n_inference_steps >= 1, ErrorKind::Config, "flops_estimate: steps must be >= 1");
  FlopsBreakdown f;
  const double L = sys.total_streams();
  const double d = dcfg.width;

  // Aligner (per user, tokens = N_t + 2), run once per pipeline pass.
  {
    const double da = acfg.width;
    for (int u = 0; u < sys.users; ++u) {
      const double Lt = sys.tx_antennas[static_cast<size_t>(u)] + 2.0;
      double per = affine(2, da) * (Lt - 2);                        // input proj
      per += 2.0 * mlp2(da, da, da);                                // two timestep tokens
      per += acfg.depth * (attention(Lt, da) + mlp2(da, 4 * da, da, Lt));
      per += affine(da, da) * (Lt - 2) + affine(da, 2) * (Lt - 2);  // noise proj + decode
      f.aligner += per;
    }
  }

  // Condition embeddings (per network pass).
  {
    const double ppx = dcfg.patch_x, ppy = dcfg.patch_y;
    for (int u = 0; u < sys.users; ++u) {
      const double lh = std::ceil(sys.rx_antennas / ppx) *
                        std::ceil(sys.tx_antennas[static_cast<size_t>(u)] / ppy);
      double per = affine(2 * ppx * ppy, d) * lh + mlp2(d, d, d, lh);  // patcher + token MLP
      per += mlp2(d, d, d);                                            // timestep token
      per += attention(lh + 1, d);
      per += mlp2(3 * d, d, d);  // gate
      per += gru_pass(lh, d, d / 2);
      f.condition += per;
    }
    const double ly = sys.rx_antennas;
    f.condition += affine(2, d) * ly + mlp2(d, d, d, ly) + mlp2(d, d, d) + attention(ly + 1, d) +
                   mlp2(2 * d, d, d) + gru_pass(ly, d, d / 2);
    f.condition += attention(sys.users + 1, d) + affine(d, d);  // cross-attention + head
  }

  // Denoising blocks + signal embed/decode (per network pass).
  {
    f.blocks += mlp2(2, d, d, L);  // signal embedding
    f.blocks += dcfg.depth * (mlp2(d, d, 4 * d + 1) + attention(L, d) + mlp2(d, 4 * d, d, L));
    f.blocks += affine(d, 2) * L;  // output head
  }

  f.total = f.aligner + n_inference_steps * (f.condition + f.blocks);
  return f;
}

}  // namespace mud
