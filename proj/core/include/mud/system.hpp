#pragma once

#include <cstdint>
#include <vector>

#include "mud/common.hpp"
#include "mud/constellation.hpp"
#include "mud/rng.hpp"

namespace mud {

enum class ChannelModel { IidRayleigh, ExpCorrelated };

struct SystemConfig {
  int users = 1;
  std::vector<int> tx_antennas;      // N_t per user
  int rx_antennas = 1;               // N_r
  Modulation constellation = Modulation::QPSK;
  double snr_db = 0.0;
  std::vector<double> est_mse;       // sigma_{H,u}^2 per user
  uint64_t seed = 0;
  ChannelModel channel = ChannelModel::IidRayleigh;
  double rho = 0.0;                  // receive correlation for ExpCorrelated

  int total_streams() const {
    int s = 0;
    for (int nt : tx_antennas) s += nt;
    return s;
  }
  void validate() const;
};

struct ChannelSet {
  std::vector<MatC> H;  // H[u] is N_r x N_t[u]
};

struct ChannelEstimate {
  std::vector<MatC> H_hat;
  std::vector<double> est_mse;  // sigma_{H,u}^2 used for the injection
};

// One transmission instance: y = sum_u H_u x_u + n.
struct DemodSample {
  std::vector<std::vector<uint8_t>> bits;  // per user
  std::vector<VecC> x;                     // per user, constellation points
  ChannelSet channels;
  ChannelEstimate estimates;
  VecC y;
  double noise_var = 0.0;  // sigma_n^2
};

/// Noise power realizing the configured SNR: per-receive-antenna average
/// signal power over noise power, sigma_n^2 = total_streams * 10^(-snr/10).
double noise_var_for_snr(const SystemConfig& cfg);

ChannelSet gen_channels(const SystemConfig& cfg, Rng& rng);

/// H_hat_u = H_u + E_u with E_u entries iid CN(0, mse_u / (N_r N_t_u)), so
/// that E||H_hat_u - H_u||_F^2 = mse_u.
ChannelEstimate add_estimation_error(const ChannelSet& ch, const std::vector<double>& est_mse,
                                     Rng& rng);

/// Draws bits, modulates, and synthesizes the received vector.
DemodSample synthesize_sample(const SystemConfig& cfg, const ChannelSet& ch,
                              const ChannelEstimate& est, Rng& rng);

/// Convenience: channels + estimation error + synthesis from one stream.
DemodSample draw_sample(const SystemConfig& cfg, Rng& rng);

}  // namespace mud
