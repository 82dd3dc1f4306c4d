#include <cmath>

#include "mud/system.hpp"

namespace mud {

void SystemConfig::validate() const {
  require(users >= 1, ErrorKind::Config, "users must be >= 1");
  require(static_cast<int>(tx_antennas.size()) == users, ErrorKind::Config,
          "tx_antennas size must equal user count");
  for (int nt : tx_antennas) require(nt >= 1, ErrorKind::Config, "tx antenna counts must be >= 1");
  require(rx_antennas >= 1, ErrorKind::Config, "rx_antennas must be >= 1");
  if (!est_mse.empty()) {
    require(static_cast<int>(est_mse.size()) == users, ErrorKind::Config,
            "est_mse size must equal user count");
    for (double v : est_mse) require(v >= 0.0, ErrorKind::Config, "est_mse entries must be >= 0");
  }
  if (channel == ChannelModel::ExpCorrelated)
    require(rho >= 0.0 && rho < 1.0, ErrorKind::Config, "rho must be in [0, 1)");
}

double noise_var_for_snr(const SystemConfig& cfg) {
  return cfg.total_streams() * std::pow(10.0, -cfg.snr_db / 10.0);
}

namespace {

// Square root of the exponential correlation matrix R[i,k] = rho^|i-k|.
MatD corr_sqrt(int n, double rho) {
  MatD R(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) R(i, k) = std::pow(rho, std::abs(i - k));
  Eigen::SelfAdjointEigenSolver<MatD> es(R);
  VecD w = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().transpose();
}

MatC crandn(int rows, int cols, Rng& rng) {
  MatC m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.cnormal();
  return m;
}

}  // namespace

ChannelSet gen_channels(const SystemConfig& cfg, Rng& rng) {
  cfg.validate();
  ChannelSet ch;
  ch.H.reserve(cfg.users);
  MatD rs;
  if (cfg.channel == ChannelModel::ExpCorrelated && cfg.rho > 0.0)
    rs = corr_sqrt(cfg.rx_antennas, cfg.rho);
  for (int u = 0; u < cfg.users; ++u) {
    MatC h = crandn(cfg.rx_antennas, cfg.tx_antennas[u], rng);
    if (rs.size() > 0) h = rs * h;
    ch.H.push_back(std::move(h));
  }
  return ch;
}

ChannelEstimate add_estimation_error(const ChannelSet& ch, const std::vector<double>& est_mse,
                                     Rng& rng) {
  require(est_mse.size() == ch.H.size(), ErrorKind::Shape,
          "add_estimation_error: est_mse size mismatch");
  ChannelEstimate est;
  est.est_mse = est_mse;
  est.H_hat.reserve(ch.H.size());
  for (size_t u = 0; u < ch.H.size(); ++u) {
    require(est_mse[u] >= 0.0, ErrorKind::Config, "add_estimation_error: negative variance");
    const auto& H = ch.H[u];
    if (est_mse[u] == 0.0) {
      est.H_hat.push_back(H);
      continue;
    }
    const double per_entry = std::sqrt(est_mse[u] / (H.rows() * H.cols()));
    est.H_hat.push_back(H + per_entry * crandn(static_cast<int>(H.rows()),
                                               static_cast<int>(H.cols()), rng));
  }
  return est;
}

DemodSample synthesize_sample(const SystemConfig& cfg, const ChannelSet& ch,
                              const ChannelEstimate& est, Rng& rng) {
  require(static_cast<int>(ch.H.size()) == cfg.users, ErrorKind::Shape,
          "synthesize_sample: channel count mismatch");
  const Constellation c = make_constellation(cfg.constellation);
  DemodSample s;
  s.channels = ch;
  s.estimates = est;
  s.noise_var = noise_var_for_snr(cfg);
  s.y = VecC::Zero(cfg.rx_antennas);
  for (int u = 0; u < cfg.users; ++u) {
    require(ch.H[u].rows() == cfg.rx_antennas && ch.H[u].cols() == cfg.tx_antennas[u],
            ErrorKind::Shape, "synthesize_sample: channel shape mismatch");
    std::vector<uint8_t> bits(cfg.tx_antennas[u] * c.bits_per_symbol);
    for (auto& b : bits) b = static_cast<uint8_t>(rng.below(2));
    VecC xu = modulate(bits, c);
    s.y += ch.H[u] * xu;
    s.bits.push_back(std::move(bits));
    s.x.push_back(std::move(xu));
  }
  const double std_n = std::sqrt(s.noise_var);
  for (int i = 0; i < cfg.rx_antennas; ++i) s.y[i] += std_n * rng.cnormal();
  return s;
}

DemodSample draw_sample(const SystemConfig& cfg, Rng& rng) {
  ChannelSet ch = gen_channels(cfg, rng);
  std::vector<double> mse =
      cfg.est_mse.empty() ? std::vector<double>(cfg.users, 0.0) : cfg.est_mse;
  ChannelEstimate est = add_estimation_error(ch, mse, rng);
  return synthesize_sample(cfg, ch, est, rng);
}

}  // namespace mud
