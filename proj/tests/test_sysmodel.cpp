#include <map>

#include "mud/constellation.hpp"
#include "mud/rng.hpp"
#include "mud/system.hpp"
#include "testing.hpp"

using namespace mud;

namespace {

void test_constellation_normalization() {
  for (auto m : {Modulation::QPSK, Modulation::PSK8, Modulation::QAM16, Modulation::QAM64}) {
    const Constellation c = make_constellation(m);
    REQUIRE(c.size() == (1 << c.bits_per_symbol));
    double p = 0.0;
    for (auto pt : c.points) p += std::norm(pt);
    REQUIRE_NEAR(p / c.size(), 1.0, 1e-12);
  }
  // 16QAM is the scaled {±1,±3} grid: power forced by closed-form E|p|^2 = 10
  const Constellation q16 = make_constellation(Modulation::QAM16);
  const double s = 1.0 / std::sqrt(10.0);
  for (auto pt : q16.points) {
    REQUIRE_NEAR(std::abs(std::abs(pt.real()) / s - 1.0) *
                     std::abs(std::abs(pt.real()) / s - 3.0),
                 0.0, 1e-9);
  }
  pass("constellation normalization (QPSK/8PSK/16QAM/64QAM)");
}

void test_qpsk_points() {
  const Constellation c = make_constellation(Modulation::QPSK);
  REQUIRE(c.bits_per_symbol == 2);
  for (auto pt : c.points) {
    REQUIRE_NEAR(std::abs(pt.real()), 1.0 / std::sqrt(2.0), 1e-12);
    REQUIRE_NEAR(std::abs(pt.imag()), 1.0 / std::sqrt(2.0), 1e-12);
  }
  pass("qpsk points are (±1±j)/sqrt(2)");
}

int hamming(int a, int b) { return __builtin_popcount(static_cast<unsigned>(a ^ b)); }

void test_gray_property() {
  // nearest neighbors differ in exactly one bit (rectangular Gray maps)
  for (auto m : {Modulation::QPSK, Modulation::QAM16, Modulation::QAM64}) {
    const Constellation c = make_constellation(m);
    for (int i = 0; i < c.size(); ++i) {
      double dmin = 1e30;
      for (int j = 0; j < c.size(); ++j)
        if (j != i) dmin = std::min(dmin, std::abs(c.points[i] - c.points[j]));
      for (int j = 0; j < c.size(); ++j) {
        if (j == i) continue;
        if (std::abs(c.points[i] - c.points[j]) < dmin * 1.0001)
          REQUIRE_MSG(hamming(i, j) == 1, "%s: neighbors %d,%d differ in %d bits",
                      to_string(m).c_str(), i, j, hamming(i, j));
      }
    }
  }
  // 8PSK ring neighbors as well
  const Constellation c8 = make_constellation(Modulation::PSK8);
  for (int i = 0; i < 8; ++i) {
    for (int j = i + 1; j < 8; ++j) {
      if (std::abs(std::abs(c8.points[i] - c8.points[j]) - 2 * std::sin(M_PI / 8)) < 1e-9)
        REQUIRE(hamming(i, j) == 1);
    }
  }
  pass("gray mapping: nearest neighbors differ in one bit");
}

void test_modulate_roundtrip() {
  Rng rng(7);
  for (auto m : {Modulation::QPSK, Modulation::PSK8, Modulation::QAM16, Modulation::QAM64}) {
    const Constellation c = make_constellation(m);
    std::vector<uint8_t> bits(static_cast<size_t>(c.bits_per_symbol) * 50);
    for (auto& b : bits) b = static_cast<uint8_t>(rng.below(2));
    const VecC x = modulate(bits, c);
    REQUIRE(x.size() == 50);
    const HardDecision hd = hard_demap(x, c);
    REQUIRE(hd.bits == bits);
    for (int i = 0; i < x.size(); ++i) REQUIRE(hd.symbols[i] == x[i]);
  }
  // length mismatch
  const Constellation q = make_constellation(Modulation::QPSK);
  REQUIRE_THROWS_KIND(modulate({1}, q), ErrorKind::Shape);
  pass("modulate/hard_demap round trip on noiseless symbols");
}

void test_hard_demap_rules() {
  const Constellation q = make_constellation(Modulation::QPSK);
  // all four equidistant from origin: tie broken to index 0
  VecC v(1);
  v[0] = cxd(0.0, 0.0);
  REQUIRE(q.nearest(v[0]) == 0);
  // perturbation within half the minimum spacing returns the original point
  // (brute-force nearest-neighbor oracle over all points)
  Rng rng(3);
  for (auto m : {Modulation::QPSK, Modulation::QAM16, Modulation::QAM64}) {
    const Constellation c = make_constellation(m);
    double dmin = 1e30;
    for (int i = 0; i < c.size(); ++i)
      for (int j = i + 1; j < c.size(); ++j)
        dmin = std::min(dmin, std::abs(c.points[i] - c.points[j]));
    for (int trial = 0; trial < 200; ++trial) {
      const int idx = rng.below_int(c.size());
      const double r = 0.49 * dmin * rng.uniform();
      const double a = rng.uniform(0.0, 2.0 * M_PI);
      const cxd noisy = c.points[idx] + cxd(r * std::cos(a), r * std::sin(a));
      int brute = 0;
      double bd = 1e30;
      for (int j = 0; j < c.size(); ++j)
        if (std::norm(noisy - c.points[j]) < bd) {
          bd = std::norm(noisy - c.points[j]);
          brute = j;
        }
      REQUIRE(c.nearest(noisy) == idx);
      REQUIRE(brute == idx);
    }
  }
  REQUIRE_THROWS_KIND(hard_demap((VecC(1) << cxd(NAN, 0)).finished(), q), ErrorKind::Numeric);
  pass("hard decision: tie rule and half-spacing perturbations");
}

SystemConfig toy_cfg() {
  SystemConfig cfg;
  cfg.users = 2;
  cfg.tx_antennas = {2, 3};
  cfg.rx_antennas = 8;
  cfg.constellation = Modulation::QPSK;
  cfg.snr_db = 5.0;
  cfg.est_mse = {0.1, 0.2};
  cfg.seed = 11;
  return cfg;
}

void test_gen_channels_moments() {
  SystemConfig cfg = toy_cfg();
  cfg.users = 1;
  cfg.tx_antennas = {4};
  cfg.rx_antennas = 32;
  cfg.est_mse = {0.0};
  Rng rng(5);
  double sum = 0.0, sq = 0.0;
  int n = 0;
  for (int rep = 0; rep < 800; ++rep) {
    const ChannelSet ch = gen_channels(cfg, rng);
    for (int i = 0; i < ch.H[0].rows(); ++i)
      for (int j = 0; j < ch.H[0].cols(); ++j) {
        sum += ch.H[0](i, j).real() + ch.H[0](i, j).imag();
        sq += std::norm(ch.H[0](i, j));
        ++n;
      }
  }
  REQUIRE(n >= 100000);
  REQUIRE_NEAR(sum / (2.0 * n), 0.0, 0.01);
  REQUIRE_NEAR(sq / n, 1.0, 0.02);
  pass("iid rayleigh entries: mean 0, variance 1 over 1e5 draws");
}

void test_correlated_channels() {
  SystemConfig cfg = toy_cfg();
  cfg.channel = ChannelModel::ExpCorrelated;
  cfg.rho = 0.0;
  Rng rng_a(42);
  const ChannelSet a = gen_channels(cfg, rng_a);
  cfg.channel = ChannelModel::IidRayleigh;
  Rng rng_b(42);
  const ChannelSet b = gen_channels(cfg, rng_b);
  for (int u = 0; u < cfg.users; ++u) REQUIRE((a.H[u] - b.H[u]).norm() < 1e-12);

  // rho > 0: adjacent-antenna sample correlation approaches rho
  cfg.channel = ChannelModel::ExpCorrelated;
  cfg.rho = 0.7;
  cfg.users = 1;
  cfg.tx_antennas = {1};
  cfg.rx_antennas = 2;
  cfg.est_mse = {0.0};
  Rng rng(9);
  cxd acc = 0.0;
  double p = 0.0;
  for (int rep = 0; rep < 20000; ++rep) {
    const ChannelSet ch = gen_channels(cfg, rng);
    acc += ch.H[0](0, 0) * std::conj(ch.H[0](1, 0));
    p += 0.5 * (std::norm(ch.H[0](0, 0)) + std::norm(ch.H[0](1, 0)));
  }
  REQUIRE_NEAR((acc / p).real(), 0.7, 0.03);
  pass("exp-correlated channels: rho=0 equals iid; correlation matches rho");
}

void test_estimation_error() {
  SystemConfig cfg = toy_cfg();
  Rng rng(13);
  // zero variance -> exact copy
  const ChannelSet ch = gen_channels(cfg, rng);
  const ChannelEstimate e0 = add_estimation_error(ch, {0.0, 0.0}, rng);
  REQUIRE((e0.H_hat[0] - ch.H[0]).norm() == 0.0);

  // Monte-Carlo Frobenius MSE matches sigma_H^2
  double acc = 0.0;
  const int reps = 10000;
  for (int rep = 0; rep < reps; ++rep) {
    const ChannelEstimate e = add_estimation_error(ch, {0.1, 0.2}, rng);
    acc += (e.H_hat[0] - ch.H[0]).squaredNorm();
  }
  REQUIRE_NEAR(acc / reps, 0.1, 0.003);
  REQUIRE_THROWS_KIND(add_estimation_error(ch, {-1.0, 0.0}, rng), ErrorKind::Config);
  pass("estimation error: E||H_hat - H||_F^2 = sigma_H^2 within 3%");
}

void test_synthesize_and_snr() {
  SystemConfig cfg = toy_cfg();
  Rng rng(21);
  // residual y - sum H x has sample variance sigma_n^2
  double acc = 0.0;
  int n = 0;
  for (int rep = 0; rep < 4000; ++rep) {
    const DemodSample s = draw_sample(cfg, rng);
    VecC res = s.y;
    for (int u = 0; u < cfg.users; ++u) res -= s.channels.H[u] * s.x[u];
    acc += res.squaredNorm();
    n += static_cast<int>(res.size());
    for (int u = 0; u < cfg.users; ++u)
      for (int i = 0; i < s.x[u].size(); ++i) {
        const Constellation c = make_constellation(cfg.constellation);
        REQUIRE(c.nearest(s.x[u][i]) >= 0);
        REQUIRE(std::abs(s.x[u][i] - c.points[c.nearest(s.x[u][i])]) < 1e-12);
      }
  }
  REQUIRE_NEAR(acc / n / noise_var_for_snr(cfg), 1.0, 0.03);
  pass("synthesized samples: residual variance matches sigma_n^2");
}

void test_empirical_snr() {
  // empirical SNR within 0.2 dB over 1e5 samples
  SystemConfig cfg = toy_cfg();
  cfg.users = 2;
  cfg.tx_antennas = {1, 1};
  cfg.rx_antennas = 4;
  cfg.est_mse = {0.0, 0.0};
  cfg.snr_db = 5.0;
  Rng rng(33);
  double sig = 0.0, noise = 0.0;
  for (int rep = 0; rep < 100000; ++rep) {
    const DemodSample s = draw_sample(cfg, rng);
    VecC clean = VecC::Zero(cfg.rx_antennas);
    for (int u = 0; u < cfg.users; ++u) clean += s.channels.H[u] * s.x[u];
    sig += clean.squaredNorm();
    noise += (s.y - clean).squaredNorm();
  }
  const double snr_db = 10.0 * std::log10(sig / noise);
  REQUIRE_NEAR(snr_db, 5.0, 0.2);
  pass("noise calibration: empirical SNR within 0.2 dB of configured");
}

void test_determinism() {
  SystemConfig cfg = toy_cfg();
  Rng a(99), b(99);
  for (int rep = 0; rep < 10; ++rep) {
    const DemodSample sa = draw_sample(cfg, a);
    const DemodSample sb = draw_sample(cfg, b);
    REQUIRE(sa.bits == sb.bits);
    REQUIRE((sa.y - sb.y).norm() == 0.0);
    for (int u = 0; u < cfg.users; ++u) {
      REQUIRE((sa.channels.H[u] - sb.channels.H[u]).norm() == 0.0);
      REQUIRE((sa.estimates.H_hat[u] - sb.estimates.H_hat[u]).norm() == 0.0);
    }
  }
  pass("identical seeds give bit-identical sample streams");
}

}  // namespace

int main() {
  test_constellation_normalization();
  test_qpsk_points();
  test_gray_property();
  test_modulate_roundtrip();
  test_hard_demap_rules();
  test_gen_channels_moments();
  test_correlated_channels();
  test_estimation_error();
  test_synthesize_and_snr();
  test_empirical_snr();
  test_determinism();
  return 0;
}
