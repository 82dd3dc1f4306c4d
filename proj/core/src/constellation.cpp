#include "mud/constellation.hpp"

#include <cmath>

namespace mud {

Modulation modulation_from_string(const std::string& name) {
  if (name == "qpsk" || name == "QPSK") return Modulation::QPSK;
  if (name == "8psk" || name == "8PSK") return Modulation::PSK8;
  if (name == "16qam" || name == "16QAM") return Modulation::QAM16;
  if (name == "64qam" || name == "64QAM") return Modulation::QAM64;
  throw Error(ErrorKind::Config, "unsupported constellation: " + name);
}

std::string to_string(Modulation m) {
  switch (m) {
    case Modulation::QPSK: return "qpsk";
    case Modulation::PSK8: return "8psk";
    case Modulation::QAM16: return "16qam";
    case Modulation::QAM64: return "64qam";
  }
  return "?";
}

namespace {

// Gray-coded amplitude ladders: level index g (binary-reflected Gray code of
// the bit group) maps to amplitude 2g - (levels-1); neighbors differ in one bit.
int gray_decode(int g) {
  int b = 0;
  for (; g; g >>= 1) b ^= g;
  return b;
}

double pam_level(int bits, int nbits) {
  const int levels = 1 << nbits;
  const int rank = gray_decode(bits);  // position along the amplitude axis
  return static_cast<double>(2 * rank - (levels - 1));
}

std::vector<cxd> square_qam(int bits_per_axis, double scale) {
  const int n = 1 << (2 * bits_per_axis);
  std::vector<cxd> pts(n);
  const int mask = (1 << bits_per_axis) - 1;
  for (int i = 0; i < n; ++i) {
    const int bi = (i >> bits_per_axis) & mask;  // MSB half -> in-phase
    const int bq = i & mask;
    pts[i] = cxd(pam_level(bi, bits_per_axis), pam_level(bq, bits_per_axis)) * scale;
  }
  return pts;
}

}  // namespace

Constellation make_constellation(Modulation name) {
  Constellation c;
  c.name = name;
  switch (name) {
    case Modulation::QPSK:
      c.bits_per_symbol = 2;
      c.points = square_qam(1, 1.0 / std::sqrt(2.0));
      break;
    case Modulation::PSK8: {
      c.bits_per_symbol = 3;
      c.points.resize(8);
      for (int i = 0; i < 8; ++i) {
        // Gray ring: bit pattern i sits at angular position gray_decode(i).
        const double ang = 2.0 * std::numbers::pi * gray_decode(i) / 8.0;
        c.points[i] = cxd(std::cos(ang), std::sin(ang));
      }
      break;
    }
    case Modulation::QAM16:
      c.bits_per_symbol = 4;
      c.points = square_qam(2, 1.0 / std::sqrt(10.0));
      break;
    case Modulation::QAM64:
      c.bits_per_symbol = 6;
      c.points = square_qam(3, 1.0 / std::sqrt(42.0));
      break;
  }
  return c;
}

int Constellation::nearest(cxd v) const {
  require(std::isfinite(v.real()) && std::isfinite(v.imag()), ErrorKind::Numeric,
          "hard_demap: non-finite input");
  int best = 0;
  double best_d = std::norm(v - points[0]);
  for (int i = 1; i < size(); ++i) {
    const double d = std::norm(v - points[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

VecC modulate(const std::vector<uint8_t>& bits, const Constellation& c) {
  require(bits.size() % c.bits_per_symbol == 0, ErrorKind::Shape,
          "modulate: bit count not divisible by bits_per_symbol");
  const int n = static_cast<int>(bits.size()) / c.bits_per_symbol;
  VecC out(n);
  for (int k = 0; k < n; ++k) {
    int idx = 0;
    for (int b = 0; b < c.bits_per_symbol; ++b)
      idx = (idx << 1) | (bits[k * c.bits_per_symbol + b] & 1);
    out[k] = c.points[idx];
  }
  return out;
}

HardDecision hard_demap(const VecC& x_hat, const Constellation& c) {
  HardDecision d;
  d.symbols.resize(x_hat.size());
  d.bits.resize(x_hat.size() * c.bits_per_symbol);
  for (int k = 0; k < x_hat.size(); ++k) {
    const int idx = c.nearest(x_hat[k]);
    d.symbols[k] = c.points[idx];
    for (int b = 0; b < c.bits_per_symbol; ++b)
      d.bits[k * c.bits_per_symbol + b] = static_cast<uint8_t>((idx >> (c.bits_per_symbol - 1 - b)) & 1);
  }
  return d;
}

}  // namespace mud
