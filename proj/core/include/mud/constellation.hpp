#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mud/common.hpp"

namespace mud {

enum class Modulation { QPSK, PSK8, QAM16, QAM64 };

Modulation modulation_from_string(const std::string& name);
std::string to_string(Modulation m);

// Unit-average-power constellation with a Gray bit mapping. Point index i
// carries the bit pattern i (MSB first over bits_per_symbol bits), so the
// bit map is the identity on indices and trivially bijective.
struct Constellation {
  Modulation name;
  int bits_per_symbol = 0;
  std::vector<cxd> points;  // points[i] <-> bit pattern i

  int size() const { return static_cast<int>(points.size()); }

  /// Nearest point in Euclidean distance; ties resolved to the lowest index.
  int nearest(cxd v) const;
};

Constellation make_constellation(Modulation name);

/// Maps each bits_per_symbol group (MSB first) to a constellation point.
VecC modulate(const std::vector<uint8_t>& bits, const Constellation& c);

struct HardDecision {
  VecC symbols;
  std::vector<uint8_t> bits;
};

/// Quantizes each entry to the nearest constellation point and recovers bits.
HardDecision hard_demap(const VecC& x_hat, const Constellation& c);

}  // namespace mud
