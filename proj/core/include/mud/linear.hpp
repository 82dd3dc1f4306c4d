#pragma once

#include <optional>
#include <vector>

#include "mud/common.hpp"
#include "mud/system.hpp"

namespace mud {

/// x_hat = (H^H H)^-1 H^H y for the stacked multi-user channel.
/// Throws ErrorKind::Singular when the stacked matrix is rank deficient.
VecC ls_demod(const VecC& y, const MatC& H_stacked);

/// x_hat = (H^H H + sigma_n^2 I)^-1 H^H y (R_u = I); falls back to LS at
/// sigma_n^2 = 0.
VecC lmmse_demod(const VecC& y, const MatC& H_stacked, double sigma_n_sq);

MatC stack_channels(const std::vector<MatC>& H);

/// Splits a stacked symbol vector back into per-user blocks.
std::vector<VecC> split_streams(const VecC& x, const std::vector<int>& tx_antennas);

/// Conditional LMMSE error covariance
///   A^-1 [ (sigma_n^2 + sigma_H^2 N_t) H^H H + sigma_n^4 I ] A^-1,
/// A = H^H H + sigma_n^2 I.
MatC error_covariance(const MatC& H_u, double sigma_n_sq, double sigma_H_sq);

// FIFO store of per-user channel realizations standing in for the long-term
// channel law. Eigenvalues of H^H H are cached per entry so equivalent noise
// power queries are cheap for any (sigma_n^2, sigma_H^2).
class MemoryBuffer {
 public:
  MemoryBuffer(int users, int capacity);

  void push(int user, const MatC& H);
  void push_all(const ChannelSet& ch);

  int size(int user) const { return static_cast<int>(store_[user].size()); }
  int users() const { return static_cast<int>(store_.size()); }
  int capacity() const { return capacity_; }
  const MatC& entry(int user, int i) const { return store_[user][i].H; }

  /// Monte-Carlo estimate over the buffer of
  ///   (sigma_n^2 + sigma_H^2 N_t) Tr(H^H H A^-2) + sigma_n^4 Tr(A^-2).
  /// Exact for sigma_H_sq = 0; overstates the channel-error contribution
  /// under the Frobenius-MSE injection model (see empirical_noise_power).
  double equivalent_noise_power(int user, double sigma_n_sq, double sigma_H_sq) const;

  /// E||x_hat - x||^2 of the single-user LMMSE estimate measured directly
  /// over the stored realizations: per entry, draws of the estimation error
  /// give W = (Hh^H Hh + sigma_n^2 I)^-1 Hh^H and the exact conditional error
  /// ||W H - I||_F^2 + sigma_n^2 ||W||_F^2 is averaged. Deterministic.
  double empirical_noise_power(int user, double sigma_n_sq, double sigma_H_sq,
                               int draws_per_entry = 2, int max_entries = 512) const;

 private:
  struct Entry {
    MatC H;
    VecD eig;  // eigenvalues of H^H H
  };
  std::vector<std::vector<Entry>> store_;
  std::vector<int> next_;  // ring cursor per user
  int capacity_;
};

}  // namespace mud
