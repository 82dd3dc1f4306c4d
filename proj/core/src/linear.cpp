#include "mud/linear.hpp"

namespace mud {

MatC stack_channels(const std::vector<MatC>& H) {
  require(!H.empty(), ErrorKind::Shape, "stack_channels: empty channel list");
  const auto rows = H[0].rows();
  Eigen::Index cols = 0;
  for (const auto& h : H) {
    require(h.rows() == rows, ErrorKind::Shape, "stack_channels: inconsistent row counts");
    cols += h.cols();
  }
  MatC out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& h : H) {
    out.middleCols(c, h.cols()) = h;
    c += h.cols();
  }
  return out;
}

std::vector<VecC> split_streams(const VecC& x, const std::vector<int>& tx_antennas) {
  std::vector<VecC> out;
  out.reserve(tx_antennas.size());
  Eigen::Index at = 0;
  for (int nt : tx_antennas) {
    require(at + nt <= x.size(), ErrorKind::Shape, "split_streams: stream count mismatch");
    out.push_back(x.segment(at, nt));
    at += nt;
  }
  require(at == x.size(), ErrorKind::Shape, "split_streams: stream count mismatch");
  return out;
}

VecC ls_demod(const VecC& y, const MatC& H) {
  require(y.size() == H.rows(), ErrorKind::Shape, "ls_demod: y length mismatch");
  require(H.cols() <= H.rows(), ErrorKind::Singular,
          "ls_demod: more streams than receive antennas");
  Eigen::ColPivHouseholderQR<MatC> qr(H);
  qr.setThreshold(1e-10);
  require(qr.rank() == H.cols(), ErrorKind::Singular, "ls_demod: rank-deficient channel matrix");
  return qr.solve(y);
}

VecC lmmse_demod(const VecC& y, const MatC& H, double sigma_n_sq) {
  require(sigma_n_sq >= 0.0, ErrorKind::Config, "lmmse_demod: negative noise power");
  if (sigma_n_sq == 0.0) return ls_demod(y, H);
  require(y.size() == H.rows(), ErrorKind::Shape, "lmmse_demod: y length mismatch");
  MatC A = H.adjoint() * H;
  A.diagonal().array() += sigma_n_sq;
  return Eigen::LLT<MatC>(A).solve(H.adjoint() * y);
}

MatC error_covariance(const MatC& H_u, double sigma_n_sq, double sigma_H_sq) {
  require(sigma_n_sq >= 0.0 && sigma_H_sq >= 0.0, ErrorKind::Config,
          "error_covariance: negative variance");
  require(H_u.allFinite(), ErrorKind::Numeric, "error_covariance: non-finite channel");
  const auto nt = H_u.cols();
  const MatC G = H_u.adjoint() * H_u;
  MatC A = G;
  A.diagonal().array() += sigma_n_sq;
  Eigen::FullPivLU<MatC> lu(A);
  require(lu.isInvertible(), ErrorKind::Singular,
          "error_covariance: singular A (sigma_n^2 = 0 with deficient H^H H)");
  const MatC Ainv = lu.inverse();
  MatC mid = (sigma_n_sq + sigma_H_sq * static_cast<double>(nt)) * G;
  mid.diagonal().array() += sigma_n_sq * sigma_n_sq;
  return Ainv * mid * Ainv;
}

MemoryBuffer::MemoryBuffer(int users, int capacity) : capacity_(capacity) {
  require(users >= 1, ErrorKind::Config, "MemoryBuffer: users must be >= 1");
  require(capacity >= 1, ErrorKind::Config, "MemoryBuffer: capacity must be >= 1");
  store_.resize(users);
  next_.assign(users, 0);
}

void MemoryBuffer::push(int user, const MatC& H) {
  require(user >= 0 && user < users(), ErrorKind::Usage, "MemoryBuffer: user index out of range");
  auto& lane = store_[user];
  if (!lane.empty())
    require(H.rows() == lane[0].H.rows() && H.cols() == lane[0].H.cols(), ErrorKind::Shape,
            "MemoryBuffer: shape mismatch with stored realizations");
  Entry e;
  e.H = H;
  e.eig = Eigen::SelfAdjointEigenSolver<MatC>(H.adjoint() * H).eigenvalues();
  if (static_cast<int>(lane.size()) < capacity_) {
    lane.push_back(std::move(e));
  } else {
    lane[next_[user]] = std::move(e);  // overwrite oldest
    next_[user] = (next_[user] + 1) % capacity_;
  }
}

void MemoryBuffer::push_all(const ChannelSet& ch) {
  require(static_cast<int>(ch.H.size()) == users(), ErrorKind::Shape,
          "MemoryBuffer: channel set user count mismatch");
  for (int u = 0; u < users(); ++u) push(u, ch.H[u]);
}

double MemoryBuffer::empirical_noise_power(int user, double sigma_n_sq, double sigma_H_sq,
                                           int draws_per_entry, int max_entries) const {
  require(user >= 0 && user < users(), ErrorKind::Usage, "MemoryBuffer: user index out of range");
  const auto& lane = store_[user];
  require(!lane.empty(), ErrorKind::State,
          "empirical_noise_power: no stored realizations for user");
  require(sigma_n_sq >= 0.0 && sigma_H_sq >= 0.0, ErrorKind::Config,
          "empirical_noise_power: negative variance");
  const int n_entries = std::min<int>(max_entries, static_cast<int>(lane.size()));
  const int stride = std::max<int>(1, static_cast<int>(lane.size()) / n_entries);
  const auto nr = lane[0].H.rows();
  const auto nt = lane[0].H.cols();
  const double per_entry = sigma_H_sq > 0.0
                               ? std::sqrt(sigma_H_sq / static_cast<double>(nr * nt))
                               : 0.0;
  Rng rng(derive_seed(0x5bae, static_cast<uint64_t>(user)));
  double acc = 0.0;
  int count = 0;
  for (int e = 0; e < n_entries; ++e) {
    const MatC& H = lane[static_cast<size_t>(e * stride)].H;
    const int draws = sigma_H_sq > 0.0 ? draws_per_entry : 1;
    for (int d = 0; d < draws; ++d) {
      MatC Hh = H;
      if (per_entry > 0.0)
        for (Eigen::Index j = 0; j < nt; ++j)
          for (Eigen::Index i = 0; i < nr; ++i) Hh(i, j) += per_entry * rng.cnormal();
      MatC A = Hh.adjoint() * Hh;
      A.diagonal().array() += sigma_n_sq;
      Eigen::FullPivLU<MatC> lu(A);
      require(lu.isInvertible(), ErrorKind::Singular,
              "empirical_noise_power: singular system (zero noise, deficient channel)");
      const MatC W = lu.solve(Hh.adjoint());
      const MatC WH = W * H;
      acc += (WH - MatC::Identity(nt, nt)).squaredNorm() + sigma_n_sq * W.squaredNorm();
      ++count;
    }
  }
  return acc / count;
}

double MemoryBuffer::equivalent_noise_power(int user, double sigma_n_sq,
                                            double sigma_H_sq) const {
  require(user >= 0 && user < users(), ErrorKind::Usage, "MemoryBuffer: user index out of range");
  const auto& lane = store_[user];
  require(!lane.empty(), ErrorKind::State,
          "equivalent_noise_power: no stored realizations for user");
  const double nt = static_cast<double>(lane[0].H.cols());
  double acc = 0.0;
  for (const auto& e : lane) {
    double tr_ga = 0.0, tr_a = 0.0;  // Tr(H^H H A^-2), Tr(A^-2)
    for (int i = 0; i < e.eig.size(); ++i) {
      const double lam = e.eig[i];
      const double d = lam + sigma_n_sq;
      require(d > 0.0, ErrorKind::Singular,
              "equivalent_noise_power: singular A (zero noise and rank-deficient channel)");
      tr_ga += lam / (d * d);
      tr_a += 1.0 / (d * d);
    }
    acc += (sigma_n_sq + sigma_H_sq * nt) * tr_ga + sigma_n_sq * sigma_n_sq * tr_a;
  }
  return acc / static_cast<double>(lane.size());
}

}  // namespace mud
