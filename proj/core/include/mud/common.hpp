#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mud {

using cxd = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using MatD = Eigen::MatrixXd;
using VecD = Eigen::VectorXd;

// Error taxonomy shared across the library. The CLI maps `user_facing()`
// kinds to exit code 1 and the rest to 2.
enum class ErrorKind {
  Config,     // invalid configuration values
  Shape,      // dimension mismatch
  Numeric,    // non-finite input or result
  Singular,   // rank-deficient linear system
  Ingestion,  // dataset directory / record problems
  State,      // operation invoked on unready state (e.g. empty buffer)
  Usage,      // API contract violation
  Training,   // divergence during optimization
  Io,         // filesystem failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  bool user_facing() const {
    return kind_ == ErrorKind::Config || kind_ == ErrorKind::Ingestion || kind_ == ErrorKind::Io;
  }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace mud
