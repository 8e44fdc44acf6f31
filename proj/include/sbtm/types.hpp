#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace sbtm {

// All numerics run in 64-bit floats. Samples are stored column-wise:
// a batch of n states in R^d is a d x n matrix, so drift/score batches are
// plain GEMMs.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

inline void require_finite(const Eigen::Ref<const Matrix>& m, const std::string& what) {
  if (!m.allFinite()) throw std::runtime_error(what + ": non-finite entries");
}

}  // namespace sbtm
