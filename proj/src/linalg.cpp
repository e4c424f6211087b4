// Copyright 2026 The damp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "damp/linalg.hpp"

#include <cmath>
#include <string>

#include "damp/error.hpp"

namespace damp::linalg {

Matrix from_row_major(std::size_t rows, std::size_t cols, std::span<const double> entries) {
  require(entries.size() == rows * cols, ErrorKind::InvalidArgument,
          "matrix entries length " + std::to_string(entries.size()) + " != " +
              std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = entries[i * cols + j];
      require(std::isfinite(v), ErrorKind::InvalidArgument, "non-finite matrix entry");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return m;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix pseudoinverse(const Matrix& m, double rcond) {
  require(m.rows() > 0 && m.cols() > 0, ErrorKind::InvalidArgument,
          "pseudoinverse of an empty matrix");
  require(rcond >= 0.0, ErrorKind::InvalidArgument, "rcond must be non-negative");

  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const double cutoff = rcond * (sigma.size() > 0 ? sigma(0) : 0.0);

  Vector inv = Vector::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > cutoff && sigma(i) > 0.0) inv(i) = 1.0 / sigma(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

std::optional<Matrix> orthonormal_basis(const Matrix& columns, double tol) {
  require(columns.rows() >= 1 && columns.cols() >= 1, ErrorKind::InvalidArgument,
          "orthonormal_basis needs at least one row and one column");
  const Eigen::Index d = columns.rows();
  Matrix q(d, columns.cols());
  Eigen::Index rank = 0;

  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    Vector v = columns.col(j);
    // Two MGS sweeps: the second removes what cancellation left behind.
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < rank; ++k) {
        v -= q.col(k).dot(v) * q.col(k);
      }
    }
    const double norm = v.norm();
    if (norm < tol) continue;
    q.col(rank++) = v / norm;
  }

  if (rank == 0) return std::nullopt;
  return Matrix(q.leftCols(rank));
}

double orthonormality_error(const Matrix& q) {
  if (q.cols() == 0) return 0.0;
  const Matrix gram = q.transpose() * q;
  return (gram - Matrix::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff();
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace damp::linalg
