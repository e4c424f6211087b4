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

#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include <Eigen/Dense>

namespace damp::linalg {

// All surgery math runs in double precision.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultRcond = 1e-10;
inline constexpr double kDefaultRankTol = 1e-8;

/// Builds a rows x cols matrix from row-major entries. Rejects a length
/// mismatch and any non-finite entry.
Matrix from_row_major(std::size_t rows, std::size_t cols, std::span<const double> entries);

bool all_finite(const Matrix& m);

/// Moore-Penrose pseudoinverse through the SVD. Singular values at or below
/// rcond * sigma_max are treated as zero.
Matrix pseudoinverse(const Matrix& m, double rcond = kDefaultRcond);

/// Orthonormal basis of the column space of `columns` by modified Gram-Schmidt
/// with one reorthogonalization pass. A column whose residual norm falls below
/// `tol` is dropped. Returns std::nullopt when every column is dropped.
std::optional<Matrix> orthonormal_basis(const Matrix& columns, double tol = kDefaultRankTol);

/// Largest absolute entry of (Q^T Q - I).
double orthonormality_error(const Matrix& q);

double max_abs(const Matrix& m);

}  // namespace damp::linalg
