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

#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "damp/error.hpp"
#include "damp/linalg.hpp"
#include "helpers.hpp"

using namespace damp;
using linalg::Matrix;
using linalg::Vector;

TEST_CASE("from_row_major checks its input") {
  const std::array<double, 4> e{1, 2, 3, 4};
  const Matrix m = linalg::from_row_major(2, 2, e);
  CHECK(m(0, 1) == 2.0);
  CHECK(m(1, 0) == 3.0);
  CHECK_THROWS_AS(linalg::from_row_major(3, 2, e), Error);
  const std::array<double, 2> bad{1.0, std::nan("")};
  CHECK_THROWS_AS(linalg::from_row_major(1, 2, bad), Error);
}

TEST_CASE("pseudoinverse of the identity") {
  const Matrix i = Matrix::Identity(3, 3);
  CHECK(linalg::max_abs(linalg::pseudoinverse(i, 1e-10) - i) == 0.0);
}

TEST_CASE("pseudoinverse zeroes a vanishing singular value") {
  Matrix m(2, 2);
  m << 2, 0, 0, 0;
  Matrix want(2, 2);
  want << 0.5, 0, 0, 0;
  CHECK(linalg::max_abs(linalg::pseudoinverse(m) - want) < 1e-15);
}

TEST_CASE("pseudoinverse satisfies the Moore-Penrose identities") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Matrix m = testing::random_matrix(6, 3, rng);
    const Matrix p = linalg::pseudoinverse(m);
    CHECK(linalg::max_abs(m * p * m - m) < 1e-8);
    CHECK(linalg::max_abs(p * m * p - p) < 1e-8);
    CHECK(linalg::max_abs((m * p).transpose() - m * p) < 1e-8);
    CHECK(linalg::max_abs((p * m).transpose() - p * m) < 1e-8);
  }
}

TEST_CASE("M M+ is a symmetric idempotent projector") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> rows(1, 64), cols(1, 16);
  for (int t = 0; t < 50; ++t) {
    Matrix m = testing::random_matrix(rows(rng), cols(rng), rng);
    if (t % 5 == 0 && m.cols() > 1) m.col(m.cols() - 1) = m.col(0);  // rank deficient
    const Matrix proj = m * linalg::pseudoinverse(m);
    CHECK(linalg::max_abs(proj - proj.transpose()) <= 1e-8);
    CHECK(linalg::max_abs(proj * proj - proj) <= 1e-8);
  }
}

TEST_CASE("pseudoinverse of orthonormal columns is the transpose") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const Matrix q = Eigen::HouseholderQR<Matrix>(testing::random_matrix(20, 6, rng))
                         .householderQ() *
                     Matrix::Identity(20, 6);
    CHECK(linalg::max_abs(linalg::pseudoinverse(q) - q.transpose()) <= 1e-8);
  }
}

TEST_CASE("orthonormal_basis drops a duplicated column") {
  Matrix c = Matrix::Zero(3, 2);
  c(0, 0) = c(0, 1) = 1.0;
  const auto q = linalg::orthonormal_basis(c);
  REQUIRE(q);
  CHECK(q->cols() == 1);
  CHECK(std::abs((*q)(0, 0)) == doctest::Approx(1.0));
  CHECK(q->col(0).tail(2).norm() == 0.0);
}

TEST_CASE("orthonormal_basis of e1, e2") {
  const Matrix c = Matrix::Identity(4, 2);
  const auto q = linalg::orthonormal_basis(c);
  REQUIRE(q);
  CHECK(q->cols() == 2);
  CHECK(linalg::orthonormality_error(*q) <= 1e-12);
  CHECK(linalg::max_abs(*q - c) <= 1e-12);
}

TEST_CASE("orthonormal_basis preserves the span of independent columns") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 25; ++t) {
    const Matrix c = testing::random_matrix(8, 3, rng);
    const auto q = linalg::orthonormal_basis(c);
    REQUIRE(q);
    CHECK(q->cols() == 3);
    CHECK(linalg::orthonormality_error(*q) <= 1e-8);
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const Vector col = c.col(j);
      CHECK((col - *q * (q->transpose() * col)).norm() <= 1e-8);
    }
  }
}

TEST_CASE("orthonormal_basis output is always orthonormal, including nearly dependent input") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> dim(2, 40);
  for (int t = 0; t < 100; ++t) {
    const int d = dim(rng);
    const int k = std::uniform_int_distribution<int>(1, d)(rng);
    Matrix c = testing::random_matrix(d, k, rng);
    if (k > 1) c.col(k - 1) = c.col(0) + 1e-6 * c.col(k - 1);
    const auto q = linalg::orthonormal_basis(c);
    REQUIRE(q);
    CHECK(q->cols() <= k);
    CHECK(linalg::orthonormality_error(*q) <= 1e-8);
  }
}

TEST_CASE("orthonormal_basis of zero columns is empty") {
  CHECK_FALSE(linalg::orthonormal_basis(Matrix::Zero(5, 2)).has_value());
}
