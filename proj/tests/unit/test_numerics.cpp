// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sparse_rnn/errors.hpp"
#include "sparse_rnn/numerics.hpp"
#include "sparse_rnn/rng.hpp"

using namespace srnn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

const Matrix kWorked{{-0.685, 0.530, -0.464}, {-0.534, 0.828, 0.045}, {-0.123, 0.629, -0.014}};

}  // namespace

TEST_CASE("matmul examples") {
  Matrix col{{3}, {4}};
  CHECK(matmul(Matrix::identity(2), col) == col);
  Matrix a{{1, 2}, {3, 4}};
  CHECK(matmul(a, Matrix{{0}, {0}}) == Matrix{{0}, {0}});
  CHECK(matmul(a, Matrix{{5}, {6}}) == Matrix{{17}, {39}});
}

TEST_CASE("matmul shape error names both shapes") {
  Matrix a(2, 3), b(2, 2);
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("2x2") != std::string::npos);
  }
}

TEST_CASE("matmul is associative on random matrices") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a = random_matrix(1 + rng.below(5), 1 + rng.below(5), rng);
    Matrix b = random_matrix(a.cols(), 1 + rng.below(5), rng);
    Matrix c = random_matrix(b.cols(), 1 + rng.below(5), rng);
    Matrix left = matmul(matmul(a, b), c);
    Matrix right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      double l = left.values()[i], r = right.values()[i];
      CHECK(std::abs(l - r) <= 1e-9 * std::max(1.0, std::abs(l)));
    }
  }
}

TEST_CASE("accumulating kernels agree with matmul") {
  Rng rng(5);
  Matrix a = random_matrix(4, 3, rng), b = random_matrix(3, 5, rng);
  Matrix out(4, 5);
  add_matmul(a, b, out);
  Matrix ref = matmul(a, b);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.values()[i] == doctest::Approx(ref.values()[i]));

  Matrix bt(5, 3);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 5; ++c) bt(c, r) = b(r, c);
  Matrix nt(4, 5);
  add_matmul_nt(a, bt, nt);
  for (std::size_t i = 0; i < nt.size(); ++i) CHECK(nt.values()[i] == doctest::Approx(ref.values()[i]));

  Matrix at(3, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) at(c, r) = a(r, c);
  Matrix tn(4, 5);
  add_matmul_tn(at, b, tn);
  for (std::size_t i = 0; i < tn.size(); ++i) CHECK(tn.values()[i] == doctest::Approx(ref.values()[i]));
}

TEST_CASE("percentile examples") {
  std::vector<double> worked{0.014, 0.045, 0.123, 0.464, 0.530, 0.534, 0.629, 0.685, 0.828};
  CHECK(std::abs(percentile(worked, 10) - 0.0388) <= 0.0002);
  std::vector<double> one{5};
  CHECK(percentile(one, 50) == 5);
  std::vector<double> four{1, 2, 3, 4};
  CHECK(percentile(four, 100) == 4);
  CHECK(percentile(four, 50) == 2.5);
  CHECK_THROWS_AS(percentile(std::vector<double>{}, 50), DomainError);
  CHECK_THROWS_AS(percentile(four, 101), DomainError);
}

TEST_CASE("percentile endpoints and monotonicity") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(1 + rng.below(40));
    for (double& x : v) x = rng.normal();
    CHECK(percentile(v, 0) == *std::min_element(v.begin(), v.end()));
    CHECK(percentile(v, 100) == *std::max_element(v.begin(), v.end()));
    double prev = percentile(v, 0);
    for (int p = 1; p <= 100; ++p) {
      double cur = percentile(v, p);
      CHECK(cur >= prev);
      prev = cur;
    }
  }
}

TEST_CASE("elementwise_mul examples") {
  Matrix mask(3, 3, 1.0);
  mask(2, 2) = 0.0;
  Matrix pruned = elementwise_mul(kWorked, mask);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(pruned(r, c) == ((r == 2 && c == 2) ? 0.0 : kWorked(r, c)));
  CHECK(elementwise_mul(kWorked, Matrix(3, 3, 1.0)) == kWorked);
  Matrix zeros = elementwise_mul(kWorked, Matrix(3, 3, 0.0));
  for (double v : zeros.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(elementwise_mul(kWorked, Matrix(2, 3)), ShapeError);
}

TEST_CASE("apply_mask_in_place writes positive zero") {
  Matrix w = kWorked;
  Matrix mask(3, 3, 1.0);
  mask(2, 2) = 0.0;
  apply_mask_in_place(w, mask);
  CHECK(w(2, 2) == 0.0);
  CHECK_FALSE(std::signbit(w(2, 2)));
  CHECK(w(0, 0) == -0.685);
}

TEST_CASE("stats examples") {
  Stats s = stats(std::vector<double>{3, 3, 3});
  CHECK(s.mean == 3);
  CHECK(s.variance == 0);
  CHECK(s.std == 0);
  s = stats(std::vector<double>{0, 2});
  CHECK(s.mean == 1);
  CHECK(s.variance == 1);
  CHECK(s.std == 1);
  s = stats(std::vector<double>{1});
  CHECK(s.mean == 1);
  CHECK(s.variance == 0);
  CHECK_THROWS_AS(stats(std::vector<double>{}), DomainError);
}

TEST_CASE("solve_spd recovers a known solution") {
  Matrix a{{4, 1, 0}, {1, 3, 1}, {0, 1, 2}};
  std::vector<double> x{1, -2, 3};
  std::vector<double> b(3, 0.0);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) b[r] += a(r, c) * x[c];
  auto got = solve_spd(a, b);
  for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("rng replays identically") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 10000; ++i) REQUIRE(a.next_u64() == b.next_u64());
  Rng c(1234), d(1234);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(c.uniform() == d.uniform());
    REQUIRE(c.normal() == d.normal());
    REQUIRE(c.below(17) == d.below(17));
  }
}

TEST_CASE("rng draws stay in range") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    auto k = rng.range(-3, 3);
    CHECK((k >= -3 && k <= 3));
    CHECK(rng.below(5) < 5);
  }
}

TEST_CASE("rng distributions have the expected moments") {
  Rng rng(77);
  const int n = 200000;
  double sum = 0, sq = 0, usum = 0;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    sum += z;
    sq += z * z;
    usum += rng.uniform();
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
  CHECK(std::abs(usum / n - 0.5) < 0.005);
}

TEST_CASE("derived seeds differ per stream and fork does not advance") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  Rng a(5), b(5);
  Rng f = a.fork(3);
  (void)f.next_u64();
  CHECK(a.next_u64() == b.next_u64());
}
