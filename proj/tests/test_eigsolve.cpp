#include "specpert/eigsolve.hpp"
#include "specpert/error.hpp"

#include <doctest.h>

#include <random>
#include <vector>

#include "oracles.hpp"

using namespace specpert;

TEST_CASE("pencil: diagonal a with identity b") {
  Eigen::MatrixXd a(2, 2);
  a << 3, 0, 0, 1;
  const PencilSolution s = solve_pencil(SymmetricPencil(a, Eigen::MatrixXd::Identity(2, 2)));
  CHECK(s.values(0) == Approx(1.0));
  CHECK(s.values(1) == Approx(3.0));
  CHECK(std::abs(s.vectors(1, 0)) == Approx(1.0));
  CHECK(std::abs(s.vectors(0, 1)) == Approx(1.0));
  // sign convention: largest entry positive
  CHECK(s.vectors(1, 0) > 0.0);
  CHECK(s.vectors(0, 1) > 0.0);
}

TEST_CASE("pencil: a = b gives all ones") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd b = oracle::random_spd(rng, 6);
  const PencilSolution s = solve_pencil(SymmetricPencil(b, b));
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(s.values(i) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pencil: 2x2 swap matrix") {
  Eigen::MatrixXd a(2, 2);
  a << 0, 1, 1, 0;
  const PencilSolution s = solve_pencil(SymmetricPencil(a, Eigen::MatrixXd::Identity(2, 2)));
  CHECK(s.values(0) == Approx(-1.0));
  CHECK(s.values(1) == Approx(1.0));
}

TEST_CASE("pencil: b not positive definite is rejected with its smallest eigenvalue") {
  Eigen::MatrixXd b(2, 2);
  b << 1, 0, 0, -2;
  try {
    solve_pencil(SymmetricPencil(Eigen::MatrixXd::Identity(2, 2), b));
    FAIL("expected NotPositiveDefinite");
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.smallest_eigenvalue() == Approx(-2.0));
  }
}

TEST_CASE("pencil: random pencils agree with Eigen and keep b-orthonormality; trace identity") {
  std::mt19937_64 rng(11);
  for (int n : {1, 3, 7, 20}) {
    const Eigen::MatrixXd a = oracle::random_spd(rng, n) - 2.0 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd b = oracle::random_spd(rng, n);
    const PencilSolution s = solve_pencil(SymmetricPencil(a, b));
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ref(a, b);
    CHECK((s.values - ref.eigenvalues()).norm() <= 1e-9 * ref.eigenvalues().cwiseAbs().maxCoeff());
    CHECK((s.vectors.transpose() * b * s.vectors - Eigen::MatrixXd::Identity(n, n)).norm() < 1e-9);
    CHECK(s.values.sum() == Approx(b.ldlt().solve(a).trace()).epsilon(1e-9));
    for (Eigen::Index i = 1; i < n; ++i) CHECK(s.values(i) >= s.values(i - 1));
    CHECK(largest_pencil_value(SymmetricPencil(a, b)) == Approx(s.values(n - 1)).epsilon(1e-10));
    const PencilSolution low = solve_pencil_lowest(SymmetricPencil(a, b), std::min(n, 2));
    for (Eigen::Index i = 0; i < low.values.size(); ++i) CHECK(low.values(i) == Approx(s.values(i)).epsilon(1e-10));
  }
}

TEST_CASE("pencil: spectrum is invariant under congruence") {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd a = oracle::random_spd(rng, 5);
  const Eigen::MatrixXd b = oracle::random_spd(rng, 5);
  const Eigen::MatrixXd t = oracle::random_matrix(rng, 5, 5) + 5 * Eigen::MatrixXd::Identity(5, 5);
  const PencilSolution s1 = solve_pencil(SymmetricPencil(a, b));
  const PencilSolution s2 = solve_pencil(SymmetricPencil(t.transpose() * a * t, t.transpose() * b * t));
  CHECK((s1.values - s2.values).norm() < 1e-8 * s1.values.maxCoeff());
}

TEST_CASE("sparse lowest eigenpairs match the dense solver on a 1D Laplacian") {
  const int n = 900;
  std::vector<Eigen::Triplet<double>> tk, tm;
  for (int i = 0; i < n; ++i) {
    tk.emplace_back(i, i, 2.0);
    tm.emplace_back(i, i, 4.0 / 6);
    if (i + 1 < n) {
      tk.emplace_back(i, i + 1, -1.0);
      tk.emplace_back(i + 1, i, -1.0);
      tm.emplace_back(i, i + 1, 1.0 / 6);
      tm.emplace_back(i + 1, i, 1.0 / 6);
    }
  }
  SparseMatrix k(n, n), m(n, n);
  k.setFromTriplets(tk.begin(), tk.end());
  m.setFromTriplets(tm.begin(), tm.end());
  const PencilSolution s = solve_sparse_pencil_lowest(k, m, 6);
  // Closed form for the linear-element pencil of -u'' on a uniform grid.
  for (int j = 1; j <= 6; ++j) {
    const double c = std::cos(std::numbers::pi * j / (n + 1));
    const double exact = (2 - 2 * c) / ((4 + 2 * c) / 6);
    CHECK(s.values(j - 1) == Approx(exact).epsilon(1e-10));
  }
  CHECK(count_pencil_below(k, m, 0.5 * (s.values(2) + s.values(3))) == 3);
  const Eigen::MatrixXd g = s.vectors.transpose() * (m * s.vectors);
  CHECK((g - Eigen::MatrixXd::Identity(6, 6)).norm() < 1e-9);
}

TEST_CASE("largest operator value, dense and Lanczos paths") {
  for (int n : {10, 300}) {
    std::vector<Eigen::Triplet<double>> tb;
    for (int i = 0; i < n; ++i) tb.emplace_back(i, i, 1.0 + i);
    SparseMatrix b(n, n);
    b.setFromTriplets(tb.begin(), tb.end());
    // apply = b^{-1} a with a = diag(1 ... n); values 1, 1, ..., so use a = diag(i^2).
    auto apply = [n](const Eigen::VectorXd& x) {
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) y(i) = x(i) * double(i * i) / (1.0 + i);
      return y;
    };
    const double expect = double((n - 1) * (n - 1)) / n;
    CHECK(largest_operator_value(apply, b) == Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("count in open interval") {
  const std::vector<double> t{1, 2, 3};
  CHECK(count_in_interval(t, 1.5, 3.5) == 2);
  CHECK(count_in_interval(t, 2.0, 2.0) == 0);
  const std::vector<double> d{0.5, 0.5};
  CHECK(count_in_interval(d, 0.4, 0.6) == 2);
}

TEST_CASE("relative asymmetry") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 2.5, 1;
  CHECK(relative_asymmetry(a) == Approx(0.5 / 2.5));
  CHECK(relative_asymmetry(Eigen::MatrixXd::Zero(3, 3)) == 0.0);
}
