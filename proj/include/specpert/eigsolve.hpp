#pragma once

// Symmetric-definite generalized eigenvalue kernel: a x = theta b x.
//
// Every eigenproblem in the library goes through here so that ordering,
// normalization and sign conventions are the same everywhere:
//   * eigenvalues ascending,
//   * eigenvectors b-orthonormal,
//   * the largest-magnitude entry of each eigenvector is positive.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <span>

namespace specpert {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

/// Pair (a, b) with a symmetric and b symmetric positive definite.
///
/// The constructor symmetrizes both matrices. An asymmetry above 1e-9
/// (relative to the max-norm) is reported on stderr before symmetrizing.
class SymmetricPencil {
public:
  SymmetricPencil(Eigen::MatrixXd a, Eigen::MatrixXd b);

  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::MatrixXd& b() const { return b_; }
  Eigen::Index size() const { return a_.rows(); }

private:
  Eigen::MatrixXd a_;
  Eigen::MatrixXd b_;
};

struct PencilSolution {
  Eigen::VectorXd values;  // ascending
  Eigen::MatrixXd vectors; // columns, b-orthonormal (empty when only values were asked for)
};

/// All eigenpairs.
PencilSolution solve_pencil(const SymmetricPencil& p);

/// The `count` smallest eigenpairs (dense reduction, selected range).
PencilSolution solve_pencil_lowest(const SymmetricPencil& p, Eigen::Index count);

/// Largest eigenvalue only.
double largest_pencil_value(const SymmetricPencil& p);

/// The `count` smallest eigenpairs of a sparse pencil with a positive definite.
/// Large problems use shift-invert Lanczos on a sparse Cholesky factor of a,
/// and the result is accepted only if an inertia count confirms that no
/// eigenvalue was skipped. Small problems go through the dense path.
PencilSolution solve_sparse_pencil_lowest(const SparseMatrix& a, const SparseMatrix& b,
                                          Eigen::Index count);

/// Number of eigenvalues of (a, b) below `shift`, from the inertia of a - shift b.
int count_pencil_below(const SparseMatrix& a, const SparseMatrix& b, double shift);

/// Largest eigenvalue of a linear map on R^n that is self-adjoint and
/// positive semidefinite in the inner product x^T b y. Only products with
/// the map and with b are needed (Lanczos for large n, dense otherwise).
double largest_operator_value(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                              const SparseMatrix& b);

/// Number of values in the open interval (lo, hi), multiplicities counted.
int count_in_interval(std::span<const double> values, double lo, double hi);

/// max_ij |m_ij - m_ji| / max_ij |m_ij| (0 for the zero matrix).
double relative_asymmetry(const Eigen::MatrixXd& m);

} // namespace specpert
