#pragma once

// Finite-dimensional model of a pair of subspaces in a space with two inner
// products: the energy form (u, v) = u^T K v and the mass form <u, v> = u^T M v.

#include "specpert/eigsolve.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <optional>
#include <vector>

namespace specpert {

class EnergySpace {
public:
  /// Both matrices must be symmetric (relative 1e-12) and positive definite.
  EnergySpace(SparseMatrix energy, SparseMatrix mass);
  static std::shared_ptr<const EnergySpace> make(SparseMatrix energy, SparseMatrix mass);
  static std::shared_ptr<const EnergySpace> make(const Eigen::MatrixXd& energy,
                                                 const Eigen::MatrixXd& mass);

  Eigen::Index dim() const { return energy_.rows(); }
  const SparseMatrix& energy() const { return energy_; }
  const SparseMatrix& mass() const { return mass_; }

  double energy_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;
  double mass_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;
  double energy_norm(const Eigen::VectorXd& u) const;
  double mass_norm(const Eigen::VectorXd& u) const;

private:
  SparseMatrix energy_;
  SparseMatrix mass_;
};

using SpacePtr = std::shared_ptr<const EnergySpace>;

/// A subspace of an EnergySpace.
///
/// Nodal subspaces are spanned by coordinate vectors e_i, i in an index set,
/// and project through a sparse Cholesky factor of the principal block of K.
/// General subspaces are given by a spanning matrix and keep an
/// energy-orthonormal basis.
class Subspace {
public:
  static Subspace nodal(SpacePtr parent, std::vector<Eigen::Index> indices);
  static Subspace general(SpacePtr parent, const Eigen::MatrixXd& spanning);
  static Subspace whole(SpacePtr parent);

  const EnergySpace& parent() const { return *parent_; }
  const SpacePtr& parent_ptr() const { return parent_; }
  Eigen::Index dim() const { return dim_; }
  bool is_nodal() const { return nodal_; }
  /// Sorted index set; empty for general subspaces.
  const std::vector<Eigen::Index>& indices() const { return indices_; }

  /// The w in this subspace with (w, v) = f^T v for every v in it. Column-wise.
  Eigen::MatrixXd riesz(const Eigen::MatrixXd& f) const;
  /// Energy-orthogonal projection S u. Column-wise.
  Eigen::MatrixXd project(const Eigen::MatrixXd& u) const;
  /// Solution operator: (K_j w, v) = <w, v> for v in the subspace.
  Eigen::MatrixXd solve_mass(const Eigen::MatrixXd& w) const;
  /// Energy-orthonormal basis (N x dim). Built on first use for nodal subspaces.
  const Eigen::MatrixXd& basis() const;
  /// ||u - S u|| <= tol ||u|| in the energy norm.
  bool contains(const Eigen::VectorXd& u, double tol = 1e-8) const;

  bool same_parent(const Subspace& other) const { return parent_ == other.parent_; }

private:
  struct Cache;
  Subspace() = default;

  SpacePtr parent_;
  Eigen::Index dim_ = 0;
  bool nodal_ = false;
  std::vector<Eigen::Index> indices_;
  std::shared_ptr<Cache> cache_;
};

/// H1 + H2. Nodal pairs give the nodal union; otherwise the basis columns are
/// stacked and directions with relative Gram eigenvalue below 1e-12 dropped.
Subspace subspace_sum(const Subspace& h1, const Subspace& h2);

/// H1 intersected with H2, or nothing when the intersection is {0}.
/// Nodal pairs intersect index sets. Otherwise principal angles decide:
/// cos >= 1 - 1e-10 is a shared direction, cos in [1 - 1e-6, 1 - 1e-10) is
/// ambiguous and raises an error listing every cosine.
std::optional<Subspace> subspace_intersection(const Subspace& h1, const Subspace& h2);

/// Energy-orthonormal eigenspaces of (phi, v) = lambda <phi, v> on a subspace.
struct EigenGroup {
  double value = 0.0;    // lambda_m, mean over the group
  Eigen::MatrixXd basis; // N x J_m, energy-orthonormal
  Eigen::Index multiplicity() const { return basis.cols(); }
};

struct EigenDecomposition {
  double group_tol = 0.0;
  std::vector<EigenGroup> groups;
  Eigen::VectorXd raw_values; // every eigenvalue that was computed, ascending

  const EigenGroup& group(int m) const; // 1-based
  /// sqrt of the sum of the first m distinct eigenvalues.
  double lambda_sum_root(int m) const;
};

double embedding_constant(const EnergySpace& space);

Eigen::VectorXd project(const Subspace& sub, const Eigen::VectorXd& u);

double sigma_distance(const Subspace& h1, const Subspace& h2);
double sigma_star(const Subspace& h1, const Subspace& h2);

/// Eigenvalues grouped by consecutive relative gap (v[i] - v[i-1] <= tol v[i]).
/// With n_groups > 0 only the lowest n_groups complete groups are returned.
EigenDecomposition solve_operator_eigs(const Subspace& sub, double group_tol, int n_groups = 0);

/// phi - S2 phi.
Eigen::MatrixXd apply_T2(const Subspace& h2, const Eigen::MatrixXd& phi);

struct Corrector {
  Eigen::VectorXd source;
  Eigen::VectorXd value;
  double residual_norm = 0.0;
};

/// Psi in H2 with (Psi, w) = (phi, w) - lambda <phi, w> for all w in H2.
Corrector solve_corrector(const Subspace& h2, const Eigen::VectorXd& phi, double lambda);
/// Column-wise correctors without the residual bookkeeping.
Eigen::MatrixXd correctors(const Subspace& h2, const Eigen::MatrixXd& phis, double lambda);

/// K2 S2 v - S2 K1 v for v in H1.
Eigen::VectorXd apply_B(const Subspace& h1, const Subspace& h2, const Eigen::VectorXd& v);

/// max over unit-energy phi in span(X) of sigma ||Psi||^2 + |T phi|^2 + |Psi|^2.
double compute_rho(const Subspace& h1, const Subspace& h2, const Eigen::MatrixXd& x, double lambda,
                   double sigma);
/// max over unit-energy phi in span(X) of ||T0 phi||^2 + ||Psi||^2, T0 = I - S0.
double compute_rho0(const Subspace& h1, const Subspace& h2, const Eigen::MatrixXd& x, double lambda);

/// Largest eigenvalue of a symmetric matrix (0 for an empty one).
double largest_symmetric_value(const Eigen::MatrixXd& m);

} // namespace specpert
