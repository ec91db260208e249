#pragma once

// Eigenvalues of the perturbed problem near lambda_m, the J_m x J_m
// correction pencil and the first-order prediction mu_k^{-1} ~ lambda_m^{-1} + tau_k.

#include "specpert/hilbert.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace specpert {

/// Admission threshold for Lambda_m sqrt(sigma).
inline constexpr double kGateLimit = 0.75;

/// Lambda_m sqrt(sigma) for group m of eigs1.
double gate_value(const EigenDecomposition& eigs1, int m, double sigma);

struct Window {
  double lo = 0.0;
  double hi = 0.0;
};

struct Localization {
  Eigen::VectorXd mu;      // ascending, J_m values of the perturbed problem
  Eigen::MatrixXd vectors; // matching eigenvectors, energy-orthonormal
  Window narrow;           // lambda_m^{-1} -+ c sqrt(sigma)
  Window wide;             // (1/lambda_{m+1} + c sqrt(sigma), 1/lambda_{m-1} - c sqrt(sigma))
  double c = 0.0;
};

/// The j eigenpairs of eigs2 closest to lambda in the 1/lambda scale, ascending;
/// windows are left empty. No gate and no count check.
Localization nearest_eigenpairs(const EigenDecomposition& eigs2, double lambda, Eigen::Index j);

/// The J_m eigenvalues of eigs2 closest to lambda_m in the 1/lambda scale.
/// Without `c` the smallest c with every group 1..m+1 of eigs1 matched
/// within c sqrt(sigma) by its nearest perturbed values is used. Throws GateError when
/// the gate is not passed and LocalizationError when the wide window does not
/// hold exactly J_m values (or, with `c` given, the narrow one does not).
/// eigs1 needs group m + 1; eigs2 must reach below the wide window.
Localization localize(const EigenDecomposition& eigs1, const EigenDecomposition& eigs2, int m, double sigma,
                      std::optional<double> c = std::nullopt);

/// ||U - P_m U|| / (sqrt(sigma) ||U||), P_m the energy projector onto S2 X_m.
double eigenvector_proximity(const Eigen::VectorXd& u, const Eigen::MatrixXd& x, const Subspace& h2, double sigma);

struct CorrectionProblem {
  Eigen::MatrixXd lhs;  // J x J
  Eigen::MatrixXd gram; // (S2 phi_i, S2 phi_j)
  Eigen::VectorXd tau;  // ascending
  double lambda = 0.0;
  double sigma = 0.0;
  double rho = 0.0;
};

/// lhs_ij = [(Psi_i, Psi_j) - (T phi_i, T phi_j) - (Psi_i, phi_j) - (phi_i, Psi_j)] / lambda,
/// gram_ij = (S2 phi_i, S2 phi_j), with X energy-orthonormal.
CorrectionProblem assemble_correction(const Subspace& h1, const Subspace& h2, const Eigen::MatrixXd& x,
                                      double lambda, double sigma);

struct Prediction {
  int k = 0; // 1-based within the group
  double lambda_inv = 0.0;
  double mu_inv = 0.0;
  double tau = 0.0;
  double predicted = 0.0;
  double remainder = 0.0;
  double bound = 0.0; // rho + |tau| sigma
  double ratio = 0.0; // remainder / bound
};

/// Pairs tau and measured mu in ascending order of mu^{-1}.
std::vector<Prediction> predict_and_check(const CorrectionProblem& cp, const Eigen::VectorXd& mu);

enum class Inclusion { shrinking, expanding }; // H2 in H1, H1 in H2

/// Which inclusion holds between nodal subspaces, if any.
std::optional<Inclusion> inclusion_of(const Subspace& h1, const Subspace& h2);

struct InclusionSample {
  double shift = 0.0; // |mu_k^{-1} - lambda_m^{-1}|
  double qmin = 0.0;  // min over unit phi in X_m of ||T phi||^2 (shrinking) or ||Psi_phi||^2 (expanding)
  double qmax = 0.0;
};

/// Samples for every k of one cell; throws when `direction` does not match the index sets.
std::vector<InclusionSample> inclusion_samples(const Subspace& h1, const Subspace& h2, const Eigen::MatrixXd& x,
                                               double lambda, const Eigen::VectorXd& mu, Inclusion direction);

struct InclusionFit {
  double c = 0.0; // largest c with c qmin <= shift
  double C = 0.0; // smallest C with shift <= C qmax
  int used = 0;
  int exact = 0; // 0/0 samples skipped
};

InclusionFit inclusion_bounds(std::span<const InclusionSample> samples);

/// Extremes of the quotient |mu_k^{-1} - lambda_m^{-1}| / max_{phi in X_m} phi^T Q phi
/// for a positive semidefinite form Q (collar gradient energy, for instance).
struct CollarRow {
  int k = 0;
  double shift = 0.0;
  double collar = 0.0;
  double ratio = 0.0;
};

std::vector<CollarRow> collar_stability_check(double lambda, const Eigen::VectorXd& mu, const Eigen::MatrixXd& x,
                                              const SparseMatrix& collar_form);

/// max / min of positive values; one constant over a sweep.
struct ConstantFit {
  double c_fit = 0.0;
  double min = 0.0;
  double spread = 0.0; // max / min
  int count = 0;
};

ConstantFit fit_constant(std::span<const double> values);

} // namespace specpert
