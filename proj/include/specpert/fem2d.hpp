#pragma once

// P1 finite elements on a structured triangulation of a square D.
// Subdomains are unions of mesh triangles; H(Omega) is spanned by the hat
// functions of the vertices strictly inside Omega, extended by zero.

#include "specpert/hilbert.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace specpert {

/// Triangulation of D = [lo, hi]^2. Every cell of the structured generator
/// is split along the diagonal whose direction alternates with (i + j) parity,
/// so the mesh of the unit square is invariant under its symmetry group when
/// the number of cells is even.
struct BackgroundMesh {
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 3>> triangles;
  double h = 0.0;
  double lo = 0.0;
  double hi = 1.0;

  static BackgroundMesh structured(int cells, double lo = 0.0, double hi = 1.0);

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  bool on_boundary(int v) const; // on the boundary of D
  Eigen::Vector2d centroid(int t) const;
  double area(int t) const; // signed

  /// Orientation, area and edge-conformity checks; throws on the first failure.
  void validate() const;

  nlohmann::json to_json() const;
  static BackgroundMesh from_json(const nlohmann::json& j);
};

enum class DomainKind { square_shrink, square_expand, boundary_notch, l_shape, element_mask };

/// A perturbation of the unit square Omega_1 = [0, 1]^2, selected by kind and eps.
///   square_shrink   [eps, 1 - eps]^2
///   square_expand   [-eps, 1 + eps]^2
///   boundary_notch  Omega_1 minus the box |x - anchor|_inf < eps, anchor on the boundary of Omega_1
///   l_shape         Omega_1 minus [1 - eps, 1]^2
///   element_mask    the listed triangles
struct DomainSpec {
  DomainKind kind = DomainKind::square_shrink;
  double eps = 0.0;
  Eigen::Vector2d anchor{0.5, 0.0};
  std::vector<int> elements;

  static DomainSpec shrink(double eps) { return {DomainKind::square_shrink, eps, {0.5, 0.0}, {}}; }
  static DomainSpec expand(double eps) { return {DomainKind::square_expand, eps, {0.5, 0.0}, {}}; }
  static DomainSpec notch(double eps, Eigen::Vector2d anchor = {0.5, 0.0}) {
    return {DomainKind::boundary_notch, eps, anchor, {}};
  }
  static DomainSpec l_shape(double eps) { return {DomainKind::l_shape, eps, {1.0, 1.0}, {}}; }
  static DomainSpec mask(std::vector<int> elements) {
    return {DomainKind::element_mask, 0.0, {0.5, 0.0}, std::move(elements)};
  }

  /// Same family at another eps.
  DomainSpec with_eps(double e) const;

  nlohmann::json to_json() const;
  static DomainSpec from_json(const nlohmann::json& j);
};

std::string to_string(DomainKind kind);
DomainKind domain_kind_from_string(const std::string& s);

/// Triangles of the region, ascending. Rejects eps that is not a multiple of
/// h and boxes whose sides do not fall on mesh lines.
std::vector<int> region_elements(const BackgroundMesh& mesh, const DomainSpec& dom);

/// Sum of triangle areas.
double region_area(const BackgroundMesh& mesh, const std::vector<int>& elements);

/// Symmetric 2x2 coefficient field A(x) with declared ellipticity constant nu.
class CoefficientField {
public:
  static CoefficientField identity();
  static CoefficientField constant(const Eigen::Matrix2d& a, double nu);
  /// A = I on even checkerboard cells, nu I on odd ones; `cells` squares per side of [0, 1].
  static CoefficientField checker(double nu, int cells = 4);

  Eigen::Matrix2d operator()(const Eigen::Vector2d& x) const { return eval_(x); }
  double nu() const { return nu_; }
  const nlohmann::json& description() const { return desc_; }

  /// Throws unless A(x) is symmetric and nu |xi|^2 <= xi^T A xi <= |xi|^2 / nu
  /// on 16 probe directions (tolerance 1e-10).
  void check_at(const Eigen::Vector2d& x) const;

  static CoefficientField from_json(const nlohmann::json& j);

private:
  CoefficientField(std::function<Eigen::Matrix2d(const Eigen::Vector2d&)> eval, double nu, nlohmann::json desc);
  std::function<Eigen::Matrix2d(const Eigen::Vector2d&)> eval_;
  double nu_ = 1.0;
  nlohmann::json desc_;
};

/// The assembled space with its vertex <-> degree-of-freedom maps.
/// Degrees of freedom are the vertices not on the boundary of D.
struct FemSpace {
  SpacePtr space;
  std::vector<int> vertex_to_dof; // -1 on the boundary of D
  std::vector<int> dof_to_vertex;

  Eigen::Index num_dofs() const { return static_cast<Eigen::Index>(dof_to_vertex.size()); }
  /// Nodal values on all vertices (zero on the boundary of D).
  Eigen::VectorXd to_vertices(const Eigen::VectorXd& u) const;
  /// Interpolant of f at the degrees of freedom.
  Eigen::VectorXd interpolate(const BackgroundMesh& mesh, const std::function<double(const Eigen::Vector2d&)>& f) const;
};

/// Element matrices of the P1 triangle (p0, p1, p2) with constant coefficient a.
Eigen::Matrix3d local_stiffness(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1,
                                const Eigen::Vector2d& p2, const Eigen::Matrix2d& a);
Eigen::Matrix3d local_mass(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1, const Eigen::Vector2d& p2);

/// Stiffness (A sampled at centroids) and mass matrices on the degrees of freedom.
FemSpace assemble(const BackgroundMesh& mesh, const CoefficientField& coeff);

/// Nodal subspace of the vertices all of whose triangles lie in the region.
Subspace carve_subspace(const FemSpace& fem, const BackgroundMesh& mesh, const DomainSpec& dom);

/// Integral of |grad u|^2 over the listed triangles (coefficients ignored).
double gradient_energy(const FemSpace& fem, const BackgroundMesh& mesh, const std::vector<int>& region,
                       const Eigen::VectorXd& u);

/// Matrix of the form (u, v) -> integral of grad u . grad v over the listed triangles.
SparseMatrix region_gradient_form(const FemSpace& fem, const BackgroundMesh& mesh, const std::vector<int>& region);

/// Integral over the boundary of the region of |d_n phi|^2 times shift(x).
/// d_n phi at a boundary vertex is phi(vertex + h n) / h with n the inward
/// normal of the edge; each boundary edge uses the trapezoid rule and the
/// shift evaluated at its midpoint. phi must have unit L2 norm.
double hadamard_slope(const BackgroundMesh& mesh, const FemSpace& fem, const DomainSpec& region,
                      const Eigen::VectorXd& phi, const std::function<double(const Eigen::Vector2d&)>& shift);

} // namespace specpert
