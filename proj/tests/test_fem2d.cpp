#include "specpert/error.hpp"
#include "specpert/fem2d.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "oracles.hpp"

using namespace specpert;

namespace {

const double pi = std::numbers::pi;
const double pi2 = pi * pi;

double phi1(const Eigen::Vector2d& x) { return 2 * std::sin(pi * x.x()) * std::sin(pi * x.y()); }

} // namespace

TEST_CASE("local matrices on the reference triangle") {
  const Eigen::Vector2d p0(0, 0), p1(1, 0), p2(0, 1);
  Eigen::Matrix3d k;
  k << 2, -1, -1, -1, 1, 0, -1, 0, 1;
  CHECK((local_stiffness(p0, p1, p2, Eigen::Matrix2d::Identity()) - 0.5 * k).norm() < 1e-14);
  Eigen::Matrix3d m;
  m << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  CHECK((local_mass(p0, p1, p2) - m / 24).norm() < 1e-14);
  CHECK((local_stiffness(p0, p1, p2, 0.3 * Eigen::Matrix2d::Identity()) - 0.15 * k).norm() < 1e-14);
  // rows of the stiffness matrix annihilate constants
  CHECK(local_stiffness(p0, p1, p2, Eigen::Matrix2d{{2, 0.5}, {0.5, 1}}).rowwise().sum().norm() < 1e-14);
}

TEST_CASE("structured mesh: counts, orientation, symmetry, json") {
  const BackgroundMesh mesh = BackgroundMesh::structured(8);
  CHECK(mesh.num_vertices() == 81);
  CHECK(mesh.num_triangles() == 128);
  CHECK(mesh.h == Approx(0.125));
  mesh.validate();
  double area = 0;
  for (int t = 0; t < mesh.num_triangles(); ++t) area += mesh.area(t);
  CHECK(area == Approx(1.0));
  // Reflection x -> 1 - x maps the triangle set to itself.
  std::set<std::array<long, 6>> tris, mirrored;
  auto key = [](std::array<Eigen::Vector2d, 3> p) {
    std::sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y(); });
    std::array<long, 6> k{};
    for (int i = 0; i < 3; ++i) {
      k[2 * i] = std::lround(p[i].x() * 64);
      k[2 * i + 1] = std::lround(p[i].y() * 64);
    }
    return k;
  };
  for (const auto& t : mesh.triangles) {
    std::array<Eigen::Vector2d, 3> p{mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]};
    tris.insert(key(p));
    for (auto& q : p) q.x() = 1 - q.x();
    mirrored.insert(key(p));
  }
  CHECK(tris == mirrored);

  const BackgroundMesh back = BackgroundMesh::from_json(mesh.to_json());
  CHECK(back.num_triangles() == mesh.num_triangles());
  CHECK(back.h == mesh.h);

  BackgroundMesh bad = mesh;
  std::swap(bad.triangles[3][1], bad.triangles[3][2]);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("coefficient fields") {
  const CoefficientField c = CoefficientField::checker(0.25, 4);
  CHECK(c({0.1, 0.1})(0, 0) == Approx(1.0));
  CHECK(c({0.3, 0.1})(0, 0) == Approx(0.25));
  c.check_at({0.3, 0.1});
  CHECK_THROWS_AS(CoefficientField::checker(1.5), Error);
  CHECK_THROWS_AS(CoefficientField::checker(0.0), Error);
  CHECK_THROWS_AS(CoefficientField::constant(Eigen::Matrix2d{{1, 0}, {0, 5}}, 0.5), Error);
  const CoefficientField j = CoefficientField::from_json({{"type", "constant"}, {"matrix", {{2, 0.5}, {0.5, 1}}}, {"nu", 0.4}});
  CHECK(j({0.5, 0.5})(0, 1) == Approx(0.5));
  CHECK_THROWS_AS(CoefficientField::from_json({{"type", "wavy"}}), Error);
}

TEST_CASE("carving subspaces") {
  const int n = 16;
  const double h = 1.0 / n;
  const BackgroundMesh mesh = BackgroundMesh::structured(n);
  const FemSpace fem = assemble(mesh, CoefficientField::identity());
  CHECK(fem.num_dofs() == (n - 1) * (n - 1));
  CHECK(carve_subspace(fem, mesh, DomainSpec::shrink(0.0)).dim() == fem.num_dofs());
  const Subspace one = carve_subspace(fem, mesh, DomainSpec::shrink(h));
  CHECK(one.dim() == (n - 3) * (n - 3));
  for (Eigen::Index i : one.indices()) {
    const Eigen::Vector2d p = mesh.vertices[fem.dof_to_vertex[i]];
    CHECK(std::min({p.x(), p.y(), 1 - p.x(), 1 - p.y()}) > 1.5 * h);
  }
  const Subspace two = carve_subspace(fem, mesh, DomainSpec::shrink(2 * h));
  CHECK(std::includes(one.indices().begin(), one.indices().end(), two.indices().begin(), two.indices().end()));
  const Subspace notch = carve_subspace(fem, mesh, DomainSpec::notch(2 * h));
  CHECK(notch.dim() == fem.num_dofs() - 5 * 2); // x in {6..10}/16, y in {1,2}/16
  CHECK(carve_subspace(fem, mesh, DomainSpec::l_shape(4 * h)).dim() == fem.num_dofs() - 16);
  CHECK_THROWS_AS(region_elements(mesh, DomainSpec::shrink(0.3 * h)), Error);
  CHECK_THROWS_AS(region_elements(mesh, DomainSpec::notch(h, {0.3, 0.3})), Error);
  CHECK_THROWS_AS(region_elements(mesh, DomainSpec::expand(h)), Error); // leaves D

  const BackgroundMesh big = BackgroundMesh::structured(n + 4, -2 * h, 1 + 2 * h);
  const FemSpace bf = assemble(big, CoefficientField::identity());
  const Subspace unit = carve_subspace(bf, big, DomainSpec::shrink(0.0));
  const Subspace grown = carve_subspace(bf, big, DomainSpec::expand(h));
  CHECK(unit.dim() == (n - 1) * (n - 1));
  CHECK(grown.dim() == (n + 1) * (n + 1));
  CHECK(region_area(big, region_elements(big, DomainSpec::expand(h))) == Approx((1 + 2 * h) * (1 + 2 * h)));
}

TEST_CASE("domain specs round-trip through json") {
  for (const DomainSpec& d : {DomainSpec::shrink(0.25), DomainSpec::notch(0.125, {0.0, 0.5}), DomainSpec::l_shape(0.5),
                              DomainSpec::mask({1, 2, 3})}) {
    const DomainSpec back = DomainSpec::from_json(d.to_json());
    CHECK(back.kind == d.kind);
    CHECK(back.eps == d.eps);
    CHECK(back.anchor == d.anchor);
    CHECK(back.elements == d.elements);
  }
  CHECK_THROWS_AS(domain_kind_from_string("circle"), Error);
}

TEST_CASE("gradient energy") {
  const BackgroundMesh mesh = BackgroundMesh::structured(8);
  const FemSpace fem = assemble(mesh, CoefficientField::identity());
  std::vector<int> all(static_cast<size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) all[static_cast<size_t>(t)] = t;
  const Eigen::VectorXd u = fem.interpolate(mesh, phi1);
  CHECK(gradient_energy(fem, mesh, all, Eigen::VectorXd::Zero(fem.num_dofs())) == 0.0);
  CHECK(gradient_energy(fem, mesh, all, u) == Approx(u.dot(fem.space->energy() * u)).epsilon(1e-12));
  CHECK_THROWS_AS(gradient_energy(fem, mesh, {100000}, u), Error);
}

TEST_CASE("gradient energy of the first eigenfunction over a collar of width 0.1") {
  const BackgroundMesh mesh = BackgroundMesh::structured(80);
  const FemSpace fem = assemble(mesh, CoefficientField::identity());
  const auto unit = region_elements(mesh, DomainSpec::shrink(0.0));
  const auto inner = region_elements(mesh, DomainSpec::shrink(0.1));
  std::vector<int> collar;
  std::set_difference(unit.begin(), unit.end(), inner.begin(), inner.end(), std::back_inserter(collar));
  // |grad phi|^2 = 4 pi^2 (cos^2 pi x sin^2 pi y + sin^2 pi x cos^2 pi y); integrate over [0.1, 0.9]^2.
  const double a = 0.1, b = 0.9;
  const double s = (std::sin(2 * pi * b) - std::sin(2 * pi * a)) / (4 * pi);
  const double cos2 = (b - a) / 2 + s, sin2 = (b - a) / 2 - s;
  const double exact = 2 * pi2 - 8 * pi2 * cos2 * sin2;
  const double fe = gradient_energy(fem, mesh, collar, fem.interpolate(mesh, phi1));
  CHECK(fe == Approx(exact).epsilon(0.01));
  const SparseMatrix q = region_gradient_form(fem, mesh, collar);
  const Eigen::VectorXd u = fem.interpolate(mesh, phi1);
  CHECK(u.dot(q * u) == Approx(fe).epsilon(1e-12));
}

TEST_CASE("spectrum of the unit square") {
  const BackgroundMesh mesh = BackgroundMesh::structured(64);
  const FemSpace fem = assemble(mesh, CoefficientField::identity());
  const EigenDecomposition e = solve_operator_eigs(carve_subspace(fem, mesh, DomainSpec::shrink(0.0)), 10.0 / (64 * 64), 3);
  CHECK(e.group(1).value == Approx(2 * pi2).epsilon(0.01));
  CHECK(e.group(1).value > 2 * pi2);
  CHECK(e.group(1).multiplicity() == 1);
  CHECK(e.group(2).value == Approx(5 * pi2).epsilon(0.01));
  CHECK(e.group(2).multiplicity() == 2);
  CHECK(e.group(3).value == Approx(8 * pi2).epsilon(0.02));
}

TEST_CASE("embedding constant of the square") {
  const BackgroundMesh mesh = BackgroundMesh::structured(32);
  const FemSpace fem = assemble(mesh, CoefficientField::identity());
  const double c0 = embedding_constant(*fem.space);
  CHECK(c0 * c0 == Approx(1 / (2 * pi2)).epsilon(0.01));
}

TEST_CASE("coefficients scale the energy") {
  const BackgroundMesh mesh = BackgroundMesh::structured(8);
  const FemSpace a = assemble(mesh, CoefficientField::identity());
  const FemSpace b = assemble(mesh, CoefficientField::constant(0.5 * Eigen::Matrix2d::Identity(), 0.5));
  CHECK((Eigen::MatrixXd(b.space->energy()) - 0.5 * Eigen::MatrixXd(a.space->energy())).norm() < 1e-12);
  CHECK((Eigen::MatrixXd(b.space->mass()) - Eigen::MatrixXd(a.space->mass())).norm() < 1e-14);
}

TEST_CASE("boundary shift integral") {
  const BackgroundMesh mesh = BackgroundMesh::structured(64);
  const FemSpace fem = assemble(mesh, CoefficientField::identity());
  const EigenDecomposition e = solve_operator_eigs(carve_subspace(fem, mesh, DomainSpec::shrink(0.0)), 1e-3, 1);
  Eigen::VectorXd phi = e.group(1).basis.col(0);
  phi /= fem.space->mass_norm(phi);
  const DomainSpec unit = DomainSpec::shrink(0.0);
  CHECK(hadamard_slope(mesh, fem, unit, phi, [](const Eigen::Vector2d&) { return 0.0; }) == 0.0);
  const double one = hadamard_slope(mesh, fem, unit, phi, [](const Eigen::Vector2d&) { return 1.0; });
  CHECK(one == Approx(8 * pi2).epsilon(0.05));
  CHECK(hadamard_slope(mesh, fem, unit, phi, [](const Eigen::Vector2d&) { return 2.5; }) == Approx(2.5 * one));
  CHECK_THROWS_AS(hadamard_slope(mesh, fem, unit, 2 * phi, [](const Eigen::Vector2d&) { return 1.0; }), Error);
}
