#include "specpert/fem2d.hpp"

#include "specpert/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

namespace specpert {

namespace {

constexpr double kMinArea = 1e-14;
constexpr double kGridTol = 1e-9;
constexpr double kEllipticTol = 1e-10;

struct Box {
  double x0, x1, y0, y1;
  bool contains(const Eigen::Vector2d& p) const { return p.x() > x0 && p.x() < x1 && p.y() > y0 && p.y() < y1; }
};

bool on_grid(const BackgroundMesh& mesh, double c) {
  const double s = (c - mesh.lo) / mesh.h;
  return std::abs(s - std::round(s)) <= kGridTol;
}

void require_grid(const BackgroundMesh& mesh, double c, const char* what) {
  if (!on_grid(mesh, c)) {
    std::ostringstream os;
    os << what << " = " << c << " does not lie on a mesh line (h = " << mesh.h << ")";
    throw Error(os.str());
  }
}

void require_eps(const BackgroundMesh& mesh, double eps) {
  const double s = eps / mesh.h;
  if (eps < 0.0 || std::abs(s - std::round(s)) > kGridTol) {
    std::ostringstream os;
    os << "eps = " << eps << " is not a nonnegative multiple of h = " << mesh.h;
    throw Error(os.str());
  }
}

std::pair<int, int> grid_index(const BackgroundMesh& mesh, const Eigen::Vector2d& p) {
  return {static_cast<int>(std::lround((p.x() - mesh.lo) / mesh.h)),
          static_cast<int>(std::lround((p.y() - mesh.lo) / mesh.h))};
}

std::vector<std::vector<int>> incident_triangles(const BackgroundMesh& mesh) {
  std::vector<std::vector<int>> inc(mesh.vertices.size());
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int v : mesh.triangles[t]) inc[static_cast<size_t>(v)].push_back(t);
  return inc;
}

const char* kind_names[] = {"square_shrink", "square_expand", "boundary_notch", "l_shape", "element_mask"};

} // namespace

// ---------------------------------------------------------------------------

BackgroundMesh BackgroundMesh::structured(int cells, double lo, double hi) {
  if (cells < 1) throw Error("structured mesh needs at least one cell");
  if (!(hi > lo)) throw Error("structured mesh needs hi > lo");
  BackgroundMesh m;
  m.lo = lo;
  m.hi = hi;
  m.h = (hi - lo) / cells;
  const int n1 = cells + 1;
  m.vertices.reserve(static_cast<size_t>(n1) * n1);
  for (int j = 0; j <= cells; ++j)
    for (int i = 0; i <= cells; ++i)
      m.vertices.emplace_back(lo + (hi - lo) * i / cells, lo + (hi - lo) * j / cells);
  auto id = [n1](int i, int j) { return j * n1 + i; };
  for (int j = 0; j < cells; ++j)
    for (int i = 0; i < cells; ++i) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      if ((i + j) % 2 == 0) {
        m.triangles.push_back({a, b, c});
        m.triangles.push_back({a, c, d});
      } else {
        m.triangles.push_back({a, b, d});
        m.triangles.push_back({b, c, d});
      }
    }
  return m;
}

bool BackgroundMesh::on_boundary(int v) const {
  const Eigen::Vector2d& p = vertices[static_cast<size_t>(v)];
  const double tol = kGridTol * h;
  return std::abs(p.x() - lo) <= tol || std::abs(p.x() - hi) <= tol || std::abs(p.y() - lo) <= tol ||
         std::abs(p.y() - hi) <= tol;
}

Eigen::Vector2d BackgroundMesh::centroid(int t) const {
  const auto& tri = triangles[static_cast<size_t>(t)];
  return (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
}

double BackgroundMesh::area(int t) const {
  const auto& tri = triangles[static_cast<size_t>(t)];
  const Eigen::Vector2d e1 = vertices[tri[1]] - vertices[tri[0]];
  const Eigen::Vector2d e2 = vertices[tri[2]] - vertices[tri[0]];
  return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

void BackgroundMesh::validate() const {
  if (!(h > 0.0)) throw Error("mesh h must be positive");
  const int nv = num_vertices();
  std::map<std::pair<int, int>, int> edges; // directed edge -> owner
  for (int t = 0; t < num_triangles(); ++t) {
    const auto& tri = triangles[static_cast<size_t>(t)];
    for (int v : tri)
      if (v < 0 || v >= nv) throw Error("triangle " + std::to_string(t) + " references a missing vertex");
    if (!(area(t) > kMinArea)) {
      std::ostringstream os;
      os << "triangle " << t << " is degenerate or clockwise (signed area " << area(t) << ")";
      throw Error(os.str());
    }
    for (int k = 0; k < 3; ++k) {
      const std::pair<int, int> e{tri[k], tri[(k + 1) % 3]};
      if (!edges.emplace(e, t).second)
        throw Error("mesh is not conforming: edge traversed twice in the same direction (triangle " +
                    std::to_string(t) + ")");
    }
  }
}

nlohmann::json BackgroundMesh::to_json() const {
  nlohmann::json j;
  j["domain"] = {lo, hi};
  j["h"] = h;
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& p : vertices) vs.push_back({p.x(), p.y()});
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : triangles) ts.push_back({t[0], t[1], t[2]});
  j["vertices"] = std::move(vs);
  j["triangles"] = std::move(ts);
  return j;
}

BackgroundMesh BackgroundMesh::from_json(const nlohmann::json& j) {
  BackgroundMesh m;
  m.lo = j.at("domain").at(0).get<double>();
  m.hi = j.at("domain").at(1).get<double>();
  m.h = j.at("h").get<double>();
  for (const auto& p : j.at("vertices")) m.vertices.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  for (const auto& t : j.at("triangles")) m.triangles.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

std::string to_string(DomainKind kind) { return kind_names[static_cast<int>(kind)]; }

DomainKind domain_kind_from_string(const std::string& s) {
  for (int k = 0; k < 5; ++k)
    if (s == kind_names[k]) return static_cast<DomainKind>(k);
  throw Error("unknown domain kind '" + s + "'");
}

DomainSpec DomainSpec::with_eps(double e) const {
  DomainSpec d = *this;
  d.eps = e;
  return d;
}

nlohmann::json DomainSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  if (kind == DomainKind::element_mask) {
    j["elements"] = elements;
  } else {
    j["eps"] = eps;
    if (kind == DomainKind::boundary_notch) j["anchor"] = {anchor.x(), anchor.y()};
  }
  return j;
}

DomainSpec DomainSpec::from_json(const nlohmann::json& j) {
  DomainSpec d;
  d.kind = domain_kind_from_string(j.at("kind").get<std::string>());
  if (d.kind == DomainKind::element_mask) {
    d.elements = j.at("elements").get<std::vector<int>>();
    return d;
  }
  d.eps = j.value("eps", 0.0);
  if (d.kind == DomainKind::l_shape) d.anchor = {1.0, 1.0};
  if (j.contains("anchor")) d.anchor = {j["anchor"].at(0).get<double>(), j["anchor"].at(1).get<double>()};
  return d;
}

std::vector<int> region_elements(const BackgroundMesh& mesh, const DomainSpec& dom) {
  std::vector<int> out;
  if (dom.kind == DomainKind::element_mask) {
    out = dom.elements;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (!out.empty() && (out.front() < 0 || out.back() >= mesh.num_triangles()))
      throw Error("element_mask references a missing triangle");
    return out;
  }
  if (mesh.lo > kGridTol || mesh.hi < 1.0 - kGridTol) throw Error("D must contain the unit square");
  require_grid(mesh, 0.0, "unit square side");
  require_grid(mesh, 1.0, "unit square side");
  require_eps(mesh, dom.eps);
  const double e = dom.eps;
  const Box unit{0.0, 1.0, 0.0, 1.0};
  std::optional<Box> keep, cut;
  switch (dom.kind) {
  case DomainKind::square_shrink:
    if (2.0 * e >= 1.0) throw Error("square_shrink eps must be below 1/2");
    keep = Box{e, 1.0 - e, e, 1.0 - e};
    break;
  case DomainKind::square_expand:
    if (-e < mesh.lo - kGridTol || 1.0 + e > mesh.hi + kGridTol)
      throw Error("square_expand eps reaches outside D");
    keep = Box{-e, 1.0 + e, -e, 1.0 + e};
    break;
  case DomainKind::boundary_notch:
  case DomainKind::l_shape: {
    const Eigen::Vector2d a = dom.kind == DomainKind::l_shape ? Eigen::Vector2d(1.0, 1.0) : dom.anchor;
    const bool on_side = (std::abs(a.x()) <= kGridTol || std::abs(a.x() - 1.0) <= kGridTol ||
                          std::abs(a.y()) <= kGridTol || std::abs(a.y() - 1.0) <= kGridTol) &&
                         a.x() >= -kGridTol && a.x() <= 1.0 + kGridTol && a.y() >= -kGridTol &&
                         a.y() <= 1.0 + kGridTol;
    if (!on_side) throw Error("notch anchor must lie on the boundary of the unit square");
    require_grid(mesh, a.x() - e, "notch side");
    require_grid(mesh, a.x() + e, "notch side");
    require_grid(mesh, a.y() - e, "notch side");
    require_grid(mesh, a.y() + e, "notch side");
    keep = unit;
    if (e > 0.0) cut = Box{a.x() - e, a.x() + e, a.y() - e, a.y() + e};
    break;
  }
  case DomainKind::element_mask:
    break;
  }
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Eigen::Vector2d c = mesh.centroid(t);
    if (keep->contains(c) && !(cut && cut->contains(c))) out.push_back(t);
  }
  return out;
}

double region_area(const BackgroundMesh& mesh, const std::vector<int>& elements) {
  double a = 0.0;
  for (int t : elements) a += std::abs(mesh.area(t));
  return a;
}

// ---------------------------------------------------------------------------

CoefficientField::CoefficientField(std::function<Eigen::Matrix2d(const Eigen::Vector2d&)> eval, double nu,
                                   nlohmann::json desc)
    : eval_(std::move(eval)), nu_(nu), desc_(std::move(desc)) {
  if (!(nu > 0.0 && nu <= 1.0)) throw Error("ellipticity constant nu must lie in (0, 1]");
}

CoefficientField CoefficientField::identity() {
  return CoefficientField([](const Eigen::Vector2d&) { return Eigen::Matrix2d::Identity().eval(); }, 1.0,
                          {{"type", "identity"}});
}

CoefficientField CoefficientField::constant(const Eigen::Matrix2d& a, double nu) {
  nlohmann::json d = {{"type", "constant"}, {"nu", nu}, {"matrix", {{a(0, 0), a(0, 1)}, {a(1, 0), a(1, 1)}}}};
  CoefficientField f([a](const Eigen::Vector2d&) { return a; }, nu, std::move(d));
  f.check_at(Eigen::Vector2d::Zero());
  return f;
}

CoefficientField CoefficientField::checker(double nu, int cells) {
  if (cells < 1) throw Error("checker needs at least one cell per side");
  auto eval = [nu, cells](const Eigen::Vector2d& x) {
    const long i = static_cast<long>(std::floor(x.x() * cells));
    const long j = static_cast<long>(std::floor(x.y() * cells));
    return (((i + j) % 2 + 2) % 2 == 0 ? 1.0 : nu) * Eigen::Matrix2d::Identity();
  };
  return CoefficientField(eval, nu, {{"type", "checker"}, {"nu", nu}, {"cells", cells}});
}

void CoefficientField::check_at(const Eigen::Vector2d& x) const {
  const Eigen::Matrix2d a = eval_(x);
  std::ostringstream os;
  os << "coefficient at (" << x.x() << ", " << x.y() << ")";
  if (std::abs(a(0, 1) - a(1, 0)) > kEllipticTol * std::max(1.0, a.cwiseAbs().maxCoeff()))
    throw Error(os.str() + " is not symmetric");
  const double pi = std::acos(-1.0);
  for (int k = 0; k < 16; ++k) {
    const Eigen::Vector2d xi(std::cos(k * pi / 16), std::sin(k * pi / 16));
    const double q = xi.dot(a * xi);
    if (q < nu_ - kEllipticTol || q > 1.0 / nu_ + kEllipticTol) {
      os << " violates ellipticity with nu = " << nu_ << " (xi^T A xi = " << q << ")";
      throw Error(os.str());
    }
  }
}

CoefficientField CoefficientField::from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "identity") return identity();
  if (type == "constant") {
    Eigen::Matrix2d a;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) a(r, c) = j.at("matrix").at(r).at(c).get<double>();
    return constant(a, j.at("nu").get<double>());
  }
  if (type == "checker") return checker(j.at("nu").get<double>(), j.value("cells", 4));
  throw Error("unknown coefficient type '" + type + "'");
}

// ---------------------------------------------------------------------------

Eigen::VectorXd FemSpace::to_vertices(const Eigen::VectorXd& u) const {
  if (u.size() != num_dofs()) throw DimensionError("vector length differs from the number of dofs");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vertex_to_dof.size()));
  for (size_t d = 0; d < dof_to_vertex.size(); ++d) out(dof_to_vertex[d]) = u(static_cast<Eigen::Index>(d));
  return out;
}

Eigen::VectorXd FemSpace::interpolate(const BackgroundMesh& mesh,
                                      const std::function<double(const Eigen::Vector2d&)>& f) const {
  Eigen::VectorXd out(num_dofs());
  for (size_t d = 0; d < dof_to_vertex.size(); ++d)
    out(static_cast<Eigen::Index>(d)) = f(mesh.vertices[static_cast<size_t>(dof_to_vertex[d])]);
  return out;
}

Eigen::Matrix3d local_stiffness(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                                const Eigen::Matrix2d& a) {
  Eigen::Matrix2d b;
  b.col(0) = p1 - p0;
  b.col(1) = p2 - p0;
  const double area = 0.5 * std::abs(b.determinant());
  Eigen::Matrix<double, 2, 3> ref;
  ref << -1, 1, 0, -1, 0, 1;
  const Eigen::Matrix<double, 2, 3> g = b.inverse().transpose() * ref;
  return area * g.transpose() * a * g;
}

Eigen::Matrix3d local_mass(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1, const Eigen::Vector2d& p2) {
  const double area = 0.5 * std::abs((p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x());
  return area / 12.0 * (Eigen::Matrix3d::Ones() + Eigen::Matrix3d::Identity());
}

FemSpace assemble(const BackgroundMesh& mesh, const CoefficientField& coeff) {
  FemSpace fem;
  fem.vertex_to_dof.assign(mesh.vertices.size(), -1);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (!mesh.on_boundary(v)) {
      fem.vertex_to_dof[static_cast<size_t>(v)] = static_cast<int>(fem.dof_to_vertex.size());
      fem.dof_to_vertex.push_back(v);
    }
  const Eigen::Index n = fem.num_dofs();
  if (n == 0) throw Error("mesh has no interior vertices");
  std::vector<Eigen::Triplet<double>> tk, tm;
  tk.reserve(static_cast<size_t>(mesh.num_triangles()) * 9);
  tm.reserve(static_cast<size_t>(mesh.num_triangles()) * 9);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (!(mesh.area(t) > kMinArea)) {
      std::ostringstream os;
      os << "triangle " << t << " is degenerate (signed area " << mesh.area(t) << ")";
      throw Error(os.str());
    }
    const auto& tri = mesh.triangles[static_cast<size_t>(t)];
    const Eigen::Vector2d c = mesh.centroid(t);
    coeff.check_at(c);
    const auto& p = mesh.vertices;
    const Eigen::Matrix3d ke = local_stiffness(p[tri[0]], p[tri[1]], p[tri[2]], coeff(c));
    const Eigen::Matrix3d me = local_mass(p[tri[0]], p[tri[1]], p[tri[2]]);
    for (int r = 0; r < 3; ++r) {
      const int dr = fem.vertex_to_dof[tri[r]];
      if (dr < 0) continue;
      for (int s = 0; s < 3; ++s) {
        const int ds = fem.vertex_to_dof[tri[s]];
        if (ds < 0) continue;
        tk.emplace_back(dr, ds, ke(r, s));
        tm.emplace_back(dr, ds, me(r, s));
      }
    }
  }
  SparseMatrix k(n, n), m(n, n);
  k.setFromTriplets(tk.begin(), tk.end());
  m.setFromTriplets(tm.begin(), tm.end());
  fem.space = EnergySpace::make(std::move(k), std::move(m));
  return fem;
}

Subspace carve_subspace(const FemSpace& fem, const BackgroundMesh& mesh, const DomainSpec& dom) {
  const std::vector<int> elems = region_elements(mesh, dom);
  std::vector<char> in_region(static_cast<size_t>(mesh.num_triangles()), 0);
  for (int t : elems) in_region[static_cast<size_t>(t)] = 1;
  const auto inc = incident_triangles(mesh);
  std::vector<Eigen::Index> idx;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const int d = fem.vertex_to_dof[static_cast<size_t>(v)];
    if (d < 0 || inc[static_cast<size_t>(v)].empty()) continue;
    const bool inside = std::all_of(inc[static_cast<size_t>(v)].begin(), inc[static_cast<size_t>(v)].end(),
                                    [&](int t) { return in_region[static_cast<size_t>(t)] != 0; });
    if (inside) idx.push_back(d);
  }
  if (idx.empty()) throw DimensionError("domain " + dom.to_json().dump() + " has no interior vertices");
  return Subspace::nodal(fem.space, std::move(idx));
}

double gradient_energy(const FemSpace& fem, const BackgroundMesh& mesh, const std::vector<int>& region,
                       const Eigen::VectorXd& u) {
  const Eigen::VectorXd uv = fem.to_vertices(u);
  double e = 0.0;
  for (int t : region) {
    if (t < 0 || t >= mesh.num_triangles()) throw Error("unknown element id " + std::to_string(t));
    const auto& tri = mesh.triangles[static_cast<size_t>(t)];
    const auto& p = mesh.vertices;
    const Eigen::Matrix3d ke = local_stiffness(p[tri[0]], p[tri[1]], p[tri[2]], Eigen::Matrix2d::Identity());
    const Eigen::Vector3d ut(uv(tri[0]), uv(tri[1]), uv(tri[2]));
    e += ut.dot(ke * ut);
  }
  return e;
}

SparseMatrix region_gradient_form(const FemSpace& fem, const BackgroundMesh& mesh, const std::vector<int>& region) {
  std::vector<Eigen::Triplet<double>> tk;
  for (int t : region) {
    if (t < 0 || t >= mesh.num_triangles()) throw Error("unknown element id " + std::to_string(t));
    const auto& tri = mesh.triangles[static_cast<size_t>(t)];
    const auto& p = mesh.vertices;
    const Eigen::Matrix3d ke = local_stiffness(p[tri[0]], p[tri[1]], p[tri[2]], Eigen::Matrix2d::Identity());
    for (int r = 0; r < 3; ++r)
      for (int s = 0; s < 3; ++s) {
        const int dr = fem.vertex_to_dof[tri[r]], ds = fem.vertex_to_dof[tri[s]];
        if (dr >= 0 && ds >= 0) tk.emplace_back(dr, ds, ke(r, s));
      }
  }
  SparseMatrix k(fem.num_dofs(), fem.num_dofs());
  k.setFromTriplets(tk.begin(), tk.end());
  return k;
}

double hadamard_slope(const BackgroundMesh& mesh, const FemSpace& fem, const DomainSpec& region,
                      const Eigen::VectorXd& phi, const std::function<double(const Eigen::Vector2d&)>& shift) {
  const double l2 = fem.space->mass_norm(phi);
  if (std::abs(l2 - 1.0) > 1e-6) {
    std::ostringstream os;
    os << "hadamard_slope: eigenfunction must have unit L2 norm (got " << l2 << ")";
    throw Error(os.str());
  }
  const Eigen::VectorXd pv = fem.to_vertices(phi);
  std::map<std::pair<int, int>, int> at;
  for (int v = 0; v < mesh.num_vertices(); ++v) at.emplace(grid_index(mesh, mesh.vertices[static_cast<size_t>(v)]), v);

  const std::vector<int> elems = region_elements(mesh, region);
  std::vector<char> in_region(static_cast<size_t>(mesh.num_triangles()), 0);
  for (int t : elems) in_region[static_cast<size_t>(t)] = 1;
  // Undirected edge -> triangles in the region that own it.
  std::map<std::pair<int, int>, std::vector<int>> owners;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[static_cast<size_t>(t)];
    for (int k = 0; k < 3; ++k) {
      const auto e = std::minmax(tri[k], tri[(k + 1) % 3]);
      if (in_region[static_cast<size_t>(t)]) owners[e].push_back(t);
    }
  }
  auto value_at = [&](const Eigen::Vector2d& p) {
    const auto it = at.find(grid_index(mesh, p));
    if (it == at.end()) throw Error("hadamard_slope: no mesh vertex one layer inside the boundary");
    return pv(it->second);
  };
  double total = 0.0;
  for (const auto& [e, ts] : owners) {
    if (ts.size() != 1) continue; // interior edge of the region
    const Eigen::Vector2d a = mesh.vertices[static_cast<size_t>(e.first)];
    const Eigen::Vector2d b = mesh.vertices[static_cast<size_t>(e.second)];
    const Eigen::Vector2d t = b - a;
    const double len = t.norm();
    if (std::abs(t.x()) > kGridTol * len && std::abs(t.y()) > kGridTol * len)
      throw Error("hadamard_slope: boundary edges must be axis-aligned");
    Eigen::Vector2d n(-t.y() / len, t.x() / len);
    if (n.dot(mesh.centroid(ts.front()) - a) < 0.0) n = -n;
    const double ga = value_at(a + mesh.h * n) / mesh.h;
    const double gb = value_at(b + mesh.h * n) / mesh.h;
    total += shift(0.5 * (a + b)) * 0.5 * len * (ga * ga + gb * gb);
  }
  return total;
}

} // namespace specpert
