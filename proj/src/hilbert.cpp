#include "specpert/hilbert.hpp"

#include "specpert/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

namespace specpert {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kRankTol = 1e-10;
constexpr double kOrthoTol = 1e-10;
constexpr double kSharedCos = 1.0 - 1e-10;
constexpr double kAmbiguousCos = 1.0 - 1e-6;
constexpr Eigen::Index kDenseSpectrumLimit = 2000;
constexpr Eigen::Index kDenseEmbeddingLimit = 400;

double sparse_max_abs(const SparseMatrix& m) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < m.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(m, j); it; ++it) s = std::max(s, std::abs(it.value()));
  return s;
}

SparseMatrix checked_gram(SparseMatrix m, const char* name) {
  if (m.rows() != m.cols()) throw DimensionError(std::string(name) + " is not square");
  if (m.rows() == 0) throw DimensionError(std::string(name) + " is empty");
  const SparseMatrix mt = m.transpose();
  const double scale = sparse_max_abs(m);
  const double asym = sparse_max_abs(m - mt);
  if (scale == 0.0 || asym > kSymmetryTol * scale) {
    std::ostringstream os;
    os << name << " is not symmetric (relative asymmetry " << (scale > 0 ? asym / scale : 0.0) << ")";
    throw Error(os.str());
  }
  m = 0.5 * (m + mt);
  m.prune(0.0);
  Eigen::SimplicialLLT<SparseMatrix> llt(m);
  if (llt.info() != Eigen::Success) {
    double smin = std::numeric_limits<double>::quiet_NaN();
    if (m.rows() <= kDenseSpectrumLimit) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(m), Eigen::EigenvaluesOnly);
      smin = es.eigenvalues()(0);
    }
    std::ostringstream os;
    os << name << " is not positive definite (smallest eigenvalue " << smin << ")";
    throw NotPositiveDefinite(os.str(), smin);
  }
  return m;
}

SparseMatrix selection(Eigen::Index n, const std::vector<Eigen::Index>& idx) {
  SparseMatrix p(n, static_cast<Eigen::Index>(idx.size()));
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) t.emplace_back(idx[k], static_cast<Eigen::Index>(k), 1.0);
  p.setFromTriplets(t.begin(), t.end());
  return p;
}

SparseMatrix principal_block(const SparseMatrix& m, const std::vector<Eigen::Index>& idx) {
  const SparseMatrix p = selection(m.rows(), idx);
  return SparseMatrix(p.transpose() * m * p);
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& u, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), u.cols());
  for (size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = u.row(idx[k]);
  return out;
}

Eigen::MatrixXd scatter(Eigen::Index n, const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, x.cols());
  for (size_t k = 0; k < idx.size(); ++k) out.row(idx[k]) = x.row(static_cast<Eigen::Index>(k));
  return out;
}

std::vector<Eigen::Index> sorted_union(const std::vector<Eigen::Index>& a, const std::vector<Eigen::Index>& b) {
  std::vector<Eigen::Index> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<Eigen::Index> sorted_intersection(const std::vector<Eigen::Index>& a,
                                              const std::vector<Eigen::Index>& b) {
  std::vector<Eigen::Index> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Energy-orthonormal basis of span(a); columns with relative Gram eigenvalue
// below `drop` are discarded, or rejected when `drop` is negative.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& a, const SparseMatrix& k, double drop) {
  Eigen::MatrixXd g = a.transpose() * (k * a);
  g = 0.5 * (g + g.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  const Eigen::VectorXd& w = es.eigenvalues();
  const double wmax = w.size() ? w.maxCoeff() : 0.0;
  if (drop < 0.0) {
    if (wmax <= 0.0 || w.minCoeff() <= 0.0 || std::sqrt(w.minCoeff() / wmax) < kRankTol) {
      std::ostringstream os;
      os << "basis is not of full column rank (energy condition "
         << (wmax > 0.0 && w.minCoeff() > 0.0 ? std::sqrt(w.minCoeff() / wmax) : 0.0) << ")";
      throw DimensionError(os.str());
    }
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (drop < 0.0 || w(i) > drop * wmax) keep.push_back(i);
  Eigen::MatrixXd q(a.rows(), static_cast<Eigen::Index>(keep.size()));
  for (size_t c = 0; c < keep.size(); ++c)
    q.col(static_cast<Eigen::Index>(c)) = a * es.eigenvectors().col(keep[c]) / std::sqrt(w(keep[c]));
  // One pass of reorthogonalization.
  Eigen::MatrixXd g2 = q.transpose() * (k * q);
  if ((g2 - Eigen::MatrixXd::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff() > kOrthoTol) {
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (g2 + g2.transpose()));
    q = llt.matrixU().solve<Eigen::OnTheRight>(q);
  }
  return q;
}

// Projection onto a nodal index set through a Cholesky factor of K_II.
struct NodalProjector {
  std::vector<Eigen::Index> idx;
  Eigen::SimplicialLLT<SparseMatrix> chol;

  NodalProjector(const SparseMatrix& k, std::vector<Eigen::Index> indices) : idx(std::move(indices)) {
    if (!idx.empty()) chol.compute(principal_block(k, idx));
  }
  // (w, v) = f^T v for v supported on idx.
  Eigen::MatrixXd riesz(const Eigen::MatrixXd& f) const {
    if (idx.empty()) return Eigen::MatrixXd::Zero(f.rows(), f.cols());
    return scatter(f.rows(), chol.solve(gather(f, idx)), idx);
  }
};

} // namespace

// ---------------------------------------------------------------------------

EnergySpace::EnergySpace(SparseMatrix energy, SparseMatrix mass)
    : energy_(checked_gram(std::move(energy), "energy_gram")),
      mass_(checked_gram(std::move(mass), "mass_gram")) {
  if (energy_.rows() != mass_.rows()) throw DimensionError("energy_gram and mass_gram differ in size");
}

SpacePtr EnergySpace::make(SparseMatrix energy, SparseMatrix mass) {
  return std::make_shared<const EnergySpace>(std::move(energy), std::move(mass));
}

SpacePtr EnergySpace::make(const Eigen::MatrixXd& energy, const Eigen::MatrixXd& mass) {
  return make(SparseMatrix(energy.sparseView()), SparseMatrix(mass.sparseView()));
}

double EnergySpace::energy_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
  return u.dot(energy_ * v);
}
double EnergySpace::mass_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
  return u.dot(mass_ * v);
}
double EnergySpace::energy_norm(const Eigen::VectorXd& u) const {
  return std::sqrt(std::max(0.0, energy_inner(u, u)));
}
double EnergySpace::mass_norm(const Eigen::VectorXd& u) const {
  return std::sqrt(std::max(0.0, mass_inner(u, u)));
}

// ---------------------------------------------------------------------------

struct Subspace::Cache {
  std::optional<NodalProjector> nodal;
  Eigen::MatrixXd basis;
  std::once_flag basis_once;
};

Subspace Subspace::nodal(SpacePtr parent, std::vector<Eigen::Index> indices) {
  if (!parent) throw Error("subspace without parent space");
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  if (indices.empty()) throw DimensionError("nodal subspace with empty index set");
  if (indices.front() < 0 || indices.back() >= parent->dim())
    throw DimensionError("nodal index out of range");
  Subspace s;
  s.parent_ = std::move(parent);
  s.dim_ = static_cast<Eigen::Index>(indices.size());
  s.nodal_ = true;
  s.cache_ = std::make_shared<Cache>();
  s.cache_->nodal.emplace(s.parent_->energy(), indices);
  s.indices_ = std::move(indices);
  return s;
}

Subspace Subspace::general(SpacePtr parent, const Eigen::MatrixXd& spanning) {
  if (!parent) throw Error("subspace without parent space");
  if (spanning.rows() != parent->dim()) throw DimensionError("basis rows differ from the space dimension");
  if (spanning.cols() == 0) throw DimensionError("subspace basis has no columns");
  Subspace s;
  s.parent_ = std::move(parent);
  s.cache_ = std::make_shared<Cache>();
  s.cache_->basis = orthonormalize(spanning, s.parent_->energy(), -1.0);
  std::call_once(s.cache_->basis_once, [] {});
  s.dim_ = s.cache_->basis.cols();
  return s;
}

Subspace Subspace::whole(SpacePtr parent) {
  std::vector<Eigen::Index> all(static_cast<size_t>(parent->dim()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  return nodal(std::move(parent), std::move(all));
}

Eigen::MatrixXd Subspace::riesz(const Eigen::MatrixXd& f) const {
  if (f.rows() != parent_->dim()) throw DimensionError("vector length differs from the space dimension");
  if (nodal_) return cache_->nodal->riesz(f);
  const Eigen::MatrixXd& q = cache_->basis;
  return q * (q.transpose() * f);
}

Eigen::MatrixXd Subspace::project(const Eigen::MatrixXd& u) const {
  if (u.rows() != parent_->dim()) throw DimensionError("vector length differs from the space dimension");
  return riesz(parent_->energy() * u);
}

Eigen::MatrixXd Subspace::solve_mass(const Eigen::MatrixXd& w) const {
  if (w.rows() != parent_->dim()) throw DimensionError("vector length differs from the space dimension");
  return riesz(parent_->mass() * w);
}

const Eigen::MatrixXd& Subspace::basis() const {
  std::call_once(cache_->basis_once, [this] {
    // K_II = L L^T, so the columns of L^{-T} are energy-orthonormal.
    const Eigen::MatrixXd kii(principal_block(parent_->energy(), indices_));
    Eigen::LLT<Eigen::MatrixXd> llt(kii);
    Eigen::MatrixXd linv_t = llt.matrixU().solve(Eigen::MatrixXd::Identity(dim_, dim_));
    cache_->basis = scatter(parent_->dim(), linv_t, indices_);
  });
  return cache_->basis;
}

bool Subspace::contains(const Eigen::VectorXd& u, double tol) const {
  const double nu = parent_->energy_norm(u);
  if (nu == 0.0) return true;
  const Eigen::VectorXd r = u - project(u).col(0);
  return parent_->energy_norm(r) <= tol * nu;
}

// ---------------------------------------------------------------------------

Subspace subspace_sum(const Subspace& h1, const Subspace& h2) {
  if (!h1.same_parent(h2)) throw DimensionError("subspaces belong to different spaces");
  if (h1.is_nodal() && h2.is_nodal())
    return Subspace::nodal(h1.parent_ptr(), sorted_union(h1.indices(), h2.indices()));
  Eigen::MatrixXd stacked(h1.parent().dim(), h1.dim() + h2.dim());
  stacked << h1.basis(), h2.basis();
  return Subspace::general(h1.parent_ptr(), orthonormalize(stacked, h1.parent().energy(), 1e-12));
}

std::optional<Subspace> subspace_intersection(const Subspace& h1, const Subspace& h2) {
  if (!h1.same_parent(h2)) throw DimensionError("subspaces belong to different spaces");
  if (h1.is_nodal() && h2.is_nodal()) {
    auto common = sorted_intersection(h1.indices(), h2.indices());
    if (common.empty()) return std::nullopt;
    return Subspace::nodal(h1.parent_ptr(), std::move(common));
  }
  const Eigen::MatrixXd& q1 = h1.basis();
  const Eigen::MatrixXd& q2 = h2.basis();
  const Eigen::MatrixXd c = q1.transpose() * (h1.parent().energy() * q2);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinU);
  const Eigen::VectorXd& cosines = svd.singularValues();
  Eigen::Index shared = 0;
  for (Eigen::Index i = 0; i < cosines.size(); ++i) {
    if (cosines(i) >= kSharedCos) {
      ++shared;
    } else if (cosines(i) >= kAmbiguousCos) {
      std::ostringstream os;
      os.precision(17);
      os << "intersection is ill-conditioned: principal-angle cosines [";
      for (Eigen::Index j = 0; j < cosines.size(); ++j) os << (j ? ", " : "") << cosines(j);
      os << "]";
      throw Error(os.str());
    }
  }
  if (shared == 0) return std::nullopt;
  return Subspace::general(h1.parent_ptr(), q1 * svd.matrixU().leftCols(shared));
}

// ---------------------------------------------------------------------------

const EigenGroup& EigenDecomposition::group(int m) const {
  if (m < 1 || m > static_cast<int>(groups.size()))
    throw Error("eigenvalue group " + std::to_string(m) + " not available (have " +
                std::to_string(groups.size()) + ")");
  return groups[static_cast<size_t>(m - 1)];
}

double EigenDecomposition::lambda_sum_root(int m) const {
  double s = 0.0;
  for (int k = 1; k <= m; ++k) s += group(k).value;
  return std::sqrt(s);
}

double largest_symmetric_value(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double embedding_constant(const EnergySpace& space) {
  if (space.dim() <= kDenseEmbeddingLimit)
    return std::sqrt(largest_pencil_value(
        SymmetricPencil(Eigen::MatrixXd(space.mass()), Eigen::MatrixXd(space.energy()))));
  const PencilSolution s = solve_sparse_pencil_lowest(space.energy(), space.mass(), 1);
  return 1.0 / std::sqrt(s.values(0));
}

Eigen::VectorXd project(const Subspace& sub, const Eigen::VectorXd& u) { return sub.project(u).col(0); }

namespace {

// Largest value of the quadratic form |D u|^2 / ||u||^2 over u supported on
// the index set `u_idx`, where D maps that coordinate space into itself and
// commutes with the energy adjoint (S1 - S2, or I - S0).
double largest_on_nodal_set(const EnergySpace& space, const std::vector<Eigen::Index>& u_idx,
                            const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& d) {
  const SparseMatrix kuu = principal_block(space.energy(), u_idx);
  Eigen::SimplicialLLT<SparseMatrix> chol(kuu);
  if (chol.info() != Eigen::Success) throw Error("energy block is not positive definite");
  const Eigen::Index n = space.dim();
  auto apply = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const Eigen::MatrixXd dx = d(scatter(n, x, u_idx));
    const Eigen::VectorXd y = chol.solve(gather(space.mass() * dx, u_idx).col(0));
    return gather(d(scatter(n, y, u_idx)), u_idx).col(0);
  };
  return std::max(0.0, largest_operator_value(apply, kuu));
}

} // namespace

double sigma_distance(const Subspace& h1, const Subspace& h2) {
  if (!h1.same_parent(h2)) throw DimensionError("subspaces belong to different spaces");
  const EnergySpace& space = h1.parent();
  if (h1.is_nodal() && h2.is_nodal()) {
    if (h1.indices() == h2.indices()) return 0.0;
    const auto u_idx = sorted_union(h1.indices(), h2.indices());
    return largest_on_nodal_set(space, u_idx,
                                [&](const Eigen::MatrixXd& x) -> Eigen::MatrixXd { return h1.project(x) - h2.project(x); });
  }
  // General subspaces: the difference of projectors on the whole space.
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(space.dim(), space.dim());
  const Eigen::MatrixXd d = h1.project(id) - h2.project(id);
  const Eigen::MatrixXd a = d.transpose() * (space.mass() * d);
  return std::max(0.0, largest_pencil_value(SymmetricPencil(a, Eigen::MatrixXd(space.energy()))));
}

double sigma_star(const Subspace& h1, const Subspace& h2) {
  if (!h1.same_parent(h2)) throw DimensionError("subspaces belong to different spaces");
  const EnergySpace& space = h1.parent();
  const std::optional<Subspace> common = subspace_intersection(h1, h2);
  if (h1.is_nodal() && h2.is_nodal()) {
    const auto u_idx = sorted_union(h1.indices(), h2.indices());
    if (common && common->dim() == static_cast<Eigen::Index>(u_idx.size())) return 0.0;
    return largest_on_nodal_set(space, u_idx, [&](const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
      return common ? Eigen::MatrixXd(x - common->project(x)) : x;
    });
  }
  const Subspace sum = subspace_sum(h1, h2);
  if (common && common->dim() == sum.dim()) return 0.0;
  const Eigen::MatrixXd& w = sum.basis();
  const Eigen::MatrixXd e = common ? Eigen::MatrixXd(w - common->project(w)) : w;
  return std::max(0.0, largest_symmetric_value(e.transpose() * (space.mass() * e)));
}

EigenDecomposition solve_operator_eigs(const Subspace& sub, double group_tol, int n_groups) {
  if (!(group_tol > 0.0)) throw Error("group_tol must be positive");
  const EnergySpace& space = sub.parent();
  const Eigen::Index d = sub.dim();

  // Mass-normalized eigenvectors in full coordinates, ascending.
  auto solve = [&](Eigen::Index count) -> PencilSolution {
    if (sub.is_nodal()) {
      const SparseMatrix kii = principal_block(space.energy(), sub.indices());
      const SparseMatrix mii = principal_block(space.mass(), sub.indices());
      PencilSolution s = count >= d ? solve_pencil(SymmetricPencil(Eigen::MatrixXd(kii), Eigen::MatrixXd(mii)))
                                    : solve_sparse_pencil_lowest(kii, mii, count);
      s.vectors = scatter(space.dim(), s.vectors, sub.indices());
      return s;
    }
    const Eigen::MatrixXd& q = sub.basis();
    const Eigen::MatrixXd mq = q.transpose() * (space.mass() * q);
    PencilSolution s = solve_pencil(SymmetricPencil(Eigen::MatrixXd::Identity(d, d), mq));
    s.vectors = q * s.vectors;
    return s;
  };

  auto group = [&](const PencilSolution& s) {
    std::vector<std::vector<Eigen::Index>> members;
    for (Eigen::Index i = 0; i < s.values.size(); ++i) {
      if (i > 0 && s.values(i) - s.values(i - 1) <= group_tol * std::abs(s.values(i)))
        members.back().push_back(i);
      else
        members.push_back({i});
    }
    return members;
  };

  Eigen::Index count = n_groups > 0 ? std::min<Eigen::Index>(d, 3 * n_groups + 4) : d;
  for (;;) {
    const PencilSolution s = solve(count);
    auto members = group(s);
    const bool complete = count >= d;
    if (!complete) members.pop_back(); // the last group may be cut off
    if (complete || n_groups <= 0 || static_cast<int>(members.size()) >= n_groups) {
      EigenDecomposition out;
      out.group_tol = group_tol;
      out.raw_values = s.values;
      const size_t keep = n_groups > 0 ? std::min(members.size(), static_cast<size_t>(n_groups)) : members.size();
      for (size_t g = 0; g < keep; ++g) {
        EigenGroup eg;
        eg.basis.resize(space.dim(), static_cast<Eigen::Index>(members[g].size()));
        double sum = 0.0;
        for (size_t c = 0; c < members[g].size(); ++c) {
          const Eigen::Index i = members[g][c];
          sum += s.values(i);
          eg.basis.col(static_cast<Eigen::Index>(c)) = s.vectors.col(i) / std::sqrt(s.values(i));
        }
        eg.value = sum / static_cast<double>(members[g].size());
        out.groups.push_back(std::move(eg));
      }
      return out;
    }
    count = std::min(d, 2 * count);
  }
}

Eigen::MatrixXd apply_T2(const Subspace& h2, const Eigen::MatrixXd& phi) { return phi - h2.project(phi); }

Eigen::MatrixXd correctors(const Subspace& h2, const Eigen::MatrixXd& phis, double lambda) {
  const EnergySpace& space = h2.parent();
  return h2.riesz(space.energy() * phis - lambda * (space.mass() * phis));
}

Corrector solve_corrector(const Subspace& h2, const Eigen::VectorXd& phi, double lambda) {
  Corrector c;
  c.source = phi;
  c.value = correctors(h2, phi, lambda).col(0);
  c.residual_norm = h2.parent().energy_norm(c.value - project(h2, c.value));
  return c;
}

Eigen::VectorXd apply_B(const Subspace& h1, const Subspace& h2, const Eigen::VectorXd& v) {
  if (!h1.same_parent(h2)) throw DimensionError("subspaces belong to different spaces");
  if (!h1.contains(v, 1e-8)) throw Error("apply_B: v does not lie in H1");
  const Eigen::MatrixXd s2v = h2.project(v);
  return (h2.solve_mass(s2v) - h2.project(h1.solve_mass(v))).col(0);
}

double compute_rho(const Subspace& h1, const Subspace& h2, const Eigen::MatrixXd& x, double lambda,
                   double sigma) {
  if (!h1.same_parent(h2)) throw DimensionError("subspaces belong to different spaces");
  if (x.cols() == 0) return 0.0;
  const EnergySpace& space = h2.parent();
  const Eigen::MatrixXd psi = correctors(h2, x, lambda);
  const Eigen::MatrixXd t = apply_T2(h2, x);
  const Eigen::MatrixXd r = sigma * psi.transpose() * (space.energy() * psi) +
                            t.transpose() * (space.mass() * t) + psi.transpose() * (space.mass() * psi);
  return std::max(0.0, largest_symmetric_value(r));
}

double compute_rho0(const Subspace& h1, const Subspace& h2, const Eigen::MatrixXd& x, double lambda) {
  if (!h1.same_parent(h2)) throw DimensionError("subspaces belong to different spaces");
  if (x.cols() == 0) return 0.0;
  const EnergySpace& space = h2.parent();
  const std::optional<Subspace> common = subspace_intersection(h1, h2);
  const Eigen::MatrixXd t0 = common ? Eigen::MatrixXd(x - common->project(x)) : x;
  const Eigen::MatrixXd psi = correctors(h2, x, lambda);
  const Eigen::MatrixXd r = t0.transpose() * (space.energy() * t0) + psi.transpose() * (space.energy() * psi);
  return std::max(0.0, largest_symmetric_value(r));
}

} // namespace specpert
