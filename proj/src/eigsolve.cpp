#include "specpert/eigsolve.hpp"

#include "specpert/error.hpp"

#include <iostream> // the ARPACK wrapper below uses std::cout without including it

#include <lapacke.h>
#include <unsupported/Eigen/ArpackSupport>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

namespace specpert {

namespace {

constexpr double kAsymmetryWarn = 1e-9;
constexpr Eigen::Index kDenseCutoff = 400;
constexpr Eigen::Index kDenseOperatorCutoff = 60;

double smallest_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().size() ? es.eigenvalues()(0) : 0.0;
}

[[noreturn]] void throw_not_pd(const Eigen::MatrixXd& b) {
  const double smin = smallest_eigenvalue(b);
  std::ostringstream os;
  os << "pencil matrix b is not positive definite (smallest eigenvalue " << smin << ")";
  throw NotPositiveDefinite(os.str(), smin);
}

void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index imax = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&imax);
    if (vectors(imax, j) < 0) vectors.col(j) *= -1.0;
  }
}

Eigen::MatrixXd symmetrized(Eigen::MatrixXd m, const char* name) {
  if (m.rows() != m.cols()) throw DimensionError(std::string("pencil matrix ") + name + " is not square");
  const double asym = relative_asymmetry(m);
  if (asym > kAsymmetryWarn) {
    std::cerr << "warning: pencil matrix " << name << " asymmetric (relative " << asym
              << "), symmetrizing\n";
  }
  Eigen::MatrixXd t = m.transpose();
  m = 0.5 * (m + t);
  return m;
}

double abstol() { return 2.0 * LAPACKE_dlamch('S'); }

} // namespace

double relative_asymmetry(const Eigen::MatrixXd& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

SymmetricPencil::SymmetricPencil(Eigen::MatrixXd a, Eigen::MatrixXd b)
    : a_(symmetrized(std::move(a), "a")), b_(symmetrized(std::move(b), "b")) {
  if (a_.rows() != b_.rows()) throw DimensionError("pencil matrices a and b differ in size");
  if (a_.rows() == 0) throw DimensionError("empty pencil");
}

PencilSolution solve_pencil(const SymmetricPencil& p) {
  const lapack_int n = static_cast<lapack_int>(p.size());
  Eigen::MatrixXd a = p.a();
  Eigen::MatrixXd b = p.b();
  Eigen::VectorXd w(n);
  const lapack_int info =
      LAPACKE_dsygvd(LAPACK_COL_MAJOR, 1, 'V', 'L', n, a.data(), n, b.data(), n, w.data());
  if (info > n) throw_not_pd(p.b());
  if (info != 0) throw Error("dsygvd failed with info " + std::to_string(info));
  fix_signs(a);
  return {std::move(w), std::move(a)};
}

PencilSolution solve_pencil_lowest(const SymmetricPencil& p, Eigen::Index count) {
  const lapack_int n = static_cast<lapack_int>(p.size());
  if (count <= 0) throw Error("solve_pencil_lowest: count must be positive");
  if (count >= n) return solve_pencil(p);
  Eigen::MatrixXd a = p.a();
  Eigen::MatrixXd b = p.b();
  Eigen::VectorXd w(n);
  Eigen::MatrixXd z(n, count);
  std::vector<lapack_int> ifail(n);
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsygvx(LAPACK_COL_MAJOR, 1, 'V', 'I', 'L', n, a.data(), n,
                                         b.data(), n, 0.0, 0.0, 1, static_cast<lapack_int>(count),
                                         abstol(), &found, w.data(), z.data(), n, ifail.data());
  if (info > n) throw_not_pd(p.b());
  if (info != 0) throw Error("dsygvx failed with info " + std::to_string(info));
  PencilSolution out{w.head(found), z.leftCols(found)};
  fix_signs(out.vectors);
  return out;
}

double largest_pencil_value(const SymmetricPencil& p) {
  const lapack_int n = static_cast<lapack_int>(p.size());
  Eigen::MatrixXd a = p.a();
  Eigen::MatrixXd b = p.b();
  Eigen::VectorXd w(n);
  std::vector<lapack_int> ifail(n);
  lapack_int found = 0;
  double dummy = 0.0;
  const lapack_int info = LAPACKE_dsygvx(LAPACK_COL_MAJOR, 1, 'N', 'I', 'L', n, a.data(), n,
                                         b.data(), n, 0.0, 0.0, n, n, abstol(), &found, w.data(),
                                         &dummy, 1, ifail.data());
  if (info > n) throw_not_pd(p.b());
  if (info != 0 || found != 1) throw Error("dsygvx failed with info " + std::to_string(info));
  return w(0);
}

int count_pencil_below(const SparseMatrix& a, const SparseMatrix& b, double shift) {
  const SparseMatrix m = a - shift * b;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(m);
  if (ldlt.info() != Eigen::Success) throw Error("count_pencil_below: LDLT factorization failed");
  const Eigen::VectorXd d = ldlt.vectorD();
  return static_cast<int>((d.array() < 0.0).count());
}

namespace {

// Reverse-communication driver for dsaupd/dseupd. `op(ido, x, y, bx)` must
// fill y (and may overwrite x, as mode 2 requires); `bmul(x, y)` computes y = B x.
template <class Op, class BMul>
PencilSolution arpack(int n, int nev, const char* which, int mode, bool vectors, Op op, BMul bmul) {
  int ncv = std::min(n, std::max(2 * nev + 1, 20));
  std::vector<double> resid(n), v(static_cast<size_t>(n) * ncv), workd(3 * static_cast<size_t>(n));
  int lworkl = ncv * (ncv + 8);
  std::vector<double> workl(lworkl);
  int iparam[11] = {0}, ipntr[11] = {0};
  iparam[0] = 1;
  iparam[2] = 100 * std::max(n, 10);
  iparam[6] = mode;
  // Fixed start vector keeps repeated runs bit-identical.
  std::mt19937_64 gen(0x5eed);
  for (double& r : resid) r = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
  int ido = 0, info = 1, ldv = n;
  double tol = 0.0;
  char bmat[2] = {'G', 0};
  char wh[3] = {which[0], which[1], 0};
  for (;;) {
    Eigen::dsaupd_(&ido, bmat, &n, wh, &nev, &tol, resid.data(), &ncv, v.data(), &ldv, iparam, ipntr,
                   workd.data(), workl.data(), &lworkl, &info);
    if (ido == -1 || ido == 1) {
      op(ido, &workd[ipntr[0] - 1], &workd[ipntr[1] - 1], &workd[ipntr[2] - 1]);
    } else if (ido == 2) {
      bmul(&workd[ipntr[0] - 1], &workd[ipntr[1] - 1]);
    } else {
      break;
    }
  }
  if (info < 0 || info == 1 || info == 3)
    throw Error("dsaupd failed with info " + std::to_string(info));
  int rvec = vectors ? 1 : 0;
  char howmny[2] = {'A', 0};
  std::vector<int> select(ncv);
  std::vector<double> d(nev);
  double sigma = 0.0;
  int ierr = 0;
  Eigen::dseupd_(&rvec, howmny, select.data(), d.data(), v.data(), &ldv, &sigma, bmat, &n, wh, &nev,
                 &tol, resid.data(), &ncv, v.data(), &ldv, iparam, ipntr, workd.data(), workl.data(),
                 &lworkl, &ierr);
  if (ierr != 0) throw Error("dseupd failed with info " + std::to_string(ierr));
  const int found = iparam[4];
  std::vector<int> order(found);
  for (int i = 0; i < found; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) { return d[x] < d[y]; });
  PencilSolution out{Eigen::VectorXd(found), Eigen::MatrixXd(vectors ? n : 0, vectors ? found : 0)};
  for (int i = 0; i < found; ++i) {
    out.values(i) = d[order[i]];
    if (vectors) out.vectors.col(i) = Eigen::Map<const Eigen::VectorXd>(&v[static_cast<size_t>(order[i]) * n], n);
  }
  return out;
}

} // namespace

PencilSolution solve_sparse_pencil_lowest(const SparseMatrix& a, const SparseMatrix& b,
                                          Eigen::Index count) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw DimensionError("sparse pencil: matrices must be square and of equal size");
  const Eigen::Index n = a.rows();
  if (n == 0) throw DimensionError("empty pencil");
  if (count <= 0) throw Error("solve_sparse_pencil_lowest: count must be positive");
  if (n <= kDenseCutoff || count + 2 >= n / 2)
    return solve_pencil_lowest(SymmetricPencil(Eigen::MatrixXd(a), Eigen::MatrixXd(b)), count);

  const SparseMatrix as = 0.5 * (a + SparseMatrix(a.transpose()));
  const SparseMatrix bs = 0.5 * (b + SparseMatrix(b.transpose()));
  Eigen::SimplicialLLT<SparseMatrix> chol(as);
  if (chol.info() != Eigen::Success) throw Error("sparse pencil: matrix a is not positive definite");
  const int ni = static_cast<int>(n);
  auto op = [&](int ido, double* x, double* y, double* bx) {
    Eigen::Map<Eigen::VectorXd> ym(y, ni);
    if (ido == 1)
      ym = chol.solve(Eigen::Map<const Eigen::VectorXd>(bx, ni));
    else
      ym = chol.solve(bs * Eigen::Map<const Eigen::VectorXd>(x, ni));
  };
  auto bmul = [&](double* x, double* y) {
    Eigen::Map<Eigen::VectorXd>(y, ni) = bs * Eigen::Map<const Eigen::VectorXd>(x, ni);
  };
  // A missed copy of a repeated eigenvalue shows up as an inertia mismatch;
  // retry with more requested values, then give up and go dense.
  for (Eigen::Index extra = 4; extra <= 32; extra *= 2) {
    const int nev = static_cast<int>(std::min(count + extra, n / 2));
    const PencilSolution s = arpack(ni, nev, "LM", 3, true, op, bmul);
    if (s.values.size() < nev) continue;
    const Eigen::VectorXd& w = s.values;
    // Check everything below the midpoint of the two largest distinct values found.
    Eigen::Index top = nev - 1;
    while (top > 0 && w(top - 1) >= w(nev - 1) * (1.0 - 1e-8)) --top;
    if (top < count) continue;
    if (count_pencil_below(as, bs, 0.5 * (w(top - 1) + w(top))) != static_cast<int>(top)) continue;
    PencilSolution out{w.head(count), s.vectors.leftCols(count)};
    fix_signs(out.vectors);
    return out;
  }
  return solve_pencil_lowest(SymmetricPencil(Eigen::MatrixXd(a), Eigen::MatrixXd(b)), count);
}

double largest_operator_value(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                              const SparseMatrix& b) {
  if (b.rows() != b.cols()) throw DimensionError("largest_operator_value: b must be square");
  const Eigen::Index n = b.rows();
  if (n == 0) throw DimensionError("empty operator");
  if (n <= kDenseOperatorCutoff) {
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index j = 0; j < n; ++j) c.col(j) = apply(Eigen::VectorXd::Unit(n, j));
    const Eigen::MatrixXd bd(b);
    Eigen::MatrixXd a = bd * c;
    a = 0.5 * (a + a.transpose()).eval();
    return largest_pencil_value(SymmetricPencil(a, bd));
  }
  const int ni = static_cast<int>(n);
  auto op = [&](int, double* x, double* y, double*) {
    Eigen::Map<Eigen::VectorXd> xm(x, ni), ym(y, ni);
    ym = apply(xm);
    xm = b * ym;
  };
  auto bmul = [&](double* x, double* y) {
    Eigen::Map<Eigen::VectorXd>(y, ni) = b * Eigen::Map<const Eigen::VectorXd>(x, ni);
  };
  const PencilSolution s = arpack(ni, 2, "LA", 2, false, op, bmul);
  if (s.values.size() == 0) throw Error("largest_operator_value: Lanczos did not converge");
  return s.values.maxCoeff();
}

int count_in_interval(std::span<const double> values, double lo, double hi) {
  return static_cast<int>(
      std::count_if(values.begin(), values.end(), [&](double v) { return v > lo && v < hi; }));
}

} // namespace specpert
