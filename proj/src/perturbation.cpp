#include "specpert/perturbation.hpp"

#include "specpert/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace specpert {

namespace {

constexpr double kZero = 1e-14;
constexpr double kRoundoff = 1e-13;

std::pair<double, double> extreme_values(const Eigen::MatrixXd& q) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (q + q.transpose()), Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

std::string window_text(const Window& w) {
  std::ostringstream os;
  os.precision(10);
  os << "(" << w.lo << ", " << w.hi << ")";
  return os.str();
}

Eigen::Index grouped_count(const EigenDecomposition& eigs) {
  Eigen::Index total = 0;
  for (const auto& gr : eigs.groups) total += gr.multiplicity();
  return total;
}

Eigen::VectorXd grouped_values(const EigenDecomposition& eigs) { return eigs.raw_values.head(grouped_count(eigs)); }

} // namespace

Localization nearest_eigenpairs(const EigenDecomposition& eigs2, double lambda, Eigen::Index j) {
  const Eigen::Index total = grouped_count(eigs2);
  if (total < j) throw LocalizationError("localization failed: too few perturbed eigenvalues computed");
  Eigen::MatrixXd vecs(eigs2.groups.front().basis.rows(), total);
  Eigen::Index col = 0;
  for (const auto& gr : eigs2.groups) {
    vecs.middleCols(col, gr.multiplicity()) = gr.basis;
    col += gr.multiplicity();
  }
  const Eigen::VectorXd mu_all = grouped_values(eigs2);
  const double lam_inv = 1.0 / lambda;
  std::vector<Eigen::Index> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(1.0 / mu_all(a) - lam_inv) < std::abs(1.0 / mu_all(b) - lam_inv);
  });
  order.resize(static_cast<size_t>(j));
  std::sort(order.begin(), order.end());

  Localization out;
  out.mu.resize(j);
  out.vectors.resize(vecs.rows(), j);
  for (Eigen::Index k = 0; k < j; ++k) {
    out.mu(k) = mu_all(order[static_cast<size_t>(k)]);
    out.vectors.col(k) = vecs.col(order[static_cast<size_t>(k)]);
  }
  return out;
}

double gate_value(const EigenDecomposition& eigs1, int m, double sigma) {
  return eigs1.lambda_sum_root(m) * std::sqrt(std::max(0.0, sigma));
}

Localization localize(const EigenDecomposition& eigs1, const EigenDecomposition& eigs2, int m, double sigma,
                      std::optional<double> c) {
  const double gate = gate_value(eigs1, m, sigma);
  if (gate >= kGateLimit) {
    std::ostringstream os;
    os << "perturbation too large: Lambda_m sqrt(sigma) = " << gate << " >= " << kGateLimit;
    throw GateError(os.str());
  }
  const EigenGroup& g = eigs1.group(m);
  const double lam_inv = 1.0 / g.value;
  const double next_inv = 1.0 / eigs1.group(m + 1).value;
  const double prev_inv = m > 1 ? 1.0 / eigs1.group(m - 1).value : std::numeric_limits<double>::infinity();
  const Eigen::Index j = g.multiplicity();

  Localization out = nearest_eigenpairs(eigs2, g.value, j);
  const Eigen::VectorXd inv = grouped_values(eigs2).cwiseInverse();
  // One c for the groups 1..m+1: each group's nearest cluster must lie within c sqrt(sigma).
  double max_shift = 0.0;
  for (int k = 1; k <= m + 1; ++k) {
    const EigenGroup& gk = eigs1.group(k);
    const Eigen::VectorXd mu_k = k == m ? out.mu : nearest_eigenpairs(eigs2, gk.value, gk.multiplicity()).mu;
    for (Eigen::Index i = 0; i < mu_k.size(); ++i)
      max_shift = std::max(max_shift, std::abs(1.0 / mu_k(i) - 1.0 / gk.value));
  }
  const double rs = std::sqrt(std::max(0.0, sigma));
  if (c) {
    out.c = *c;
  } else if (rs > 0.0) {
    out.c = max_shift / rs;
  } else if (max_shift > 1e-12 * lam_inv) {
    std::ostringstream os;
    os << "localization failed: sigma = 0 but the eigenvalues moved by " << max_shift;
    throw LocalizationError(os.str());
  }
  out.narrow = {lam_inv - out.c * rs, lam_inv + out.c * rs};
  out.wide = {next_inv + out.c * rs, prev_inv - out.c * rs};

  std::vector<double> inv_list(inv.data(), inv.data() + inv.size());
  // Neighbouring groups sit exactly on the window edges when sigma = 0.
  const double slack = 1e-10 * lam_inv;
  const int wide_count = count_in_interval(inv_list, out.wide.lo + slack, out.wide.hi - slack);
  const int narrow_count = rs > 0.0 ? count_in_interval(inv_list, out.narrow.lo - 1e-15 * lam_inv,
                                                        out.narrow.hi + 1e-15 * lam_inv)
                                    : static_cast<int>(j);
  const bool reaches = inv.minCoeff() <= out.wide.lo;
  bool chosen_inside = true;
  for (Eigen::Index k = 0; k < j; ++k) {
    const double v = 1.0 / out.mu(k);
    chosen_inside = chosen_inside && v > out.wide.lo + slack && v < out.wide.hi - slack;
  }
  if (!(out.wide.lo < out.wide.hi) || !reaches || wide_count != j || !chosen_inside ||
      (c && narrow_count != j)) {
    std::ostringstream os;
    os << "localization failed for m = " << m << ": expected " << j << " eigenvalues; wide window "
       << window_text(out.wide) << " holds " << wide_count << ", narrow window " << window_text(out.narrow)
       << " holds " << narrow_count;
    if (!reaches) os << "; the perturbed spectrum was not computed far enough";
    throw LocalizationError(os.str());
  }
  return out;
}

double eigenvector_proximity(const Eigen::VectorXd& u, const Eigen::MatrixXd& x, const Subspace& h2,
                             double sigma) {
  const EnergySpace& space = h2.parent();
  const Eigen::MatrixXd y = h2.project(x);
  const Eigen::MatrixXd g = y.transpose() * (space.energy() * y);
  const Eigen::VectorXd coef = g.ldlt().solve(y.transpose() * (space.energy() * u));
  const double num = space.energy_norm(u - y * coef);
  const double den = space.energy_norm(u);
  if (den == 0.0) throw Error("eigenvector_proximity: zero vector");
  if (sigma <= 0.0) {
    if (num <= 1e-12 * den) return 0.0;
    throw Error("eigenvector_proximity: sigma = 0 but U is not in S2 X_m");
  }
  return num / (std::sqrt(sigma) * den);
}

CorrectionProblem assemble_correction(const Subspace& h1, const Subspace& h2, const Eigen::MatrixXd& x,
                                      double lambda, double sigma) {
  if (!h1.same_parent(h2)) throw DimensionError("subspaces belong to different spaces");
  if (x.cols() == 0) throw DimensionError("empty eigenspace");
  const SparseMatrix& k = h2.parent().energy();
  const Eigen::MatrixXd psi = correctors(h2, x, lambda);
  const Eigen::MatrixXd t = apply_T2(h2, x);
  const Eigen::MatrixXd s = x - t;
  const Eigen::MatrixXd kpsi = k * psi;
  CorrectionProblem cp;
  cp.lambda = lambda;
  cp.sigma = sigma;
  cp.lhs = (psi.transpose() * kpsi - t.transpose() * (k * t) - kpsi.transpose() * x - x.transpose() * kpsi) / lambda;
  cp.gram = s.transpose() * (k * s);
  const auto [gmin, gmax] = extreme_values(cp.gram);
  if (!(gmin > kZero * std::max(1.0, gmax))) {
    std::ostringstream os;
    os << "correction gram (S2 phi_i, S2 phi_j) is not positive definite (smallest eigenvalue " << gmin
       << "); the perturbation is too large for the eigenspace to survive projection";
    throw NotPositiveDefinite(os.str(), gmin);
  }
  cp.tau = solve_pencil(SymmetricPencil(cp.lhs, cp.gram)).values;
  cp.rho = compute_rho(h1, h2, x, lambda, sigma);
  return cp;
}

std::vector<Prediction> predict_and_check(const CorrectionProblem& cp, const Eigen::VectorXd& mu) {
  if (mu.size() != cp.tau.size()) {
    std::ostringstream os;
    os << "predict_and_check: " << cp.tau.size() << " correction values but " << mu.size() << " measured";
    throw DimensionError(os.str());
  }
  std::vector<double> mu_inv(static_cast<size_t>(mu.size()));
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu_inv[static_cast<size_t>(i)] = 1.0 / mu(i);
  std::sort(mu_inv.begin(), mu_inv.end());
  std::vector<double> tau(cp.tau.data(), cp.tau.data() + cp.tau.size());
  std::sort(tau.begin(), tau.end());
  const double lam_inv = 1.0 / cp.lambda;
  std::vector<Prediction> rows;
  for (size_t k = 0; k < tau.size(); ++k) {
    Prediction p;
    p.k = static_cast<int>(k) + 1;
    p.lambda_inv = lam_inv;
    p.mu_inv = mu_inv[k];
    p.tau = tau[k];
    p.predicted = lam_inv + tau[k];
    p.remainder = std::abs(mu_inv[k] - lam_inv - tau[k]);
    p.bound = cp.rho + std::abs(tau[k]) * cp.sigma;
    // A remainder at round-off level counts as exact.
    if (p.remainder <= kRoundoff * lam_inv)
      p.ratio = 0.0;
    else
      p.ratio = p.bound > 0.0 ? p.remainder / p.bound : std::numeric_limits<double>::infinity();
    rows.push_back(p);
  }
  return rows;
}

std::optional<Inclusion> inclusion_of(const Subspace& h1, const Subspace& h2) {
  if (!h1.same_parent(h2)) throw DimensionError("subspaces belong to different spaces");
  if (h1.is_nodal() && h2.is_nodal()) {
    const auto& a = h1.indices();
    const auto& b = h2.indices();
    if (std::includes(a.begin(), a.end(), b.begin(), b.end())) return Inclusion::shrinking;
    if (std::includes(b.begin(), b.end(), a.begin(), a.end())) return Inclusion::expanding;
    return std::nullopt;
  }
  const auto common = subspace_intersection(h1, h2);
  const Eigen::Index d = common ? common->dim() : 0;
  if (d == h2.dim()) return Inclusion::shrinking;
  if (d == h1.dim()) return Inclusion::expanding;
  return std::nullopt;
}

std::vector<InclusionSample> inclusion_samples(const Subspace& h1, const Subspace& h2, const Eigen::MatrixXd& x,
                                               double lambda, const Eigen::VectorXd& mu, Inclusion direction) {
  const auto actual = inclusion_of(h1, h2);
  const bool equal = h1.is_nodal() && h2.is_nodal() && h1.indices() == h2.indices();
  if (!equal && actual != direction)
    throw Error(std::string("inclusion direction mismatch: ") +
                (direction == Inclusion::shrinking ? "H2 is not contained in H1" : "H1 is not contained in H2"));
  const SparseMatrix& k = h2.parent().energy();
  const Eigen::MatrixXd w = direction == Inclusion::shrinking ? apply_T2(h2, x) : correctors(h2, x, lambda);
  const auto [qmin, qmax] = extreme_values(w.transpose() * (k * w));
  std::vector<InclusionSample> out;
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    out.push_back({std::abs(1.0 / mu(i) - 1.0 / lambda), std::max(0.0, qmin), std::max(0.0, qmax)});
  return out;
}

InclusionFit inclusion_bounds(std::span<const InclusionSample> samples) {
  InclusionFit fit;
  fit.c = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    if (s.qmax <= kZero && s.shift <= kZero) {
      ++fit.exact;
      continue;
    }
    ++fit.used;
    fit.C = std::max(fit.C, s.qmax > 0.0 ? s.shift / s.qmax : std::numeric_limits<double>::infinity());
    if (s.qmin > 0.0) fit.c = std::min(fit.c, s.shift / s.qmin);
  }
  if (fit.used == 0 || !std::isfinite(fit.c)) fit.c = 0.0;
  return fit;
}

std::vector<CollarRow> collar_stability_check(double lambda, const Eigen::VectorXd& mu, const Eigen::MatrixXd& x,
                                              const SparseMatrix& collar_form) {
  if (collar_form.nonZeros() == 0) throw Error("empty collar");
  const double qmax = std::max(0.0, extreme_values(x.transpose() * (collar_form * x)).second);
  std::vector<double> mu_inv(static_cast<size_t>(mu.size()));
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu_inv[static_cast<size_t>(i)] = 1.0 / mu(i);
  std::sort(mu_inv.begin(), mu_inv.end());
  std::vector<CollarRow> rows;
  for (size_t i = 0; i < mu_inv.size(); ++i) {
    CollarRow r;
    r.k = static_cast<int>(i) + 1;
    r.shift = std::abs(1.0 / lambda - mu_inv[i]);
    r.collar = qmax;
    r.ratio = qmax > 0.0 ? r.shift / qmax : (r.shift <= kZero ? 0.0 : std::numeric_limits<double>::infinity());
    rows.push_back(r);
  }
  return rows;
}

ConstantFit fit_constant(std::span<const double> values) {
  ConstantFit f;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    ++f.count;
  }
  if (f.count == 0) return f;
  f.c_fit = hi;
  f.min = lo;
  f.spread = hi / lo;
  return f;
}

} // namespace specpert
