// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "specpert/error.hpp"
#include "specpert/fem2d.hpp"
#include "specpert/harness.hpp"
#include "specpert/perturbation.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace specpert;
using nlohmann::json;

namespace {

const double pi = std::numbers::pi;
const double pi2 = pi * pi;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [fail: " << what << "]";
    }
  }
};

ScenarioConfig sweep_config(const std::string& scenario) {
  ScenarioConfig c;
  c.scenario = scenario;
  c.h = 1.0 / 64;
  c.eps = {2 * c.h, 4 * c.h, 8 * c.h, 16 * c.h};
  c.m = {1, 2};
  if (scenario == "square_expand") c.pad = 16 * c.h;
  return c;
}

const std::vector<std::string> kScenarios{"square_shrink", "square_expand", "boundary_notch", "l_shape"};

std::map<std::string, json>& sweeps() {
  static std::map<std::string, json> out;
  if (out.empty())
    for (const auto& s : kScenarios) out[s] = run_scenario(sweep_config(s)).to_json();
  return out;
}

bool assertion_passed(const json& report, const std::string& name, std::string& detail) {
  for (const auto& a : report["assertions"])
    if (a["name"] == name) {
      detail = a["detail"].get<std::string>();
      return a["passed"].get<bool>();
    }
  detail = "missing";
  return false;
}

struct Square {
  BackgroundMesh mesh;
  FemSpace fem;
  Subspace h1;
  EigenDecomposition eigs1;

  explicit Square(int cells)
      : mesh(BackgroundMesh::structured(cells)),
        fem(assemble(mesh, CoefficientField::identity())),
        h1(carve_subspace(fem, mesh, DomainSpec::shrink(0.0))),
        eigs1(solve_operator_eigs(h1, 10.0 / (cells * cells), 4)) {}
};

void exact_spectrum(Outcome& o) {
  const Square sq(64);
  const EigenGroup& g1 = sq.eigs1.group(1);
  const EigenGroup& g2 = sq.eigs1.group(2);
  const double e1 = std::abs(g1.value / (2 * pi2) - 1), e2 = std::abs(g2.value / (5 * pi2) - 1);
  o.detail << "lambda1=" << g1.value << " (rel err " << e1 << "), lambda2=" << g2.value << " (rel err " << e2
           << "), J2=" << g2.multiplicity();
  o.require(g1.multiplicity() == 1, "J1 = 1");
  o.require(e1 <= 0.01, "lambda1 within 1%");
  o.require(e2 <= 0.01, "lambda2 within 1%");
  o.require(g2.multiplicity() == 2, "J2 = 2");
}

struct FirstOrder {
  double shift = 0.0, tau = 0.0, remainder = 0.0, oracle = 0.0;
};

FirstOrder first_order(const Square& sq, double eps) {
  const Subspace h2 = carve_subspace(sq.fem, sq.mesh, DomainSpec::shrink(eps));
  const EigenDecomposition eigs2 = solve_operator_eigs(h2, sq.eigs1.group_tol, 6);
  const double sigma = sigma_distance(sq.h1, h2);
  const EigenGroup& g = sq.eigs1.group(1);
  const Localization loc = localize(sq.eigs1, eigs2, 1, sigma);
  const CorrectionProblem cp = assemble_correction(sq.h1, h2, g.basis, g.value, sigma);
  const Prediction p = predict_and_check(cp, loc.mu).at(0);
  return {p.mu_inv - p.lambda_inv, p.tau, p.remainder, (std::pow(1 - 2 * eps, 2) - 1) / (2 * pi2)};
}

void first_order_shrink(Outcome& o) {
  const Square sq(40);
  const FirstOrder a = first_order(sq, 0.05), b = first_order(sq, 0.025);
  const double ra = a.remainder / std::abs(a.tau), rb = b.remainder / std::abs(b.tau);
  const double dev = std::abs(a.shift - a.tau) / std::abs(a.tau);
  o.detail << "h=1/40 eps=0.05: shift=" << a.shift << " closed form=" << a.oracle << " tau=" << a.tau
           << " |shift-tau|/|tau|=" << dev << " rem/|tau|=" << ra << "; eps=0.025: rem/|tau|=" << rb
           << " factor=" << ra / rb;
  o.require(std::abs(a.shift - a.oracle) <= 0.05 * std::abs(a.oracle), "measured shift within 5% of closed form");
  o.require(dev <= 0.2, "shift within 20% of tau");
  o.require(ra <= 0.2, "remainder/|tau| <= 0.2");
  o.require(ra / rb >= 1.5 && ra / rb <= 3.0, "halving factor in [1.5, 3]");
}

// Largest value of `field` per eps over the admitted cells of a report, all m pooled.
std::map<double, double> pooled(const json& report, const char* list, const char* field) {
  std::map<double, double> out;
  for (const auto& c : report["cells"]) {
    if (c["status"] != "admitted" || c["eps"].get<double>() == 0.0) continue;
    double v = 0.0;
    for (const auto& r : c[list])
      if (!r[field].is_null()) v = std::max(v, r[field].get<double>());
    double& slot = out[c["eps"].get<double>()];
    slot = std::max(slot, v);
  }
  return out;
}

SweepFit fit_of(const std::map<double, double>& by_eps) {
  return sweep_fit(std::vector<std::pair<double, double>>(by_eps.begin(), by_eps.end()));
}

void remainder_bound(Outcome& o) {
  for (const auto& s : kScenarios) {
    const json& rep = sweeps().at(s);
    const SweepFit f = fit_of(pooled(rep, "predictions", "ratio"));
    o.detail << " " << s << ": C_fit=" << f.c_fit << " spread=" << f.spread << " admitted eps per m:";
    for (int m : {1, 2}) {
      const int cells = rep["fits"][std::to_string(m)]["remainder"]["cells"].get<int>();
      o.detail << " " << cells;
      o.require(cells >= 2, s + " m=" + std::to_string(m) + " has fewer than 2 admitted eps");
    }
    o.detail << ";";
    o.require(f.spread <= 3.0, s + " spread > 3");
  }
}

void count_and_proximity(Outcome& o) {
  for (const auto& s : kScenarios) {
    const json& rep = sweeps().at(s);
    std::string d;
    const bool ok = assertion_passed(rep, "localization_count", d);
    o.require(ok, s + " count: " + d);
    for (int m : {1, 2}) {
      const json& f = rep["fits"][std::to_string(m)]["proximity"];
      const double growth = f["growth"].get<double>();
      o.detail << " " << s << "/m" << m << ": cells=" << f["cells"] << " c=" << f["c_fit"] << " growth=" << growth;
      o.require(growth <= 3.0, s + " m=" + std::to_string(m) + " proximity growth > 3");
    }
  }
}

void inclusion_signs(Outcome& o) {
  for (const auto& s : kScenarios) {
    std::string d;
    o.require(assertion_passed(sweeps().at(s), "inclusion_signs", d), s + ": " + d);
    ScenarioConfig zero = sweep_config(s);
    zero.eps = {0.0};
    const json rep = run_scenario(zero).to_json();
    o.require(assertion_passed(rep, "zero_perturbation", d), s + " eps=0: " + d);
    o.detail << " " << s << " ok;";
  }
}

void hadamard(Outcome& o) {
  const Square sq(64);
  const double h = sq.mesh.h;
  Eigen::VectorXd phi = sq.eigs1.group(1).basis.col(0);
  phi /= sq.fem.space->mass_norm(phi);
  const double slope = hadamard_slope(sq.mesh, sq.fem, DomainSpec::shrink(0.0), phi,
                                      [](const Eigen::Vector2d&) { return 1.0; });
  const Subspace h2 = carve_subspace(sq.fem, sq.mesh, DomainSpec::shrink(2 * h));
  const double mu = solve_operator_eigs(h2, sq.eigs1.group_tol, 1).group(1).value;
  const double fd = (mu - sq.eigs1.group(1).value) / (2 * h);
  o.detail << "slope=" << slope << " 8pi^2=" << 8 * pi2 << " fd(2h)=" << fd;
  o.require(std::abs(slope / (8 * pi2) - 1) <= 0.10, "within 10% of 8 pi^2");
  o.require(std::abs(slope / fd - 1) <= 0.15, "within 15% of the finite difference");
}

void abstract_suite(Outcome& o) {
  const VerifySummary v = verify_abstract(20240611, 500);
  o.detail << "cases=" << v.cases;
  for (const auto& p : v.properties) {
    o.detail << " " << p.name << ":" << p.violations << "/" << p.checked;
    o.require(p.violations == 0 && p.checked > 0, p.name);
  }
}

void mosco_family(Outcome& o) {
  const Square sq(64);
  const double h = sq.mesh.h;
  const std::vector<std::function<double(const Eigen::Vector2d&)>> panel{
      [](const Eigen::Vector2d& x) { return std::sin(pi * x(0)) * std::sin(pi * x(1)); },
      [](const Eigen::Vector2d& x) { return x(0) * (1 - x(0)) * x(1) * (1 - x(1)); },
      [](const Eigen::Vector2d& x) { return std::sin(2 * pi * x(0)) * std::sin(3 * pi * x(1)); },
      [](const Eigen::Vector2d& x) { return x(0) * (1 - x(0)) * x(1) * (1 - x(1)) * std::exp(x(0) + 2 * x(1)); },
      [](const Eigen::Vector2d& x) { return std::sin(pi * x(0)) * x(1) * (1 - x(1)) * (1 + x(0)); }};
  std::vector<Eigen::VectorXd> us;
  for (const auto& f : panel) us.push_back(sq.fem.interpolate(sq.mesh, f));

  const std::vector<double> eps{16 * h, 8 * h, 4 * h, 2 * h, h};
  std::vector<double> sig, sig_star;
  std::vector<std::vector<double>> dev(us.size());
  for (double e : eps) {
    const Subspace h2 = carve_subspace(sq.fem, sq.mesh, DomainSpec::shrink(e));
    sig.push_back(sigma_distance(sq.h1, h2));
    sig_star.push_back(sigma_star(sq.h1, h2));
    // S_0 is the identity on H1, so (S_eps - S_0) u = P_eps u - u.
    for (size_t i = 0; i < us.size(); ++i)
      dev[i].push_back(sq.fem.space->mass_norm(project(h2, us[i]) - us[i]) / sq.fem.space->mass_norm(us[i]));
  }
  o.detail << "sigma:";
  for (double s : sig) o.detail << " " << s;
  o.detail << "; sigma*:";
  for (double s : sig_star) o.detail << " " << s;
  o.detail << "; panel at eps=h:";
  for (const auto& d : dev) o.detail << " " << d.back();
  for (size_t k = 1; k < eps.size(); ++k) {
    o.require(sig[k] < sig[k - 1], "sigma decreasing");
    o.require(sig_star[k] < sig_star[k - 1], "sigma* decreasing");
    for (const auto& d : dev) o.require(d[k] < d[k - 1], "panel decreasing");
  }
  o.require(sig.back() < 1e-2, "sigma(h) < 1e-2");
  o.require(sig_star.back() < 1e-2, "sigma*(h) < 1e-2");
  for (const auto& d : dev) o.require(d.back() <= 0.25 * d.front(), "panel shrinks by 4x over the family");
}

void collar(Outcome& o) {
  for (const std::string s : {"square_shrink", "boundary_notch"}) {
    const SweepFit f = fit_of(pooled(sweeps().at(s), "collar", "ratio"));
    o.detail << " " << s << ": eps=" << f.cells << " c=" << f.c_fit << " growth=" << f.growth << ";";
    o.require(f.cells >= 2, s + " fewer than 2 admitted eps");
    o.require(f.growth <= 3.0, s + " collar growth > 3");
  }
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"exact_spectrum", exact_spectrum},   {"first_order_shrink", first_order_shrink},
      {"remainder_bound", remainder_bound}, {"eigenvalue_count_and_proximity", count_and_proximity},
      {"inclusion_signs", inclusion_signs}, {"hadamard_consistency", hadamard},
      {"abstract_inequalities", abstract_suite}, {"sigma_family", mosco_family},
      {"collar_stability", collar}};
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [error: " << e.what() << "]";
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
