#pragma once

// Scenario runner: config -> mesh -> subspaces -> eigenpairs -> correction
// pencil -> rows and checks. Also the randomized property suites behind
// `verify`.

#include "specpert/fem2d.hpp"
#include "specpert/perturbation.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace specpert {

/// One experiment. JSON form (keys other than "scenario" and "h" optional):
///   {"scenario": "square_shrink", "h": 0.015625, "pad": 0.25,
///    "coefficient": {"type": "identity"}, "eps": [0.03125], "m": [1, 2],
///    "q": 2, "group_tol": 1e-3, "anchor": [0.5, 0.0], "elements": [...], "seed": 0}
/// "pad" enlarges D to [-pad, 1 + pad]^2 (defaults to max eps for square_expand).
/// "group_tol" defaults to 10 h^2.
struct ScenarioConfig {
  std::string scenario = "square_shrink";
  double h = 1.0 / 64;
  double pad = 0.0;
  nlohmann::json coefficient = {{"type", "identity"}};
  std::vector<double> eps;
  std::vector<int> m{1};
  double q = 2.0;
  std::optional<double> group_tol;
  Eigen::Vector2d anchor{0.5, 0.0};
  std::vector<int> elements;
  std::uint64_t seed = 0;

  DomainSpec domain(double e) const;
  double effective_group_tol() const { return group_tol ? *group_tol : 10.0 * h * h; }
  int cells() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ScenarioConfig from_json(const nlohmann::json& j);
};

/// A config file holds one scenario object or {"scenarios": [...]}.
std::vector<ScenarioConfig> load_configs(const std::string& path);

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ReportRow {
  std::string scenario;
  double h = kNaN, eps = kNaN;
  int m = 0, k = 0;
  double lambda_inv = kNaN, mu_inv = kNaN, tau = kNaN, sigma = kNaN, sigma_star = kNaN;
  double rho = kNaN, rho0 = kNaN, remainder = kNaN, bound = kNaN, ratio = kNaN;
};

struct CellReport {
  double eps = 0.0;
  int m = 0;
  int multiplicity = 0;
  bool admitted = false;
  std::string status; // "admitted", "gated" or "failed"
  std::string message;
  double gate = kNaN;
  double lambda = kNaN;
  double sigma = kNaN, sigma_star = kNaN, rho = kNaN, rho0 = kNaN;
  Eigen::VectorXd mu, tau;
  std::vector<Prediction> predictions;
  std::vector<double> proximity;    // per localized eigenvector
  std::vector<CollarRow> collar;    // shrinking families only
  std::vector<double> symdiff_ratio; // |mu^{-1} - lambda^{-1}| / |Omega_1 sym. diff. Omega_2|
  std::vector<InclusionSample> inclusion;
  std::optional<Inclusion> direction;
};

struct Assertion {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct ScenarioReport {
  ScenarioConfig config;
  double c0 = kNaN;
  std::vector<double> lambda;      // group values of the unperturbed problem
  std::vector<int> multiplicities;
  std::vector<double> sigma_by_eps, sigma_star_by_eps;
  std::vector<CellReport> cells;
  std::vector<ReportRow> rows;
  std::vector<Assertion> assertions;

  bool passed() const;
  nlohmann::json to_json() const;
};

ScenarioReport run_scenario(const ScenarioConfig& config);

/// A per-cell quantity tracked over an eps sweep (one value per eps, the
/// largest over k within the cell).
struct SweepFit {
  double c_fit = 0.0;  // largest value
  double spread = 0.0; // largest / smallest
  double growth = 0.0; // largest v(eps_i) / v(eps_j) with eps_i < eps_j; 0 with fewer than two cells
  int cells = 0;
};

SweepFit sweep_fit(std::vector<std::pair<double, double>> eps_value);

/// Rows in the fixed CSV schema, 10 significant digits.
void write_csv(std::ostream& os, const std::vector<ReportRow>& rows, bool header = true);
std::string csv_header();
/// Pretty JSON; numbers are written in shortest round-trip form.
void write_json(std::ostream& os, const nlohmann::json& j);

struct PropertyMargin {
  std::string name;
  double worst = std::numeric_limits<double>::infinity(); // min over cases of (bound - value)
  int checked = 0;
  int violations = 0;
  nlohmann::json counterexample; // first violating case
};

struct VerifySummary {
  std::string suite;
  std::uint64_t seed = 0;
  int cases = 0;
  std::vector<PropertyMargin> properties;
  bool passed() const;
  nlohmann::json to_json() const;
};

/// Random SPD pairs with N <= 12 and random subspace pairs/triples.
VerifySummary verify_abstract(std::uint64_t seed, int n_cases);
/// Small-mesh finite-element checks; `n_cases` random test vectors per check.
VerifySummary verify_fem(std::uint64_t seed, int n_cases);

} // namespace specpert
