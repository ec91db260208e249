#include "specpert/error.hpp"
#include "specpert/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace specpert;
using nlohmann::json;

namespace {

ScenarioConfig small(const std::string& scenario, std::vector<double> eps) {
  ScenarioConfig c;
  c.scenario = scenario;
  c.h = 1.0 / 16;
  c.eps = std::move(eps);
  c.m = {1, 2};
  if (scenario == "square_expand") c.pad = 2.0 / 16;
  return c;
}

std::string csv_of(const ScenarioReport& r) {
  std::ostringstream os;
  write_csv(os, r.rows);
  return os.str();
}

} // namespace

TEST_CASE("eps = 0 gives zero shifts and zero sigma") {
  for (const char* s : {"square_shrink", "square_expand", "boundary_notch", "l_shape"}) {
    CAPTURE(s);
    const ScenarioReport r = run_scenario(small(s, {0.0}));
    CHECK(r.passed());
    CHECK(r.sigma_by_eps.at(0) == 0.0);
    for (const auto& row : r.rows) {
      CHECK(row.mu_inv == doctest::Approx(row.lambda_inv).epsilon(1e-12));
      CHECK(std::abs(row.tau) < 1e-12);
      CHECK(row.ratio == 0.0);
    }
  }
}

TEST_CASE("one row per (eps, m, k), gated cells included") {
  const ScenarioReport r = run_scenario(small("square_shrink", {1.0 / 16, 2.0 / 16, 4.0 / 16}));
  // groups 1 and 2 of the square: J = 1 and J = 2
  CHECK(r.rows.size() == 3 * (1 + 2));
  CHECK(r.cells.size() == 3 * 2);
  for (const auto& c : r.cells) CHECK((c.status == "admitted" || c.status == "gated"));
  const std::string csv = csv_of(r);
  CHECK(csv.rfind(csv_header(), 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 9);
}

TEST_CASE("runs are byte-identical") {
  const ScenarioConfig c = small("boundary_notch", {1.0 / 16, 2.0 / 16});
  const ScenarioReport a = run_scenario(c), b = run_scenario(c);
  CHECK(csv_of(a) == csv_of(b));
  std::ostringstream ja, jb;
  write_json(ja, a.to_json());
  write_json(jb, b.to_json());
  CHECK(ja.str() == jb.str());
}

TEST_CASE("csv header") {
  CHECK(csv_header() ==
        "scenario,h,eps,m,k,lambda_inv,mu_inv,tau,sigma,sigma_star,rho,rho0,remainder,bound,ratio");
}

TEST_CASE("json round trip keeps nan as null") {
  std::ostringstream os;
  write_json(os, json{{"x", kNaN}, {"y", 0.1}});
  const json back = json::parse(os.str());
  CHECK(back["x"].is_null());
  CHECK(back["y"].get<double>() == 0.1);
}

TEST_CASE("config validation") {
  const json good = small("square_shrink", {1.0 / 16}).to_json();
  CHECK_NOTHROW(ScenarioConfig::from_json(good).validate());
  CHECK(ScenarioConfig::from_json(good).to_json() == good);

  auto bad = [&](const char* key, json value) {
    json j = good;
    j[key] = std::move(value);
    CAPTURE(key);
    CHECK_THROWS_AS(ScenarioConfig::from_json(j).validate(), Error);
  };
  bad("h", 0.3);
  bad("h", -0.0625);
  bad("eps", json::array({0.01}));
  bad("m", json::array({0}));
  bad("q", 0.0);
  bad("scenario", "triangle");
  bad("unknown_key", 1);
  bad("coefficient", json{{"type", "nope"}});

  json mask = good;
  mask["scenario"] = "element_mask";
  CHECK_THROWS_AS(ScenarioConfig::from_json(mask).validate(), Error);
}

TEST_CASE("config files: single object or list") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto one = dir / "specpert_one.json", many = dir / "specpert_many.json";
  const json c = small("l_shape", {1.0 / 16}).to_json();
  std::ofstream(one) << c.dump();
  std::ofstream(many) << json{{"scenarios", {c, c}}}.dump();
  CHECK(load_configs(one.string()).size() == 1);
  CHECK(load_configs(many.string()).size() == 2);
  CHECK_THROWS_AS(load_configs((dir / "specpert_missing.json").string()), Error);
  std::filesystem::remove(one);
  std::filesystem::remove(many);
}

TEST_CASE("sweep fit") {
  const SweepFit f = sweep_fit({{0.2, 2.0}, {0.1, 3.0}, {0.4, 1.5}});
  CHECK(f.cells == 3);
  CHECK(f.c_fit == 3.0);
  CHECK(f.spread == doctest::Approx(2.0));
  CHECK(f.growth == doctest::Approx(2.0)); // v(0.1) / v(0.4)
  CHECK(sweep_fit({{0.1, 1.0}}).growth == 0.0);
}

TEST_CASE("verify suites") {
  CHECK_THROWS_AS(verify_abstract(1, 0), Error);
  const VerifySummary a = verify_abstract(7, 60), b = verify_abstract(7, 60);
  CHECK(a.passed());
  CHECK(a.to_json().dump() == b.to_json().dump());
  for (const auto& p : a.properties) {
    CAPTURE(p.name);
    CHECK(p.checked > 0);
    CHECK(p.violations == 0);
  }
  const VerifySummary f = verify_fem(3, 20);
  for (const auto& p : f.properties) {
    CAPTURE(p.name);
    CAPTURE(p.counterexample.dump());
    CHECK(p.violations == 0);
  }
}
