// specpert: run scenario sweeps and property suites.
//
//   specpert run    --config cfg.json --out dir     report.json + rows.csv per config
//   specpert sweep  --config cfg.json --csv rows.csv
//   specpert verify --suite abstract|fem|all --seed 1 --cases 500
//
// Exit status is 0 only when every checked assertion passed.

#include "specpert/error.hpp"
#include "specpert/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace specpert;

namespace {

void report_failures(const ScenarioReport& rep) {
  for (const auto& a : rep.assertions)
    if (!a.passed) std::cerr << rep.config.scenario << ": " << a.name << " failed: " << a.detail << "\n";
  for (const auto& c : rep.cells)
    if (c.status == "failed") std::cerr << c.message << "\n";
}

int run(const std::string& config, const std::string& out_dir) {
  const auto configs = load_configs(config);
  fs::create_directories(out_dir);
  nlohmann::json all = nlohmann::json::array();
  std::vector<ReportRow> rows;
  bool ok = true;
  for (const auto& cfg : configs) {
    const ScenarioReport rep = run_scenario(cfg);
    report_failures(rep);
    ok = ok && rep.passed();
    all.push_back(rep.to_json());
    rows.insert(rows.end(), rep.rows.begin(), rep.rows.end());
  }
  std::ofstream js(fs::path(out_dir) / "report.json");
  write_json(js, all.size() == 1 ? all[0] : nlohmann::json{{"scenarios", all}});
  std::ofstream csv(fs::path(out_dir) / "rows.csv");
  write_csv(csv, rows);
  if (!js || !csv) throw Error("cannot write to " + out_dir);
  std::cout << rows.size() << " rows, " << (ok ? "all assertions passed" : "assertions FAILED") << "\n";
  return ok ? 0 : 1;
}

int sweep(const std::string& config, const std::string& csv_path) {
  const auto configs = load_configs(config);
  std::vector<ReportRow> rows;
  bool ok = true;
  for (const auto& cfg : configs) {
    const ScenarioReport rep = run_scenario(cfg);
    report_failures(rep);
    ok = ok && rep.passed();
    rows.insert(rows.end(), rep.rows.begin(), rep.rows.end());
  }
  std::ofstream csv(csv_path);
  write_csv(csv, rows);
  if (!csv) throw Error("cannot write " + csv_path);
  return ok ? 0 : 1;
}

int verify(const std::string& suite, std::uint64_t seed, int cases) {
  std::vector<VerifySummary> results;
  if (suite == "abstract" || suite == "all") results.push_back(verify_abstract(seed, cases));
  if (suite == "fem" || suite == "all") results.push_back(verify_fem(seed, cases));
  bool ok = true;
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : results) {
    out.push_back(r.to_json());
    ok = ok && r.passed();
  }
  write_json(std::cout, out.size() == 1 ? out[0] : nlohmann::json{{"suites", out}, {"passed", ok}});
  return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain perturbation of Dirichlet eigenvalues: sweeps and checks"};
  app.require_subcommand(1);

  std::string config, out_dir, csv_path, suite = "all";
  std::uint64_t seed = 1;
  int cases = 500;

  auto* run_cmd = app.add_subcommand("run", "Run the scenarios of a config, write report.json and rows.csv");
  run_cmd->add_option("--config", config, "Config JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "Run the scenarios of a config, write rows only");
  sweep_cmd->add_option("--config", config, "Config JSON")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--csv", csv_path, "Output CSV")->required();

  auto* verify_cmd = app.add_subcommand("verify", "Randomized property suites");
  verify_cmd->add_option("--suite", suite, "abstract, fem or all")
      ->check(CLI::IsMember({"abstract", "fem", "all"}));
  verify_cmd->add_option("--seed", seed, "RNG seed");
  verify_cmd->add_option("--cases", cases, "Random cases");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(config, out_dir);
    if (*sweep_cmd) return sweep(config, csv_path);
    return verify(suite, seed, cases);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
