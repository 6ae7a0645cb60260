// upstairs: run rolling/submersion experiments and acceptance suites.

#include "upstairs/acceptance.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace upstairs;

namespace {

struct Flags {
  std::optional<double> tol;
  std::optional<double> T;
  std::optional<std::uint64_t> seed;
  std::string output_dir = ".";
  std::string format = "csv";
};

int cmd_run(const std::string& target, const Flags& f) {
  ScenarioOverrides o{f.tol, f.T, f.seed};
  Scenario sc;
  std::string stem;
  if (std::filesystem::is_regular_file(target)) {
    if (std::filesystem::path(target).extension() == ".toml")
      throw ScenarioError(kExitParse, "TOML scenario files are not supported; write the scenario as JSON");
    std::ifstream is(target);
    std::stringstream ss;
    ss << is.rdbuf();
    sc = parse_scenario(ss.str(), o);
    stem = std::filesystem::path(target).stem().string();
  } else {
    const auto names = scenario_catalog();
    if (std::find(names.begin(), names.end(), target) == names.end())
      throw ScenarioError(kExitParse, "'" + target + "' is neither a readable file nor a catalog scenario");
    sc = scenario_from_json(catalog_scenario(target), o);
    stem = target;
  }
  const auto out = run_scenario(sc);
  const auto paths = write_outcome(out, f.output_dir, stem, f.format);
  for (const auto& [k, c] : out.invariants)
    std::cout << (c.pass() ? "  ok   " : "  FAIL ") << k << " = " << c.value << " (limit " << c.limit << ")\n";
  if (out.truncated) std::cout << "  run truncated at the chart boundary\n";
  if (out.summary.contains("error")) std::cout << "  error: " << out.summary.at("error").get<std::string>() << '\n';
  for (const auto& p : paths) std::cout << "wrote " << p << '\n';
  return out.exit_code;
}

int cmd_verify(const std::string& suite, const Flags& f) {
  std::vector<CriterionResult> results;
  try {
    results = run_suite(suite);
  } catch (const InputError& e) {
    std::cerr << e.what() << '\n';
    return kExitValidation;
  }
  nlohmann::json report = {{"suite", suite}, {"version", UPSTAIRS_VERSION}, {"criteria", nlohmann::json::array()}};
  bool ok = true;
  for (const auto& r : results) {
    std::cout << summary_line(r) << '\n';
    report["criteria"].push_back(to_json(r));
    ok = ok && r.pass();
  }
  report["pass"] = ok;
  if (f.format == "json") std::cout << report.dump(2) << '\n';
  std::filesystem::create_directories(f.output_dir);
  const auto path = (std::filesystem::path(f.output_dir) / ("verify-" + suite + ".json")).string();
  std::ofstream(path + ".tmp") << report.dump(2) << '\n';
  std::filesystem::rename(path + ".tmp", path);
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hamiltonian flows upstairs on submersions and rolling-manifold geodesics"};
  app.set_version_flag("--version", std::string(UPSTAIRS_VERSION));
  app.require_subcommand(1);
  Flags f;
  auto add_flags = [&f](CLI::App* sub) {
    sub->add_option("--tol", f.tol, "integrator tolerance (absolute and relative)")->check(CLI::PositiveNumber);
    sub->add_option("--T", f.T, "horizon")->check(CLI::PositiveNumber);
    sub->add_option("--seed", f.seed, "seed for randomized parts");
    sub->add_option("--output-dir", f.output_dir, "directory for artifacts");
    sub->add_option("--format", f.format, "trajectory/report format")->check(CLI::IsMember({"csv", "json"}));
  };

  std::string target;
  auto* run = app.add_subcommand("run", "run a scenario file or catalog scenario");
  run->add_option("scenario", target, "scenario file or catalog name")->required();
  add_flags(run);

  std::string suite;
  auto* verify = app.add_subcommand("verify", "run an acceptance suite");
  verify->add_option("suite", suite, "suite name")->required();
  add_flags(verify);

  auto* cat = app.add_subcommand("catalog", "list or show catalog scenarios");
  cat->require_subcommand(1);
  auto* list = cat->add_subcommand("list", "list scenarios, charts, testbeds and suites");
  std::string show_name;
  auto* show = cat->add_subcommand("show", "print a catalog scenario");
  show->add_option("name", show_name)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitParse;
  }

  try {
    if (*run) return cmd_run(target, f);
    if (*verify) return cmd_verify(suite, f);
    if (*list) {
      std::cout << "scenarios:\n";
      for (const auto& n : scenario_catalog())
        std::cout << "  " << n << "  (" << catalog_scenario(n).at("kind").get<std::string>() << ")\n";
      std::cout << "charts:\n";
      for (const auto& n : chart_catalog()) std::cout << "  " << n << '\n';
      std::cout << "testbeds:\n";
      for (const auto& n : testbed_catalog()) std::cout << "  " << n << '\n';
      std::cout << "suites:\n";
      for (const auto& n : suite_names()) std::cout << "  " << n << '\n';
      return 0;
    }
    if (*show) {
      std::cout << catalog_scenario(show_name).dump(2) << '\n';
      return 0;
    }
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
