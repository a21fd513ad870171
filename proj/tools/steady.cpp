// steady [scenario] --config run.json [--out DIR] [--seed N] [--threads N]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "steady/scenarios.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hamiltonian and Lindbladian estimation on simulated hardware"};
  std::string scenario;
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool quiet = false;
  app.add_option("scenario", scenario, "scenario name; must agree with the config when both are given");
  app.add_option("-c,--config", config_path, "scenario config (JSON)")->required();
  app.add_option("-o,--out", out_dir, "output directory");
  app.add_option("--seed", seed, "override the data seed");
  app.add_option("--threads", threads, "worker threads (default: STEADY_THREADS or 1)")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "no progress lines");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    steady::json j = steady::read_json_file(config_path);
    if (!scenario.empty()) {
      if (!j.is_object()) throw steady::ConfigError("config must be a JSON object");
      if (!j.contains("scenario")) j["scenario"] = scenario;
      if (j["scenario"] != scenario) {
        throw steady::ConfigError("scenario '" + scenario + "' on the command line disagrees with the config");
      }
    }
    steady::ScenarioConfig cfg = steady::config_from_json(j);
    if (seed) cfg.seed = *seed;
    cfg.threads = threads ? *threads : steady::default_threads();
    const steady::Progress progress = [quiet](const std::string& line) {
      if (!quiet) std::cerr << line << std::endl;
    };
    const auto manifest = steady::run_scenario(cfg, out_dir, progress);
    std::cout << manifest.dump(2) << std::endl;
    return 0;
  } catch (const steady::ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  } catch (const steady::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << std::endl;
    return 3;
  } catch (const steady::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  }
}
