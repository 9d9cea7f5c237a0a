// Command-line front end: simulate / fit / mc / report.
//
// Exit codes: 0 success, 2 configuration or input problem, 3 numerical
// failure. Diagnostics go to stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "oulmm/estimators.hpp"
#include "oulmm/io.hpp"
#include "oulmm/mc.hpp"
#include "oulmm/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace oulmm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open: " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw input_error("invalid JSON in " + path + ": " + e.what());
  }
}

int env_workers() {
  const char* env = std::getenv("OULMM_WORKERS");
  if (!env) return 1;
  try {
    const int w = std::stoi(env);
    if (w < 1) throw input_error("OULMM_WORKERS must be >= 1");
    return w;
  } catch (const input_error&) {
    throw;
  } catch (const std::exception&) {
    throw input_error(std::string("OULMM_WORKERS is not an integer: ") + env);
  }
}

int run_simulate(const std::string& config_path, const std::string& out_dir) {
  const Scenario sc = read_scenario_json(config_path);
  fs::create_directories(out_dir);
  const Dataset data = simulate_dataset(sc);
  const auto dir = fs::path(out_dir);
  write_dataset_csv(data, sc.psi, (dir / "data.csv").string(),
                    (dir / "data.json").string());
  write_scenario_json(sc, (dir / "scenario.json").string());
  std::cerr << "wrote " << data.n_individuals() << " individuals ("
            << data.total_obs() << " rows) to " << (dir / "data.csv").string()
            << "\n";
  return kExitOk;
}

int run_fit(const std::string& data_path, const std::string& meta_path,
            const std::string& method, const std::string& out_path) {
  PsiParameterization psi;
  const Dataset data = read_dataset_csv(data_path, meta_path, &psi);
  FitConfig cfg;
  cfg.psi = psi;
  FitResult fit;
  if (method == "joint") {
    fit = fit_joint(data, cfg);
  } else if (method == "stepwise") {
    fit = fit_stepwise(data, cfg).fit;
  } else {
    throw input_error("--method must be joint or stepwise, got: " + method);
  }
  write_fit_json(fit, out_path);
  std::cerr << "fit (" << method << ") " << (fit.converged ? "converged" : "did NOT converge")
            << "; objective " << fit.objective << "; wrote " << out_path << "\n";
  return kExitOk;
}

int run_mc(const std::string& config_path, const std::string& out_dir,
           int workers_flag) {
  const json j = load_json_file(config_path);
  McConfig cfg;
  cfg.scenario = read_scenario_json_string(
      j.contains("scenario") ? j["scenario"].dump() : std::string("{}"));
  cfg.n_reps = j.value("n_reps", cfg.n_reps);
  if (j.contains("n_values"))
    cfg.n_values = j["n_values"].get<std::vector<int>>();
  if (j.contains("estimators")) {
    cfg.run_joint = false;
    cfg.run_stepwise = false;
    for (const auto& e : j["estimators"]) {
      const std::string name = e.get<std::string>();
      if (name == "joint")
        cfg.run_joint = true;
      else if (name == "stepwise")
        cfg.run_stepwise = true;
      else
        throw input_error("unknown estimator in config: " + name);
    }
  }
  cfg.base_seed = j.value("base_seed", cfg.base_seed);
  cfg.workers = j.value("workers", env_workers());
  if (workers_flag > 0) cfg.workers = workers_flag;
  cfg.output_dir = out_dir;

  const McReport report = run_study(cfg);
  long failures = 0;
  for (const auto& r : report.records)
    if (!r.converged) ++failures;
  std::cerr << report.records.size() << " fits, " << failures
            << " non-converged; tables in " << out_dir << "\n";
  return kExitOk;
}

int run_report(const std::string& in_dir, const std::string& out_dir) {
  const std::string text = render_report(in_dir);
  fs::create_directories(out_dir);
  const std::string out_path = (fs::path(out_dir) / "report.txt").string();
  std::ofstream out(out_path);
  if (!out) throw input_error("cannot open for writing: " + out_path);
  out << text;
  std::cout << text;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear mixed-effects models with integrated-OU system noise"};
  app.require_subcommand(1);

  std::string sim_config, sim_out;
  auto* sim = app.add_subcommand("simulate", "simulate a dataset from a scenario JSON");
  sim->add_option("--config", sim_config, "scenario JSON")->required();
  sim->add_option("--out", sim_out, "output directory")->required();

  std::string fit_data, fit_meta, fit_method = "joint", fit_out;
  auto* fit = app.add_subcommand("fit", "fit one dataset");
  fit->add_option("--data", fit_data, "dataset CSV")->required();
  fit->add_option("--meta", fit_meta, "dataset JSON sidecar")->required();
  fit->add_option("--method", fit_method, "joint|stepwise");
  fit->add_option("--out", fit_out, "output fit JSON")->required();

  std::string mc_config, mc_out;
  int mc_workers = 0;
  auto* mc = app.add_subcommand("mc", "run a Monte Carlo study");
  mc->add_option("--config", mc_config, "study JSON")->required();
  mc->add_option("--out", mc_out, "output directory")->required();
  mc->add_option("--workers", mc_workers,
                 "worker threads (overrides OULMM_WORKERS)");

  std::string rep_in, rep_out;
  auto* rep = app.add_subcommand("report", "render study CSVs as text tables");
  rep->add_option("--in", rep_in, "study output directory")->required();
  rep->add_option("--out", rep_out, "directory for report.txt")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitInput;
  }

  try {
    if (sim->parsed()) return run_simulate(sim_config, sim_out);
    if (fit->parsed()) return run_fit(fit_data, fit_meta, fit_method, fit_out);
    if (mc->parsed()) return run_mc(mc_config, mc_out, mc_workers);
    if (rep->parsed()) return run_report(rep_in, rep_out);
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}
