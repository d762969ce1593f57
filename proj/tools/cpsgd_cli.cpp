#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cpsgd/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kConfigError = 2;

bool is_config_error(const cpsgd::Error& e) {
  switch (e.code()) {
    case cpsgd::Errc::ParseError:
    case cpsgd::Errc::ValidationError:
    case cpsgd::Errc::IoError:
      return true;
    default:
      return false;
  }
}

// --out beats the config file, which beats CPSGD_OUT_DIR.
void apply_out_dir(cpsgd::ExperimentConfig& config, const std::string& out) {
  if (!out.empty()) {
    config.output_dir = out;
  } else if (config.output_dir.empty()) {
    const char* env = std::getenv("CPSGD_OUT_DIR");
    config.output_dir = env && *env ? env : "out";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed primal-dual SGD experiments"};
  app.require_subcommand(1);

  std::string config_path, out;
  std::vector<std::uint64_t> seeds;
  bool lyapunov = false, serial = false;

  auto* run_cmd = app.add_subcommand("run", "Run every (algorithm, seed) pair of a config");
  run_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run_cmd->add_option("--out", out, "Output directory");
  run_cmd->add_option("--seeds", seeds, "Override the seed list, e.g. 1,2,3")->delimiter(',');
  run_cmd->add_flag("--lyapunov", lyapunov, "Record Lyapunov terms for CP-SGD runs");
  run_cmd->add_flag("--serial", serial, "Use the single-threaded round kernels");

  std::vector<int> agents;
  long long rounds = 0;
  double beta2 = 0.0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Mean squared gradient norm versus agent count");
  sweep_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  sweep_cmd->add_option("--agents", agents, "Agent counts, e.g. 2,4,8")->delimiter(',')->required();
  sweep_cmd->add_option("--rounds", rounds, "Rounds T per run")->required();
  sweep_cmd->add_option("--beta2", beta2, "omega = beta2 sqrt(T/n); defaults to the schedule's beta2 or 1");
  sweep_cmd->add_option("--out", out, "Output directory");

  auto* oracle_cmd = app.add_subcommand("oracle", "Compute and cache x*, f* for every seed");
  oracle_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  oracle_cmd->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  cpsgd::ExperimentConfig config;
  try {
    config = cpsgd::load_config(config_path);
    if (!seeds.empty()) config.seeds = seeds;
    if (lyapunov) config.lyapunov = true;
    apply_out_dir(config, out);
  } catch (const cpsgd::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  const auto exec = serial ? cpsgd::Execution::serial : cpsgd::Execution::parallel;

  try {
    if (*run_cmd) {
      const auto result = cpsgd::run_experiment(config, exec);
      for (const auto& f : result.trace_files) std::cout << f << '\n';
      for (const auto& f : result.failures)
        std::cerr << "failed: " << f.algorithm << " seed " << f.seed << ": " << f.error << '\n';
      return result.failures.empty() ? kOk : kPartial;
    }
    if (*sweep_cmd) {
      if (beta2 <= 0.0) {
        beta2 = 1.0;
        for (const auto& a : config.algorithms)
          if (a.at("kind") == "cp_sgd" && a.at("schedule").contains("beta2")) {
            beta2 = a.at("schedule").at("beta2").get<double>();
            break;
          }
      }
      const auto result = cpsgd::speedup_sweep(config, agents, rounds, beta2, exec);
      std::ostringstream csv;
      csv << "agents,omega,mean_grad_norm_sq\n";
      for (const auto& r : result.rows) csv << r.agents << ',' << r.omega << ',' << r.mean_grad_norm_sq << '\n';
      std::filesystem::create_directories(config.output_dir);
      cpsgd::write_file_atomic((std::filesystem::path(config.output_dir) / "sweep.csv").string(), csv.str());
      cpsgd::write_file_atomic((std::filesystem::path(config.output_dir) / "sweep.json").string(),
                               result.to_json().dump(2) + "\n");
      std::cout << csv.str();
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
      return kOk;
    }
    int failed = 0;
    for (auto seed : config.seeds) {
      try {
        const auto o = cpsgd::reference_optimum(config, seed);
        std::cout << "seed " << seed << ": f* = " << o.f << '\n';
      } catch (const std::exception& e) {
        std::cerr << "seed " << seed << ": " << e.what() << '\n';
        ++failed;
      }
    }
    return failed ? kPartial : kOk;
  } catch (const cpsgd::Error& e) {
    std::cerr << e.what() << '\n';
    return is_config_error(e) ? kConfigError : kPartial;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kPartial;
  }
}
