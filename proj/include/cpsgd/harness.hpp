#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpsgd/run.hpp"

namespace cpsgd {

struct NoiseConfig {
  double level = 0.5;
  bool is_variance = true;  // "as": "variance" | "std"
  double stddev() const;
};

struct ProblemConfig {
  std::string kind = "classification";  // classification | quadratic
  int n = 6;
  int m = 200;
  int d = 10;
  double lambda = 0.001;
  double alpha = 1.0;
  QuadraticSpec quadratic;
  NoiseConfig noise;
  std::vector<double> bias;  // empty: unbiased
  std::string dataset;       // optional classification dataset JSON; relative to the config file
  double init_low = 0.0;
  double init_high = 1.0;
};

struct TopologyConfig {
  // Exactly one source: an inline graph, a graph file, or a generator.
  std::optional<nlohmann::json> graph;
  std::string file;
  std::string generator;  // six_agent | ring_chords
};

struct ReferenceConfig {
  double tol = 1e-8;
  int max_iters = 200000;
};

struct ExperimentConfig {
  ProblemConfig problem;
  TopologyConfig topology;
  std::vector<nlohmann::json> algorithms;  // canonical algorithm entries, see algorithm_spec()
  long long rounds = 0;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;  // empty: caller decides
  bool lyapunov = false;
  ReferenceConfig reference;
  std::string base_dir;  // directory relative paths resolve against; not serialized

  nlohmann::json to_json() const;
};

// Throws ParseError for malformed JSON and ValidationError (message starts
// with the offending field path) for anything else.
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

// Builds the spec of algorithm `index`, resolving corollary1 horizons and b-bits
// calibration against the config's problem.
AlgorithmSpec algorithm_spec(const ExperimentConfig& config, std::size_t index);
Topology build_topology(const ExperimentConfig& config);
std::shared_ptr<const Problem> build_problem(const ExperimentConfig& config, std::uint64_t seed);

// Noise and compression stream seed of one (seed, algorithm) run.
std::uint64_t run_seed(std::uint64_t seed, const std::string& algorithm);

struct RunFailure {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::string error;
};

struct ExperimentResult {
  std::vector<std::string> trace_files;  // CSV paths, metadata sits next to each as .json
  std::vector<RunFailure> failures;
  std::size_t runs = 0;
  nlohmann::json summary;
};

// Writes <out>/<algorithm>_seed<s>.csv and .json for every (algorithm, seed),
// failures.json when any run failed, and summary.json.
ExperimentResult run_experiment(const ExperimentConfig& config, Execution exec = Execution::parallel);

// x*, f* for the config's problem at `seed`: closed form when available,
// otherwise a centralized descent solve. Cached in <out>/oracle_seed<s>.json.
Optimum reference_optimum(const ExperimentConfig& config, std::uint64_t seed, bool use_cache = true);

struct SweepRow {
  int agents = 0;
  double mean_grad_norm_sq = 0.0;  // seed average of (1/T) sum_k ||grad f(xbar_k)||^2
  double omega = 0.0;
  std::vector<double> per_seed;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> warnings;
  nlohmann::json to_json() const;
};

// CP-SGD over ring+chords graphs with omega = beta2 sqrt(T) / sqrt(n). Uses the
// config's problem section (with n replaced) and its first cp_sgd algorithm's
// compressor, beta1 and alpha_x.
SweepResult speedup_sweep(const ExperimentConfig& config, const std::vector<int>& agents, long long rounds,
                          double beta2, Execution exec = Execution::parallel);

}  // namespace cpsgd
