#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "cpsgd/harness.hpp"
#include "cpsgd/rng.hpp"

namespace cpsgd {

namespace {

using nlohmann::json;

std::string out_dir(const ExperimentConfig& config) {
  return config.output_dir.empty() ? std::string("out") : config.output_dir;
}

std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

Vec bias_vector(const ProblemConfig& p) {
  if (p.bias.empty()) return Vec();
  return Eigen::Map<const Vec>(p.bias.data(), static_cast<Eigen::Index>(p.bias.size()));
}

Trace run_single(const ExperimentConfig& config, const Topology& topology, const AlgorithmSpec& spec,
                 std::shared_ptr<const Problem> problem, std::uint64_t seed, const std::optional<Optimum>& reference,
                 Execution exec) {
  const ProblemConfig& p = config.problem;
  const std::uint64_t stream = run_seed(seed, spec.name);
  NoisyOracle oracle(std::move(problem), p.noise.stddev(), stream, bias_vector(p));
  const Stack x0 = uniform_initial_iterates(topology.size(), p.d, p.init_low, p.init_high, seed);
  RunOptions options;
  options.rounds = config.rounds;
  options.seed = stream;
  options.lyapunov = config.lyapunov;
  options.reference = reference;
  options.exec = exec;
  return run(spec, oracle, topology, x0, options);
}

json stats(const std::vector<double>& values) {
  if (values.empty()) return nullptr;
  double sum = 0.0;
  for (double v : values) sum += v;
  return {{"mean", sum / static_cast<double>(values.size())},
          {"min", *std::min_element(values.begin(), values.end())},
          {"max", *std::max_element(values.begin(), values.end())}};
}

}  // namespace

std::uint64_t run_seed(std::uint64_t seed, const std::string& algorithm) {
  Fnv1a h;
  h.add(seed);
  h.add_bytes(algorithm.data(), algorithm.size());
  return h.value();
}

Optimum reference_optimum(const ExperimentConfig& config, std::uint64_t seed, bool use_cache) {
  const auto problem = build_problem(config, seed);
  const std::string fingerprint = hex(problem->fingerprint());
  const std::string cache = join(out_dir(config), "oracle_seed" + std::to_string(seed) + ".json");

  if (use_cache && std::filesystem::exists(cache)) {
    std::ifstream in(cache);
    try {
      const json j = json::parse(in);
      if (j.at("fingerprint") == fingerprint && j.at("tol").get<double>() == config.reference.tol) {
        const auto xs = j.at("x").get<std::vector<double>>();
        Optimum o;
        o.x = Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
        o.f = j.at("f").get<double>();
        return o;
      }
    } catch (const json::exception&) {
      // stale or corrupt cache: recompute
    }
  }

  Optimum o;
  json j{{"seed", seed}, {"fingerprint", fingerprint}, {"tol", config.reference.tol}};
  if (auto closed = problem->closed_form_optimum()) {
    o = *closed;
    j["source"] = "closed_form";
    j["grad_norm"] = problem->gradient(o.x).norm();
  } else {
    const ReferenceSolve s = solve_reference_optimum(*problem, config.reference.tol, config.reference.max_iters);
    o.x = s.x;
    o.f = s.f;
    j["source"] = "descent";
    j["grad_norm"] = s.grad_norm;
    j["iterations"] = s.iterations;
  }
  j["x"] = std::vector<double>(o.x.data(), o.x.data() + o.x.size());
  j["f"] = o.f;
  if (use_cache) write_file_atomic(cache, j.dump(2) + "\n");
  return o;
}

ExperimentResult run_experiment(const ExperimentConfig& config, Execution exec) {
  const std::string dir = out_dir(config);
  std::filesystem::create_directories(dir);
  const Topology topology = build_topology(config);
  const std::size_t n_alg = config.algorithms.size();
  const std::size_t n_seed = config.seeds.size();

  std::vector<AlgorithmSpec> specs;
  for (std::size_t a = 0; a < n_alg; ++a) specs.push_back(algorithm_spec(config, a));

  // One problem instance and one reference per seed, shared by every algorithm.
  std::vector<std::shared_ptr<const Problem>> problems(n_seed);
  std::vector<std::optional<Optimum>> references(n_seed);
  std::vector<std::string> seed_errors(n_seed);
  for (std::size_t s = 0; s < n_seed; ++s) {
    try {
      problems[s] = build_problem(config, config.seeds[s]);
      references[s] = reference_optimum(config, config.seeds[s]);
    } catch (const std::exception& e) {
      seed_errors[s] = e.what();
    }
  }

  struct Outcome {
    std::optional<Trace> trace;
    std::string error;
  };
  const std::size_t jobs = n_alg * n_seed;
  std::vector<Outcome> outcomes(jobs);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t job = 0; job < jobs; ++job) {
    const std::size_t a = job / n_seed, s = job % n_seed;
    Outcome& out = outcomes[job];
    if (!seed_errors[s].empty()) {
      out.error = seed_errors[s];
      continue;
    }
    try {
      Trace trace = run_single(config, topology, specs[a], problems[s], config.seeds[s], references[s], exec);
      const std::string stem = join(dir, specs[a].name + "_seed" + std::to_string(config.seeds[s]));
      write_file_atomic(stem + ".csv", trace_csv(trace));
      write_file_atomic(stem + ".json", trace.meta.to_json().dump(2) + "\n");
      out.trace = std::move(trace);
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  }

  ExperimentResult result;
  result.runs = jobs;
  json failures = json::array();
  json algorithms = json::object();
  for (std::size_t a = 0; a < n_alg; ++a) {
    std::vector<double> residual, grad, consensus;
    for (std::size_t s = 0; s < n_seed; ++s) {
      const Outcome& out = outcomes[a * n_seed + s];
      if (!out.trace) {
        result.failures.push_back({specs[a].name, config.seeds[s], out.error});
        failures.push_back({{"algorithm", specs[a].name}, {"seed", config.seeds[s]}, {"error", out.error}});
        continue;
      }
      result.trace_files.push_back(join(dir, specs[a].name + "_seed" + std::to_string(config.seeds[s]) + ".csv"));
      const TraceRow& last = out.trace->rows.back();
      residual.push_back(last.residual);
      grad.push_back(last.grad_norm_sq);
      consensus.push_back(last.consensus_error);
    }
    algorithms[specs[a].name] = {{"runs", residual.size()},
                                 {"final_residual", stats(residual)},
                                 {"final_grad_norm_sq", stats(grad)},
                                 {"final_consensus_error", stats(consensus)}};
  }
  result.summary = {{"rounds", config.rounds}, {"seeds", config.seeds}, {"algorithms", algorithms},
                    {"failures", result.failures.size()}};
  write_file_atomic(join(dir, "summary.json"), result.summary.dump(2) + "\n");
  write_file_atomic(join(dir, "failures.json"), failures.dump(2) + "\n");
  return result;
}

nlohmann::json SweepResult::to_json() const {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"agents", r.agents},
                   {"omega", r.omega},
                   {"mean_grad_norm_sq", r.mean_grad_norm_sq},
                   {"per_seed", r.per_seed}});
  return {{"rows", out}, {"warnings", warnings}};
}

SweepResult speedup_sweep(const ExperimentConfig& config, const std::vector<int>& agents, long long rounds,
                          double beta2, Execution exec) {
  if (agents.empty()) throw Error(Errc::ValidationError, "agents: expected at least one agent count");
  if (rounds < 1) throw Error(Errc::ValidationError, "rounds: must be >= 1");
  if (!(beta2 > 0.0)) throw Error(Errc::ValidationError, "beta2: must be positive");

  const json* base = nullptr;
  std::size_t base_index = 0;
  for (; base_index < config.algorithms.size(); ++base_index)
    if (config.algorithms[base_index].at("kind") == "cp_sgd") {
      base = &config.algorithms[base_index];
      break;
    }
  if (!base) throw Error(Errc::ValidationError, "algorithms: sweep needs a cp_sgd entry");
  const json& sched = base->at("schedule");
  const std::string kind = sched.at("kind");
  double beta1 = 0.0;
  if (kind == "theorem1" || kind == "corollary1") {
    beta1 = sched.at("beta1").get<double>();
  } else if (kind == "constant") {
    beta1 = sched.at("gamma").get<double>() / sched.at("omega").get<double>();
  } else {
    throw Error(Errc::ValidationError, "algorithms: sweep needs a constant-gain cp_sgd schedule");
  }
  const double alpha_x = sched.at("alpha_x").get<double>();
  const std::string name = base->at("name");

  SweepResult result;
  result.rows.resize(agents.size());
  const std::size_t n_seed = config.seeds.size();
  std::vector<double> values(agents.size() * n_seed, 0.0);
  std::vector<std::string> errors(agents.size() * n_seed);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t job = 0; job < values.size(); ++job) {
    const std::size_t r = job / n_seed, s = job % n_seed;
    try {
      ExperimentConfig c = config;
      c.problem.n = agents[r];
      c.rounds = rounds;
      c.lyapunov = false;
      c.topology = TopologyConfig{};
      c.topology.generator = "ring_chords";
      const Topology topology = build_topology(c);
      const AlgorithmSpec spec = AlgorithmSpec::cp_sgd(name, algorithm_spec(c, base_index).compressor,
                                                       Schedule::corollary1(beta1, beta2, rounds, agents[r], alpha_x));
      const Trace trace =
          run_single(c, topology, spec, build_problem(c, config.seeds[s]), config.seeds[s], std::nullopt, exec);
      double sum = 0.0;
      for (long long k = 0; k < rounds; ++k) sum += trace.rows[static_cast<std::size_t>(k)].grad_norm_sq;
      values[job] = sum / static_cast<double>(rounds);
    } catch (const std::exception& e) {
      errors[job] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(Errc::ValidationError, "sweep run failed: " + e);

  for (std::size_t r = 0; r < agents.size(); ++r) {
    SweepRow& row = result.rows[r];
    row.agents = agents[r];
    row.omega = Schedule::corollary1(beta1, beta2, rounds, agents[r], alpha_x).at(0).omega;
    row.per_seed.assign(values.begin() + static_cast<std::ptrdiff_t>(r * n_seed),
                        values.begin() + static_cast<std::ptrdiff_t>((r + 1) * n_seed));
    double sum = 0.0;
    for (double v : row.per_seed) sum += v;
    row.mean_grad_norm_sq = sum / static_cast<double>(n_seed);

    // beta3 is not computable; 4 beta2 L_f stands in for it.
    ExperimentConfig c = config;
    c.problem.n = agents[r];
    const double lf = build_problem(c, config.seeds.front())->smoothness_estimate();
    const double beta3 = 4.0 * beta2 * lf;
    const double guard = agents[r] * (beta3 / beta2) * (beta3 / beta2);
    if (static_cast<double>(rounds) <= guard) {
      std::ostringstream w;
      w << "n=" << agents[r] << ": T=" << rounds << " is below the heuristic horizon n(beta3/beta2)^2 ~ " << guard;
      result.warnings.push_back(w.str());
    }
  }
  return result;
}

}  // namespace cpsgd
