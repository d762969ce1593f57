#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cpsgd/harness.hpp"

using namespace cpsgd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kFig2 = std::string(CPSGD_SOURCE_DIR) + "/configs/paper_fig2.json";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cpsgd_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json fig2_json() {
  std::ifstream in(kFig2);
  return json::parse(in);
}

std::optional<Errc> error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

// A short, cheap version of the figure config.
json small_config(long long rounds) {
  json j = fig2_json();
  j["problem"]["m"] = 40;
  j["rounds"] = rounds;
  return j;
}

}  // namespace

TEST_CASE("shipped configs load") {
  const ExperimentConfig c = load_config(kFig2);
  CHECK(c.problem.n == 6);
  CHECK(c.algorithms.size() == 5);
  CHECK(c.rounds == 10000);
  CHECK(algorithm_spec(c, 2).compressor.k == 2);
  const ExperimentConfig q = load_config(std::string(CPSGD_SOURCE_DIR) + "/configs/sweep_quadratic.json");
  CHECK(q.problem.kind == "quadratic");
  CHECK(q.seeds.size() == 10);
}

TEST_CASE("config errors name the offending field") {
  json j = fig2_json();
  j["algorithms"][2]["schedule"]["alpha_x"] = 1.5;
  CHECK(error_of([&] { parse_config(j); }) == Errc::ValidationError);
  CHECK(message_of([&] { parse_config(j); }).rfind("ValidationError: algorithms[2]", 0) == 0);

  j = fig2_json();
  j["rounds"] = -3;
  CHECK(message_of([&] { parse_config(j); }).rfind("ValidationError: rounds", 0) == 0);

  j = fig2_json();
  j["seeds"] = json::array();
  CHECK(message_of([&] { parse_config(j); }).rfind("ValidationError: seeds", 0) == 0);

  j = fig2_json();
  j["problem"]["colour"] = "blue";
  CHECK(message_of([&] { parse_config(j); }).rfind("ValidationError: problem.colour", 0) == 0);

  j = fig2_json();
  j["algorithms"][1]["name"] = "DSGD";
  CHECK(message_of([&] { parse_config(j); }).rfind("ValidationError: algorithms[1].name", 0) == 0);

  j = fig2_json();
  j["algorithms"][0]["name"] = "../evil";
  CHECK(error_of([&] { parse_config(j); }) == Errc::ValidationError);

  j = fig2_json();
  j["topology"]["n"] = 5;
  CHECK(error_of([&] { parse_config(j); }) == Errc::ValidationError);

  j = fig2_json();
  j["algorithms"][2]["compressor"]["k"] = 11;
  CHECK(message_of([&] { parse_config(j); }).rfind("ValidationError: algorithms[2]", 0) == 0);

  const fs::path dir = scratch("malformed");
  std::ofstream(dir / "bad.json") << "{\"problem\": ";
  CHECK(error_of([&] { load_config((dir / "bad.json").string()); }) == Errc::ParseError);
  CHECK(error_of([&] { load_config((dir / "missing.json").string()); }) == Errc::ParseError);
  fs::remove_all(dir);
}

TEST_CASE("config serialization round-trips") {
  const ExperimentConfig c = load_config(kFig2);
  const json once = c.to_json();
  const json twice = parse_config(once).to_json();
  CHECK(once == twice);
  CHECK(once.at("algorithms")[4].at("schedule").at("gamma_rate") == 45.0);
}

TEST_CASE("run_experiment writes one trace pair per run and is reproducible") {
  const fs::path dir = scratch("runs");
  ExperimentConfig c = parse_config(small_config(200));
  c.output_dir = (dir / "a").string();
  const ExperimentResult r = run_experiment(c);
  CHECK(r.failures.empty());
  REQUIRE(r.trace_files.size() == 5);
  for (const auto& f : r.trace_files) {
    CHECK(fs::exists(f));
    CHECK(fs::exists(fs::path(f).replace_extension(".json")));
  }
  CHECK(slurp(dir / "a" / "failures.json") == "[]\n");
  CHECK(fs::exists(dir / "a" / "oracle_seed1.json"));

  c.output_dir = (dir / "b").string();
  run_experiment(c, Execution::serial);
  for (const auto& f : r.trace_files) {
    const fs::path name = fs::path(f).filename();
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }
  fs::remove_all(dir);
}

TEST_CASE("summary statistics agree with the traces") {
  const fs::path dir = scratch("summary");
  json j = small_config(100);
  j["seeds"] = {1, 2, 3};
  ExperimentConfig c = parse_config(j);
  c.output_dir = dir.string();
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.trace_files.size() == 15);
  const json summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary == r.summary);
  for (const auto& name : {"DSGD", "CP-SGD-F-C2"}) {
    std::vector<double> finals;
    for (int s : {1, 2, 3}) {
      std::istringstream csv(slurp(dir / (std::string(name) + "_seed" + std::to_string(s) + ".csv")));
      std::string line, last;
      while (std::getline(csv, line))
        if (!line.empty()) last = line;
      std::istringstream row(last);
      std::string cell;
      std::getline(row, cell, ',');
      CHECK(std::stoll(cell) == 100);
      std::getline(row, cell, ',');
      std::getline(row, cell, ',');  // residual
      finals.push_back(std::stod(cell));
    }
    const json& st = summary.at("algorithms").at(name).at("final_residual");
    CHECK(st.at("mean").get<double>() == doctest::Approx((finals[0] + finals[1] + finals[2]) / 3).epsilon(1e-12));
    CHECK(st.at("min").get<double>() == doctest::Approx(*std::min_element(finals.begin(), finals.end())));
    CHECK(st.at("max").get<double>() == doctest::Approx(*std::max_element(finals.begin(), finals.end())));
  }
  fs::remove_all(dir);
}

TEST_CASE("a diverging run does not take the others down") {
  const fs::path dir = scratch("failure");
  json j = small_config(300);
  j["algorithms"].push_back({{"name", "Unstable"},
                             {"kind", "cp_sgd"},
                             {"compressor", {{"kind", "identity"}}},
                             {"schedule", {{"kind", "constant"}, {"eta", 5.0}, {"gamma", 40.0}, {"omega", 0.5}, {"alpha_x", 0.2}}}});
  ExperimentConfig c = parse_config(j);
  c.output_dir = dir.string();
  const ExperimentResult r = run_experiment(c);
  CHECK(r.trace_files.size() == 5);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].algorithm == "Unstable");
  CHECK(r.failures[0].error.find("non-finite") != std::string::npos);
  const json failures = json::parse(slurp(dir / "failures.json"));
  REQUIRE(failures.size() == 1);
  CHECK(failures[0].at("algorithm") == "Unstable");
  CHECK(!fs::exists(dir / "Unstable_seed1.csv"));
  fs::remove_all(dir);
}

TEST_CASE("sweep at one agent reproduces a plain run") {
  ExperimentConfig c = load_config(std::string(CPSGD_SOURCE_DIR) + "/configs/sweep_quadratic.json");
  c.seeds = {4};
  const long long rounds = 300;
  const SweepResult sw = speedup_sweep(c, {1}, rounds, 0.5);
  REQUIRE(sw.rows.size() == 1);

  c.problem.n = 1;
  c.rounds = rounds;
  const auto problem = build_problem(c, 4);
  const AlgorithmSpec spec = AlgorithmSpec::cp_sgd("CP-SGD", CompressorSpec::top_k(2, 4),
                                                   Schedule::corollary1(8.0, 0.5, rounds, 1, 0.2));
  const NoisyOracle oracle(problem, c.problem.noise.stddev(), run_seed(4, "CP-SGD"));
  RunOptions opt;
  opt.rounds = rounds;
  opt.seed = run_seed(4, "CP-SGD");
  const Trace t = run(spec, oracle, Topology::ring_with_chords(1), uniform_initial_iterates(1, 4, 0.0, 1.0, 4), opt);
  double sum = 0.0;
  for (long long k = 0; k < rounds; ++k) sum += t.rows[static_cast<std::size_t>(k)].grad_norm_sq;
  CHECK(sw.rows[0].mean_grad_norm_sq == doctest::Approx(sum / rounds).epsilon(1e-15));
  CHECK(sw.rows[0].omega == doctest::Approx(0.5 * std::sqrt(300.0)));
}

TEST_CASE("oracle results are cached by problem fingerprint") {
  const fs::path dir = scratch("oracle");
  ExperimentConfig c = parse_config(small_config(10));
  c.output_dir = dir.string();
  const Optimum a = reference_optimum(c, 1);
  const fs::path cache = dir / "oracle_seed1.json";
  REQUIRE(fs::exists(cache));
  json j = json::parse(slurp(cache));
  CHECK(j.at("source") == "descent");
  CHECK(j.at("grad_norm").get<double>() <= 1e-8);

  // A doctored cache with the right fingerprint is trusted...
  j["f"] = 123.0;
  std::ofstream(cache) << j.dump();
  CHECK(reference_optimum(c, 1).f == 123.0);
  // ...one with a different fingerprint is not.
  j["fingerprint"] = "0";
  std::ofstream(cache) << j.dump();
  CHECK(reference_optimum(c, 1).f == a.f);
  fs::remove_all(dir);
}

TEST_CASE("CLI exit codes") {
  const fs::path dir = scratch("cli");
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  const std::string cli = CPSGD_CLI;

  CHECK(status(cli + " run --config " + (dir / "nope.json").string()) == 2);
  CHECK(status(cli + " bogus") == 2);

  json good = small_config(20);
  std::ofstream(dir / "good.json") << good.dump();
  CHECK(status(cli + " run --config " + (dir / "good.json").string() + " --out " + (dir / "o1").string()) == 0);
  CHECK(fs::exists(dir / "o1" / "DSGD_seed1.csv"));

  // The env var only changes where output goes when nothing else says.
  CHECK(status("CPSGD_OUT_DIR=" + (dir / "env").string() + " " + cli + " run --seeds 2 --config " +
                (dir / "good.json").string()) == 0);
  CHECK(fs::exists(dir / "env" / "DSGD_seed2.csv"));

  json partial = good;
  partial["algorithms"].push_back(
      {{"name", "Unstable"},
       {"kind", "cp_sgd"},
       {"compressor", {{"kind", "identity"}}},
       {"schedule", {{"kind", "constant"}, {"eta", 5.0}, {"gamma", 40.0}, {"omega", 0.5}, {"alpha_x", 0.2}}}});
  partial["rounds"] = 200;
  std::ofstream(dir / "partial.json") << partial.dump();
  CHECK(status(cli + " run --config " + (dir / "partial.json").string() + " --out " + (dir / "o2").string()) == 1);

  json bad = good;
  bad["algorithms"][2]["schedule"]["alpha_x"] = 1.5;
  std::ofstream(dir / "bad.json") << bad.dump();
  CHECK(status(cli + " run --config " + (dir / "bad.json").string()) == 2);

  CHECK(status(cli + " oracle --config " + (dir / "good.json").string() + " --out " + (dir / "o3").string()) == 0);
  CHECK(fs::exists(dir / "o3" / "oracle_seed1.json"));
  fs::remove_all(dir);
}
