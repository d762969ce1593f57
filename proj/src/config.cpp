#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "cpsgd/harness.hpp"

namespace cpsgd {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(Errc::ValidationError, path + ": " + what);
}

// Object view that remembers which keys were read so leftovers can be rejected.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string at_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& get(const std::string& key) {
    if (!has(key)) fail(at_path(key), "required");
    return j_.at(key);
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    if (!has(key)) {
      if (!fallback) fail(at_path(key), "required");
      return *fallback;
    }
    const json& v = j_.at(key);
    if (!v.is_number()) fail(at_path(key), "expected a number");
    return v.get<double>();
  }

  long long integer(const std::string& key, std::optional<long long> fallback = std::nullopt) {
    if (!has(key)) {
      if (!fallback) fail(at_path(key), "required");
      return *fallback;
    }
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(at_path(key), "expected an integer");
    return v.get<long long>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(at_path(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    if (!has(key)) {
      if (!fallback) fail(at_path(key), "required");
      return *fallback;
    }
    const json& v = j_.at(key);
    if (!v.is_string()) fail(at_path(key), "expected a string");
    return v.get<std::string>();
  }

  void done() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) fail(at_path(item.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

int positive_int(Fields& f, const std::string& key, std::optional<long long> fallback) {
  const long long v = f.integer(key, fallback);
  if (v < 1 || v > 1'000'000'000) fail(f.at_path(key), "must be a positive integer");
  return static_cast<int>(v);
}

double positive(Fields& f, const std::string& key, std::optional<double> fallback = std::nullopt) {
  const double v = f.number(key, fallback);
  if (!(v > 0.0)) fail(f.at_path(key), "must be positive");
  return v;
}

double non_negative(Fields& f, const std::string& key, std::optional<double> fallback = std::nullopt) {
  const double v = f.number(key, fallback);
  if (!(v >= 0.0)) fail(f.at_path(key), "must be >= 0");
  return v;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (std::filesystem::path(base_dir) / p).string();
}

json read_json_file(const std::string& path, Errc missing) {
  std::ifstream in(path);
  if (!in) throw Error(missing, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, path + ": " + e.what());
  }
}

ProblemConfig parse_problem(const json& j, const std::string& base_dir) {
  Fields f(j, "problem");
  ProblemConfig p;
  p.kind = f.string("kind", p.kind);
  if (p.kind != "classification" && p.kind != "quadratic")
    fail("problem.kind", "expected classification or quadratic");
  p.n = positive_int(f, "n", p.n);
  p.d = positive_int(f, "d", p.d);
  if (p.kind == "classification") {
    p.m = positive_int(f, "m", p.m);
    p.lambda = non_negative(f, "lambda", p.lambda);
    p.alpha = non_negative(f, "alpha", p.alpha);
    p.dataset = f.string("dataset", "");
    if (!p.dataset.empty() && !std::filesystem::exists(resolve(base_dir, p.dataset)))
      fail("problem.dataset", "file not found: " + p.dataset);
  } else {
    if (f.has("spectrum")) {
      const json& s = f.get("spectrum");
      if (!s.is_array() || s.size() != 2 || !s[0].is_number() || !s[1].is_number())
        fail("problem.spectrum", "expected [eig_min, eig_max]");
      p.quadratic.eig_min = s[0].get<double>();
      p.quadratic.eig_max = s[1].get<double>();
      if (!(p.quadratic.eig_min > 0.0) || !(p.quadratic.eig_max >= p.quadratic.eig_min))
        fail("problem.spectrum", "need 0 < eig_min <= eig_max");
    }
    p.quadratic.heterogeneity = non_negative(f, "heterogeneity", p.quadratic.heterogeneity);
    p.quadratic.shared_curvature = f.boolean("shared_curvature", p.quadratic.shared_curvature);
  }
  if (f.has("noise")) {
    Fields nf(f.get("noise"), "problem.noise");
    p.noise.level = non_negative(nf, "level", p.noise.level);
    const std::string as = nf.string("as", "variance");
    if (as != "variance" && as != "std") fail("problem.noise.as", "expected variance or std");
    p.noise.is_variance = as == "variance";
    nf.done();
  }
  if (f.has("bias")) {
    const json& b = f.get("bias");
    if (b.is_number()) {
      p.bias.assign(p.d, b.get<double>());
    } else if (b.is_array()) {
      for (const auto& e : b) {
        if (!e.is_number()) fail("problem.bias", "expected numbers");
        p.bias.push_back(e.get<double>());
      }
      if (static_cast<int>(p.bias.size()) != p.d) fail("problem.bias", "length must equal d");
    } else {
      fail("problem.bias", "expected a number or an array of d numbers");
    }
  }
  if (f.has("init")) {
    const json& r = f.get("init");
    if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
      fail("problem.init", "expected [low, high]");
    p.init_low = r[0].get<double>();
    p.init_high = r[1].get<double>();
    if (!(p.init_low <= p.init_high)) fail("problem.init", "need low <= high");
  }
  f.done();
  return p;
}

TopologyConfig parse_topology(const json& j) {
  Fields f(j, "topology");
  TopologyConfig t;
  int sources = 0;
  if (f.has("generator")) {
    t.generator = f.string("generator");
    if (t.generator != "six_agent" && t.generator != "ring_chords")
      fail("topology.generator", "expected six_agent or ring_chords");
    ++sources;
  }
  if (f.has("file")) {
    t.file = f.string("file");
    ++sources;
  }
  if (f.has("edges")) {
    json graph{{"n", f.get("n")}, {"edges", f.get("edges")}};
    if (f.has("weights")) graph["weights"] = f.get("weights");
    t.graph = graph;
    ++sources;
  }
  if (sources != 1) fail("topology", "give exactly one of edges, file or generator");
  if (!t.graph && f.has("n")) {
    // n is implied by the problem for generators and by the file otherwise
    fail("topology.n", "only valid with inline edges");
  }
  f.done();
  return t;
}

json canonical_compressor(const json& j, const std::string& path) {
  Fields f(j, path);
  const std::string kind = f.string("kind");
  json out{{"kind", kind}};
  if (kind == "identity") {
  } else if (kind == "top_k") {
    out["k"] = positive_int(f, "k", std::nullopt);
  } else if (kind == "b_bits") {
    out["b"] = positive_int(f, "b", std::nullopt);
    if (f.has("phi")) out["phi"] = f.number("phi");
  } else {
    fail(path + ".kind", "expected identity, top_k or b_bits");
  }
  f.done();
  return out;
}

json canonical_schedule(const json& j, const std::string& path) {
  Fields f(j, path);
  const std::string kind = f.string("kind");
  json out{{"kind", kind}};
  auto take = [&](const char* key, std::optional<double> fallback = std::nullopt) {
    out[key] = f.number(key, fallback);
  };
  if (kind == "constant") {
    for (const char* key : {"eta", "gamma", "omega", "alpha_x"}) take(key);
  } else if (kind == "theorem1") {
    for (const char* key : {"beta1", "beta2", "omega", "alpha_x"}) take(key);
  } else if (kind == "corollary1") {
    for (const char* key : {"beta1", "beta2", "alpha_x"}) take(key);
  } else if (kind == "table1_timevarying") {
    take("alpha_x");
    take("gamma_rate", 45.0);
    take("omega_rate", 5.0);
    take("eta_scale", 1e-4);
  } else {
    fail(path + ".kind", "expected constant, theorem1, corollary1 or table1_timevarying");
  }
  f.done();
  return out;
}

json canonical_algorithm(const json& j, const std::string& path) {
  Fields f(j, path);
  json out;
  const std::string name = f.string("name");
  static const std::regex safe("[A-Za-z0-9_.+-]+");
  if (!std::regex_match(name, safe)) fail(path + ".name", "use letters, digits, '_', '-', '+' or '.'");
  out["name"] = name;
  const std::string kind = f.string("kind");
  out["kind"] = kind;
  if (kind == "cp_sgd") {
    out["compressor"] = canonical_compressor(f.get("compressor"), path + ".compressor");
    out["schedule"] = canonical_schedule(f.get("schedule"), path + ".schedule");
  } else if (kind == "dsgd") {
    out["step"] = f.number("step");
  } else if (kind == "choco_sgd") {
    out["compressor"] = canonical_compressor(f.get("compressor"), path + ".compressor");
    out["consensus_step"] = f.number("consensus_step");
    out["step"] = f.number("step");
  } else {
    fail(path + ".kind", "expected cp_sgd, dsgd or choco_sgd");
  }
  f.done();
  return out;
}

CompressorSpec compressor_from(const json& c, int d) {
  const std::string kind = c.at("kind");
  if (kind == "identity") return CompressorSpec::identity();
  if (kind == "top_k") return CompressorSpec::top_k(c.at("k").get<int>(), d);
  const int b = c.at("b").get<int>();
  if (c.contains("phi")) return CompressorSpec::b_bits(b, c.at("phi").get<double>());
  return CompressorSpec::b_bits(b, d);
}

Schedule schedule_from(const json& s, long long rounds, int agents) {
  const std::string kind = s.at("kind");
  auto v = [&](const char* key) { return s.at(key).get<double>(); };
  if (kind == "constant") return Schedule::constant(v("eta"), v("gamma"), v("omega"), v("alpha_x"));
  if (kind == "theorem1") return Schedule::theorem1(v("beta1"), v("beta2"), v("omega"), v("alpha_x"));
  if (kind == "corollary1") return Schedule::corollary1(v("beta1"), v("beta2"), rounds, agents, v("alpha_x"));
  return Schedule::table1_timevarying(v("alpha_x"), v("gamma_rate"), v("omega_rate"), v("eta_scale"));
}

}  // namespace

double NoiseConfig::stddev() const { return is_variance ? std::sqrt(level) : level; }

nlohmann::json ExperimentConfig::to_json() const {
  json p{{"kind", problem.kind}, {"n", problem.n}, {"d", problem.d}};
  if (problem.kind == "classification") {
    p["m"] = problem.m;
    p["lambda"] = problem.lambda;
    p["alpha"] = problem.alpha;
    if (!problem.dataset.empty()) p["dataset"] = problem.dataset;
  } else {
    p["spectrum"] = {problem.quadratic.eig_min, problem.quadratic.eig_max};
    p["heterogeneity"] = problem.quadratic.heterogeneity;
    p["shared_curvature"] = problem.quadratic.shared_curvature;
  }
  p["noise"] = {{"level", problem.noise.level}, {"as", problem.noise.is_variance ? "variance" : "std"}};
  if (!problem.bias.empty()) p["bias"] = problem.bias;
  p["init"] = {problem.init_low, problem.init_high};

  json t;
  if (topology.graph) {
    t = *topology.graph;
  } else if (!topology.file.empty()) {
    t["file"] = topology.file;
  } else {
    t["generator"] = topology.generator;
  }

  json j{{"problem", p},
         {"topology", t},
         {"algorithms", algorithms},
         {"rounds", rounds},
         {"seeds", seeds},
         {"lyapunov", lyapunov},
         {"reference", {{"tol", reference.tol}, {"max_iters", reference.max_iters}}}};
  if (!output_dir.empty()) j["output_dir"] = output_dir;
  return j;
}

ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir) {
  Fields f(j, "");
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.problem = parse_problem(f.get("problem"), base_dir);
  c.topology = parse_topology(f.get("topology"));

  const json& algs = f.get("algorithms");
  if (!algs.is_array() || algs.empty()) fail("algorithms", "expected a non-empty array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < algs.size(); ++i) {
    const std::string path = "algorithms[" + std::to_string(i) + "]";
    c.algorithms.push_back(canonical_algorithm(algs[i], path));
    if (!names.insert(c.algorithms.back().at("name").get<std::string>()).second)
      fail(path + ".name", "duplicate algorithm name");
  }

  c.rounds = f.integer("rounds");
  if (c.rounds < 1) fail("rounds", "must be >= 1");

  const json& seeds = f.get("seeds");
  if (!seeds.is_array() || seeds.empty()) fail("seeds", "expected a non-empty array");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!seeds[i].is_number_integer() || seeds[i].get<long long>() < 0)
      fail("seeds[" + std::to_string(i) + "]", "expected a non-negative integer");
    c.seeds.push_back(seeds[i].get<std::uint64_t>());
  }

  c.output_dir = f.string("output_dir", "");
  c.lyapunov = f.boolean("lyapunov", false);
  if (f.has("reference")) {
    Fields rf(f.get("reference"), "reference");
    c.reference.tol = positive(rf, "tol", c.reference.tol);
    c.reference.max_iters = positive_int(rf, "max_iters", c.reference.max_iters);
    rf.done();
  }
  f.done();

  // Every spec must construct before any run starts.
  try {
    const Topology topo = build_topology(c);
    if (topo.size() != c.problem.n)
      fail("topology", "has " + std::to_string(topo.size()) + " agents but problem.n is " +
                           std::to_string(c.problem.n));
  } catch (const Error& e) {
    if (e.code() == Errc::ValidationError) throw;
    fail("topology", e.what());
  }
  for (std::size_t i = 0; i < c.algorithms.size(); ++i) {
    try {
      algorithm_spec(c, i).validate(c.problem.d);
    } catch (const Error& e) {
      fail("algorithms[" + std::to_string(i) + "]", e.what());
    }
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  const json j = read_json_file(path, Errc::ParseError);
  const auto parent = std::filesystem::path(path).parent_path();
  return parse_config(j, parent.empty() ? "." : parent.string());
}

AlgorithmSpec algorithm_spec(const ExperimentConfig& config, std::size_t index) {
  const json& a = config.algorithms.at(index);
  const std::string name = a.at("name");
  const std::string kind = a.at("kind");
  const int d = config.problem.d;
  if (kind == "dsgd") return AlgorithmSpec::dsgd(name, a.at("step").get<double>());
  if (kind == "choco_sgd")
    return AlgorithmSpec::choco_sgd(name, compressor_from(a.at("compressor"), d),
                                    a.at("consensus_step").get<double>(), a.at("step").get<double>());
  return AlgorithmSpec::cp_sgd(name, compressor_from(a.at("compressor"), d),
                               schedule_from(a.at("schedule"), config.rounds, config.problem.n));
}

Topology build_topology(const ExperimentConfig& config) {
  const TopologyConfig& t = config.topology;
  if (t.graph) return Topology::from_json(*t.graph);
  if (!t.file.empty()) {
    const json g = read_json_file(resolve(config.base_dir, t.file), Errc::IoError);
    if (g.is_object())
      for (const auto& item : g.items())
        if (item.key() != "n" && item.key() != "edges" && item.key() != "weights")
          fail("topology.file", "unknown key " + item.key());
    return Topology::from_json(g);
  }
  if (t.generator == "six_agent") return Topology::six_agent();
  return Topology::ring_with_chords(config.problem.n);
}

std::shared_ptr<const Problem> build_problem(const ExperimentConfig& config, std::uint64_t seed) {
  const ProblemConfig& p = config.problem;
  if (p.kind == "quadratic") return make_quadratic_problem(p.n, p.d, p.quadratic, seed);
  if (!p.dataset.empty()) {
    auto problem = std::make_shared<ClassificationProblem>(
        ClassificationData::from_json(read_json_file(resolve(config.base_dir, p.dataset), Errc::IoError)));
    if (problem->agents() != p.n || problem->dim() != p.d)
      throw Error(Errc::DimensionMismatch, "dataset shape disagrees with problem.n / problem.d");
    return problem;
  }
  return make_classification_problem(p.n, p.m, p.d, p.lambda, p.alpha, seed);
}

}  // namespace cpsgd
