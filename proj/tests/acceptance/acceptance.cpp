// Acceptance suite A1-A11. One PASS/FAIL line per criterion; exit status is
// the number of failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "cpsgd/harness.hpp"

using namespace cpsgd;

namespace {

const std::string kSource = CPSGD_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// The figure instance: n=6, d=10, m=200 logistic regression on the six-agent graph.
struct FigureInstance {
  ExperimentConfig config = load_config(kSource + "/configs/paper_fig2.json");
  Topology topology = build_topology(config);

  AlgorithmSpec spec(const std::string& name) const {
    for (std::size_t i = 0; i < config.algorithms.size(); ++i)
      if (config.algorithms[i].at("name") == name) return algorithm_spec(config, i);
    throw std::runtime_error("no algorithm " + name);
  }

  Trace run_one(const AlgorithmSpec& alg, std::uint64_t seed, long long rounds, bool with_reference,
                std::function<void(const SwarmState&, const RoundStats&)> observer = {}) const {
    const auto problem = build_problem(config, seed);
    const std::uint64_t stream = run_seed(seed, alg.name);
    const NoisyOracle oracle(problem, config.problem.noise.stddev(), stream);
    RunOptions opt;
    opt.rounds = rounds;
    opt.seed = stream;
    opt.observer = std::move(observer);
    if (with_reference) opt.reference = reference_optimum(config, seed, false);
    return run(alg, oracle, topology, uniform_initial_iterates(6, 10, 0.0, 1.0, seed), opt);
  }
};

const FigureInstance& figure() {
  static const FigureInstance p;
  return p;
}

// Strongly convex heterogeneous quadratic ensemble used by A6-A8, A11.
constexpr int kQn = 6, kQd = 4;
const StepParams kQuadGains = Schedule::theorem1(4.0, 0.05, 2.0, 0.2).at(0);  // eta 0.025, gamma 8, omega 2

Trace quadratic_run(const Schedule& schedule, double noise_std, double bias, std::uint64_t seed, long long rounds,
                    bool lyapunov) {
  const auto problem = make_quadratic_problem(kQn, kQd, QuadraticSpec{}, seed);
  const NoisyOracle oracle(problem, noise_std, 1000 + seed, bias != 0.0 ? Vec::Constant(kQd, bias) : Vec());
  RunOptions opt;
  opt.rounds = rounds;
  opt.seed = seed;
  opt.lyapunov = lyapunov;
  opt.reference = problem->closed_form_optimum();
  return run(AlgorithmSpec::cp_sgd("CP-SGD", CompressorSpec::top_k(2, kQd), schedule), oracle, Topology::six_agent(),
             uniform_initial_iterates(kQn, kQd, 0.0, 1.0, seed), opt);
}

double mean_gap(const Trace& t, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t k = from; k <= to; ++k) s += t.rows[k].gap;
  return s / static_cast<double>(to - from + 1);
}

Outcome a1() {
  const auto& p = figure();
  double worst = 0.0;
  const auto start = std::chrono::steady_clock::now();
  p.run_one(p.spec("CP-SGD-F-C1"), 1, 10000, false, [&](const SwarmState& s, const RoundStats&) {
    worst = std::max(worst, s.v.colwise().sum().cwiseAbs().maxCoeff());
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= 1e-9 && secs < 30.0, fmt("max_k |sum_i v_i|_inf = %.3e, %.1f s", worst, secs)};
}

Outcome a2() {
  const auto& p = figure();
  std::string detail;
  bool pass = true;
  for (const char* name : {"identity", "Top-2", "2-bit"}) {
    AlgorithmSpec alg = p.spec("CP-SGD-F-C1");
    alg.compressor = std::string(name) == "identity" ? CompressorSpec::identity()
                     : std::string(name) == "Top-2"  ? CompressorSpec::top_k(2, 10)
                                                     : CompressorSpec::b_bits(2, 10);
    const double eta = alg.schedule->at(0).eta;
    Vec prev = row_mean(uniform_initial_iterates(6, 10, 0.0, 1.0, 2));
    double worst = 0.0;
    p.run_one(alg, 2, 1000, false, [&](const SwarmState& s, const RoundStats& st) {
      const Vec now = row_mean(s.x);
      worst = std::max(worst, (now - (prev - eta * st.mean_gradient)).cwiseAbs().maxCoeff());
      prev = now;
    });
    pass = pass && worst <= 1e-10;
    detail += fmt("%s %.2e  ", name, worst);
  }
  return {pass, detail};
}

Outcome a3() {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> normal;
  const int d = 10;

  // Top-2 against a sort-based selection; inputs are f32 so the wire is lossless.
  const CompressorSpec topk = CompressorSpec::top_k(2, d);
  double top_err = 0.0, top_slack = -1.0;
  for (int t = 0; t < 1000; ++t) {
    Vec x(d);
    for (int s = 0; s < d; ++s) x[s] = static_cast<float>(normal(rng));
    std::vector<int> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return std::abs(x[a]) > std::abs(x[b]); });
    Vec want = Vec::Zero(d);
    for (int j = 0; j < 2; ++j) want[idx[j]] = x[idx[j]];
    const Vec got = compress(topk, x, rng).reconstructed;
    top_err = std::max(top_err, (got - want).cwiseAbs().maxCoeff());
    top_slack = std::max(top_slack, (got / topk.r - x).squaredNorm() - (1 - topk.phi) * x.squaredNorm());
  }

  // 2-bit Monte Carlo: 20 vectors (equal magnitude, e_1, 18 Gaussian) x 1e4 draws.
  const CompressorSpec bb = CompressorSpec::b_bits(2, d);
  const int draws = 10000;
  const double slack = 3.0 / std::sqrt(static_cast<double>(draws));
  double worst = 0.0;
  for (int v = 0; v < 20; ++v) {
    Vec x(d);
    if (v == 0) x.setConstant(1.0);
    else if (v == 1) x = Vec::Unit(d, 0);
    else for (int s = 0; s < d; ++s) x[s] = normal(rng);
    double acc = 0.0;
    for (int t = 0; t < draws; ++t) acc += (compress(bb, x, rng).reconstructed / bb.r - x).squaredNorm();
    worst = std::max(worst, acc / draws / x.squaredNorm());
  }
  const bool pass = top_err <= 1e-12 && top_slack <= 1e-12 && worst <= 1 - bb.phi + slack;
  return {pass, fmt("top-2 max|C-oracle| %.1e, bound slack %.1e; 2-bit worst ratio %.4f vs 1-phi+slack %.4f", top_err,
                    top_slack, worst, 1 - bb.phi + slack)};
}

// Plain-loop primal-dual recursion with identity compression, evaluated on the
// same recorded gradient draws.
Outcome a4() {
  const auto& p = figure();
  const auto problem = build_problem(p.config, 1);
  const NoisyOracle oracle(problem, p.config.problem.noise.stddev(), 5);
  const StepParams q = p.spec("CP-SGD-F-C1").schedule->at(0);
  const Mat lap = p.topology.laplacian();
  const Stack x0 = uniform_initial_iterates(6, 10, 0.0, 1.0, 1);

  SwarmState s = SwarmState::initial(x0);
  Stack x = x0, v = Stack::Zero(6, 10);
  for (std::uint64_t k = 0; k < 100; ++k) {
    cp_sgd_round(s, p.topology, CompressorSpec::identity(), oracle, q, 9);
    const Stack old = x;
    for (int i = 0; i < 6; ++i) {
      const Vec g = oracle.stochastic_gradient(i, old.row(i).transpose(), k);
      for (int c = 0; c < 10; ++c) {
        double lx = 0.0;
        for (int j = 0; j < 6; ++j)
          if (j != i && lap(i, j) != 0.0) lx += -lap(i, j) * (old(i, c) - old(j, c));
        const double vi = v(i, c);
        x(i, c) -= q.eta * (q.gamma * lx + q.omega * vi + g[c]);
        v(i, c) = vi + q.eta * q.omega * lx;
      }
    }
  }
  const bool same = std::memcmp(x.data(), s.x.data(), sizeof(double) * 60) == 0 &&
                    std::memcmp(v.data(), s.v.data(), sizeof(double) * 60) == 0;
  return {same, fmt("max|dx| %.1e, max|dv| %.1e", (x - s.x).cwiseAbs().maxCoeff(), (v - s.v).cwiseAbs().maxCoeff())};
}

Outcome a5() {
  const auto& p = figure();
  const auto start = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const Trace t = p.run_one(p.spec("CP-SGD-F-C1"), seed, 10000, true);
    double g0 = 0, g1 = 0, c0 = 0, c1 = 0;
    for (int k = 0; k < 1000; ++k) {
      g0 += t.rows[k].grad_norm_sq;
      c0 += t.rows[k].consensus_error;
    }
    for (int k = 9001; k <= 10000; ++k) {
      g1 += t.rows[k].grad_norm_sq;
      c1 += t.rows[k].consensus_error;
    }
    const double cons_drop = t.rows[0].consensus_error / (c1 / 1000);
    pass = pass && g1 <= 0.1 * g0 && cons_drop >= 10.0 && c0 / c1 >= 10.0;
    detail += fmt("seed %d: grad window means %.2e -> %.2e (ratio %.3f, |grad f(xbar_0)|^2 %.2e), consensus drop %.0fx; ",
                  static_cast<int>(seed), g0 / 1000, g1 / 1000, g1 / g0, t.rows[0].grad_norm_sq, cons_drop);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {pass && secs < 120.0, detail + fmt("%.1f s", secs)};
}

Outcome a6(Trace& keep) {
  keep = quadratic_run(Schedule::theorem1(4.0, 0.05, 2.0, 0.2), 0.0, 0.0, 1, 1000, true);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int lo = 50, hi = 500, n = hi - lo + 1;
  for (int k = lo; k <= hi; ++k) {
    const double y = std::log(keep.rows[k].gap);
    sx += k;
    sy += y;
    sxx += double(k) * k;
    sxy += k * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx), icept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  for (int k = lo; k <= hi; ++k) {
    const double y = std::log(keep.rows[k].gap);
    ss_res += (y - icept - slope * k) * (y - icept - slope * k);
    ss_tot += (y - sy / n) * (y - sy / n);
  }
  const double r2 = 1 - ss_res / ss_tot, final_gap = keep.rows.back().gap;
  return {r2 >= 0.98 && final_gap <= 1e-10 && slope < 0,
          fmt("slope %.4f/round, R^2 %.4f, gap(1000) %.2e", slope, r2, final_gap)};
}

Outcome a7_a8(bool biased) {
  const Schedule full = Schedule::constant(kQuadGains.eta, kQuadGains.gamma, kQuadGains.omega, kQuadGains.alpha_x);
  const Schedule half = Schedule::constant(kQuadGains.eta / 2, kQuadGains.gamma, kQuadGains.omega, kQuadGains.alpha_x);
  const double sd = std::sqrt(0.5);
  double a = 0, b = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    a += mean_gap(quadratic_run(full, sd, 0.0, seed, 10000, false), 5000, 10000);
    b += mean_gap(quadratic_run(biased ? full : half, sd, biased ? 0.1 : 0.0, seed, 10000, false), 5000, 10000);
  }
  a /= 10;
  b /= 10;
  if (!biased) {
    const double ratio = a / b;
    return {ratio >= 1.5 && ratio <= 3.0, fmt("plateau eta %.3e, eta/2 %.3e, ratio %.3f", a, b, ratio)};
  }
  return {std::isfinite(b) && b > a, fmt("plateau unbiased %.3e, biased %.3e", a, b)};
}

Outcome a9() {
  const ExperimentConfig c = load_config(kSource + "/configs/sweep_quadratic.json");
  const SweepResult r = speedup_sweep(c, {2, 4, 8}, 5000, 0.1);
  const double v2 = r.rows[0].mean_grad_norm_sq, v4 = r.rows[1].mean_grad_norm_sq, v8 = r.rows[2].mean_grad_norm_sq;
  return {v4 <= v2 && v8 <= v4 && v8 <= 0.6 * v2, fmt("n=2 %.4e, n=4 %.4e, n=8 %.4e (ratio %.3f)", v2, v4, v8, v8 / v2)};
}

Outcome a10() {
  const auto& p = figure();
  const std::uint64_t cp = p.run_one(p.spec("CP-SGD-F-C1"), 1, 3, false).rows[1].bits_cumulative;
  const std::uint64_t ds = p.run_one(p.spec("DSGD"), 1, 3, false).rows[1].bits_cumulative;
  return {cp == 432 && ds == 1920,
          fmt("CP-SGD Top-2 %llu bits/round, DSGD %llu bits/round", (unsigned long long)cp, (unsigned long long)ds)};
}

Outcome a11(const Trace& t) {
  if (t.rows.empty()) return {false, "A6 run missing"};
  double min_v = INFINITY, worst_rise = 0.0;
  int rises = 0;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const double v = t.rows[k].lyapunov.total();
    min_v = std::min(min_v, v);
    if (k > 10 && v > t.rows[k - 1].lyapunov.total()) {
      ++rises;
      worst_rise = std::max(worst_rise, v - t.rows[k - 1].lyapunov.total());
    }
  }
  return {rises == 0 && min_v >= 0.0, fmt("min V %.3e, %d increases after k=10 (largest %.1e)", min_v, rises, worst_rise)};
}

}  // namespace

int main() {
  Trace a6_trace;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"A1 dual conservation", a1},
      {"A2 mean dynamics", a2},
      {"A3 compressor contract", a3},
      {"A4 identity-compressor oracle", a4},
      {"A5 nonconvex convergence", a5},
      {"A6 P-L linear rate", [&] { return a6(a6_trace); }},
      {"A7 noise neighborhood scaling", [] { return a7_a8(false); }},
      {"A8 biased gradients", [] { return a7_a8(true); }},
      {"A9 linear speedup", a9},
      {"A10 bit accounting", a10},
      {"A11 Lyapunov sanity", [&] { return a11(a6_trace); }},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
