#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cpsgd/run.hpp"
#include "gen.hpp"

using namespace cpsgd;

namespace {

Stack column(std::initializer_list<double> v) {
  Stack s(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) s(i++, 0) = x;
  return s;
}

}  // namespace

TEST_CASE("residual examples") {
  const Vec xs = Vec::LinSpaced(3, -1, 1);
  const Stack at = xs.transpose().replicate(4, 1);
  CHECK(residual_update(std::nullopt, at, xs) == 0.0);
  CHECK(residual_update(0.0, at + Stack::Ones(4, 3), xs) == 0.0);

  const Stack far = column({3.0});  // squared distance 9
  CHECK(residual_update(4.0, far, Vec::Zero(1)) == 4.0);
  CHECK(residual_update(std::nullopt, far, Vec::Zero(1)) == 9.0);
}

TEST_CASE("property: residual equals the minimum over the stored history") {
  std::mt19937_64 rng(4);
  const Vec xs = gen::gaussian(rng, 3);
  for (int walk = 0; walk < 20; ++walk) {
    Stack x = gen::gaussian_stack(rng, 5, 3);
    std::vector<double> history;
    std::optional<double> r;
    for (int k = 0; k < 100; ++k) {
      x += gen::gaussian_stack(rng, 5, 3, 0.3);
      double d2 = 0.0;
      for (int i = 0; i < 5; ++i)
        for (int s = 0; s < 3; ++s) d2 += (x(i, s) - xs[s]) * (x(i, s) - xs[s]);
      history.push_back(d2);
      r = residual_update(r, x, xs);
      CHECK(*r == doctest::Approx(*std::min_element(history.begin(), history.end())).epsilon(1e-14));
    }
  }
}

TEST_CASE("Lyapunov examples") {
  // n = 2, d = 1, x = (0, 2), v = 0, x^c = x: V1 = 1/2 x^T K_2 x = 1.
  const auto pair = std::make_shared<QuadraticProblem>(std::vector<Mat>{Mat::Ones(1, 1), Mat::Ones(1, 1)},
                                                       std::vector<Vec>{Vec::Ones(1), -Vec::Ones(1)});
  const Topology t2 = Topology::build(2, std::vector<std::pair<int, int>>{{1, 2}});
  SwarmState s = SwarmState::initial(column({0.0, 2.0}));
  s.xc = s.x;
  const StepParams p{0.05, 4.0, 0.5, 0.2};
  const LyapunovComponents c = lyapunov_components(s, *pair, spectral(t2), p, 0.5);
  CHECK(c.v1 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c.v5 == 0.0);
  // f(xbar) = f(1) = 1/2 (0 + 4)/2 = 1, f* = 1/2.
  CHECK(c.v4 == doctest::Approx(2 * 0.5).epsilon(1e-15));

  // n = 1 at the optimum: every component vanishes.
  const QuadraticProblem single({Mat::Identity(2, 2)}, {Vec::Ones(2)});
  const Topology t1 = Topology::build(1, std::vector<std::pair<int, int>>{});
  SwarmState one = SwarmState::initial(Vec::Ones(2).transpose());
  one.xc = one.x;
  const LyapunovComponents z = lyapunov_components(one, single, spectral(t1), p, 0.0);
  CHECK(z.v1 == 0.0);
  CHECK(z.v2 == 0.0);
  CHECK(z.v3 == 0.0);
  CHECK(z.v4 == 0.0);
  CHECK(z.v5 == 0.0);
  CHECK(z.u == 0.0);
}

TEST_CASE("Lyapunov at global-optimum consensus") {
  const auto p = make_quadratic_problem(6, 3, QuadraticSpec{}, 2);
  const SpectralData sp = spectral(Topology::six_agent());
  const Optimum o = *p->closed_form_optimum();
  SwarmState s = SwarmState::initial(o.x.transpose().replicate(6, 1));
  s.xc = s.x;
  const StepParams params{0.05, 4.0, 0.5, 0.2};
  const LyapunovComponents c = lyapunov_components(s, *p, sp, params, o.f);
  CHECK(std::abs(c.v1) <= 1e-15);
  CHECK(std::abs(c.v3) <= 1e-12);
  CHECK(std::abs(c.v4) <= 1e-12);
  CHECK(c.v5 == 0.0);
  Stack gb(6, 3);
  for (int i = 0; i < 6; ++i) gb.row(i) = p->local_gradient(i, o.x).transpose() / params.omega;
  const double expected = 0.5 * (1 + params.gamma / params.omega) * (gb.transpose() * sp.projector * gb).trace();
  CHECK(c.v2 == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("V4 matches direct evaluation and f* is required") {
  const auto p = make_quadratic_problem(4, 3, QuadraticSpec{}, 7);
  const SpectralData sp = spectral(Topology::ring_with_chords(4));
  std::mt19937_64 rng(1);
  const double f_star = p->closed_form_optimum()->f;
  for (int t = 0; t < 20; ++t) {
    SwarmState s = SwarmState::initial(gen::gaussian_stack(rng, 4, 3));
    s.v = gen::gaussian_stack(rng, 4, 3);
    s.v.rowwise() -= s.v.colwise().mean();
    const LyapunovComponents c = lyapunov_components(s, *p, sp, {0.05, 4, 0.5, 0.2}, f_star);
    CHECK(c.v4 == doctest::Approx(4 * (p->value(row_mean(s.x)) - f_star)).epsilon(1e-12));
    CHECK(c.v1 >= 0.0);
    CHECK(c.v2 >= 0.0);
    CHECK(c.v4 >= 0.0);
    CHECK(c.v5 >= 0.0);
    CHECK(c.total() == doctest::Approx(c.v1 + c.v2 + c.v3 + c.v4 + c.v5));
  }
  SwarmState s = SwarmState::initial(Stack::Zero(4, 3));
  try {
    lyapunov_components(s, *p, sp, {0.05, 4, 0.5, 0.2}, std::nullopt);
    FAIL("expected MissingFStar");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingFStar);
  }
}

TEST_CASE("gradient norm is bounded by the optimality gap along a trajectory") {
  const auto p = make_quadratic_problem(6, 4, QuadraticSpec{}, 3);
  const NoisyOracle o(p, 0.7, 1);
  RunOptions opt;
  opt.rounds = 500;
  opt.reference = p->closed_form_optimum();
  const Trace tr = run(AlgorithmSpec::cp_sgd("cp", CompressorSpec::top_k(2, 4), Schedule::constant(0.05, 4, 0.5, 0.2)),
                       o, Topology::six_agent(), uniform_initial_iterates(6, 4, 0.0, 1.0, 1), opt);
  const double lf = p->smoothness_estimate();
  for (const auto& row : tr.rows) CHECK(row.grad_norm_sq <= 2 * lf * row.gap + 1e-12);
}

TEST_CASE("trace CSV and metadata") {
  const auto p = make_quadratic_problem(6, 4, QuadraticSpec{}, 3);
  const NoisyOracle o(p, 0.7, 1);
  RunOptions opt;
  opt.rounds = 20;
  opt.seed = 3;
  opt.reference = p->closed_form_optimum();
  opt.lyapunov = true;
  const auto alg = AlgorithmSpec::cp_sgd("CP", CompressorSpec::top_k(2, 4), Schedule::constant(0.05, 4, 0.5, 0.2));
  const Trace tr = run(alg, o, Topology::six_agent(), uniform_initial_iterates(6, 4, 0.0, 1.0, 1), opt);

  std::istringstream csv(trace_csv(tr));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "k,consensus_error,residual,grad_norm_sq,gap,bits_cumulative,V1,V2,V3,V4,V5,U,eta,gamma,omega");
  int lines = 0;
  for (std::string line; std::getline(csv, line);) {
    CHECK(std::count(line.begin(), line.end(), ',') == 14);
    ++lines;
  }
  CHECK(lines == 21);
  for (std::size_t k = 1; k < tr.rows.size(); ++k) {
    CHECK(tr.rows[k].bits_cumulative >= tr.rows[k - 1].bits_cumulative);
    CHECK(tr.rows[k].residual <= tr.rows[k - 1].residual);
  }

  const nlohmann::json meta = tr.meta.to_json();
  CHECK(meta.at("seed") == 3);
  CHECK(meta.at("algorithm") == "CP");
  CHECK(meta.at("compressor").at("k") == 2);
  CHECK(meta.at("schedule").at("schedule").at("gamma") == 4.0);
  CHECK(meta.at("problem_fingerprint").get<std::string>().size() > 0);
  CHECK(meta.at("columns").size() == 15);
  CHECK(meta.at("f_star") == p->closed_form_optimum()->f);

  // Without Lyapunov tracking the V columns are written as nan.
  opt.lyapunov = false;
  const std::string plain = trace_csv(run(alg, o, Topology::six_agent(), uniform_initial_iterates(6, 4, 0.0, 1.0, 1), opt));
  CHECK(plain.find(",nan,nan,nan,nan,nan,nan,") != std::string::npos);
}

TEST_CASE("negative gaps are flagged, not clamped") {
  const auto p = make_quadratic_problem(3, 2, QuadraticSpec{}, 3);
  const NoisyOracle o(p, 0.0, 1);
  RunOptions opt;
  opt.rounds = 5;
  Optimum wrong = *p->closed_form_optimum();
  wrong.f += 10.0;  // a claimed f* above the true minimum
  opt.reference = wrong;
  const Trace tr = run(AlgorithmSpec::dsgd("d", 0.05), o, Topology::ring_with_chords(3),
                       uniform_initial_iterates(3, 2, 0.0, 1.0, 1), opt);
  CHECK(tr.rows.back().gap < 0.0);
  CHECK(std::find(tr.meta.flags.begin(), tr.meta.flags.end(), "negative_gap") != tr.meta.flags.end());
}
