#include "cpsgd/run.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "cpsgd/rng.hpp"

namespace cpsgd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

LyapunovComponents nan_components() { return {kNaN, kNaN, kNaN, kNaN, kNaN, kNaN}; }

}  // namespace

const char* to_string(AlgorithmKind kind) {
  switch (kind) {
    case AlgorithmKind::cp_sgd: return "cp_sgd";
    case AlgorithmKind::dsgd: return "dsgd";
    case AlgorithmKind::choco_sgd: return "choco_sgd";
  }
  return "?";
}

AlgorithmSpec AlgorithmSpec::cp_sgd(std::string name, CompressorSpec compressor, Schedule schedule) {
  AlgorithmSpec a;
  a.name = std::move(name);
  a.kind = AlgorithmKind::cp_sgd;
  a.compressor = compressor;
  a.schedule = std::move(schedule);
  return a;
}

AlgorithmSpec AlgorithmSpec::dsgd(std::string name, double step) {
  AlgorithmSpec a;
  a.name = std::move(name);
  a.kind = AlgorithmKind::dsgd;
  a.step = step;
  return a;
}

AlgorithmSpec AlgorithmSpec::choco_sgd(std::string name, CompressorSpec compressor, double consensus_step,
                                       double step) {
  AlgorithmSpec a;
  a.name = std::move(name);
  a.kind = AlgorithmKind::choco_sgd;
  a.compressor = compressor;
  a.consensus_step = consensus_step;
  a.step = step;
  return a;
}

void AlgorithmSpec::validate(int dim) const {
  switch (kind) {
    case AlgorithmKind::cp_sgd:
      if (!schedule) throw Error(Errc::InvalidSchedule, name + ": CP-SGD needs a schedule");
      compressor.validate(dim);
      schedule->validate_for(compressor);
      break;
    case AlgorithmKind::dsgd:
      if (!(step > 0.0)) throw Error(Errc::InvalidSchedule, name + ": step must be positive");
      break;
    case AlgorithmKind::choco_sgd:
      compressor.validate(dim);
      if (!(step > 0.0)) throw Error(Errc::InvalidSchedule, name + ": step must be positive");
      if (!(consensus_step >= 0.0)) throw Error(Errc::InvalidSchedule, name + ": consensus_step must be >= 0");
      break;
  }
}

nlohmann::json AlgorithmSpec::to_json() const {
  nlohmann::json j{{"name", name}, {"kind", to_string(kind)}};
  switch (kind) {
    case AlgorithmKind::cp_sgd:
      j["compressor"] = compressor.to_json();
      j["schedule"] = schedule->to_json();
      break;
    case AlgorithmKind::dsgd: j["step"] = step; break;
    case AlgorithmKind::choco_sgd:
      j["compressor"] = compressor.to_json();
      j["consensus_step"] = consensus_step;
      j["step"] = step;
      break;
  }
  return j;
}

Stack uniform_initial_iterates(int n, int d, double low, double high, std::uint64_t seed) {
  Stack x(n, d);
  for (int i = 0; i < n; ++i) {
    auto rng = make_engine(seed, Stream::Init, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> uniform(low, high);
    for (int s = 0; s < d; ++s) x(i, s) = uniform(rng);
  }
  return x;
}

Trace run(const AlgorithmSpec& algorithm, const NoisyOracle& oracle, const Topology& topology, const Stack& x0,
          const RunOptions& options) {
  const Problem& problem = oracle.problem();
  const int n = topology.size();
  const int d = problem.dim();
  if (options.rounds < 1) throw Error(Errc::InvalidSchedule, "rounds must be >= 1");
  if (problem.agents() != n || x0.rows() != n || x0.cols() != d)
    throw Error(Errc::DimensionMismatch, "problem, topology and x0 disagree on shape");
  algorithm.validate(d);

  const bool cp = algorithm.kind == AlgorithmKind::cp_sgd;
  const bool track_lyapunov = options.lyapunov && cp;
  std::optional<SpectralData> spec_data;
  if (track_lyapunov) {
    if (!options.reference) throw Error(Errc::MissingFStar, "Lyapunov tracking needs a reference optimum");
    spec_data = spectral(topology);
  }
  Mat mixing;
  if (!cp) {
    mixing = metropolis_weights(topology);
    check_mixing(mixing, topology);
  }

  Trace trace;
  trace.meta.seed = options.seed;
  trace.meta.algorithm = algorithm.name;
  trace.meta.compressor = algorithm.kind == AlgorithmKind::dsgd ? nlohmann::json(nullptr)
                                                                : algorithm.compressor.to_json();
  trace.meta.schedule = algorithm.to_json();
  trace.meta.problem_fingerprint = hex(problem.fingerprint());
  trace.meta.rounds = options.rounds;
  trace.meta.lyapunov = track_lyapunov;
  if (options.reference) trace.meta.f_star = options.reference->f;
  trace.rows.reserve(static_cast<std::size_t>(options.rounds) + 1);

  SwarmState state = SwarmState::initial(x0);
  std::optional<double> residual;
  std::uint64_t bits = 0;
  bool negative_gap = false;

  auto params_at = [&](long long k) -> StepParams {
    if (cp) return algorithm.schedule->at(std::min(k, options.rounds - 1));
    return {algorithm.step, algorithm.kind == AlgorithmKind::choco_sgd ? algorithm.consensus_step : kNaN, kNaN,
            kNaN};
  };

  auto record = [&](long long k) {
    TraceRow row;
    row.k = k;
    row.bits_cumulative = bits;
    row.consensus_error = consensus_error(state.x);
    const Vec mean = row_mean(state.x);
    row.grad_norm_sq = problem.gradient(mean).squaredNorm();
    if (options.reference) {
      residual = residual_update(residual, state.x, options.reference->x);
      row.residual = *residual;
      row.gap = problem.optimality_gap(mean, options.reference->f);
      negative_gap = negative_gap || row.gap < 0.0;
    } else {
      row.residual = kNaN;
      row.gap = kNaN;
    }
    const StepParams p = params_at(k);
    row.eta = p.eta;
    row.gamma = p.gamma;
    row.omega = p.omega;
    row.lyapunov = track_lyapunov
                       ? lyapunov_components(state, problem, *spec_data, p, options.reference->f)
                       : nan_components();
    trace.rows.push_back(row);
  };

  record(0);
  for (long long k = 0; k < options.rounds; ++k) {
    RoundStats stats;
    switch (algorithm.kind) {
      case AlgorithmKind::cp_sgd:
        stats = cp_sgd_round(state, topology, algorithm.compressor, oracle, algorithm.schedule->at(k),
                             options.seed, options.exec);
        break;
      case AlgorithmKind::dsgd: stats = dsgd_round(state, mixing, oracle, algorithm.step, options.exec); break;
      case AlgorithmKind::choco_sgd:
        stats = choco_sgd_round(state, mixing, algorithm.compressor, oracle, algorithm.consensus_step,
                                algorithm.step, options.seed, options.exec);
        break;
    }
    if (!state.x.allFinite() || !state.v.allFinite() || !state.xc.allFinite())
      throw Error(Errc::NonFiniteIterate, algorithm.name + ": non-finite iterate after round " + std::to_string(k));
    bits += stats.bits;
    if (options.observer) options.observer(state, stats);
    record(k + 1);
  }
  if (negative_gap) trace.meta.flags.push_back("negative_gap");
  return trace;
}

}  // namespace cpsgd
