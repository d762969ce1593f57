#include <cmath>
#include <vector>

#include "cpsgd/optimizers.hpp"
#include "cpsgd/rng.hpp"

namespace cpsgd {

namespace {

void check_state(const SwarmState& state, int agents, int dim) {
  if (state.x.rows() != agents || state.x.cols() != dim || state.v.rows() != agents || state.v.cols() != dim ||
      state.xc.rows() != agents || state.xc.cols() != dim)
    throw Error(Errc::DimensionMismatch, "swarm state does not match agents x dimension");
}

Vec column_mean(const Stack& g) { return g.colwise().mean().transpose(); }

void check_doubly_stochastic(const Mat& w) {
  if (w.rows() != w.cols()) throw Error(Errc::BadMixingMatrix, "mixing matrix must be square");
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    if (std::abs(w.row(i).sum() - 1.0) > 1e-10 || std::abs(w.col(i).sum() - 1.0) > 1e-10)
      throw Error(Errc::BadMixingMatrix, "rows and columns must sum to 1");
}

}  // namespace

RoundStats cp_sgd_round(SwarmState& state, const Topology& topology, const CompressorSpec& compressor,
                        const NoisyOracle& oracle, const StepParams& params, std::uint64_t seed, Execution exec) {
  const int n = topology.size();
  const int d = oracle.problem().dim();
  check_state(state, n, d);
  if (oracle.problem().agents() != n) throw Error(Errc::DimensionMismatch, "problem and topology disagree on n");

  const bool parallel = exec == Execution::parallel;
  const auto k = static_cast<std::uint64_t>(state.round);
  Stack xhat(n, d);
  Stack grad(n, d);
  std::vector<std::uint64_t> bits(n, 0);

  // Phase 1: local gradient, compress and broadcast.
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    const Vec xi = state.x.row(i).transpose();
    Vec gi(d);
    oracle.stochastic_gradient(i, xi, k, gi);
    grad.row(i) = gi.transpose();

    auto rng = make_engine(seed, Stream::Compression, static_cast<std::uint64_t>(i), k);
    const Vec diff = (state.x.row(i) - state.xc.row(i)).transpose();
    const CompressedMessage msg = compress(compressor, diff, rng);
    // A lossless message delivers x_i itself; xc + (x - xc) would round.
    if (compressor.kind == CompressorKind::identity)
      xhat.row(i) = state.x.row(i);
    else
      xhat.row(i) = state.xc.row(i) + msg.reconstructed.transpose();
    bits[i] = msg.bits;
  }

  // Phase 2: primal, dual and reference updates from the received estimates.
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    Vec lap = Vec::Zero(d);
    for (const auto& nb : topology.neighbors(i)) lap += nb.weight * (xhat.row(i) - xhat.row(nb.agent)).transpose();
    for (int s = 0; s < d; ++s) {
      const double vi = state.v(i, s);
      state.x(i, s) -= params.eta * (params.gamma * lap[s] + params.omega * vi + grad(i, s));
      state.v(i, s) = vi + params.eta * params.omega * lap[s];
      state.xc(i, s) = (1.0 - params.alpha_x) * state.xc(i, s) + params.alpha_x * xhat(i, s);
    }
  }

  RoundStats stats;
  for (auto b : bits) stats.bits += b;
  stats.grad_calls = static_cast<std::uint64_t>(n);
  stats.mean_gradient = column_mean(grad);
  ++state.round;
  return stats;
}

RoundStats dsgd_round(SwarmState& state, const Mat& mixing, const NoisyOracle& oracle, double step,
                      Execution exec) {
  const int n = static_cast<int>(mixing.rows());
  const int d = oracle.problem().dim();
  check_doubly_stochastic(mixing);
  check_state(state, n, d);
  const bool parallel = exec == Execution::parallel;
  const auto k = static_cast<std::uint64_t>(state.round);
  Stack grad(n, d);
  Stack next(n, d);

#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    Vec gi(d);
    oracle.stochastic_gradient(i, state.x.row(i).transpose(), k, gi);
    grad.row(i) = gi.transpose();
    Vec mixed = Vec::Zero(d);
    for (int j = 0; j < n; ++j)
      if (mixing(i, j) != 0.0) mixed += mixing(i, j) * state.x.row(j).transpose();
    next.row(i) = (mixed - step * gi).transpose();
  }

  state.x = std::move(next);
  RoundStats stats;
  stats.bits = 32ULL * static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(n);
  stats.grad_calls = static_cast<std::uint64_t>(n);
  stats.mean_gradient = column_mean(grad);
  ++state.round;
  return stats;
}

RoundStats choco_sgd_round(SwarmState& state, const Mat& mixing, const CompressorSpec& compressor,
                           const NoisyOracle& oracle, double consensus_step, double step, std::uint64_t seed,
                           Execution exec) {
  const int n = static_cast<int>(mixing.rows());
  const int d = oracle.problem().dim();
  check_state(state, n, d);
  if (!(consensus_step >= 0.0) || !(step > 0.0))
    throw Error(Errc::InvalidSchedule, "Choco-SGD needs gamma >= 0 and eta > 0");
  const bool parallel = exec == Execution::parallel;
  const auto k = static_cast<std::uint64_t>(state.round);
  Stack grad(n, d);
  Stack half(n, d);
  std::vector<std::uint64_t> bits(n, 0);

#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    Vec gi(d);
    oracle.stochastic_gradient(i, state.x.row(i).transpose(), k, gi);
    grad.row(i) = gi.transpose();
    half.row(i) = state.x.row(i) - step * gi.transpose();
    auto rng = make_engine(seed, Stream::Compression, static_cast<std::uint64_t>(i), k);
    const CompressedMessage msg = compress(compressor, (half.row(i) - state.xc.row(i)).transpose(), rng);
    if (compressor.kind == CompressorKind::identity)
      state.xc.row(i) = half.row(i);
    else
      state.xc.row(i) += msg.reconstructed.transpose();
    bits[i] = msg.bits;
  }

#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    Vec gossip = Vec::Zero(d);
    for (int j = 0; j < n; ++j)
      if (j != i && mixing(i, j) != 0.0) gossip += mixing(i, j) * (state.xc.row(j) - state.xc.row(i)).transpose();
    state.x.row(i) = half.row(i) + consensus_step * gossip.transpose();
  }

  RoundStats stats;
  for (auto b : bits) stats.bits += b;
  stats.grad_calls = static_cast<std::uint64_t>(n);
  stats.mean_gradient = column_mean(grad);
  ++state.round;
  return stats;
}

void check_mixing(const Mat& mixing, const Topology& topology) {
  const int n = topology.size();
  if (mixing.rows() != n || mixing.cols() != n) throw Error(Errc::BadMixingMatrix, "mixing matrix must be n x n");
  const Mat adjacency = topology.weight_matrix();
  for (int i = 0; i < n; ++i) {
    if (std::abs(mixing.row(i).sum() - 1.0) > 1e-10) throw Error(Errc::BadMixingMatrix, "row sum != 1");
    if (std::abs(mixing.col(i).sum() - 1.0) > 1e-10) throw Error(Errc::BadMixingMatrix, "column sum != 1");
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (mixing(i, j) < 0.0) throw Error(Errc::BadMixingMatrix, "negative off-diagonal weight");
      if (mixing(i, j) != 0.0 && adjacency(i, j) == 0.0)
        throw Error(Errc::BadMixingMatrix, "weight on a pair that is not an edge");
    }
  }
}

}  // namespace cpsgd
