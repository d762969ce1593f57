// Serial reference kernels in the stacked matrix form. They share the random
// streams with the OpenMP kernels but none of their loop structure.

#include "cpsgd/optimizers.hpp"
#include "cpsgd/rng.hpp"

namespace cpsgd::reference {

namespace {

Stack gradients(const NoisyOracle& oracle, const Stack& x, std::uint64_t round) {
  Stack g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    g.row(i) = oracle.stochastic_gradient(static_cast<int>(i), x.row(i).transpose(), round).transpose();
  return g;
}

Stack compress_rows(const CompressorSpec& spec, const Stack& rows, std::uint64_t seed, std::uint64_t round,
                    std::uint64_t& bits) {
  Stack out(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    auto rng = make_engine(seed, Stream::Compression, static_cast<std::uint64_t>(i), round);
    const CompressedMessage msg = compress(spec, rows.row(i).transpose(), rng);
    out.row(i) = msg.reconstructed.transpose();
    bits += msg.bits;
  }
  return out;
}

}  // namespace

RoundStats cp_sgd_round(SwarmState& state, const Topology& topology, const CompressorSpec& compressor,
                        const NoisyOracle& oracle, const StepParams& p, std::uint64_t seed) {
  const auto k = static_cast<std::uint64_t>(state.round);
  RoundStats stats;
  const Stack g = gradients(oracle, state.x, k);
  const Stack q = compress_rows(compressor, state.x - state.xc, seed, k, stats.bits);
  const Stack xhat = compressor.kind == CompressorKind::identity ? state.x : Stack(state.xc + q);
  const Stack lx = topology.laplacian() * xhat;

  state.x = state.x - p.eta * (p.gamma * lx + p.omega * state.v + g);
  state.v = state.v + p.eta * p.omega * lx;
  state.xc = (1.0 - p.alpha_x) * state.xc + p.alpha_x * xhat;
  ++state.round;

  stats.grad_calls = static_cast<std::uint64_t>(g.rows());
  stats.mean_gradient = g.colwise().mean().transpose();
  return stats;
}

RoundStats dsgd_round(SwarmState& state, const Mat& mixing, const NoisyOracle& oracle, double step) {
  const auto k = static_cast<std::uint64_t>(state.round);
  const Stack g = gradients(oracle, state.x, k);
  state.x = mixing * state.x - step * g;
  ++state.round;

  RoundStats stats;
  stats.bits = 32ULL * static_cast<std::uint64_t>(g.size());
  stats.grad_calls = static_cast<std::uint64_t>(g.rows());
  stats.mean_gradient = g.colwise().mean().transpose();
  return stats;
}

RoundStats choco_sgd_round(SwarmState& state, const Mat& mixing, const CompressorSpec& compressor,
                           const NoisyOracle& oracle, double consensus_step, double step, std::uint64_t seed) {
  const auto k = static_cast<std::uint64_t>(state.round);
  RoundStats stats;
  const Stack g = gradients(oracle, state.x, k);
  const Stack half = state.x - step * g;
  const Stack q = compress_rows(compressor, half - state.xc, seed, k, stats.bits);
  state.xc = compressor.kind == CompressorKind::identity ? half : Stack(state.xc + q);
  const Mat offdiag = mixing - Mat(mixing.diagonal().asDiagonal());
  const Vec offdiag_mass = offdiag.rowwise().sum();
  state.x = half + consensus_step * (offdiag * state.xc - offdiag_mass.asDiagonal() * state.xc);
  ++state.round;

  stats.grad_calls = static_cast<std::uint64_t>(g.rows());
  stats.mean_gradient = g.colwise().mean().transpose();
  return stats;
}

}  // namespace cpsgd::reference
