#include "cpsgd/diagnostics.hpp"

#include <algorithm>

namespace cpsgd {

LyapunovComponents lyapunov_components(const SwarmState& state, const Problem& problem,
                                       const SpectralData& spectral, const StepParams& params,
                                       std::optional<double> f_star) {
  if (!f_star) throw Error(Errc::MissingFStar, "Lyapunov tracking needs f*");
  if (!(params.omega > 0.0)) throw Error(Errc::InvalidSchedule, "Lyapunov tracking needs omega > 0");
  const int n = state.agents();
  const Vec mean = row_mean(state.x);

  Stack gb(n, state.dim());
  for (int i = 0; i < n; ++i) gb.row(i) = problem.local_gradient(i, mean).transpose();
  const Stack z = state.v + gb / params.omega;
  const Stack centered = state.x.rowwise() - mean.transpose();  // K x
  const Stack pz = spectral.projector * z;
  const double beta1 = params.gamma / params.omega;

  LyapunovComponents out;
  const double consensus = centered.squaredNorm();
  const double z_p = (z.array() * pz.array()).sum();
  const double compression = (state.x - state.xc).squaredNorm();
  out.v1 = 0.5 * consensus;
  out.v2 = 0.5 * (1.0 + beta1) * z_p;
  // K is symmetric and idempotent, so x^T K P z = (K x)^T (P z).
  out.v3 = (centered.array() * pz.array()).sum();
  out.v4 = n * problem.optimality_gap(mean, *f_star);
  out.v5 = compression;
  out.u = consensus + z_p + compression + out.v4;
  return out;
}

double residual_update(std::optional<double> prev, const Stack& x, const Vec& x_star) {
  const double current = (x.rowwise() - x_star.transpose()).squaredNorm();
  return prev ? std::min(*prev, current) : current;
}

nlohmann::json TraceMetadata::to_json() const {
  nlohmann::json j{{"seed", seed},
                   {"algorithm", algorithm},
                   {"compressor", compressor},
                   {"schedule", schedule},
                   {"problem_fingerprint", problem_fingerprint},
                   {"rounds", rounds},
                   {"lyapunov", lyapunov},
                   {"columns", trace_columns()},
                   {"flags", flags}};
  j["f_star"] = f_star ? nlohmann::json(*f_star) : nlohmann::json(nullptr);
  return j;
}

}  // namespace cpsgd
