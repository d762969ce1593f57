#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpsgd/optimizers.hpp"
#include "cpsgd/problems.hpp"
#include "cpsgd/topology.hpp"

namespace cpsgd {

// Energy terms tracked along a CP-SGD run, with K = K_n (x) I_d, P = P (x) I_d,
// g^b the stacked local gradients at the mean iterate and z = v + g^b / omega:
//   V1 = 1/2 ||x||_K^2              V2 = 1/2 (1 + beta1) ||z||_P^2
//   V3 = x^T K P z                  V4 = n (f(xbar) - f*)
//   V5 = ||x - x^c||^2
//   U  = ||x||_K^2 + ||z||_P^2 + ||x - x^c||^2 + n (f(xbar) - f*)
struct LyapunovComponents {
  double v1 = 0.0, v2 = 0.0, v3 = 0.0, v4 = 0.0, v5 = 0.0;
  double u = 0.0;
  double total() const { return v1 + v2 + v3 + v4 + v5; }
};

// beta1 is read off the schedule as gamma / omega.
LyapunovComponents lyapunov_components(const SwarmState& state, const Problem& problem,
                                       const SpectralData& spectral, const StepParams& params,
                                       std::optional<double> f_star);

// min(prev, ||x - 1 (x) x*||^2)
double residual_update(std::optional<double> prev, const Stack& x, const Vec& x_star);

struct TraceRow {
  long long k = 0;
  double consensus_error = 0.0;
  double residual = 0.0;
  double grad_norm_sq = 0.0;  // ||grad f(xbar_k)||^2
  double gap = 0.0;           // f(xbar_k) - f*
  std::uint64_t bits_cumulative = 0;
  LyapunovComponents lyapunov;
  double eta = 0.0, gamma = 0.0, omega = 0.0;
};

struct TraceMetadata {
  std::uint64_t seed = 0;
  std::string algorithm;
  nlohmann::json compressor;
  nlohmann::json schedule;
  std::string problem_fingerprint;
  long long rounds = 0;
  bool lyapunov = false;
  std::optional<double> f_star;
  std::vector<std::string> flags;  // e.g. negative optimality gap observed

  nlohmann::json to_json() const;
};

// Rows k = 0..T; row k describes the iterate before round k is applied and the
// bits spent to reach it.
struct Trace {
  TraceMetadata meta;
  std::vector<TraceRow> rows;
};

// Column order of the CSV trace format.
const std::vector<std::string>& trace_columns();

void write_trace_csv(std::ostream& out, const Trace& trace);
std::string trace_csv(const Trace& trace);
// Writes `path` via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace cpsgd
