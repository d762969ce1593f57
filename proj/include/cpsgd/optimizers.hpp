#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "cpsgd/compression.hpp"
#include "cpsgd/problems.hpp"
#include "cpsgd/topology.hpp"
#include "cpsgd/types.hpp"

namespace cpsgd {

// Step size eta, consensus gain gamma, dual gain omega and reference gain alpha_x
// for one round.
struct StepParams {
  double eta = 0.0;
  double gamma = 0.0;
  double omega = 0.0;
  double alpha_x = 0.0;
};

class Schedule {
 public:
  struct Constant {
    double eta, gamma, omega, alpha_x;
  };
  // gamma = beta1 * omega, eta = beta2 / omega
  struct Coupled {
    double beta1, beta2, omega, alpha_x;
  };
  // omega = beta2 sqrt(T) / sqrt(n), then as Coupled; valid for k < T
  struct Horizon {
    double beta1, beta2;
    long long horizon;
    int agents;
    double alpha_x;
  };
  // gamma_k = gamma_rate (k+1), omega_k = omega_rate (k+1), eta_k = eta_scale / (k+1)
  struct TimeVarying {
    double gamma_rate, omega_rate, eta_scale, alpha_x;
  };
  using Rule = std::variant<Constant, Coupled, Horizon, TimeVarying>;

  static Schedule constant(double eta, double gamma, double omega, double alpha_x);
  static Schedule theorem1(double beta1, double beta2, double omega, double alpha_x);
  static Schedule corollary1(double beta1, double beta2, long long horizon, int agents, double alpha_x);
  static Schedule table1_timevarying(double alpha_x, double gamma_rate = 45.0, double omega_rate = 5.0,
                                     double eta_scale = 1e-4);

  StepParams at(long long k) const;
  // Throws InvalidSchedule unless alpha_x lies in (0, 1/r).
  void validate_for(const CompressorSpec& compressor) const;
  bool time_varying() const { return std::holds_alternative<TimeVarying>(rule_); }
  const Rule& rule() const { return rule_; }
  std::string kind_name() const;

  nlohmann::json to_json() const;

 private:
  explicit Schedule(Rule rule);
  Rule rule_;
};

StepParams schedule_eval(const Schedule& schedule, long long k);

struct SwarmState {
  Stack x;   // primal iterates
  Stack v;   // dual variables
  Stack xc;  // compression references x^c (Choco-SGD: the public estimates x-hat)
  long long round = 0;

  static SwarmState initial(Stack x0);
  int agents() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
};

struct RoundStats {
  std::uint64_t bits = 0;        // sum of broadcast message sizes this round
  std::uint64_t grad_calls = 0;
  Vec mean_gradient;             // (1/n) sum_i g_i^s at the pre-round iterates
};

enum class Execution { parallel, serial };

// One synchronous CP-SGD round. Each agent broadcasts one compressed message
//   xhat_j = x^c_j + C(x_j - x^c_j)
// and then
//   x_i   <- x_i - eta (gamma sum_j L_ij xhat_j + omega v_i + g_i)
//   v_i   <- v_i + eta omega sum_j L_ij xhat_j
//   x^c_j <- (1 - alpha_x) x^c_j + alpha_x xhat_j
// Compression draws use stream (seed, agent, round).
RoundStats cp_sgd_round(SwarmState& state, const Topology& topology, const CompressorSpec& compressor,
                        const NoisyOracle& oracle, const StepParams& params, std::uint64_t seed,
                        Execution exec = Execution::parallel);

// x_i <- sum_j W_ij x_j - eta g_i, uncompressed (32 bits per coordinate).
RoundStats dsgd_round(SwarmState& state, const Mat& mixing, const NoisyOracle& oracle, double step,
                      Execution exec = Execution::parallel);

// Choco-SGD gossip with compressed estimates, mixing weights W:
//   x_half_i = x_i - eta g_i
//   xhat_i  += C(x_half_i - xhat_i)
//   x_i      = x_half_i + gamma sum_j W_ij (xhat_j - xhat_i)
RoundStats choco_sgd_round(SwarmState& state, const Mat& mixing, const CompressorSpec& compressor,
                           const NoisyOracle& oracle, double consensus_step, double step, std::uint64_t seed,
                           Execution exec = Execution::parallel);

// Throws BadMixingMatrix unless W is symmetric-shaped, non-negative off the
// graph's support only, and rows/columns sum to 1 within 1e-10.
void check_mixing(const Mat& mixing, const Topology& topology);

// Straight-line serial versions of the round kernels, kept as the reference the
// OpenMP kernels are checked against.
namespace reference {
RoundStats cp_sgd_round(SwarmState& state, const Topology& topology, const CompressorSpec& compressor,
                        const NoisyOracle& oracle, const StepParams& params, std::uint64_t seed);
RoundStats dsgd_round(SwarmState& state, const Mat& mixing, const NoisyOracle& oracle, double step);
RoundStats choco_sgd_round(SwarmState& state, const Mat& mixing, const CompressorSpec& compressor,
                           const NoisyOracle& oracle, double consensus_step, double step, std::uint64_t seed);
}  // namespace reference

}  // namespace cpsgd
