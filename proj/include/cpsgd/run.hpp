#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "cpsgd/diagnostics.hpp"
#include "cpsgd/optimizers.hpp"

namespace cpsgd {

enum class AlgorithmKind { cp_sgd, dsgd, choco_sgd };

const char* to_string(AlgorithmKind kind);

struct AlgorithmSpec {
  std::string name;
  AlgorithmKind kind = AlgorithmKind::cp_sgd;
  CompressorSpec compressor;       // cp_sgd, choco_sgd
  std::optional<Schedule> schedule;  // cp_sgd
  double step = 0.0;               // dsgd, choco_sgd
  double consensus_step = 0.0;     // choco_sgd

  static AlgorithmSpec cp_sgd(std::string name, CompressorSpec compressor, Schedule schedule);
  static AlgorithmSpec dsgd(std::string name, double step);
  static AlgorithmSpec choco_sgd(std::string name, CompressorSpec compressor, double consensus_step, double step);

  void validate(int dim) const;
  nlohmann::json to_json() const;
};

struct RunOptions {
  long long rounds = 0;
  std::uint64_t seed = 0;  // compression streams; the oracle carries its own noise seed
  bool lyapunov = false;
  std::optional<Optimum> reference;  // x*, f* for residual, gap and V4
  Execution exec = Execution::parallel;
  // Called after every round with the updated state.
  std::function<void(const SwarmState&, const RoundStats&)> observer;
};

// Executes `rounds` synchronous rounds from x0 and records one TraceRow per
// iterate. Throws NonFiniteIterate as soon as any iterate stops being finite.
Trace run(const AlgorithmSpec& algorithm, const NoisyOracle& oracle, const Topology& topology, const Stack& x0,
          const RunOptions& options);

// x_i(0) ~ U[low, high]^d, one stream per agent.
Stack uniform_initial_iterates(int n, int d, double low, double high, std::uint64_t seed);

}  // namespace cpsgd
