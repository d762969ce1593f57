#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cpsgd {

// One row per agent. Row-major so that an agent's iterate is contiguous.
using Stack = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Errc {
  InvalidTopology,
  DisconnectedGraph,
  SelfLoop,
  DuplicateEdge,
  NonPositiveWeight,
  EigenFailure,
  BadK,
  InvalidCompressor,
  ContractViolation,
  SingularHessianSum,
  NoConvergence,
  InvalidSchedule,
  ScheduleExhausted,
  DimensionMismatch,
  BadMixingMatrix,
  NonFiniteIterate,
  MissingFStar,
  ParseError,
  ValidationError,
  IoError,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cpsgd
