#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpsgd/types.hpp"

namespace cpsgd {

struct Optimum {
  Vec x;
  double f = 0.0;
};

// Ensemble of local costs f_1..f_n on R^d; the global cost is their average.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual int agents() const = 0;
  virtual int dim() const = 0;
  virtual double local_value(int agent, const Vec& x) const = 0;
  virtual void local_gradient(int agent, const Vec& x, Eigen::Ref<Vec> out) const = 0;

  // Documented estimate of the smoothness constant of every f_i.
  virtual double smoothness_estimate() const = 0;
  virtual std::optional<Optimum> closed_form_optimum() const { return std::nullopt; }
  // Stable hash of the problem data.
  virtual std::uint64_t fingerprint() const = 0;
  virtual std::string kind() const = 0;

  // f(x) - f*. Subclasses may override with a cancellation-free form.
  virtual double optimality_gap(const Vec& x, double f_star) const { return value(x) - f_star; }

  Vec local_gradient(int agent, const Vec& x) const;
  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
};

// Per-agent logistic data with a nonconvex regularizer:
//   f_i(x) = (1/m) sum_j log(1 + exp(-u_ij x^T v_ij)) + sum_s lambda*alpha*x_s^2 / (1 + alpha*x_s^2)
struct ClassificationData {
  std::vector<Mat> features;             // per agent, m x d
  std::vector<std::vector<int>> labels;  // per agent, m entries in {-1,+1}
  double lambda = 0.0;
  double alpha = 0.0;

  nlohmann::json to_json() const;
  static ClassificationData from_json(const nlohmann::json& j);
};

class ClassificationProblem final : public Problem {
 public:
  explicit ClassificationProblem(ClassificationData data);

  int agents() const override { return static_cast<int>(data_.features.size()); }
  int dim() const override { return dim_; }
  double local_value(int agent, const Vec& x) const override;
  void local_gradient(int agent, const Vec& x, Eigen::Ref<Vec> out) const override;
  // 1/4 max_i lambda_max(V_i^T V_i / m) + 2 lambda alpha
  double smoothness_estimate() const override { return smoothness_; }
  std::uint64_t fingerprint() const override;
  std::string kind() const override { return "classification"; }

  const ClassificationData& data() const { return data_; }
  using Problem::local_gradient;

 private:
  ClassificationData data_;
  int dim_ = 0;
  double smoothness_ = 0.0;
};

// f_i(x) = 1/2 (x - c_i)^T A_i (x - c_i) with A_i symmetric positive definite.
class QuadraticProblem final : public Problem {
 public:
  QuadraticProblem(std::vector<Mat> hessians, std::vector<Vec> centers);

  int agents() const override { return static_cast<int>(hessians_.size()); }
  int dim() const override { return static_cast<int>(centers_.front().size()); }
  double local_value(int agent, const Vec& x) const override;
  void local_gradient(int agent, const Vec& x, Eigen::Ref<Vec> out) const override;
  double smoothness_estimate() const override { return smoothness_; }
  std::optional<Optimum> closed_form_optimum() const override { return optimum_; }
  std::uint64_t fingerprint() const override;
  std::string kind() const override { return "quadratic"; }
  // 1/2 (x - x*)^T Abar (x - x*), exact for this family.
  double optimality_gap(const Vec& x, double f_star) const override;

  // Smallest eigenvalue of the average Hessian; the P-L constant of f.
  double pl_constant() const { return pl_constant_; }
  const std::vector<Mat>& hessians() const { return hessians_; }
  const std::vector<Vec>& centers() const { return centers_; }
  using Problem::local_gradient;

 private:
  std::vector<Mat> hessians_;
  std::vector<Vec> centers_;
  Mat mean_hessian_;
  Optimum optimum_;
  double smoothness_ = 0.0;
  double pl_constant_ = 0.0;
};

std::shared_ptr<ClassificationProblem> make_classification_problem(int n, int m, int d, double lambda,
                                                                   double alpha, std::uint64_t seed);

struct QuadraticSpec {
  double eig_min = 0.5;       // Hessian spectrum range
  double eig_max = 2.0;
  double heterogeneity = 1.0;  // scale of the per-agent centres
  // Every agent shares one Hessian and centres sum to a common mean, so the
  // global cost is the same function for any agent count.
  bool shared_curvature = false;
};

std::shared_ptr<QuadraticProblem> make_quadratic_problem(int n, int d, const QuadraticSpec& spec,
                                                         std::uint64_t seed);

// Additive Gaussian noise (plus optional fixed bias) on top of exact gradients.
class NoisyOracle {
 public:
  NoisyOracle(std::shared_ptr<const Problem> problem, double noise_std, std::uint64_t seed,
              Vec bias = Vec());

  // grad f_i(x) + bias + noise_std * N(0, I); a pure function of (seed, agent, round).
  void stochastic_gradient(int agent, const Vec& x, std::uint64_t round, Eigen::Ref<Vec> out) const;
  Vec stochastic_gradient(int agent, const Vec& x, std::uint64_t round) const;

  const Problem& problem() const { return *problem_; }
  std::shared_ptr<const Problem> shared_problem() const { return problem_; }
  double noise_std() const { return noise_std_; }
  const Vec& bias() const { return bias_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::shared_ptr<const Problem> problem_;
  double noise_std_;
  std::uint64_t seed_;
  Vec bias_;
};

struct ReferenceSolve {
  Vec x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

// Centralized full-gradient descent with Armijo backtracking until ||grad f|| <= tol.
ReferenceSolve solve_reference_optimum(const Problem& problem, double tol, int max_iters,
                                       const Vec& start);
ReferenceSolve solve_reference_optimum(const Problem& problem, double tol, int max_iters);

}  // namespace cpsgd
