#include "cpsgd/problems.hpp"

#include <cmath>
#include <random>

#include "cpsgd/rng.hpp"

namespace cpsgd {

namespace {

// log(1 + exp(t)) without overflow
double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void hash_matrix(Fnv1a& h, const Mat& m) {
  h.add(m.rows());
  h.add(m.cols());
  h.add_bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void hash_vector(Fnv1a& h, const Vec& v) {
  h.add(v.size());
  h.add_bytes(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

Mat random_spd(int d, double lo, double hi, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(lo, hi);
  Mat g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Mat> qr(g);
  const Mat q = qr.householderQ();
  Vec eig(d);
  for (int i = 0; i < d; ++i) eig[i] = uniform(rng);
  if (d >= 2) {
    eig[0] = lo;
    eig[1] = hi;
  }
  Mat a = q * eig.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

Vec gaussian_vector(int d, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  Vec v(d);
  for (auto& c : v) c = normal(rng);
  return v;
}

}  // namespace

Vec Problem::local_gradient(int agent, const Vec& x) const {
  Vec g(dim());
  local_gradient(agent, x, g);
  return g;
}

double Problem::value(const Vec& x) const {
  double acc = 0.0;
  for (int i = 0; i < agents(); ++i) acc += local_value(i, x);
  return acc / agents();
}

Vec Problem::gradient(const Vec& x) const {
  Vec acc = Vec::Zero(dim());
  Vec g(dim());
  for (int i = 0; i < agents(); ++i) {
    local_gradient(i, x, g);
    acc += g;
  }
  return acc / agents();
}

// ---------------------------------------------------------------------------
// Classification

nlohmann::json ClassificationData::to_json() const {
  nlohmann::json agents = nlohmann::json::array();
  for (std::size_t i = 0; i < features.size(); ++i) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < features[i].rows(); ++r) {
      std::vector<double> row(features[i].cols());
      for (Eigen::Index c = 0; c < features[i].cols(); ++c) row[c] = features[i](r, c);
      rows.push_back(row);
    }
    agents.push_back({{"features", rows}, {"labels", labels[i]}});
  }
  return {{"kind", "classification"}, {"lambda", lambda}, {"alpha", alpha}, {"agents", agents}};
}

ClassificationData ClassificationData::from_json(const nlohmann::json& j) {
  try {
    ClassificationData data;
    data.lambda = j.at("lambda").get<double>();
    data.alpha = j.at("alpha").get<double>();
    for (const auto& agent : j.at("agents")) {
      const auto rows = agent.at("features").get<std::vector<std::vector<double>>>();
      auto labels = agent.at("labels").get<std::vector<int>>();
      if (rows.empty() || rows.size() != labels.size())
        throw Error(Errc::ParseError, "features and labels must be non-empty and equally long");
      Mat f(rows.size(), rows.front().size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.front().size()) throw Error(Errc::ParseError, "ragged feature matrix");
        for (std::size_t c = 0; c < rows[r].size(); ++c) f(r, c) = rows[r][c];
      }
      for (int u : labels)
        if (u != 1 && u != -1) throw Error(Errc::ParseError, "labels must be -1 or +1");
      data.features.push_back(std::move(f));
      data.labels.push_back(std::move(labels));
    }
    return data;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::ParseError, ex.what());
  }
}

ClassificationProblem::ClassificationProblem(ClassificationData data) : data_(std::move(data)) {
  if (data_.features.empty()) throw Error(Errc::DimensionMismatch, "no agents");
  dim_ = static_cast<int>(data_.features.front().cols());
  double curvature = 0.0;
  for (const auto& v : data_.features) {
    if (v.cols() != dim_) throw Error(Errc::DimensionMismatch, "agents disagree on dimension");
    const Mat gram = (v.transpose() * v) / static_cast<double>(v.rows());
    Eigen::SelfAdjointEigenSolver<Mat> solver(gram, Eigen::EigenvaluesOnly);
    curvature = std::max(curvature, solver.eigenvalues().maxCoeff());
  }
  smoothness_ = 0.25 * curvature + 2.0 * data_.lambda * data_.alpha;
}

double ClassificationProblem::local_value(int agent, const Vec& x) const {
  const Mat& v = data_.features[agent];
  const auto& u = data_.labels[agent];
  const Vec margins = v * x;
  double loss = 0.0;
  for (Eigen::Index j = 0; j < margins.size(); ++j) loss += softplus(-u[j] * margins[j]);
  loss /= static_cast<double>(margins.size());
  double reg = 0.0;
  for (double xs : x) reg += data_.lambda * data_.alpha * xs * xs / (1.0 + data_.alpha * xs * xs);
  return loss + reg;
}

void ClassificationProblem::local_gradient(int agent, const Vec& x, Eigen::Ref<Vec> out) const {
  const Mat& v = data_.features[agent];
  const auto& u = data_.labels[agent];
  const Vec margins = v * x;
  Vec weights(margins.size());
  for (Eigen::Index j = 0; j < margins.size(); ++j) weights[j] = -u[j] * sigmoid(-u[j] * margins[j]);
  out.noalias() = v.transpose() * weights / static_cast<double>(margins.size());
  for (Eigen::Index s = 0; s < x.size(); ++s) {
    const double q = 1.0 + data_.alpha * x[s] * x[s];
    out[s] += 2.0 * data_.lambda * data_.alpha * x[s] / (q * q);
  }
}

std::uint64_t ClassificationProblem::fingerprint() const {
  Fnv1a h;
  h.add(data_.lambda);
  h.add(data_.alpha);
  for (std::size_t i = 0; i < data_.features.size(); ++i) {
    hash_matrix(h, data_.features[i]);
    h.add_bytes(data_.labels[i].data(), sizeof(int) * data_.labels[i].size());
  }
  return h.value();
}

std::shared_ptr<ClassificationProblem> make_classification_problem(int n, int m, int d, double lambda,
                                                                   double alpha, std::uint64_t seed) {
  if (n < 1 || m < 1 || d < 1) throw Error(Errc::DimensionMismatch, "n, m, d must be positive");
  if (lambda < 0.0 || alpha < 0.0) throw Error(Errc::DimensionMismatch, "lambda and alpha must be non-negative");
  ClassificationData data;
  data.lambda = lambda;
  data.alpha = alpha;
  for (int i = 0; i < n; ++i) {
    auto rng = make_engine(seed, Stream::Dataset, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal;
    std::bernoulli_distribution coin(0.5);
    Mat features(m, d);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < d; ++c) features(r, c) = normal(rng);
    std::vector<int> labels(m);
    for (auto& u : labels) u = coin(rng) ? 1 : -1;
    data.features.push_back(std::move(features));
    data.labels.push_back(std::move(labels));
  }
  return std::make_shared<ClassificationProblem>(std::move(data));
}

// ---------------------------------------------------------------------------
// Quadratic

QuadraticProblem::QuadraticProblem(std::vector<Mat> hessians, std::vector<Vec> centers)
    : hessians_(std::move(hessians)), centers_(std::move(centers)) {
  if (hessians_.empty() || hessians_.size() != centers_.size())
    throw Error(Errc::DimensionMismatch, "need one Hessian per centre");
  const int d = static_cast<int>(centers_.front().size());
  Mat sum = Mat::Zero(d, d);
  Vec rhs = Vec::Zero(d);
  for (std::size_t i = 0; i < hessians_.size(); ++i) {
    if (hessians_[i].rows() != d || hessians_[i].cols() != d || centers_[i].size() != d)
      throw Error(Errc::DimensionMismatch, "inconsistent quadratic dimensions");
    sum += hessians_[i];
    rhs += hessians_[i] * centers_[i];
    Eigen::SelfAdjointEigenSolver<Mat> local(hessians_[i], Eigen::EigenvaluesOnly);
    smoothness_ = std::max(smoothness_, local.eigenvalues().cwiseAbs().maxCoeff());
  }
  Eigen::SelfAdjointEigenSolver<Mat> solver(sum, Eigen::EigenvaluesOnly);
  const double lo = solver.eigenvalues().minCoeff();
  if (!(lo > 1e-12 * std::max(1.0, solver.eigenvalues().maxCoeff())))
    throw Error(Errc::SingularHessianSum, "sum of Hessians is not positive definite");
  mean_hessian_ = sum / static_cast<double>(hessians_.size());
  pl_constant_ = lo / static_cast<double>(hessians_.size());
  optimum_.x = sum.llt().solve(rhs);
  optimum_.f = value(optimum_.x);
}

double QuadraticProblem::local_value(int agent, const Vec& x) const {
  const Vec r = x - centers_[agent];
  return 0.5 * r.dot(hessians_[agent] * r);
}

void QuadraticProblem::local_gradient(int agent, const Vec& x, Eigen::Ref<Vec> out) const {
  out.noalias() = hessians_[agent] * (x - centers_[agent]);
}

double QuadraticProblem::optimality_gap(const Vec& x, double f_star) const {
  if (f_star != optimum_.f) return value(x) - f_star;
  const Vec r = x - optimum_.x;
  return 0.5 * r.dot(mean_hessian_ * r);
}

std::uint64_t QuadraticProblem::fingerprint() const {
  Fnv1a h;
  for (std::size_t i = 0; i < hessians_.size(); ++i) {
    hash_matrix(h, hessians_[i]);
    hash_vector(h, centers_[i]);
  }
  return h.value();
}

std::shared_ptr<QuadraticProblem> make_quadratic_problem(int n, int d, const QuadraticSpec& spec,
                                                         std::uint64_t seed) {
  if (n < 1 || d < 1) throw Error(Errc::DimensionMismatch, "n and d must be positive");
  if (!(spec.eig_min > 0.0) || spec.eig_max < spec.eig_min)
    throw Error(Errc::SingularHessianSum, "Hessian spectrum must be positive with eig_min <= eig_max");
  std::vector<Mat> hessians;
  std::vector<Vec> centers;
  if (spec.shared_curvature) {
    // Shared pieces come from a stream that does not depend on n.
    auto shared = make_engine(seed, Stream::Dataset, ~std::uint64_t{0});
    const Mat a = random_spd(d, spec.eig_min, spec.eig_max, shared);
    const Vec mean_center = gaussian_vector(d, 1.0, shared);
    Vec offset_mean = Vec::Zero(d);
    for (int i = 0; i < n; ++i) {
      auto rng = make_engine(seed, Stream::Dataset, static_cast<std::uint64_t>(i));
      centers.push_back(gaussian_vector(d, spec.heterogeneity, rng));
      offset_mean += centers.back();
    }
    offset_mean /= n;
    for (auto& c : centers) c = mean_center + (c - offset_mean);
    hessians.assign(n, a);
  } else {
    for (int i = 0; i < n; ++i) {
      auto rng = make_engine(seed, Stream::Dataset, static_cast<std::uint64_t>(i));
      hessians.push_back(random_spd(d, spec.eig_min, spec.eig_max, rng));
      centers.push_back(gaussian_vector(d, spec.heterogeneity, rng));
    }
  }
  return std::make_shared<QuadraticProblem>(std::move(hessians), std::move(centers));
}

// ---------------------------------------------------------------------------
// Noisy oracle

NoisyOracle::NoisyOracle(std::shared_ptr<const Problem> problem, double noise_std, std::uint64_t seed, Vec bias)
    : problem_(std::move(problem)), noise_std_(noise_std), seed_(seed), bias_(std::move(bias)) {
  if (!problem_) throw Error(Errc::DimensionMismatch, "oracle needs a problem");
  if (!(noise_std_ >= 0.0)) throw Error(Errc::DimensionMismatch, "noise scale must be non-negative");
  if (bias_.size() != 0 && bias_.size() != problem_->dim())
    throw Error(Errc::DimensionMismatch, "bias length must equal the problem dimension");
}

void NoisyOracle::stochastic_gradient(int agent, const Vec& x, std::uint64_t round, Eigen::Ref<Vec> out) const {
  problem_->local_gradient(agent, x, out);
  if (bias_.size() != 0) out += bias_;
  if (noise_std_ == 0.0) return;
  auto rng = make_engine(seed_, Stream::Noise, static_cast<std::uint64_t>(agent), round);
  std::normal_distribution<double> normal(0.0, noise_std_);
  for (Eigen::Index s = 0; s < out.size(); ++s) out[s] += normal(rng);
}

Vec NoisyOracle::stochastic_gradient(int agent, const Vec& x, std::uint64_t round) const {
  Vec g(problem_->dim());
  stochastic_gradient(agent, x, round, g);
  return g;
}

// ---------------------------------------------------------------------------
// Reference optimum

ReferenceSolve solve_reference_optimum(const Problem& problem, double tol, int max_iters, const Vec& start) {
  if (start.size() != problem.dim()) throw Error(Errc::DimensionMismatch, "start has wrong dimension");
  const double safe_step = 1.0 / problem.smoothness_estimate();
  ReferenceSolve out;
  out.x = start;
  double f = problem.value(out.x);
  double step = safe_step;
  for (out.iterations = 0;; ++out.iterations) {
    const Vec g = problem.gradient(out.x);
    out.grad_norm = g.norm();
    if (out.grad_norm <= tol) break;
    if (out.iterations >= max_iters)
      throw Error(Errc::NoConvergence, "||grad f|| = " + std::to_string(out.grad_norm) + " after " +
                                           std::to_string(max_iters) + " iterations");
    const double gg = g.squaredNorm();
    // Armijo backtracking; below the safe step 1/L the step is taken as is.
    Vec trial;
    double f_trial = 0.0;
    for (;;) {
      trial = out.x - step * g;
      f_trial = problem.value(trial);
      if (f_trial <= f - 0.5 * step * gg || step <= safe_step) break;
      step *= 0.5;
    }
    out.x = std::move(trial);
    f = f_trial;
    step = std::min(2.0 * step, 64.0 * safe_step);
  }
  out.f = f;
  return out;
}

ReferenceSolve solve_reference_optimum(const Problem& problem, double tol, int max_iters) {
  return solve_reference_optimum(problem, tol, max_iters, Vec::Zero(problem.dim()));
}

}  // namespace cpsgd
