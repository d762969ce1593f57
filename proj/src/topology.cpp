#include "cpsgd/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace cpsgd {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidTopology: return "InvalidTopology";
    case Errc::DisconnectedGraph: return "DisconnectedGraph";
    case Errc::SelfLoop: return "SelfLoop";
    case Errc::DuplicateEdge: return "DuplicateEdge";
    case Errc::NonPositiveWeight: return "NonPositiveWeight";
    case Errc::EigenFailure: return "EigenFailure";
    case Errc::BadK: return "BadK";
    case Errc::InvalidCompressor: return "InvalidCompressor";
    case Errc::ContractViolation: return "ContractViolation";
    case Errc::SingularHessianSum: return "SingularHessianSum";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::InvalidSchedule: return "InvalidSchedule";
    case Errc::ScheduleExhausted: return "ScheduleExhausted";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::BadMixingMatrix: return "BadMixingMatrix";
    case Errc::NonFiniteIterate: return "NonFiniteIterate";
    case Errc::MissingFStar: return "MissingFStar";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

struct DisjointSets {
  explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
  std::vector<int> parent;
};

}  // namespace

bool is_connected(int n, std::span<const Edge> edges) {
  if (n <= 1) return n == 1;
  DisjointSets sets(n);
  for (const auto& e : edges) sets.unite(e.a, e.b);
  const int root = sets.find(0);
  for (int i = 1; i < n; ++i)
    if (sets.find(i) != root) return false;
  return true;
}

Topology Topology::build(int n, std::span<const std::pair<int, int>> edges,
                         std::span<const double> weights) {
  if (n < 1) throw Error(Errc::InvalidTopology, "agent count must be positive");
  if (!weights.empty() && weights.size() != edges.size())
    throw Error(Errc::InvalidTopology, "weights must match edges one-to-one");

  Topology t;
  t.n_ = n;
  t.adjacency_.resize(n);
  std::set<std::pair<int, int>> seen;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [i, j] = edges[e];
    if (i < 1 || i > n || j < 1 || j > n)
      throw Error(Errc::InvalidTopology, "edge endpoint outside [1.." + std::to_string(n) + "]");
    if (i == j) throw Error(Errc::SelfLoop, "self-loop at agent " + std::to_string(i));
    const double w = weights.empty() ? 1.0 : weights[e];
    if (!(w > 0.0) || !std::isfinite(w))
      throw Error(Errc::NonPositiveWeight, "edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
    const int a = std::min(i, j) - 1;
    const int b = std::max(i, j) - 1;
    if (!seen.emplace(a, b).second)
      throw Error(Errc::DuplicateEdge,
                  "edge (" + std::to_string(a + 1) + "," + std::to_string(b + 1) + ") listed twice");
    t.edges_.push_back({a, b, w});
    t.adjacency_[a].push_back({b, w});
    t.adjacency_[b].push_back({a, w});
  }
  for (auto& list : t.adjacency_)
    std::sort(list.begin(), list.end(), [](const Neighbor& l, const Neighbor& r) { return l.agent < r.agent; });
  if (!is_connected(n, t.edges_)) throw Error(Errc::DisconnectedGraph, "graph has more than one component");
  return t;
}

Topology Topology::from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw Error(Errc::InvalidTopology, "edge must be a pair");
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    std::vector<double> weights;
    if (j.contains("weights")) weights = j.at("weights").get<std::vector<double>>();
    return build(n, edges, weights);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::InvalidTopology, ex.what());
  }
}

nlohmann::json Topology::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  nlohmann::json weights = nlohmann::json::array();
  bool unit = true;
  for (const auto& e : edges_) {
    edges.push_back({e.a + 1, e.b + 1});
    weights.push_back(e.weight);
    unit = unit && e.weight == 1.0;
  }
  nlohmann::json j{{"n", n_}, {"edges", edges}};
  if (!unit) j["weights"] = weights;
  return j;
}

Topology Topology::six_agent() {
  static constexpr std::pair<int, int> kEdges[] = {{1, 2}, {1, 4}, {1, 6}, {2, 3},
                                                   {2, 5}, {3, 4}, {4, 5}, {5, 6}};
  return build(6, kEdges);
}

Topology Topology::ring_with_chords(int n) {
  std::set<std::pair<int, int>> unique;
  auto add = [&](int i, int j) {
    if (i != j) unique.emplace(std::min(i, j), std::max(i, j));
  };
  for (int i = 1; i < n; ++i) add(i, i + 1);
  if (n >= 3) add(n, 1);
  if (n >= 4)
    for (int i = 1; i <= n; ++i) add(i, (i - 1 + n / 2) % n + 1);
  std::vector<std::pair<int, int>> edges(unique.begin(), unique.end());
  return build(n, edges);
}

Vec Topology::degrees() const {
  Vec deg = Vec::Zero(n_);
  for (const auto& e : edges_) {
    deg[e.a] += e.weight;
    deg[e.b] += e.weight;
  }
  return deg;
}

Mat Topology::weight_matrix() const {
  Mat w = Mat::Zero(n_, n_);
  for (const auto& e : edges_) w(e.a, e.b) = w(e.b, e.a) = e.weight;
  return w;
}

Mat Topology::laplacian() const {
  Mat lap = -weight_matrix();
  lap.diagonal() = degrees();
  return lap;
}

Mat centering_matrix(int n) {
  return Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / n);
}

SpectralData spectral(const Topology& topology) {
  const int n = topology.size();
  SpectralData out;
  out.laplacian = topology.laplacian();
  if (n == 1) {
    // No positive eigenvalue exists; P reduces to the consensus block with weight 1.
    out.projector = Mat::Ones(1, 1);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Mat> solver(out.laplacian);
  if (solver.info() != Eigen::Success) throw Error(Errc::EigenFailure, "Laplacian eigendecomposition failed");
  const Vec& eig = solver.eigenvalues();
  const Mat& basis = solver.eigenvectors();
  out.lambda_max = eig.maxCoeff();
  const double zero_threshold = 1e-9 * out.lambda_max;
  out.lambda_min_pos = out.lambda_max;
  out.projector = Mat::Constant(n, n, 1.0 / (n * out.lambda_max));
  for (int i = 0; i < n; ++i) {
    if (eig[i] <= zero_threshold) continue;
    out.lambda_min_pos = std::min(out.lambda_min_pos, eig[i]);
    out.projector.noalias() += (1.0 / eig[i]) * basis.col(i) * basis.col(i).transpose();
  }
  return out;
}

Mat metropolis_weights(const Topology& topology) {
  const int n = topology.size();
  // Degrees here are neighbour counts, independent of edge weights.
  std::vector<int> count(n, 0);
  for (const auto& e : topology.edges()) {
    ++count[e.a];
    ++count[e.b];
  }
  Mat w = Mat::Zero(n, n);
  for (const auto& e : topology.edges()) {
    const double v = 1.0 / (1.0 + std::max(count[e.a], count[e.b]));
    w(e.a, e.b) = w(e.b, e.a) = v;
  }
  for (int i = 0; i < n; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return w;
}

Vec row_mean(const Stack& x) { return x.colwise().mean().transpose(); }

double consensus_error(const Stack& x) {
  if (x.rows() == 0) return 0.0;
  const Vec mean = row_mean(x);
  return (x.rowwise() - mean.transpose()).squaredNorm() / static_cast<double>(x.rows());
}

}  // namespace cpsgd
