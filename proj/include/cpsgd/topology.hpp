#pragma once

#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cpsgd/types.hpp"

namespace cpsgd {

struct Edge {
  int a;  // zero-based, a < b
  int b;
  double weight;
};

struct Neighbor {
  int agent;
  double weight;
};

// Weighted, undirected, connected communication graph. Immutable once built.
class Topology {
 public:
  // Endpoints are 1-based, as in the JSON graph format. Empty `weights` means
  // unit weights; otherwise one positive weight per edge.
  static Topology build(int n, std::span<const std::pair<int, int>> edges,
                        std::span<const double> weights = {});

  // {"n": int, "edges": [[i,j],...], "weights": [w,...] (optional)}
  static Topology from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // The 6-agent graph used in the classification experiment.
  static Topology six_agent();
  // Ring over n agents plus chords i <-> i + n/2 when n >= 4.
  static Topology ring_with_chords(int n);

  int size() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Neighbor>& neighbors(int agent) const { return adjacency_[agent]; }
  Vec degrees() const;

  Mat weight_matrix() const;
  // L = D - W
  Mat laplacian() const;

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

// Union-find connectivity over zero-based edges.
bool is_connected(int n, std::span<const Edge> edges);

struct SpectralData {
  Mat laplacian;
  double lambda_max = 0.0;      // spectral radius of L
  double lambda_min_pos = 0.0;  // smallest positive eigenvalue of L
  Mat projector;                // P with P L = L P = K_n
};

SpectralData spectral(const Topology& topology);

// K_n = I - (1/n) 1 1^T
Mat centering_matrix(int n);

// Metropolis-Hastings mixing matrix: 1/(1+max(d_i,d_j)) on edges, diagonal
// absorbs the rest. Doubly stochastic on any connected graph.
Mat metropolis_weights(const Topology& topology);

// (1/n) sum_i ||x_i - xbar||^2
double consensus_error(const Stack& x);

Vec row_mean(const Stack& x);

}  // namespace cpsgd
