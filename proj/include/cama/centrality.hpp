#pragma once

#include <vector>

#include "cama/graph.hpp"

namespace cama {

// Power iteration with uniform teleport; dangling mass is spread uniformly.
// Converges when the L1 residual between sweeps drops below tol.
std::vector<double> pagerank_scores(const Graph& g, double damping = 0.85, double tol = 1e-10,
                                    int max_iters = 10000);

// Exact shortest-path betweenness (Brandes accumulation), undirected and
// unweighted; each pair counted once.
std::vector<double> betweenness_scores(const Graph& g);

// Indices of the k largest scores, ties toward the smaller node id.
std::vector<int> top_k_by_score(const std::vector<double>& scores, int k);

}  // namespace cama
