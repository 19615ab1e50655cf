#include "cama/centrality.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cama {

namespace {

std::vector<std::vector<int>> adjacency_lists(const Graph& g) {
    std::vector<std::vector<int>> adj(g.n);
    for (const auto& [u, v] : g.edges) {
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    return adj;
}

}  // namespace

std::vector<double> pagerank_scores(const Graph& g, double damping, double tol, int max_iters) {
    const int n = g.n;
    const auto adj = adjacency_lists(g);
    std::vector<double> p(n, 1.0 / n), next(n);
    for (int it = 0; it < max_iters; ++it) {
        double dangling = 0.0;
        for (int v = 0; v < n; ++v)
            if (g.degree[v] == 0) dangling += p[v];
        const double base = (1.0 - damping) / n + damping * dangling / n;
        std::fill(next.begin(), next.end(), base);
        for (int v = 0; v < n; ++v) {
            if (g.degree[v] == 0) continue;
            const double share = damping * p[v] / g.degree[v];
            for (int u : adj[v]) next[u] += share;
        }
        double resid = 0.0;
        for (int v = 0; v < n; ++v) resid += std::fabs(next[v] - p[v]);
        p.swap(next);
        if (resid < tol) break;
    }
    return p;
}

std::vector<double> betweenness_scores(const Graph& g) {
    const int n = g.n;
    const auto adj = adjacency_lists(g);
    std::vector<double> bc(n, 0.0);
    std::vector<int> dist(n), order;
    std::vector<double> sigma(n), delta(n);
    std::vector<std::vector<int>> pred(n);
    order.reserve(n);

    for (int s = 0; s < n; ++s) {
        std::fill(dist.begin(), dist.end(), -1);
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        for (auto& pv : pred) pv.clear();
        order.clear();

        dist[s] = 0;
        sigma[s] = 1.0;
        order.push_back(s);
        for (size_t head = 0; head < order.size(); ++head) {
            const int v = order[head];
            for (int w : adj[v]) {
                if (dist[w] < 0) {
                    dist[w] = dist[v] + 1;
                    order.push_back(w);
                }
                if (dist[w] == dist[v] + 1) {
                    sigma[w] += sigma[v];
                    pred[w].push_back(v);
                }
            }
        }
        for (size_t i = order.size(); i-- > 0;) {
            const int w = order[i];
            for (int v : pred[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            if (w != s) bc[w] += delta[w];
        }
    }
    for (double& b : bc) b /= 2.0;  // undirected: each pair visited from both ends
    return bc;
}

std::vector<int> top_k_by_score(const std::vector<double>& scores, int k) {
    if (k < 0 || k > static_cast<int>(scores.size()))
        throw std::invalid_argument("top_k_by_score: k out of range");
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    idx.resize(k);
    return idx;
}

}  // namespace cama
