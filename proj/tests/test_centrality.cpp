#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <queue>

#include "cama/centrality.hpp"
#include "cama/rng.hpp"
#include "testutil.hpp"

using namespace cama;

TEST_CASE("pagerank") {
    SUBCASE("3-cycle is uniform, top-k follows the tie rule") {
        Graph g = make_graph(3, {{0, 1}, {1, 2}, {0, 2}}, Matrix(3, 1), 0);
        auto pr = pagerank_scores(g);
        for (double v : pr) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
        CHECK(top_k_by_score(pr, 2) == std::vector<int>{0, 1});
    }
    SUBCASE("scores sum to one and the star center dominates") {
        Graph g = make_graph(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, Matrix(5, 1), 0);
        auto pr = pagerank_scores(g);
        double sum = 0.0;
        for (double v : pr) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(top_k_by_score(pr, 1) == std::vector<int>{0});
        for (int v = 1; v < 5; ++v) CHECK(pr[0] > pr[v]);
    }
    SUBCASE("isolated nodes keep a teleport share") {
        Graph g = make_graph(3, {{0, 1}}, Matrix(3, 1), 0);
        auto pr = pagerank_scores(g);
        CHECK(pr[2] > 0.0);
        double sum = pr[0] + pr[1] + pr[2];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

namespace {

// Path-enumeration oracle: for every (s, t) pair count shortest paths
// through each interior node by BFS layering, nothing shared with Brandes.
std::vector<double> oracle_betweenness(const Graph& g) {
    const int n = g.n;
    std::vector<std::vector<int>> adj(n);
    for (auto [u, v] : g.edges) {
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    auto bfs = [&](int s) {
        std::vector<int> dist(n, -1);
        std::vector<double> paths(n, 0.0);
        dist[s] = 0;
        paths[s] = 1.0;
        std::queue<int> q;
        q.push(s);
        while (!q.empty()) {
            int v = q.front();
            q.pop();
            for (int w : adj[v]) {
                if (dist[w] < 0) {
                    dist[w] = dist[v] + 1;
                    q.push(w);
                }
                if (dist[w] == dist[v] + 1) paths[w] += paths[v];
            }
        }
        return std::pair{dist, paths};
    };
    // paths through x from s to t: sigma_s(x) * sigma_x(t) if on a shortest path
    std::vector<std::pair<std::vector<int>, std::vector<double>>> all;
    for (int s = 0; s < n; ++s) all.push_back(bfs(s));
    std::vector<double> bc(n, 0.0);
    for (int s = 0; s < n; ++s)
        for (int t = s + 1; t < n; ++t) {
            const auto& [ds, ps] = all[s];
            if (ds[t] < 0) continue;
            for (int x = 0; x < n; ++x) {
                if (x == s || x == t) continue;
                const auto& [dx, px] = all[x];
                if (ds[x] >= 0 && ds[x] + dx[t] == ds[t])
                    bc[x] += ps[x] * px[t] / ps[t];
            }
        }
    return bc;
}

}  // namespace

TEST_CASE("betweenness") {
    SUBCASE("3-path: the middle node is strictly highest") {
        Graph g = make_graph(3, {{0, 1}, {1, 2}}, Matrix(3, 1), 0);
        auto bc = betweenness_scores(g);
        CHECK(bc[1] > bc[0]);
        CHECK(bc[1] > bc[2]);
        CHECK(bc[1] == doctest::Approx(1.0));
        CHECK(top_k_by_score(bc, 1) == std::vector<int>{1});
    }
    SUBCASE("matches the path-enumeration oracle on random graphs") {
        for (uint64_t seed = 0; seed < 8; ++seed) {
            Graph g = testutil::random_graph(7, 1, 0.4, 900 + seed);
            auto fast = betweenness_scores(g);
            auto slow = oracle_betweenness(g);
            REQUIRE(fast.size() == slow.size());
            for (size_t i = 0; i < fast.size(); ++i)
                CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("top_k_by_score tie rule and bounds") {
    std::vector<double> s{1.0, 3.0, 3.0, 2.0};
    CHECK(top_k_by_score(s, 3) == std::vector<int>{1, 2, 3});
    CHECK_THROWS_AS(top_k_by_score(s, 5), std::invalid_argument);
}
