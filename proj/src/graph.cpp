#include "cama/graph.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "cama/rng.hpp"

namespace cama {

std::string to_string(FeaturePolicy p) {
    switch (p) {
        case FeaturePolicy::one_hot_label: return "one_hot_label";
        case FeaturePolicy::label_plus_attributes: return "label_plus_attributes";
        case FeaturePolicy::scalar_degree: return "scalar_degree";
    }
    return "?";
}

FeaturePolicy feature_policy_from_string(const std::string& s) {
    if (s == "one_hot_label") return FeaturePolicy::one_hot_label;
    if (s == "label_plus_attributes") return FeaturePolicy::label_plus_attributes;
    if (s == "scalar_degree") return FeaturePolicy::scalar_degree;
    throw std::invalid_argument("unknown feature policy: " + s);
}

bool Graph::has_edge(int u, int v) const {
    if (u == v) return false;
    Edge e{std::min(u, v), std::max(u, v)};
    return std::binary_search(edges.begin(), edges.end(), e);
}

Matrix Graph::adjacency_matrix() const {
    Matrix a(n, n);
    for (const auto& [u, v] : edges) {
        a(u, v) = 1.0;
        a(v, u) = 1.0;
    }
    return a;
}

void Graph::rebuild_degrees() {
    degree.assign(n, 0);
    for (const auto& [u, v] : edges) {
        ++degree[u];
        ++degree[v];
    }
}

void Graph::check_valid() const {
    if (n < 1) throw std::logic_error("graph " + std::to_string(id) + ": n < 1");
    if (features.rows() != n)
        throw std::logic_error("graph " + std::to_string(id) + ": feature rows != n");
    for (size_t i = 0; i < edges.size(); ++i) {
        auto [u, v] = edges[i];
        if (u >= v) throw std::logic_error("graph " + std::to_string(id) + ": edge not u<v");
        if (u < 0 || v >= n) throw std::logic_error("graph " + std::to_string(id) + ": edge out of range");
        if (i > 0 && !(edges[i - 1] < edges[i]))
            throw std::logic_error("graph " + std::to_string(id) + ": edges not sorted/unique");
    }
    if (static_cast<int>(degree.size()) != n)
        throw std::logic_error("graph " + std::to_string(id) + ": degree size");
    std::vector<int> d(n, 0);
    for (const auto& [u, v] : edges) {
        ++d[u];
        ++d[v];
    }
    if (d != degree) throw std::logic_error("graph " + std::to_string(id) + ": degree mismatch");
}

Graph make_graph(int n, std::vector<Edge> edges, Matrix features, int label, int id) {
    Graph g;
    g.id = id;
    g.n = n;
    for (auto& [u, v] : edges) {
        if (u == v) throw std::invalid_argument("make_graph: self loop");
        if (u > v) std::swap(u, v);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    g.edges = std::move(edges);
    g.features = std::move(features);
    g.label = label;
    g.rebuild_degrees();
    g.check_valid();
    return g;
}

std::vector<int> FoldSplit::fold_indices(int fold) const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(assignments.size()); ++i)
        if (assignments[i] == fold) out.push_back(i);
    return out;
}

std::vector<int> FoldSplit::complement_indices(int fold) const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(assignments.size()); ++i)
        if (assignments[i] != fold) out.push_back(i);
    return out;
}

FoldSplit split_folds(const Dataset& ds, int k, uint64_t seed) {
    if (ds.size() == 0) throw std::invalid_argument("split_folds: empty dataset");
    if (k < 2) throw std::invalid_argument("split_folds: k must be >= 2");
    if (k > ds.size()) throw std::invalid_argument("split_folds: k exceeds graph count");

    // Group by class, shuffle within class, then deal round-robin with a
    // cursor that persists across classes so overall fold sizes stay within
    // one of each other.
    std::vector<std::vector<int>> by_class(ds.num_classes);
    for (int i = 0; i < ds.size(); ++i) by_class[ds.graphs[i].label].push_back(i);

    FoldSplit split;
    split.fold_count = k;
    split.seed = seed;
    split.assignments.assign(ds.size(), -1);

    Rng rng(mix_seed(seed, 0xf01d5u));
    int cursor = 0;
    for (int c = 0; c < ds.num_classes; ++c) {
        auto& members = by_class[c];
        rng.shuffle(members);
        for (int idx : members) {
            split.assignments[idx] = cursor % k;
            ++cursor;
        }
    }
    return split;
}

DatasetStats graph_stats(const Dataset& ds) {
    DatasetStats s;
    s.graph_count = ds.size();
    s.class_count = ds.num_classes;
    if (ds.size() == 0) return s;
    double nodes = 0, edges = 0;
    for (const auto& g : ds.graphs) {
        nodes += g.n;
        edges += g.edge_count();
    }
    s.mean_nodes = nodes / ds.size();
    s.mean_edges = edges / ds.size();
    return s;
}

}  // namespace cama
