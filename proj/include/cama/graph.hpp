#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cama/matrix.hpp"

namespace cama {

using Edge = std::pair<int, int>;  // undirected, stored with first < second

enum class FeaturePolicy { one_hot_label, label_plus_attributes, scalar_degree };

std::string to_string(FeaturePolicy p);
FeaturePolicy feature_policy_from_string(const std::string& s);

// One undirected graph: symmetric hollow binary adjacency kept as a sorted
// edge list plus degree vector, node features, and a class label.
struct Graph {
    int id = 0;
    int n = 0;
    std::vector<Edge> edges;     // sorted, u < v, unique
    std::vector<int> degree;     // length n
    Matrix features;             // n x D
    int label = 0;               // in {0..C-1}

    // Raw per-node data retained so a loaded dataset can be written back out.
    std::vector<int> raw_node_labels;      // empty when the source had none
    Matrix raw_node_attributes;            // empty when the source had none

    int edge_count() const { return static_cast<int>(edges.size()); }
    bool has_edge(int u, int v) const;
    Matrix adjacency_matrix() const;       // dense n x n, binary

    void rebuild_degrees();
    // Validates symmetry-by-construction invariants: u < v, no self loops,
    // ids in range, no duplicates, degrees consistent.
    void check_valid() const;
};

Graph make_graph(int n, std::vector<Edge> edges, Matrix features, int label, int id = 0);

struct Dataset {
    std::string name;
    std::vector<Graph> graphs;
    int num_classes = 0;
    int feature_dim = 0;
    FeaturePolicy feature_policy = FeaturePolicy::one_hot_label;

    // Sorted distinct raw node labels observed at load time; the one-hot
    // column order. Empty for scalar_degree.
    std::vector<int> node_label_vocab;
    // Sorted distinct raw graph labels in file order of remapping.
    std::vector<int> graph_label_vocab;

    int size() const { return static_cast<int>(graphs.size()); }
};

struct FoldSplit {
    int fold_count = 0;
    std::vector<int> assignments;  // per-graph fold index
    uint64_t seed = 0;

    std::vector<int> fold_indices(int fold) const;      // graphs in `fold`
    std::vector<int> complement_indices(int fold) const;  // graphs outside `fold`
};

// Deterministic stratified k-fold assignment. Fold sizes differ by at most
// one overall and by at most one within every class.
FoldSplit split_folds(const Dataset& ds, int k, uint64_t seed);

struct DatasetStats {
    int graph_count = 0;
    int class_count = 0;
    double mean_nodes = 0.0;
    double mean_edges = 0.0;  // undirected
};

DatasetStats graph_stats(const Dataset& ds);

}  // namespace cama
