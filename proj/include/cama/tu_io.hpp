#pragma once

#include <string>
#include <vector>

#include "cama/graph.hpp"

namespace cama {

// Loads a dataset in the TUDataset text layout from `dir`:
//   dir/NAME_A.txt               edge lines "u, v" (1-based global node ids)
//   dir/NAME_graph_indicator.txt one 1-based graph id per node line
//   dir/NAME_graph_labels.txt    one integer label per graph line
//   dir/NAME_node_labels.txt     one integer per node (policy-dependent)
//   dir/NAME_node_attributes.txt comma-separated reals per node (policy-dependent)
//
// Node ids are remapped to 0-based per-graph indices, directed edge pairs are
// collapsed into undirected edges (a pair without its reverse is a hard
// error naming the offending line), self loops are rejected, and graph
// labels are remapped to contiguous {0..C-1} by sorted raw value.
Dataset load_tu_dataset(const std::string& dir, const std::string& name, FeaturePolicy policy);

// Writes `ds` back out in the same layout (both directed pairs per edge).
void save_tu_dataset(const Dataset& ds, const std::string& dir);

// Feature construction for one graph, given the dataset-wide node label
// vocabulary (sorted distinct raw labels).
//   one_hot_label         -> D = |vocab|, row = one-hot of the node label
//   label_plus_attributes -> one-hot columns followed by raw attribute columns
//   scalar_degree         -> D = 1, value = node degree
Matrix build_features(const std::vector<int>& raw_labels, const Matrix& raw_attributes,
                      const std::vector<int>& degrees, FeaturePolicy policy,
                      const std::vector<int>& label_vocab);

}  // namespace cama
