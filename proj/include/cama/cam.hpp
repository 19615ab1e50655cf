#pragma once

#include <vector>

#include "cama/gnn.hpp"

namespace cama {

// Node-importance heat map, n x C, entries >= 0.
using HeatMap = Matrix;

// Per-class node orderings plus a merged global ordering: column c < C ranks
// nodes by heat for class c (descending), column C is the merged view. Each
// column is a permutation of {0..n-1}; position 0 is the most important node.
struct RankedCamMatrix {
    std::vector<std::vector<int>> columns;

    int num_columns() const { return static_cast<int>(columns.size()); }
    int n() const { return columns.empty() ? 0 : static_cast<int>(columns[0].size()); }
    const std::vector<int>& column(int c) const { return columns.at(c); }
};

// ReLU(h^(L) W^T): projects the output-layer weights back onto the final
// node embeddings.
HeatMap cam_heatmap(const ForwardTrace& trace, const ModelParams& params);

// Gradient variant: per class, the logit gradient w.r.t. every hidden layer
// is node-averaged into projection weights, and the per-layer heat maps are
// averaged. Requires all hidden dims equal and a trace built with a
// differentiable input (grad_features or grad_params), since it runs
// backward passes on the trace's tape. Resets tape gradients as it works.
HeatMap grad_cam_heatmap(const ForwardTrace& trace, const ModelParams& params);

// Per-column descending order; ties break toward the smaller node id.
std::vector<std::vector<int>> column_rank(const HeatMap& heat);

// Merged order: walk rank positions top-down, scanning class columns
// left-to-right, appending nodes not yet emitted.
std::vector<int> global_rank(const HeatMap& heat);

RankedCamMatrix ranked_cam_matrix(const HeatMap& heat);

// CSV dump with header "node_id,class_0,...,class_{C-1}".
std::string heatmap_csv(const HeatMap& heat);

}  // namespace cama
