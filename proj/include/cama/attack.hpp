#pragma once

#include <string>
#include <vector>

#include "cama/cam.hpp"
#include "cama/gnn.hpp"
#include "cama/graph.hpp"

namespace cama {

struct Budget {
    int delta_edges = 1;     // undirected flips
    int r_nodes = 1;         // nodes whose features may change
    int k_features = 1;      // features adjusted per node
    double lambda_mag = 0.1; // magnitude of each feature delta

    // delta = ceil(edge_frac * |E|) clamped to >= 1, r = ceil(node_frac * n),
    // k = ceil(feat_frac * D).
    static Budget for_graph(const Graph& g, double edge_frac = 0.10, double node_frac = 0.10,
                            double feat_frac = 0.10, double lambda = 0.1);
};

// Insertion of (u,v) is admissible iff the edge is absent and S[u,v] <= s1;
// deletion iff present and S[u,v] >= s2. Values are not range-checked:
// s1 < -1 disables insertions, s2 > 1 disables deletions.
struct SimilarityConstraint {
    double s1 = 1.0;
    double s2 = 0.95;
};

struct Flip {
    int u = 0, v = 0;   // u < v
    bool add = false;   // true: inserted, false: deleted

    bool operator==(const Flip&) const = default;
};

struct FeatureDelta {
    int node = 0;
    int feature = 0;
    double delta = 0.0;
};

struct AttackResult {
    std::string method;
    bool structural = true;
    bool success = false;
    bool skipped = false;  // already misclassified; graph left untouched
    int column_used = -1;  // ranked-matrix column, or -1 for non-CAM methods
    int flips_used = 0;

    std::vector<Edge> perturbed_edges;  // structure attacks: full edge list after attack
    Matrix perturbed_features;          // feature attacks: full feature matrix after attack
    std::vector<Flip> flips;
    std::vector<FeatureDelta> feature_deltas;
    std::vector<int> selected_nodes;  // feature attacks: targeted nodes

    // Context carried for post-hoc audits.
    Budget budget;
    SimilarityConstraint sim;
    Matrix sim_matrix;              // S actually used (empty if unconstrained)
    std::vector<int> column_order;  // ranking column behind the returned flips
    std::vector<int> v_sub;         // subgraph attack candidate nodes

    // cama_subgraph diagnostics: losses recorded before each mask step.
    std::vector<double> epoch_cw, epoch_ent;

    Graph perturbed_graph(const Graph& clean) const;
};

// Cosine similarity of first-hidden-layer embeddings; rows with zero norm
// yield 0 by convention.
Matrix similarity_matrix(const ForwardTrace& trace);

// Aggregated feature-gradient noise: g_j sums the cross-entropy gradient of
// column j over all nodes; the top-k |g_j| entries (ties toward smaller j)
// receive lambda * sign(g_j) with sign(0) = +1, the rest 0.
std::vector<double> feature_noise(const ModelParams& params, const Graph& g, int k, double lambda);

// CAMA feature attack: walk ranked columns, perturb the top-r nodes of each
// with the per-graph noise vector, stop at the first misclassification.
AttackResult feature_attack(const ModelParams& params, const Graph& g, const RankedCamMatrix& ranked,
                            const Budget& budget, const std::string& method = "cama");

// Shared path for the baseline selectors: same noise, fixed node set.
AttackResult feature_attack_on_nodes(const ModelParams& params, const Graph& g,
                                     const std::vector<int>& nodes, const Budget& budget,
                                     const std::string& method);

// Alg-3 core for one ranking column: grow the target set down the ranking,
// flipping admissible pairs between each new node and the existing set until
// the budget runs out. Pure; exposed for the hand-trace oracle.
std::vector<Flip> structure_flips_for_column(const Graph& g, const std::vector<int>& column,
                                             int delta_edges, const Matrix& sim,
                                             const SimilarityConstraint& sc);

// CAMA structure attack with the column loop; first successful column wins.
AttackResult cama_structure(const ModelParams& params, const Graph& g, const RankedCamMatrix& ranked,
                            const Budget& budget, const SimilarityConstraint& sc,
                            const std::string& method = "cama");

struct MaskOptConfig {
    int epochs = 30;         // T
    double lr = 0.1;
    double lambda_ent = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double subgraph_fraction = 0.5;  // p%
};

// Subgraph-mask structure attack: learn a relaxed edge mask over pairs inside
// the CAM-selected subgraph, discretize to the top-delta pairs each epoch,
// and stop at the first misclassification.
AttackResult cama_subgraph(const ModelParams& params, const Graph& g,
                           const std::vector<int>& predicted_column, const Budget& budget,
                           const MaskOptConfig& opt, const std::string& method = "cama-subgraph");

// Baseline node selectors (feature attacks reuse feature_attack_on_nodes).
std::vector<int> random_nodes(const Graph& g, int r, uint64_t seed);
std::vector<int> degree_nodes(const Graph& g, int r);
std::vector<int> pagerank_nodes(const Graph& g, int r);
std::vector<int> betweenness_nodes(const Graph& g, int r);

// Baseline structure attackers.
AttackResult random_flips(const ModelParams& params, const Graph& g, int delta_edges, uint64_t seed);
AttackResult degree_flips(const ModelParams& params, const Graph& g, int delta_edges);
// One-shot gradient over the (real-relaxed) adjacency; flips the delta
// feasible pairs with the largest |gradient|, where a pair is feasible only
// if the gradient sign points across the 0/1 boundary.
AttackResult grad_argmax(const ModelParams& params, const Graph& g, int delta_edges);

double avg_degree_selected(const Graph& g, const std::vector<int>& nodes);

// Checks every recorded invariant of an attack result against the clean
// graph: structural validity, budget, similarity admissibility, subgraph
// containment, delta magnitudes. Returns human-readable violations.
std::vector<std::string> audit_attack(const Graph& clean, const AttackResult& r);

}  // namespace cama
