#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cama/autodiff.hpp"
#include "cama/graph.hpp"

namespace cama {

enum class Arch { gcn, gin0 };

std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

// Two-linear-layer perceptron used by each GIN-0 convolution; ReLU after
// both linears, biases stored as 1 x d rows.
struct GinLayer {
    Matrix w1, b1, w2, b2;
};

struct ModelParams {
    Arch arch = Arch::gcn;
    int num_layers = 5;
    int hidden_dim = 64;
    int feature_dim = 0;
    int num_classes = 0;
    std::vector<Matrix> gcn_weights;  // layer l: (d_in x hidden)
    std::vector<GinLayer> gin_layers;
    Matrix out_weight;  // C x hidden
    Matrix out_bias;    // 1 x C

    // Mutable views over every parameter matrix in a fixed order; the
    // optimizer and the tape leaf layout both follow it.
    std::vector<Matrix*> flat();
    std::vector<const Matrix*> flat() const;
    void check_valid() const;
};

struct TraceOptions {
    bool grad_params = false;
    bool grad_features = false;
    bool grad_adjacency = false;
};

struct ForwardTrace {
    std::shared_ptr<Tape> tape;
    Tape::Ref x = -1;                 // feature leaf
    Tape::Ref adjacency = -1;         // adjacency leaf (binary or relaxed)
    std::vector<Tape::Ref> hidden;    // h^(1..L), each n x hidden
    Tape::Ref pooled = -1;            // 1 x hidden
    Tape::Ref logits = -1;            // 1 x C
    std::vector<Tape::Ref> param_leaves;  // aligned with ModelParams::flat()

    const Matrix& logit_values() const { return tape->value(logits); }
};

// Symmetric renormalization with self-loops: with B = A + I and Dii = sum_j
// B_ij, returns D^{-1/2} B D^{-1/2}. Accepts real-valued (relaxed) input.
Matrix normalize_adjacency(const Matrix& adjacency);
Matrix normalize_adjacency(const Graph& g);
// Same computation recorded on a tape so gradients flow into `adjacency`.
Tape::Ref normalize_adjacency_node(Tape& tape, Tape::Ref adjacency);

// Builds the classifier forward pass on an existing tape from existing input
// nodes. GCN renormalizes `adjacency` on the tape; GIN-0 aggregates with
// adjacency + I. Returns hidden layers, sum-pooled embedding and logits.
ForwardTrace forward_on_tape(Tape& tape, std::shared_ptr<Tape> keepalive, const ModelParams& params,
                             Tape::Ref x, Tape::Ref adjacency, bool grad_params);

// The per-architecture aggregation operator as a plain matrix: renormalized
// adjacency for GCN, adjacency + I for GIN-0.
Matrix propagation_operator(const Matrix& adjacency, Arch arch);

// Forward pass from an already-built propagation operator node. The training
// loop precomputes the operator once per graph since it never changes there.
ForwardTrace forward_from_prop(Tape& tape, std::shared_ptr<Tape> keepalive,
                               const ModelParams& params, Tape::Ref x, Tape::Ref prop,
                               bool grad_params);

ForwardTrace forward(const Matrix& features, const Matrix& adjacency, const ModelParams& params,
                     const TraceOptions& opt = {});
ForwardTrace forward(const Graph& g, const ModelParams& params, const TraceOptions& opt = {});

// Tape-free forward for evaluation hot paths; must agree with forward() to
// the last bit (covered by tests).
Matrix predict_logits(const Matrix& features, const Matrix& adjacency, const ModelParams& params);
Matrix predict_logits(const Graph& g, const ModelParams& params);

// argmax with ties toward the smaller class index
int argmax_class(const Matrix& logits_row);
int predict_class(const Graph& g, const ModelParams& params);

struct TrainConfig {
    Arch arch = Arch::gcn;
    int num_layers = 5;
    int hidden_dim = 64;
    int epochs = 200;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    // Full-batch Adam cycles at low loss with a tiny epsilon; 1e-6 keeps the
    // late epochs stable on these small benchmarks.
    double adam_eps = 1e-6;
    // Global-norm gradient clip; sum-pooled GIN losses start in the tens and
    // the first epochs derail without it. 0 disables.
    double grad_clip = 5.0;
    uint64_t seed = 0;
};

ModelParams init_params(Arch arch, int feature_dim, int num_classes, int num_layers, int hidden_dim,
                        uint64_t seed);

// Full-batch Adam on mean cross-entropy over the graphs outside
// `fold_index`; deterministic under config.seed.
ModelParams train(const Dataset& ds, const FoldSplit& folds, int fold_index, const TrainConfig& cfg,
                  std::vector<double>* epoch_losses = nullptr);

// Convenience for training on an explicit index set.
ModelParams train_on_indices(const Dataset& ds, const std::vector<int>& train_indices,
                             const TrainConfig& cfg, std::vector<double>* epoch_losses = nullptr);

double evaluate(const ModelParams& params, const Dataset& ds, const std::vector<int>& indices);
double evaluate(const ModelParams& params, const std::vector<Graph>& graphs);

// JSON checkpoint with bit-exact round-trip of all weights.
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace cama
