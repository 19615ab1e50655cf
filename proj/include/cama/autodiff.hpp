#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "cama/matrix.hpp"

namespace cama {

// Reverse-mode differentiation over dense matrices. Values are computed
// eagerly; each operation records itself on the tape in topological order.
// backward() accumulates exact adjoints additively into per-node grad
// storage, so repeated backward calls sum and reset_grads() zeroes.
class Tape {
public:
    using Ref = int;

    enum class Op {
        leaf,
        matmul,
        add,
        hadamard,
        scalar_mul,
        relu,
        sigmoid,
        row_sum,
        mean_all,
        concat_cols,
        slice_rows,
        softmax_cross_entropy,
        cw_margin,
        entropy_mean,
        transpose,
        rsqrt,
        scatter_pairs,
        add_rows,
        block_diag_matmul,
        segment_row_sum,
        softmax_cross_entropy_mean,
    };

    Ref leaf(Matrix value, bool requires_grad);
    Ref constant(Matrix value) { return leaf(std::move(value), false); }

    Ref matmul(Ref a, Ref b);
    Ref add(Ref a, Ref b);
    // a: (n x d), row: (1 x d); adds row to every row of a.
    Ref add_rows(Ref a, Ref row);
    Ref hadamard(Ref a, Ref b);
    Ref scalar_mul(Ref a, double s);
    Ref relu(Ref a);
    Ref sigmoid(Ref a);
    // Sums over the row index: (n x d) -> (1 x d). This is the global
    // sum-pooling readout when applied to node embeddings.
    Ref row_sum(Ref a);
    Ref mean_all(Ref a);
    Ref concat_cols(Ref a, Ref b);
    Ref slice_rows(Ref a, int begin, int end);
    // logits: (1 x C); returns (1 x 1) negative log softmax probability.
    Ref softmax_cross_entropy(Ref logits, int label);
    // max(z_label - max_{c != label} z_c, 0); ties in the inner max break
    // toward the smallest class index, and the subgradient at exactly 0 is 0.
    Ref cw_margin(Ref logits, int label);
    // Mean binary entropy of sigmoid(m) over all entries of m.
    Ref entropy_mean(Ref mask);
    Ref transpose(Ref a);
    // Elementwise x^(-1/2); inputs must be strictly positive.
    Ref rsqrt(Ref a);
    // Spreads a (P x 1) vector into an (n x n) symmetric matrix with entry p
    // written at (u_p, v_p) and (v_p, u_p); all other entries are zero.
    Ref scatter_pairs(Ref mask_vec, const std::vector<std::pair<int, int>>& pairs, int n);

    // Batched ops for full-batch training: a stack of graphs lives in one
    // tall matrix whose row segment g is [offsets[g], offsets[g+1]).
    // y[seg_g] = blocks[g] * x[seg_g]; blocks are constants (no gradient).
    Ref block_diag_matmul(std::shared_ptr<const std::vector<Matrix>> blocks, Ref x,
                          std::vector<int> offsets);
    // (G x d) whose row g sums the rows of segment g.
    Ref segment_row_sum(Ref x, std::vector<int> offsets);
    // Mean cross-entropy over rows of (G x C) logits against per-row labels.
    Ref softmax_cross_entropy_mean(Ref logits, std::vector<int> labels);

    const Matrix& value(Ref r) const { return nodes_[check(r)].value; }
    // Copy of the accumulated gradient. Errors if the node never receives a
    // gradient (constant leaves, or backward not yet run over it).
    Matrix grad_of(Ref r) const;
    // Same, without copying.
    const Matrix& grad_ref(Ref r) const;
    bool has_grad(Ref r) const { return r >= 0 && r < size() && !nodes_[r].grad.empty(); }

    // scalar_output must have shape (1,1).
    void backward(Ref scalar_output);
    void reset_grads();

    // By default backward stores gradients only on leaves; interior adjoints
    // stay in scratch. Turn this on (before backward) to read gradients of
    // interior nodes such as hidden layers.
    void set_retain_interior_grads(bool retain) { retain_interior_grads_ = retain; }

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Matrix value;
        Matrix grad;  // allocated on first contribution
        Op op = Op::leaf;
        Ref parent_a = -1;
        Ref parent_b = -1;
        bool needs_grad = false;
        double scalar = 0.0;           // scalar_mul
        int aux_a = 0, aux_b = 0;      // slice range / class label
        std::vector<std::pair<int, int>> pairs;  // scatter_pairs
        std::vector<int> ints;         // segment offsets / per-row labels
        std::shared_ptr<const std::vector<Matrix>> blocks;  // block_diag_matmul
    };

    Ref push(Node n);
    int check(Ref r) const;
    bool needs(Ref r) const { return nodes_[r].needs_grad; }
    static void softmax_row(const double* z, int c, double* out);

    std::vector<Node> nodes_;
    bool retain_interior_grads_ = false;
};

}  // namespace cama
