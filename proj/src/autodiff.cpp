#include "cama/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace cama {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Binary entropy of sigmoid(m), computed without forming log(0).
double sigmoid_entropy(double m) {
    const double a = std::fabs(m);
    return std::log1p(std::exp(-a)) + a * stable_sigmoid(-a);
}

}  // namespace

int Tape::check(Ref r) const {
    if (r < 0 || r >= size()) throw std::out_of_range("tape: node ref out of range");
    return r;
}

Tape::Ref Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size() - 1);
}

Tape::Ref Tape::leaf(Matrix value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.op = Op::leaf;
    n.needs_grad = requires_grad;
    return push(std::move(n));
}

Tape::Ref Tape::matmul(Ref a, Ref b) {
    Node n;
    n.value = gemm(nodes_[check(a)].value, nodes_[check(b)].value);  // throws on shape mismatch
    n.op = Op::matmul;
    n.parent_a = a;
    n.parent_b = b;
    n.needs_grad = needs(a) || needs(b);
    return push(std::move(n));
}

Tape::Ref Tape::add(Ref a, Ref b) {
    const Matrix& va = nodes_[check(a)].value;
    const Matrix& vb = nodes_[check(b)].value;
    if (!va.same_shape(vb))
        throw std::invalid_argument("add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Node n;
    n.value = va;
    add_inplace(n.value, vb);
    n.op = Op::add;
    n.parent_a = a;
    n.parent_b = b;
    n.needs_grad = needs(a) || needs(b);
    return push(std::move(n));
}

Tape::Ref Tape::add_rows(Ref a, Ref row) {
    const Matrix& va = nodes_[check(a)].value;
    const Matrix& vr = nodes_[check(row)].value;
    if (vr.rows() != 1 || vr.cols() != va.cols())
        throw std::invalid_argument("add_rows: shape mismatch " + va.shape_str() + " vs " +
                                    vr.shape_str());
    Node n;
    n.value = va;
    for (int i = 0; i < n.value.rows(); ++i)
        for (int j = 0; j < n.value.cols(); ++j) n.value(i, j) += vr(0, j);
    n.op = Op::add_rows;
    n.parent_a = a;
    n.parent_b = row;
    n.needs_grad = needs(a) || needs(row);
    return push(std::move(n));
}

Tape::Ref Tape::hadamard(Ref a, Ref b) {
    Node n;
    n.value = cama::hadamard(nodes_[check(a)].value, nodes_[check(b)].value);
    n.op = Op::hadamard;
    n.parent_a = a;
    n.parent_b = b;
    n.needs_grad = needs(a) || needs(b);
    return push(std::move(n));
}

Tape::Ref Tape::scalar_mul(Ref a, double s) {
    Node n;
    n.value = nodes_[check(a)].value;
    for (size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] *= s;
    n.op = Op::scalar_mul;
    n.parent_a = a;
    n.scalar = s;
    n.needs_grad = needs(a);
    return push(std::move(n));
}

Tape::Ref Tape::relu(Ref a) {
    Node n;
    n.value = nodes_[check(a)].value;
    for (size_t i = 0; i < n.value.size(); ++i)
        if (n.value.data()[i] < 0.0) n.value.data()[i] = 0.0;
    n.op = Op::relu;
    n.parent_a = a;
    n.needs_grad = needs(a);
    return push(std::move(n));
}

Tape::Ref Tape::sigmoid(Ref a) {
    Node n;
    const Matrix& v = nodes_[check(a)].value;
    n.value = Matrix::uninitialized(v.rows(), v.cols());
    for (size_t i = 0; i < v.size(); ++i) n.value.data()[i] = stable_sigmoid(v.data()[i]);
    n.op = Op::sigmoid;
    n.parent_a = a;
    n.needs_grad = needs(a);
    return push(std::move(n));
}

Tape::Ref Tape::row_sum(Ref a) {
    const Matrix& v = nodes_[check(a)].value;
    Node n;
    n.value = Matrix(1, v.cols());
    for (int i = 0; i < v.rows(); ++i)
        for (int j = 0; j < v.cols(); ++j) n.value(0, j) += v(i, j);
    n.op = Op::row_sum;
    n.parent_a = a;
    n.needs_grad = needs(a);
    return push(std::move(n));
}

Tape::Ref Tape::mean_all(Ref a) {
    const Matrix& v = nodes_[check(a)].value;
    if (v.size() == 0) throw std::invalid_argument("mean_all: empty matrix");
    double s = 0.0;
    for (size_t i = 0; i < v.size(); ++i) s += v.data()[i];
    Node n;
    n.value = Matrix(1, 1);
    n.value(0, 0) = s / static_cast<double>(v.size());
    n.op = Op::mean_all;
    n.parent_a = a;
    n.needs_grad = needs(a);
    return push(std::move(n));
}

Tape::Ref Tape::concat_cols(Ref a, Ref b) {
    const Matrix& va = nodes_[check(a)].value;
    const Matrix& vb = nodes_[check(b)].value;
    if (va.rows() != vb.rows())
        throw std::invalid_argument("concat_cols: row mismatch " + va.shape_str() + " vs " +
                                    vb.shape_str());
    Node n;
    n.value = Matrix::uninitialized(va.rows(), va.cols() + vb.cols());
    for (int i = 0; i < va.rows(); ++i) {
        for (int j = 0; j < va.cols(); ++j) n.value(i, j) = va(i, j);
        for (int j = 0; j < vb.cols(); ++j) n.value(i, va.cols() + j) = vb(i, j);
    }
    n.op = Op::concat_cols;
    n.parent_a = a;
    n.parent_b = b;
    n.needs_grad = needs(a) || needs(b);
    return push(std::move(n));
}

Tape::Ref Tape::slice_rows(Ref a, int begin, int end) {
    const Matrix& v = nodes_[check(a)].value;
    if (begin < 0 || end > v.rows() || begin >= end)
        throw std::invalid_argument("slice_rows: bad range [" + std::to_string(begin) + ", " +
                                    std::to_string(end) + ") for " + v.shape_str());
    Node n;
    n.value = Matrix::uninitialized(end - begin, v.cols());
    for (int i = begin; i < end; ++i)
        for (int j = 0; j < v.cols(); ++j) n.value(i - begin, j) = v(i, j);
    n.op = Op::slice_rows;
    n.parent_a = a;
    n.aux_a = begin;
    n.aux_b = end;
    n.needs_grad = needs(a);
    return push(std::move(n));
}

void Tape::softmax_row(const double* z, int c, double* out) {
    double mx = z[0];
    for (int i = 1; i < c; ++i) mx = std::max(mx, z[i]);
    double sum = 0.0;
    for (int i = 0; i < c; ++i) {
        out[i] = std::exp(z[i] - mx);
        sum += out[i];
    }
    for (int i = 0; i < c; ++i) out[i] /= sum;
}

Tape::Ref Tape::softmax_cross_entropy(Ref logits, int label) {
    const Matrix& v = nodes_[check(logits)].value;
    if (v.rows() != 1) throw std::invalid_argument("softmax_cross_entropy: logits must be 1 x C");
    if (label < 0 || label >= v.cols())
        throw std::invalid_argument("softmax_cross_entropy: label out of range");
    std::vector<double> p(v.cols());
    softmax_row(v.row(0), v.cols(), p.data());
    Node n;
    n.value = Matrix(1, 1);
    n.value(0, 0) = -std::log(std::max(p[label], 1e-300));
    n.op = Op::softmax_cross_entropy;
    n.parent_a = logits;
    n.aux_a = label;
    n.needs_grad = needs(logits);
    return push(std::move(n));
}

Tape::Ref Tape::cw_margin(Ref logits, int label) {
    const Matrix& v = nodes_[check(logits)].value;
    if (v.rows() != 1) throw std::invalid_argument("cw_margin: logits must be 1 x C");
    if (v.cols() < 2) throw std::invalid_argument("cw_margin: needs at least two classes");
    if (label < 0 || label >= v.cols()) throw std::invalid_argument("cw_margin: label out of range");
    int best = -1;
    for (int c = 0; c < v.cols(); ++c) {
        if (c == label) continue;
        if (best == -1 || v(0, c) > v(0, best)) best = c;
    }
    Node n;
    n.value = Matrix(1, 1);
    n.value(0, 0) = std::max(v(0, label) - v(0, best), 0.0);
    n.op = Op::cw_margin;
    n.parent_a = logits;
    n.aux_a = label;
    n.aux_b = best;
    n.needs_grad = needs(logits);
    return push(std::move(n));
}

Tape::Ref Tape::entropy_mean(Ref mask) {
    const Matrix& v = nodes_[check(mask)].value;
    if (v.size() == 0) throw std::invalid_argument("entropy_mean: empty mask");
    double s = 0.0;
    for (size_t i = 0; i < v.size(); ++i) s += sigmoid_entropy(v.data()[i]);
    Node n;
    n.value = Matrix(1, 1);
    n.value(0, 0) = s / static_cast<double>(v.size());
    n.op = Op::entropy_mean;
    n.parent_a = mask;
    n.needs_grad = needs(mask);
    return push(std::move(n));
}

Tape::Ref Tape::transpose(Ref a) {
    Node n;
    n.value = nodes_[check(a)].value.transposed();
    n.op = Op::transpose;
    n.parent_a = a;
    n.needs_grad = needs(a);
    return push(std::move(n));
}

Tape::Ref Tape::rsqrt(Ref a) {
    const Matrix& v = nodes_[check(a)].value;
    Node n;
    n.value = Matrix::uninitialized(v.rows(), v.cols());
    for (size_t i = 0; i < v.size(); ++i) {
        if (v.data()[i] <= 0.0) throw std::domain_error("rsqrt: nonpositive input");
        n.value.data()[i] = 1.0 / std::sqrt(v.data()[i]);
    }
    n.op = Op::rsqrt;
    n.parent_a = a;
    n.needs_grad = needs(a);
    return push(std::move(n));
}

Tape::Ref Tape::scatter_pairs(Ref mask_vec, const std::vector<std::pair<int, int>>& pairs, int n_nodes) {
    const Matrix& v = nodes_[check(mask_vec)].value;
    if (v.cols() != 1 || v.rows() != static_cast<int>(pairs.size()))
        throw std::invalid_argument("scatter_pairs: mask must be P x 1 with P == pairs.size()");
    Node n;
    n.value = Matrix(n_nodes, n_nodes);
    for (size_t p = 0; p < pairs.size(); ++p) {
        auto [u, w] = pairs[p];
        if (u == w || u < 0 || w < 0 || u >= n_nodes || w >= n_nodes)
            throw std::invalid_argument("scatter_pairs: bad pair");
        n.value(u, w) = v(static_cast<int>(p), 0);
        n.value(w, u) = v(static_cast<int>(p), 0);
    }
    n.op = Op::scatter_pairs;
    n.parent_a = mask_vec;
    n.pairs = pairs;
    n.needs_grad = needs(mask_vec);
    return push(std::move(n));
}

Tape::Ref Tape::block_diag_matmul(std::shared_ptr<const std::vector<Matrix>> blocks, Ref x,
                                  std::vector<int> offsets) {
    const Matrix& v = nodes_[check(x)].value;
    if (!blocks || blocks->size() + 1 != offsets.size())
        throw std::invalid_argument("block_diag_matmul: blocks/offsets size mismatch");
    if (offsets.front() != 0 || offsets.back() != v.rows())
        throw std::invalid_argument("block_diag_matmul: offsets do not cover the input rows");
    Node n;
    n.value = Matrix(v.rows(), v.cols());
    for (size_t g = 0; g < blocks->size(); ++g) {
        const Matrix& blk = (*blocks)[g];
        const int rows = offsets[g + 1] - offsets[g];
        if (blk.rows() != rows || blk.cols() != rows)
            throw std::invalid_argument("block_diag_matmul: block " + std::to_string(g) +
                                        " shape mismatch");
        gemm_raw_acc(n.value.row(offsets[g]), blk.data(), v.row(offsets[g]), rows, rows, v.cols(),
                     blk.cols(), v.cols(), v.cols());
    }
    n.op = Op::block_diag_matmul;
    n.parent_a = x;
    n.ints = std::move(offsets);
    n.blocks = std::move(blocks);
    n.needs_grad = needs(x);
    return push(std::move(n));
}

Tape::Ref Tape::segment_row_sum(Ref x, std::vector<int> offsets) {
    const Matrix& v = nodes_[check(x)].value;
    if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != v.rows())
        throw std::invalid_argument("segment_row_sum: offsets do not cover the input rows");
    const int groups = static_cast<int>(offsets.size()) - 1;
    Node n;
    n.value = Matrix(groups, v.cols());
    for (int g = 0; g < groups; ++g)
        for (int r = offsets[g]; r < offsets[g + 1]; ++r)
            for (int c = 0; c < v.cols(); ++c) n.value(g, c) += v(r, c);
    n.op = Op::segment_row_sum;
    n.parent_a = x;
    n.ints = std::move(offsets);
    n.needs_grad = needs(x);
    return push(std::move(n));
}

Tape::Ref Tape::softmax_cross_entropy_mean(Ref logits, std::vector<int> labels) {
    const Matrix& v = nodes_[check(logits)].value;
    if (static_cast<int>(labels.size()) != v.rows())
        throw std::invalid_argument("softmax_cross_entropy_mean: one label per logits row required");
    double total = 0.0;
    std::vector<double> p(v.cols());
    for (int r = 0; r < v.rows(); ++r) {
        if (labels[r] < 0 || labels[r] >= v.cols())
            throw std::invalid_argument("softmax_cross_entropy_mean: label out of range");
        softmax_row(v.row(r), v.cols(), p.data());
        total += -std::log(std::max(p[labels[r]], 1e-300));
    }
    Node n;
    n.value = Matrix(1, 1);
    n.value(0, 0) = total / static_cast<double>(v.rows());
    n.op = Op::softmax_cross_entropy_mean;
    n.parent_a = logits;
    n.ints = std::move(labels);
    n.needs_grad = needs(logits);
    return push(std::move(n));
}

Matrix Tape::grad_of(Ref r) const {
    check(r);
    if (nodes_[r].grad.empty())
        throw std::logic_error("grad_of: node has no gradient (constant, or backward not run)");
    return nodes_[r].grad;
}

const Matrix& Tape::grad_ref(Ref r) const {
    check(r);
    if (nodes_[r].grad.empty())
        throw std::logic_error("grad_ref: node has no gradient (constant, or backward not run)");
    return nodes_[r].grad;
}

void Tape::reset_grads() {
    for (auto& n : nodes_)
        if (!n.grad.empty()) n.grad.fill(0.0);
}

void Tape::backward(Ref out) {
    check(out);
    const Matrix& ov = nodes_[out].value;
    if (ov.rows() != 1 || ov.cols() != 1)
        throw std::invalid_argument("backward: output must be scalar, got " + ov.shape_str());
    if (!nodes_[out].needs_grad) return;  // nothing depends on a differentiable leaf

    // Fresh adjoints per call; the final adjoints are added into persistent
    // grad storage so that repeated backward calls accumulate.
    std::vector<Matrix> adj(nodes_.size());
    adj[out] = Matrix(1, 1);
    adj[out](0, 0) = 1.0;

    auto touch = [&](Ref p) -> Matrix& {
        if (adj[p].empty()) adj[p] = Matrix(nodes_[p].value.rows(), nodes_[p].value.cols());
        return adj[p];
    };

    for (Ref i = out; i >= 0; --i) {
        Node& n = nodes_[i];
        if (adj[i].empty() || !n.needs_grad) continue;
        const Matrix& g = adj[i];
        const Ref a = n.parent_a, b = n.parent_b;
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::matmul:
                if (needs(a)) gemm_nt_acc(touch(a), g, nodes_[b].value);
                if (needs(b)) gemm_tn_acc(touch(b), nodes_[a].value, g);
                break;
            case Op::add:
                if (needs(a)) add_inplace(touch(a), g);
                if (needs(b)) add_inplace(touch(b), g);
                break;
            case Op::add_rows:
                if (needs(a)) add_inplace(touch(a), g);
                if (needs(b)) {
                    Matrix& tb = touch(b);
                    for (int r = 0; r < g.rows(); ++r)
                        for (int c = 0; c < g.cols(); ++c) tb(0, c) += g(r, c);
                }
                break;
            case Op::hadamard:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    const Matrix& vb = nodes_[b].value;
                    for (size_t k = 0; k < g.size(); ++k) ta.data()[k] += g.data()[k] * vb.data()[k];
                }
                if (needs(b)) {
                    Matrix& tb = touch(b);
                    const Matrix& va = nodes_[a].value;
                    for (size_t k = 0; k < g.size(); ++k) tb.data()[k] += g.data()[k] * va.data()[k];
                }
                break;
            case Op::scalar_mul:
                if (needs(a)) add_scaled_inplace(touch(a), g, n.scalar);
                break;
            case Op::relu:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    const Matrix& va = nodes_[a].value;
                    for (size_t k = 0; k < g.size(); ++k)
                        if (va.data()[k] > 0.0) ta.data()[k] += g.data()[k];
                }
                break;
            case Op::sigmoid:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    for (size_t k = 0; k < g.size(); ++k) {
                        const double s = n.value.data()[k];
                        ta.data()[k] += g.data()[k] * s * (1.0 - s);
                    }
                }
                break;
            case Op::row_sum:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    for (int r = 0; r < ta.rows(); ++r)
                        for (int c = 0; c < ta.cols(); ++c) ta(r, c) += g(0, c);
                }
                break;
            case Op::mean_all:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    const double s = g(0, 0) / static_cast<double>(ta.size());
                    for (size_t k = 0; k < ta.size(); ++k) ta.data()[k] += s;
                }
                break;
            case Op::concat_cols: {
                const int ca = nodes_[a].value.cols();
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    for (int r = 0; r < ta.rows(); ++r)
                        for (int c = 0; c < ca; ++c) ta(r, c) += g(r, c);
                }
                if (needs(b)) {
                    Matrix& tb = touch(b);
                    for (int r = 0; r < tb.rows(); ++r)
                        for (int c = 0; c < tb.cols(); ++c) tb(r, c) += g(r, ca + c);
                }
                break;
            }
            case Op::slice_rows:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    for (int r = n.aux_a; r < n.aux_b; ++r)
                        for (int c = 0; c < ta.cols(); ++c) ta(r, c) += g(r - n.aux_a, c);
                }
                break;
            case Op::softmax_cross_entropy:
                if (needs(a)) {
                    const Matrix& z = nodes_[a].value;
                    std::vector<double> p(z.cols());
                    softmax_row(z.row(0), z.cols(), p.data());
                    Matrix& ta = touch(a);
                    for (int c = 0; c < z.cols(); ++c)
                        ta(0, c) += g(0, 0) * (p[c] - (c == n.aux_a ? 1.0 : 0.0));
                }
                break;
            case Op::cw_margin:
                if (needs(a) && n.value(0, 0) > 0.0) {
                    Matrix& ta = touch(a);
                    ta(0, n.aux_a) += g(0, 0);
                    ta(0, n.aux_b) -= g(0, 0);
                }
                break;
            case Op::entropy_mean:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    const Matrix& m = nodes_[a].value;
                    const double w = g(0, 0) / static_cast<double>(m.size());
                    for (size_t k = 0; k < m.size(); ++k) {
                        const double s = stable_sigmoid(m.data()[k]);
                        ta.data()[k] += w * (-m.data()[k]) * s * (1.0 - s);
                    }
                }
                break;
            case Op::transpose:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    for (int r = 0; r < ta.rows(); ++r)
                        for (int c = 0; c < ta.cols(); ++c) ta(r, c) += g(c, r);
                }
                break;
            case Op::rsqrt:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    for (size_t k = 0; k < g.size(); ++k) {
                        const double c = n.value.data()[k];
                        ta.data()[k] += g.data()[k] * (-0.5 * c * c * c);
                    }
                }
                break;
            case Op::scatter_pairs:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    for (size_t p = 0; p < n.pairs.size(); ++p) {
                        auto [u, w] = n.pairs[p];
                        ta(static_cast<int>(p), 0) += g(u, w) + g(w, u);
                    }
                }
                break;
            case Op::block_diag_matmul:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    const auto& offs = n.ints;
                    for (size_t blk = 0; blk < n.blocks->size(); ++blk) {
                        const Matrix& bmat = (*n.blocks)[blk];
                        const int rows = offs[blk + 1] - offs[blk];
                        gemm_tn_raw_acc(ta.row(offs[blk]), bmat.data(), g.row(offs[blk]), rows, rows,
                                        g.cols(), bmat.cols(), g.cols(), ta.cols());
                    }
                }
                break;
            case Op::segment_row_sum:
                if (needs(a)) {
                    Matrix& ta = touch(a);
                    const auto& offs = n.ints;
                    for (size_t grp = 0; grp + 1 < offs.size(); ++grp)
                        for (int r = offs[grp]; r < offs[grp + 1]; ++r)
                            for (int c = 0; c < ta.cols(); ++c)
                                ta(r, c) += g(static_cast<int>(grp), c);
                }
                break;
            case Op::softmax_cross_entropy_mean:
                if (needs(a)) {
                    const Matrix& z = nodes_[a].value;
                    Matrix& ta = touch(a);
                    std::vector<double> p(z.cols());
                    const double w = g(0, 0) / static_cast<double>(z.rows());
                    for (int r = 0; r < z.rows(); ++r) {
                        softmax_row(z.row(r), z.cols(), p.data());
                        for (int c = 0; c < z.cols(); ++c)
                            ta(r, c) += w * (p[c] - (c == n.ints[r] ? 1.0 : 0.0));
                    }
                }
                break;
        }
    }

    for (Ref i = 0; i <= out; ++i) {
        if (adj[i].empty() || !nodes_[i].needs_grad) continue;
        if (!retain_interior_grads_ && nodes_[i].op != Op::leaf) continue;
        if (nodes_[i].grad.empty()) nodes_[i].grad = Matrix(adj[i].rows(), adj[i].cols());
        add_inplace(nodes_[i].grad, adj[i]);
    }
}

}  // namespace cama
