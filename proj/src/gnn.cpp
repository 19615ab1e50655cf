#include "cama/gnn.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "cama/rng.hpp"

using nlohmann::json;

namespace cama {

std::string to_string(Arch a) { return a == Arch::gcn ? "gcn" : "gin0"; }

Arch arch_from_string(const std::string& s) {
    if (s == "gcn") return Arch::gcn;
    if (s == "gin0") return Arch::gin0;
    throw std::invalid_argument("unknown arch: " + s);
}

std::vector<Matrix*> ModelParams::flat() {
    std::vector<Matrix*> out;
    if (arch == Arch::gcn) {
        for (auto& w : gcn_weights) out.push_back(&w);
    } else {
        for (auto& l : gin_layers) {
            out.push_back(&l.w1);
            out.push_back(&l.b1);
            out.push_back(&l.w2);
            out.push_back(&l.b2);
        }
    }
    out.push_back(&out_weight);
    out.push_back(&out_bias);
    return out;
}

std::vector<const Matrix*> ModelParams::flat() const {
    auto mut = const_cast<ModelParams*>(this)->flat();
    return {mut.begin(), mut.end()};
}

void ModelParams::check_valid() const {
    if (num_layers < 1) throw std::logic_error("model: num_layers < 1");
    if (out_weight.cols() != hidden_dim)
        throw std::logic_error("model: output weight width must equal the final hidden dim");
    if (out_weight.rows() != num_classes || out_bias.cols() != num_classes || out_bias.rows() != 1)
        throw std::logic_error("model: output layer shape mismatch");
    const size_t expect = static_cast<size_t>(num_layers);
    if (arch == Arch::gcn ? gcn_weights.size() != expect : gin_layers.size() != expect)
        throw std::logic_error("model: wrong layer count");
}

Matrix normalize_adjacency(const Matrix& adjacency) {
    const int n = adjacency.rows();
    if (adjacency.cols() != n) throw std::invalid_argument("normalize_adjacency: not square");
    std::vector<double> dr(n);
    for (int i = 0; i < n; ++i) {
        double d = 1.0;  // self loop
        for (int j = 0; j < n; ++j) d += adjacency(i, j);
        dr[i] = 1.0 / std::sqrt(d);
    }
    Matrix out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double b = adjacency(i, j) + (i == j ? 1.0 : 0.0);
            out(i, j) = b * dr[i] * dr[j];
        }
    return out;
}

Matrix normalize_adjacency(const Graph& g) { return normalize_adjacency(g.adjacency_matrix()); }

Tape::Ref normalize_adjacency_node(Tape& t, Tape::Ref adjacency) {
    const int n = t.value(adjacency).rows();
    Tape::Ref with_self = t.add(adjacency, t.constant(Matrix::identity(n)));
    Tape::Ref deg = t.matmul(with_self, t.constant(Matrix(n, 1, 1.0)));
    Tape::Ref dr = t.rsqrt(deg);
    Tape::Ref outer = t.matmul(dr, t.transpose(dr));
    return t.hadamard(with_self, outer);
}


// The propagation operator: renormalized adjacency for GCN, A + I for GIN.
Matrix propagation_operator(const Matrix& adjacency, Arch arch) {
    if (arch == Arch::gcn) return normalize_adjacency(adjacency);
    Matrix op = adjacency;
    for (int i = 0; i < op.rows(); ++i) op(i, i) += 1.0;
    return op;
}

ForwardTrace forward_from_prop(Tape& t, std::shared_ptr<Tape> keepalive, const ModelParams& p,
                               Tape::Ref x, Tape::Ref prop, bool grad_params) {
    p.check_valid();
    if (t.value(x).cols() != p.feature_dim)
        throw std::invalid_argument("forward: feature dim " + t.value(x).shape_str() +
                                    " does not match model input dim " + std::to_string(p.feature_dim));

    ForwardTrace tr;
    tr.tape = std::move(keepalive);
    tr.x = x;

    auto leaf = [&](const Matrix& m) {
        Tape::Ref r = t.leaf(m, grad_params);
        tr.param_leaves.push_back(r);
        return r;
    };

    Tape::Ref h = x;
    if (p.arch == Arch::gcn) {
        for (int l = 0; l < p.num_layers; ++l) {
            Tape::Ref theta = leaf(p.gcn_weights[l]);
            h = t.relu(t.matmul(t.matmul(prop, h), theta));
            tr.hidden.push_back(h);
        }
    } else {
        for (int l = 0; l < p.num_layers; ++l) {
            const GinLayer& gl = p.gin_layers[l];
            Tape::Ref w1 = leaf(gl.w1), b1 = leaf(gl.b1), w2 = leaf(gl.w2), b2 = leaf(gl.b2);
            Tape::Ref agg = t.matmul(prop, h);
            Tape::Ref z1 = t.relu(t.add_rows(t.matmul(agg, w1), b1));
            h = t.relu(t.add_rows(t.matmul(z1, w2), b2));
            tr.hidden.push_back(h);
        }
    }
    Tape::Ref w_out = leaf(p.out_weight);
    Tape::Ref b_out = leaf(p.out_bias);
    tr.pooled = t.row_sum(h);
    tr.logits = t.add(t.matmul(tr.pooled, t.transpose(w_out)), b_out);
    return tr;
}

ForwardTrace forward_on_tape(Tape& t, std::shared_ptr<Tape> keepalive, const ModelParams& p,
                             Tape::Ref x, Tape::Ref adjacency, bool grad_params) {
    const int n = t.value(adjacency).rows();
    Tape::Ref prop;
    if (p.arch == Arch::gcn)
        prop = normalize_adjacency_node(t, adjacency);
    else
        prop = t.add(adjacency, t.constant(Matrix::identity(n)));
    ForwardTrace tr = forward_from_prop(t, std::move(keepalive), p, x, prop, grad_params);
    tr.adjacency = adjacency;
    return tr;
}

ForwardTrace forward(const Matrix& features, const Matrix& adjacency, const ModelParams& params,
                     const TraceOptions& opt) {
    auto tape = std::make_shared<Tape>();
    Tape::Ref x = tape->leaf(features, opt.grad_features);
    Tape::Ref a = tape->leaf(adjacency, opt.grad_adjacency);
    return forward_on_tape(*tape, tape, params, x, a, opt.grad_params);
}

ForwardTrace forward(const Graph& g, const ModelParams& params, const TraceOptions& opt) {
    return forward(g.features, g.adjacency_matrix(), params, opt);
}

namespace {

void relu_inplace(Matrix& m) {
    for (size_t i = 0; i < m.size(); ++i)
        if (m.data()[i] < 0.0) m.data()[i] = 0.0;
}

void add_row_inplace(Matrix& m, const Matrix& row) {
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) m(i, j) += row(0, j);
}

}  // namespace

Matrix predict_logits(const Matrix& features, const Matrix& adjacency, const ModelParams& p) {
    p.check_valid();
    const Matrix prop = propagation_operator(adjacency, p.arch);
    Matrix h = features;
    if (p.arch == Arch::gcn) {
        for (int l = 0; l < p.num_layers; ++l) {
            h = gemm(gemm(prop, h), p.gcn_weights[l]);
            relu_inplace(h);
        }
    } else {
        for (int l = 0; l < p.num_layers; ++l) {
            const GinLayer& gl = p.gin_layers[l];
            Matrix z = gemm(gemm(prop, h), gl.w1);
            add_row_inplace(z, gl.b1);
            relu_inplace(z);
            h = gemm(z, gl.w2);
            add_row_inplace(h, gl.b2);
            relu_inplace(h);
        }
    }
    Matrix pooled(1, h.cols());
    for (int i = 0; i < h.rows(); ++i)
        for (int j = 0; j < h.cols(); ++j) pooled(0, j) += h(i, j);
    Matrix logits(1, p.num_classes);
    gemm_nt_acc(logits, pooled, p.out_weight);
    add_row_inplace(logits, p.out_bias);
    return logits;
}

Matrix predict_logits(const Graph& g, const ModelParams& params) {
    return predict_logits(g.features, g.adjacency_matrix(), params);
}

int argmax_class(const Matrix& logits_row) {
    int best = 0;
    for (int c = 1; c < logits_row.cols(); ++c)
        if (logits_row(0, c) > logits_row(0, best)) best = c;
    return best;
}

int predict_class(const Graph& g, const ModelParams& params) {
    return argmax_class(predict_logits(g, params));
}

namespace {

Matrix glorot(int rows, int cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    Matrix m(rows, cols);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
    return m;
}

}  // namespace

ModelParams init_params(Arch arch, int feature_dim, int num_classes, int num_layers, int hidden_dim,
                        uint64_t seed) {
    Rng rng(mix_seed(seed, 0x1417u));
    ModelParams p;
    p.arch = arch;
    p.num_layers = num_layers;
    p.hidden_dim = hidden_dim;
    p.feature_dim = feature_dim;
    p.num_classes = num_classes;
    for (int l = 0; l < num_layers; ++l) {
        const int din = l == 0 ? feature_dim : hidden_dim;
        if (arch == Arch::gcn) {
            p.gcn_weights.push_back(glorot(din, hidden_dim, rng));
        } else {
            GinLayer gl;
            gl.w1 = glorot(din, hidden_dim, rng);
            gl.b1 = Matrix(1, hidden_dim);
            gl.w2 = glorot(hidden_dim, hidden_dim, rng);
            gl.b2 = Matrix(1, hidden_dim);
            p.gin_layers.push_back(std::move(gl));
        }
    }
    p.out_weight = glorot(num_classes, hidden_dim, rng);
    p.out_bias = Matrix(1, num_classes);
    p.check_valid();
    return p;
}

ModelParams train_on_indices(const Dataset& ds, const std::vector<int>& train_indices,
                             const TrainConfig& cfg, std::vector<double>* epoch_losses) {
    if (train_indices.empty()) throw std::invalid_argument("train: empty training set");
    ModelParams params =
        init_params(cfg.arch, ds.feature_dim, ds.num_classes, cfg.num_layers, cfg.hidden_dim, cfg.seed);

    auto slots = params.flat();
    std::vector<Matrix> m1(slots.size()), m2(slots.size());
    for (size_t i = 0; i < slots.size(); ++i) {
        m1[i] = Matrix(slots[i]->rows(), slots[i]->cols());
        m2[i] = Matrix(slots[i]->rows(), slots[i]->cols());
    }
    if (epoch_losses) epoch_losses->clear();

    // One full batch per epoch, laid out as a block-diagonal stack: the
    // graphs (and so their propagation operators) never change, only the
    // parameters do.
    std::vector<int> offsets{0};
    std::vector<int> labels;
    auto blocks = std::make_shared<std::vector<Matrix>>();
    int total_rows = 0;
    for (int idx : train_indices) total_rows += ds.graphs[idx].n;
    Matrix x_all(total_rows, ds.feature_dim);
    for (int idx : train_indices) {
        const Graph& g = ds.graphs[idx];
        const int base = offsets.back();
        for (int r = 0; r < g.n; ++r)
            for (int c = 0; c < ds.feature_dim; ++c) x_all(base + r, c) = g.features(r, c);
        offsets.push_back(base + g.n);
        labels.push_back(g.label);
        blocks->push_back(propagation_operator(g.adjacency_matrix(), cfg.arch));
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Tape tape;
        Tape::Ref x = tape.constant(x_all);
        std::vector<Tape::Ref> param_leaves;
        auto leaf = [&](const Matrix& m) {
            Tape::Ref r = tape.leaf(m, true);
            param_leaves.push_back(r);
            return r;
        };

        Tape::Ref h = x;
        if (cfg.arch == Arch::gcn) {
            for (int l = 0; l < params.num_layers; ++l) {
                Tape::Ref theta = leaf(params.gcn_weights[l]);
                h = tape.relu(tape.matmul(tape.block_diag_matmul(blocks, h, offsets), theta));
            }
        } else {
            for (int l = 0; l < params.num_layers; ++l) {
                const GinLayer& gl = params.gin_layers[l];
                Tape::Ref w1 = leaf(gl.w1), b1 = leaf(gl.b1), w2 = leaf(gl.w2), b2 = leaf(gl.b2);
                Tape::Ref agg = tape.block_diag_matmul(blocks, h, offsets);
                Tape::Ref z1 = tape.relu(tape.add_rows(tape.matmul(agg, w1), b1));
                h = tape.relu(tape.add_rows(tape.matmul(z1, w2), b2));
            }
        }
        Tape::Ref w_out = leaf(params.out_weight);
        Tape::Ref b_out = leaf(params.out_bias);
        Tape::Ref pooled = tape.segment_row_sum(h, offsets);
        Tape::Ref logits = tape.add_rows(tape.matmul(pooled, tape.transpose(w_out)), b_out);
        Tape::Ref loss = tape.softmax_cross_entropy_mean(logits, labels);
        if (epoch_losses) epoch_losses->push_back(tape.value(loss)(0, 0));
        tape.backward(loss);

        double clip_scale = 1.0;
        if (cfg.grad_clip > 0.0) {
            double sq = 0.0;
            for (size_t i = 0; i < slots.size(); ++i) {
                const double* g = tape.grad_ref(param_leaves[i]).data();
                for (size_t k = 0; k < slots[i]->size(); ++k) sq += g[k] * g[k];
            }
            const double norm = std::sqrt(sq);
            if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
        }

        const double bc1 = 1.0 - std::pow(cfg.beta1, epoch);
        const double bc2 = 1.0 - std::pow(cfg.beta2, epoch);
        for (size_t i = 0; i < slots.size(); ++i) {
            double* p = slots[i]->data();
            const double* g = tape.grad_ref(param_leaves[i]).data();
            double* a = m1[i].data();
            double* b = m2[i].data();
            for (size_t k = 0; k < slots[i]->size(); ++k) {
                const double gk = g[k] * clip_scale;
                a[k] = cfg.beta1 * a[k] + (1.0 - cfg.beta1) * gk;
                b[k] = cfg.beta2 * b[k] + (1.0 - cfg.beta2) * gk * gk;
                p[k] -= cfg.lr * (a[k] / bc1) / (std::sqrt(b[k] / bc2) + cfg.adam_eps);
            }
        }
    }
    return params;
}

ModelParams train(const Dataset& ds, const FoldSplit& folds, int fold_index, const TrainConfig& cfg,
                  std::vector<double>* epoch_losses) {
    if (fold_index < 0 || fold_index >= folds.fold_count)
        throw std::invalid_argument("train: fold index out of range");
    return train_on_indices(ds, folds.complement_indices(fold_index), cfg, epoch_losses);
}

double evaluate(const ModelParams& params, const Dataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("evaluate: empty graph set");
    int correct = 0;
    for (int idx : indices)
        if (predict_class(ds.graphs[idx], params) == ds.graphs[idx].label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

double evaluate(const ModelParams& params, const std::vector<Graph>& graphs) {
    if (graphs.empty()) throw std::invalid_argument("evaluate: empty graph set");
    int correct = 0;
    for (const auto& g : graphs)
        if (predict_class(g, params) == g.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(graphs.size());
}

namespace {

json matrix_to_json(const Matrix& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = std::vector<double>(m.data(), m.data() + m.size());
    return j;
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.size()) throw std::runtime_error("checkpoint: matrix size mismatch");
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

void save_model(const ModelParams& params, const std::string& path) {
    json j;
    j["version"] = kCheckpointVersion;
    j["arch"] = to_string(params.arch);
    j["num_layers"] = params.num_layers;
    j["hidden_dim"] = params.hidden_dim;
    j["feature_dim"] = params.feature_dim;
    j["num_classes"] = params.num_classes;
    json weights = json::array();
    for (const Matrix* m : params.flat()) weights.push_back(matrix_to_json(*m));
    j["weights"] = weights;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << j.dump(2) << "\n";
}

ModelParams load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    json j = json::parse(in);
    if (j.at("version").get<int>() != kCheckpointVersion)
        throw std::runtime_error("checkpoint version mismatch in " + path);
    ModelParams p;
    p.arch = arch_from_string(j.at("arch").get<std::string>());
    p.num_layers = j.at("num_layers").get<int>();
    p.hidden_dim = j.at("hidden_dim").get<int>();
    p.feature_dim = j.at("feature_dim").get<int>();
    p.num_classes = j.at("num_classes").get<int>();
    if (p.arch == Arch::gcn) {
        p.gcn_weights.resize(p.num_layers);
    } else {
        p.gin_layers.resize(p.num_layers);
    }
    p.out_weight = Matrix(p.num_classes, p.hidden_dim);
    p.out_bias = Matrix(1, p.num_classes);
    auto slots = p.flat();
    const auto& weights = j.at("weights");
    if (weights.size() != slots.size()) throw std::runtime_error("checkpoint: weight count mismatch");
    for (size_t i = 0; i < slots.size(); ++i) *slots[i] = matrix_from_json(weights[i]);
    p.check_valid();
    return p;
}

}  // namespace cama
