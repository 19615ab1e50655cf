#include "cama/gradcheck.hpp"

#include <cmath>

#include "cama/autodiff.hpp"
#include "cama/gnn.hpp"
#include "cama/rng.hpp"

namespace cama {

std::vector<Matrix> fd_gradients(const ScalarFn& f, const std::vector<Matrix>& inputs, double h) {
    std::vector<Matrix> grads;
    std::vector<Matrix> work = inputs;
    for (size_t m = 0; m < inputs.size(); ++m) {
        Matrix g(inputs[m].rows(), inputs[m].cols());
        for (size_t i = 0; i < inputs[m].size(); ++i) {
            const double orig = work[m].data()[i];
            work[m].data()[i] = orig + h;
            const double up = f(work);
            work[m].data()[i] = orig - h;
            const double down = f(work);
            work[m].data()[i] = orig;
            g.data()[i] = (up - down) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

bool gradients_close(const Matrix& analytic, const Matrix& numeric, double rel_tol, double abs_tol,
                     double* worst) {
    if (!analytic.same_shape(numeric)) return false;
    bool ok = true;
    double w = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic.data()[i], n = numeric.data()[i];
        const double err = std::fabs(a - n);
        const double bound = std::max(abs_tol, rel_tol * std::max(std::fabs(a), std::fabs(n)));
        w = std::max(w, err / bound);
        if (err > bound) ok = false;
    }
    if (worst) *worst = w;
    return ok;
}

namespace {

Matrix random_matrix(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
    return m;
}

// Keeps every entry at least `margin` away from zero so ReLU and the
// finite-difference step never straddle the kink.
void push_from_zero(Matrix& m, double margin) {
    for (size_t i = 0; i < m.size(); ++i) {
        double& x = m.data()[i];
        if (std::fabs(x) < margin) x = x >= 0.0 ? margin : -margin;
    }
}

struct Checker {
    GradCheckReport report;

    // fn builds the scalar output on the tape and returns (output ref, leaf refs)
    void check(const std::string& name, const std::vector<Matrix>& inputs,
               const std::function<Tape::Ref(Tape&, const std::vector<Tape::Ref>&)>& build,
               double rel = 1e-4, double abs = 1e-6) {
        ScalarFn f = [&](const std::vector<Matrix>& xs) {
            Tape t;
            std::vector<Tape::Ref> leaves;
            for (const auto& x : xs) leaves.push_back(t.leaf(x, false));
            return t.value(build(t, leaves))(0, 0);
        };
        Tape t;
        std::vector<Tape::Ref> leaves;
        for (const auto& x : inputs) leaves.push_back(t.leaf(x, true));
        Tape::Ref out = build(t, leaves);
        t.backward(out);
        const auto numeric = fd_gradients(f, inputs);
        bool ok = true;
        double worst = 0.0;
        for (size_t i = 0; i < inputs.size(); ++i) {
            double w = 0.0;
            if (!gradients_close(t.grad_of(leaves[i]), numeric[i], rel, abs, &w)) ok = false;
            worst = std::max(worst, w);
        }
        ++report.checks;
        if (!ok) ++report.failures;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-44s %s (worst err/bound %.3g)", name.c_str(),
                      ok ? "ok" : "FAIL", worst);
        report.messages.push_back(buf);
    }
};

void check_model_loss(Checker& ck, Arch arch, Rng& rng) {
    const int n = 6, d = 4, classes = 3, layers = 3, hidden = 8;
    ModelParams params = init_params(arch, d, classes, layers, hidden, rng.next_u64());

    // Random symmetric hollow adjacency, treated as a real-valued input.
    Matrix adj(n, n);
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) adj(u, v) = adj(v, u) = rng.next_double() < 0.5 ? 1.0 : 0.0;
    Matrix x = random_matrix(n, d, rng);
    const int label = 1;

    std::vector<Matrix> inputs;
    inputs.push_back(x);
    inputs.push_back(adj);
    for (const Matrix* p : params.flat()) inputs.push_back(*p);

    // Assembles the network inline from the leaf nodes so gradients flow to
    // exactly the matrices being finite-differenced.
    auto build = [&, arch](Tape& t, const std::vector<Tape::Ref>& leaves) {
        Tape::Ref h = leaves[0];
        Tape::Ref prop;
        if (arch == Arch::gcn)
            prop = normalize_adjacency_node(t, leaves[1]);
        else
            prop = t.add(leaves[1], t.constant(Matrix::identity(n)));
        size_t li = 2;
        if (arch == Arch::gcn) {
            for (int l = 0; l < layers; ++l) h = t.relu(t.matmul(t.matmul(prop, h), leaves[li++]));
        } else {
            for (int l = 0; l < layers; ++l) {
                Tape::Ref w1 = leaves[li++], b1 = leaves[li++], w2 = leaves[li++], b2 = leaves[li++];
                Tape::Ref agg = t.matmul(prop, h);
                Tape::Ref z1 = t.relu(t.add_rows(t.matmul(agg, w1), b1));
                h = t.relu(t.add_rows(t.matmul(z1, w2), b2));
            }
        }
        Tape::Ref w_out = leaves[li++];
        Tape::Ref b_out = leaves[li++];
        Tape::Ref pooled = t.row_sum(h);
        Tape::Ref logits = t.add(t.matmul(pooled, t.transpose(w_out)), b_out);
        return t.softmax_cross_entropy(logits, label);
    };
    ck.check(std::string("full ") + to_string(arch) + " loss wrt X, A, all params", inputs, build);
}

}  // namespace

GradCheckReport run_gradcheck(uint64_t seed) {
    Rng rng(mix_seed(seed, 0x6adcull));
    Checker ck;

    {
        Matrix a = random_matrix(3, 4, rng), b = random_matrix(4, 5, rng);
        ck.check("matmul", {a, b}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(t.matmul(l[0], l[1]));
        });
    }
    {
        Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
        ck.check("add", {a, b}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(t.add(l[0], l[1]));
        });
        ck.check("hadamard", {a, b}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(t.hadamard(l[0], l[1]));
        });
    }
    {
        Matrix a = random_matrix(4, 3, rng), row = random_matrix(1, 3, rng);
        ck.check("add_rows", {a, row}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(t.hadamard(t.add_rows(l[0], l[1]), t.add_rows(l[0], l[1])));
        });
    }
    {
        Matrix a = random_matrix(3, 3, rng);
        ck.check("scalar_mul", {a}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(t.scalar_mul(l[0], -2.5));
        });
        Matrix r = random_matrix(4, 4, rng);
        push_from_zero(r, 0.05);
        ck.check("relu", {r}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(t.relu(l[0]));
        });
        ck.check("sigmoid", {a}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(t.sigmoid(l[0]));
        });
        ck.check("row_sum", {a}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(t.hadamard(t.row_sum(l[0]), t.row_sum(l[0])));
        });
        ck.check("mean_all", {a}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(l[0]);
        });
        ck.check("transpose", {a}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(t.hadamard(t.transpose(l[0]), t.transpose(l[0])));
        });
    }
    {
        Matrix a = random_matrix(3, 2, rng), b = random_matrix(3, 3, rng);
        ck.check("concat_cols", {a, b}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            Tape::Ref c = t.concat_cols(l[0], l[1]);
            return t.mean_all(t.hadamard(c, c));
        });
        ck.check("slice_rows", {b}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            Tape::Ref s = t.slice_rows(l[0], 1, 3);
            return t.mean_all(t.hadamard(s, s));
        });
    }
    {
        Matrix z = random_matrix(1, 4, rng, -2.0, 2.0);
        z(0, 2) += 3.0;  // keep the runner-up unique so cw_margin stays smooth
        ck.check("softmax_cross_entropy", {z}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.softmax_cross_entropy(l[0], 1);
        });
        ck.check("cw_margin (positive margin)", {z}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.cw_margin(l[0], 2);
        });
        Matrix m = random_matrix(5, 1, rng, -2.0, 2.0);
        ck.check("entropy_mean", {m}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.entropy_mean(l[0]);
        });
    }
    {
        Matrix d = random_matrix(3, 2, rng, 0.5, 3.0);
        ck.check("rsqrt", {d}, [](Tape& t, const std::vector<Tape::Ref>& l) {
            return t.mean_all(t.rsqrt(l[0]));
        });
    }
    {
        Matrix mask = random_matrix(3, 1, rng);
        std::vector<std::pair<int, int>> pairs{{0, 1}, {1, 2}, {0, 3}};
        ck.check("scatter_pairs", {mask}, [pairs](Tape& t, const std::vector<Tape::Ref>& l) {
            Tape::Ref s = t.scatter_pairs(l[0], pairs, 4);
            return t.mean_all(t.hadamard(s, s));
        });
    }
    {
        // batched ops against a two-graph stack
        auto blocks = std::make_shared<std::vector<Matrix>>();
        blocks->push_back(random_matrix(2, 2, rng));
        blocks->push_back(random_matrix(3, 3, rng));
        std::vector<int> offsets{0, 2, 5};
        Matrix x = random_matrix(5, 3, rng);
        ck.check("block_diag_matmul", {x}, [blocks, offsets](Tape& t, const std::vector<Tape::Ref>& l) {
            Tape::Ref y = t.block_diag_matmul(blocks, l[0], offsets);
            return t.mean_all(t.hadamard(y, y));
        });
        ck.check("segment_row_sum", {x}, [offsets](Tape& t, const std::vector<Tape::Ref>& l) {
            Tape::Ref y = t.segment_row_sum(l[0], offsets);
            return t.mean_all(t.hadamard(y, y));
        });
        Matrix logits = random_matrix(2, 3, rng, -2.0, 2.0);
        std::vector<int> labels{2, 0};
        ck.check("softmax_cross_entropy_mean", {logits},
                 [labels](Tape& t, const std::vector<Tape::Ref>& l) {
                     return t.softmax_cross_entropy_mean(l[0], labels);
                 });
    }
    {
        // deep composite: 5 alternating layers, checked against the oracle
        Matrix x = random_matrix(4, 4, rng);
        Matrix w1 = random_matrix(4, 4, rng), w2 = random_matrix(4, 4, rng),
               w3 = random_matrix(4, 4, rng);
        push_from_zero(x, 0.05);
        ck.check("5-layer composite", {x, w1, w2, w3},
                 [](Tape& t, const std::vector<Tape::Ref>& l) {
                     Tape::Ref h = t.relu(t.matmul(l[0], l[1]));
                     h = t.sigmoid(t.matmul(h, l[2]));
                     h = t.matmul(h, l[3]);
                     h = t.add(h, t.transpose(h));
                     return t.mean_all(t.hadamard(h, h));
                 });
    }

    check_model_loss(ck, Arch::gcn, rng);
    check_model_loss(ck, Arch::gin0, rng);
    return ck.report;
}

}  // namespace cama
