#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cama/cam.hpp"
#include "cama/gradcheck.hpp"
#include "cama/rng.hpp"
#include "testutil.hpp"

using namespace cama;

namespace {

// Degenerate one-layer "network": hidden = X (identity convolution), sum
// pooling, linear head. Built directly on a tape so CAM/Grad-CAM can be
// compared in closed form.
ForwardTrace identity_trace(const Matrix& x, const ModelParams& p) {
    auto tape = std::make_shared<Tape>();
    ForwardTrace tr;
    tr.tape = tape;
    tr.x = tape->leaf(x, true);
    Tape::Ref h = tape->add(tr.x, tape->constant(Matrix(x.rows(), x.cols())));
    tr.hidden.push_back(h);
    tr.pooled = tape->row_sum(h);
    tr.logits = tape->add(tape->matmul(tr.pooled, tape->transpose(tape->constant(p.out_weight))),
                          tape->constant(p.out_bias));
    return tr;
}

ModelParams head_only(const Matrix& w) {
    ModelParams p;
    p.arch = Arch::gcn;
    p.num_layers = 1;
    p.hidden_dim = w.cols();
    p.feature_dim = w.cols();
    p.num_classes = w.rows();
    p.gcn_weights.push_back(Matrix::identity(w.cols()));
    p.out_weight = w;
    p.out_bias = Matrix(1, w.rows());
    return p;
}

}  // namespace

TEST_CASE("cam_heatmap") {
    SUBCASE("zero output weights give a zero heat map") {
        Matrix x = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
        ModelParams p = head_only(Matrix(2, 2));
        ForwardTrace tr = identity_trace(x, p);
        HeatMap h = cam_heatmap(tr, p);
        for (size_t i = 0; i < h.size(); ++i) CHECK(h.data()[i] == 0.0);
    }
    SUBCASE("hand values: ReLU(h W^T)") {
        Matrix hlast = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
        Matrix w = Matrix::from_rows({{1.0, -1.0}, {2.0, 0.0}});
        ModelParams p = head_only(w);
        ForwardTrace tr = identity_trace(hlast, p);
        HeatMap h = cam_heatmap(tr, p);
        CHECK(h(0, 0) == doctest::Approx(1.0));
        CHECK(h(0, 1) == doctest::Approx(2.0));
        CHECK(h(1, 0) == doctest::Approx(0.0));
        CHECK(h(1, 1) == doctest::Approx(0.0));
    }
    SUBCASE("random 5-node case equals the entrywise oracle") {
        Rng rng(13);
        Matrix hlast(5, 3), w(2, 3);
        for (size_t i = 0; i < hlast.size(); ++i) hlast.data()[i] = rng.uniform(-1.0, 1.0);
        for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
        ModelParams p = head_only(w);
        ForwardTrace tr = identity_trace(hlast, p);
        HeatMap h = cam_heatmap(tr, p);
        for (int v = 0; v < 5; ++v)
            for (int c = 0; c < 2; ++c) {
                double dot = 0.0;
                for (int k = 0; k < 3; ++k) dot += hlast(v, k) * w(c, k);
                CHECK(h(v, c) == doctest::Approx(std::max(dot, 0.0)).epsilon(1e-12));
            }
    }
}

TEST_CASE("grad_cam_heatmap") {
    SUBCASE("degenerate one-layer model: alpha equals W^T, heat map equals CAM") {
        Rng rng(17);
        Matrix x(4, 3), w(2, 3);
        for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(0.0, 1.0);
        for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
        ModelParams p = head_only(w);
        ForwardTrace tr = identity_trace(x, p);
        HeatMap cam = cam_heatmap(tr, p);
        HeatMap gcam = grad_cam_heatmap(tr, p);
        CHECK(max_abs_diff(cam, gcam) < 1e-12);
    }
    SUBCASE("zero hidden states give a zero heat map") {
        ModelParams p = head_only(Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}}));
        ForwardTrace tr = identity_trace(Matrix(3, 2), p);
        HeatMap h = grad_cam_heatmap(tr, p);
        for (size_t i = 0; i < h.size(); ++i) CHECK(h.data()[i] == 0.0);
    }
    SUBCASE("2-layer GCN on a 4-node graph matches a finite-difference construction of alpha") {
        Graph g = testutil::random_graph(4, 3, 0.6, 5);
        ModelParams p = init_params(Arch::gcn, 3, 2, 2, 6, 3);
        TraceOptions opt;
        opt.grad_features = true;
        ForwardTrace tr = forward(g, p, opt);

        // Oracle: alpha[l][:,c] = mean_v d z_c / d h_v^(l), with the
        // derivative estimated by re-running the tail of the network from a
        // perturbed hidden layer.
        const Matrix prop = normalize_adjacency(g);
        auto tail_logit = [&](int from_layer, const Matrix& hidden, int cls) {
            Matrix h = hidden;
            for (int l = from_layer + 1; l < p.num_layers; ++l) {
                h = gemm(gemm(prop, h), p.gcn_weights[l]);
                for (size_t i = 0; i < h.size(); ++i)
                    if (h.data()[i] < 0.0) h.data()[i] = 0.0;
            }
            Matrix pooled(1, h.cols());
            for (int i = 0; i < h.rows(); ++i)
                for (int j = 0; j < h.cols(); ++j) pooled(0, j) += h(i, j);
            Matrix z(1, p.num_classes);
            gemm_nt_acc(z, pooled, p.out_weight);
            z(0, 0) += p.out_bias(0, 0);
            z(0, 1) += p.out_bias(0, 1);
            return z(0, cls);
        };

        const double fd_h = 1e-5;
        HeatMap expected(g.n, p.num_classes);
        for (int l = 0; l < p.num_layers; ++l) {
            Matrix hval = tr.tape->value(tr.hidden[l]);
            Matrix alpha(p.hidden_dim, p.num_classes);
            for (int c = 0; c < p.num_classes; ++c)
                for (int j = 0; j < p.hidden_dim; ++j) {
                    double acc = 0.0;
                    for (int v = 0; v < g.n; ++v) {
                        Matrix up = hval, down = hval;
                        up(v, j) += fd_h;
                        down(v, j) -= fd_h;
                        acc += (tail_logit(l, up, c) - tail_logit(l, down, c)) / (2.0 * fd_h);
                    }
                    alpha(j, c) = acc / g.n;
                }
            Matrix layer_heat = gemm(hval, alpha);
            for (int v = 0; v < g.n; ++v)
                for (int c = 0; c < p.num_classes; ++c)
                    expected(v, c) += std::max(layer_heat(v, c), 0.0) / p.num_layers;
        }

        HeatMap got = grad_cam_heatmap(tr, p);
        REQUIRE(got.same_shape(expected));
        for (size_t i = 0; i < got.size(); ++i)
            CHECK(got.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-3).scale(1.0));
    }
}

TEST_CASE("column_rank") {
    SUBCASE("single node: every column is [0]") {
        HeatMap h(1, 3, 0.5);
        auto cols = column_rank(h);
        for (const auto& c : cols) CHECK(c == std::vector<int>{0});
    }
    SUBCASE("hand example") {
        HeatMap h = Matrix::from_rows({{0.2, 0.9}, {0.5, 0.1}, {0.4, 0.3}});
        auto cols = column_rank(h);
        CHECK(cols[0] == std::vector<int>{1, 2, 0});
        CHECK(cols[1] == std::vector<int>{0, 2, 1});
    }
    SUBCASE("all-equal heat: identity order by the tie rule") {
        HeatMap h(4, 2, 0.7);
        auto cols = column_rank(h);
        CHECK(cols[0] == std::vector<int>{0, 1, 2, 3});
        CHECK(cols[1] == std::vector<int>{0, 1, 2, 3});
    }
}

TEST_CASE("global_rank") {
    SUBCASE("C=1 degenerates to the single column") {
        HeatMap h = Matrix::from_rows({{0.1}, {0.9}, {0.5}});
        CHECK(global_rank(h) == std::vector<int>{1, 2, 0});
    }
    SUBCASE("hand merge of [1,2,0] and [0,2,1]") {
        HeatMap h = Matrix::from_rows({{0.2, 0.9}, {0.5, 0.1}, {0.4, 0.3}});
        CHECK(global_rank(h) == std::vector<int>{1, 0, 2});
    }
    SUBCASE("identical columns collapse to that column") {
        HeatMap h = Matrix::from_rows({{0.3, 0.3}, {0.9, 0.9}, {0.6, 0.6}});
        CHECK(global_rank(h) == std::vector<int>{1, 2, 0});
    }
}

TEST_CASE("ranked_cam_matrix") {
    SUBCASE("composition of the hand examples") {
        HeatMap h = Matrix::from_rows({{0.2, 0.9}, {0.5, 0.1}, {0.4, 0.3}});
        RankedCamMatrix r = ranked_cam_matrix(h);
        REQUIRE(r.num_columns() == 3);
        CHECK(r.column(0) == std::vector<int>{1, 2, 0});
        CHECK(r.column(1) == std::vector<int>{0, 2, 1});
        CHECK(r.column(2) == std::vector<int>{1, 0, 2});
    }
    SUBCASE("single node gives a 1 x (C+1) matrix of zeros") {
        HeatMap h(1, 2, 0.4);
        RankedCamMatrix r = ranked_cam_matrix(h);
        REQUIRE(r.num_columns() == 3);
        for (int c = 0; c < 3; ++c) CHECK(r.column(c) == std::vector<int>{0});
    }
    SUBCASE("every column is a permutation on 100 random heat maps") {
        Rng rng(2024);
        for (int it = 0; it < 100; ++it) {
            const int n = 1 + static_cast<int>(rng.next_below(12));
            const int c = 1 + static_cast<int>(rng.next_below(4));
            HeatMap h = testutil::random_heatmap(n, c, rng);
            RankedCamMatrix r = ranked_cam_matrix(h);
            REQUIRE(r.num_columns() == c + 1);
            for (int col = 0; col <= c; ++col) CHECK(testutil::is_permutation_of_n(r.column(col), n));
        }
    }
}

TEST_CASE("heatmap_csv layout") {
    HeatMap h = Matrix::from_rows({{0.25, 1.5}, {0.0, 2.0}});
    const std::string csv = heatmap_csv(h);
    CHECK(csv == "node_id,class_0,class_1\n0,0.25,1.5\n1,0,2\n");
}

TEST_CASE("ranking properties") {
    Rng rng(31337);
    for (int it = 0; it < 50; ++it) {
        const int n = 2 + static_cast<int>(rng.next_below(10));
        const int c = 1 + static_cast<int>(rng.next_below(3));
        HeatMap h = testutil::random_heatmap(n, c, rng);
        auto cols = column_rank(h);

        SUBCASE("rank consistency: heat non-increasing down each column") {}
        for (int col = 0; col < c; ++col)
            for (int i = 0; i + 1 < n; ++i) CHECK(h(cols[col][i], col) >= h(cols[col][i + 1], col));

        // positive-scaling invariance of rankings
        HeatMap scaled = h;
        const double s = rng.uniform(0.1, 5.0);
        for (int v = 0; v < n; ++v) scaled(v, 0) *= s;
        CHECK(column_rank(scaled)[0] == cols[0]);

        // oracle agreement (selection-scan oracle vs stable sort)
        for (int col = 0; col < c; ++col)
            CHECK(cols[col] == testutil::oracle_column_rank(h, col));
        CHECK(global_rank(h) == testutil::oracle_global_rank(h));
    }
}
