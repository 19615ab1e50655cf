#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "cama/autodiff.hpp"
#include "cama/gradcheck.hpp"
#include "cama/rng.hpp"
#include "testutil.hpp"

using namespace cama;

TEST_CASE("cw_margin values") {
    Tape t;
    Matrix z(1, 3);
    z(0, 0) = 2;
    z(0, 1) = 5;
    z(0, 2) = 1;
    CHECK(t.value(t.cw_margin(t.constant(z), 1))(0, 0) == doctest::Approx(3.0));
    Matrix z2(1, 3);
    z2(0, 0) = 4;
    z2(0, 1) = 1;
    z2(0, 2) = 0;
    CHECK(t.value(t.cw_margin(t.constant(z2), 2))(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("cw_margin inner-max tie breaks toward the smaller class index") {
    Tape t;
    Matrix z(1, 3);
    z(0, 0) = 2.0;
    z(0, 1) = 3.0;
    z(0, 2) = 2.0;  // classes 0 and 2 tie
    Tape::Ref leaf = t.leaf(z, true);
    Tape::Ref m = t.cw_margin(leaf, 1);
    CHECK(t.value(m)(0, 0) == doctest::Approx(1.0));
    t.backward(m);
    Matrix g = t.grad_of(leaf);
    CHECK(g(0, 1) == doctest::Approx(1.0));
    CHECK(g(0, 0) == doctest::Approx(-1.0));  // not class 2
    CHECK(g(0, 2) == doctest::Approx(0.0));
}

TEST_CASE("entropy_mean at zero mask is ln 2") {
    Tape t;
    Matrix m(4, 1);
    CHECK(t.value(t.entropy_mean(t.constant(m)))(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("mean_all(relu(x)) gradients: all-positive and all-negative") {
    Tape t;
    Matrix x(2, 3, 0.7);
    Tape::Ref leaf = t.leaf(x, true);
    Tape::Ref out = t.mean_all(t.relu(leaf));
    t.backward(out);
    Matrix g = t.grad_of(leaf);
    for (size_t i = 0; i < g.size(); ++i) CHECK(g.data()[i] == doctest::Approx(1.0 / 6.0));

    Tape t2;
    Matrix xn(2, 3, -0.4);
    Tape::Ref leaf2 = t2.leaf(xn, true);
    Tape::Ref out2 = t2.mean_all(t2.relu(leaf2));
    t2.backward(out2);
    Matrix g2 = t2.grad_of(leaf2);
    for (size_t i = 0; i < g2.size(); ++i) CHECK(g2.data()[i] == 0.0);
}

TEST_CASE("grad_of contract") {
    Tape t;
    Matrix x(2, 2, 1.0);
    Tape::Ref cst = t.constant(x);
    Tape::Ref leaf = t.leaf(x, true);
    Tape::Ref out = t.mean_all(t.hadamard(leaf, cst));

    SUBCASE("constant leaf has no gradient") {
        t.backward(out);
        CHECK_THROWS_AS(t.grad_of(cst), std::logic_error);
    }
    SUBCASE("two backward calls accumulate; reset zeroes") {
        t.backward(out);
        Matrix once = t.grad_of(leaf);
        t.backward(out);
        Matrix twice = t.grad_of(leaf);
        for (size_t i = 0; i < once.size(); ++i)
            CHECK(twice.data()[i] == doctest::Approx(2.0 * once.data()[i]));
        t.reset_grads();
        Matrix zero = t.grad_of(leaf);
        for (size_t i = 0; i < zero.size(); ++i) CHECK(zero.data()[i] == 0.0);
    }
    SUBCASE("backward requires a scalar") {
        CHECK_THROWS_AS(t.backward(leaf), std::invalid_argument);
    }
}

TEST_CASE("shape mismatches carry both shapes in the message") {
    Tape t;
    Tape::Ref a = t.constant(Matrix(2, 3));
    Tape::Ref b = t.constant(Matrix(2, 3));
    try {
        t.matmul(a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2x3)") != std::string::npos);
    }
    CHECK_THROWS_AS(t.add(a, t.constant(Matrix(3, 2))), std::invalid_argument);
}

TEST_CASE("finite-difference suite over every primitive and both full models") {
    GradCheckReport rep = run_gradcheck();
    for (const auto& line : rep.messages) INFO(line);
    CHECK(rep.checks >= 20);
    CHECK(rep.failures == 0);
}

TEST_CASE("chain-rule composition on random 3x3 matrices vs the oracle") {
    Rng rng(99);
    for (int iter = 0; iter < 5; ++iter) {
        Matrix x(3, 3), w(3, 3);
        for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
        for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
        auto f = [&](const std::vector<Matrix>& in) {
            Tape t;
            Tape::Ref l = t.constant(in[0]);
            Tape::Ref m = t.constant(in[1]);
            return t.value(t.mean_all(t.sigmoid(t.matmul(l, m))))(0, 0);
        };
        Tape t;
        Tape::Ref lx = t.leaf(x, true);
        Tape::Ref lw = t.leaf(w, true);
        t.backward(t.mean_all(t.sigmoid(t.matmul(lx, lw))));
        auto numeric = fd_gradients(f, {x, w});
        CHECK(gradients_close(t.grad_of(lx), numeric[0]));
        CHECK(gradients_close(t.grad_of(lw), numeric[1]));
    }
}

TEST_CASE("tape replay determinism is bit exact") {
    Rng rng(7);
    Matrix x(4, 4), w(4, 4);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
    for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
    auto run = [&](Matrix* grad_out) {
        Tape t;
        Tape::Ref lx = t.leaf(x, true);
        Tape::Ref out = t.mean_all(t.relu(t.matmul(t.sigmoid(t.matmul(lx, t.constant(w))), t.constant(w))));
        t.backward(out);
        *grad_out = t.grad_of(lx);
        return t.value(out)(0, 0);
    };
    Matrix g1, g2;
    const double v1 = run(&g1), v2 = run(&g2);
    CHECK(std::memcmp(&v1, &v2, sizeof v1) == 0);
    REQUIRE(g1.size() == g2.size());
    CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("batched ops agree with the per-graph formulation") {
    Rng rng(31);
    auto blocks = std::make_shared<std::vector<Matrix>>();
    Matrix b0(2, 2), b1(3, 3);
    for (size_t i = 0; i < b0.size(); ++i) b0.data()[i] = rng.uniform(-1.0, 1.0);
    for (size_t i = 0; i < b1.size(); ++i) b1.data()[i] = rng.uniform(-1.0, 1.0);
    blocks->push_back(b0);
    blocks->push_back(b1);
    Matrix x(5, 2);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);

    Tape t;
    Tape::Ref lx = t.constant(x);
    Tape::Ref y = t.block_diag_matmul(blocks, lx, {0, 2, 5});
    // reference: per-block dense products
    Tape t2;
    Matrix top(2, 2), bot(3, 2);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) top(r, c) = x(r, c);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c) bot(r, c) = x(2 + r, c);
    Matrix ry0 = gemm(b0, top), ry1 = gemm(b1, bot);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) CHECK(t.value(y)(r, c) == doctest::Approx(ry0(r, c)).epsilon(1e-14));
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c)
            CHECK(t.value(y)(2 + r, c) == doctest::Approx(ry1(r, c)).epsilon(1e-14));

    Tape::Ref s = t.segment_row_sum(lx, {0, 2, 5});
    CHECK(t.value(s)(0, 0) == doctest::Approx(x(0, 0) + x(1, 0)).epsilon(1e-14));
    CHECK(t.value(s)(1, 1) == doctest::Approx(x(2, 1) + x(3, 1) + x(4, 1)).epsilon(1e-14));

    Matrix logits(2, 3);
    for (size_t i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-1.0, 1.0);
    Tape t3;
    Tape::Ref ll = t3.constant(logits);
    const double mean_ce = t3.value(t3.softmax_cross_entropy_mean(ll, {1, 2}))(0, 0);
    const double a = t3.value(t3.softmax_cross_entropy(t3.slice_rows(ll, 0, 1), 1))(0, 0);
    const double b = t3.value(t3.softmax_cross_entropy(t3.slice_rows(ll, 1, 2), 2))(0, 0);
    CHECK(mean_ce == doctest::Approx((a + b) / 2.0).epsilon(1e-14));
}
