#include <doctest.h>

#include <functional>
#include <random>

#include "coevolve/tape.hpp"

using namespace coevolve;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64 &rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
    return m;
}

Matrix random_stochastic(int r, int c, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> dist(0.05, 1.0);
    Matrix m(r, c);
    for (int i = 0; i < r; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += (m(i, j) = dist(rng));
        m.row(i) /= s;
    }
    return m;
}

/// Central finite-difference check of d(f)/d(input) for a scalar builder.
void check_gradient(const Matrix &input,
                    const std::function<Var(Tape &, Var)> &build, double step = 1e-6,
                    double tol = 1e-5) {
    Tape t;
    Var x = t.leaf(input);
    Var loss = build(t, x);
    t.backward(loss);
    Matrix analytic = t.grad(x);

    for (int i = 0; i < input.rows(); ++i)
        for (int j = 0; j < input.cols(); ++j) {
            Matrix plus = input, minus = input;
            plus(i, j) += step;
            minus(i, j) -= step;
            Tape tp, tm;
            double fp = tp.value(build(tp, tp.leaf(plus)))(0, 0);
            double fm = tm.value(build(tm, tm.leaf(minus)))(0, 0);
            double fd = (fp - fm) / (2.0 * step);
            double denom = std::max({1e-6, std::abs(fd), std::abs(analytic(i, j))});
            CHECK(std::abs(analytic(i, j) - fd) / denom < tol);
        }
}

} // namespace

TEST_SUITE("tape") {

TEST_CASE("elementwise and matmul chain") {
    std::mt19937_64 rng(1);
    Matrix a = random_matrix(4, 3, rng);
    Matrix w = random_matrix(3, 5, rng);
    check_gradient(a, [&](Tape &t, Var x) {
        Var out = t.relu(t.matmul(x, t.constant(w)));
        return t.meanAll(t.hadamard(out, out));
    });
    check_gradient(w, [&](Tape &t, Var x) {
        Var out = t.sigmoid(t.matmul(t.constant(a), x));
        return t.sumAll(t.scale(out, 0.3));
    });
}

TEST_CASE("broadcast ops") {
    std::mt19937_64 rng(2);
    Matrix m = random_matrix(5, 4, rng);
    Matrix row = random_matrix(1, 4, rng);
    Matrix col = random_matrix(5, 1, rng, 0.1, 1.0);
    check_gradient(row, [&](Tape &t, Var x) {
        return t.meanAll(t.relu(t.addRowBroadcast(t.constant(m), x)));
    });
    check_gradient(m, [&](Tape &t, Var x) {
        return t.meanAll(t.mulColBroadcast(x, t.constant(col)));
    });
    check_gradient(col, [&](Tape &t, Var x) {
        return t.meanAll(t.mulColBroadcast(t.constant(m), x));
    });
}

TEST_CASE("softmax, entropy, kl") {
    std::mt19937_64 rng(3);
    Matrix logits = random_matrix(6, 4, rng, -2.0, 2.0);
    check_gradient(logits, [&](Tape &t, Var x) { return t.meanAll(t.softmaxRows(x)); });
    check_gradient(logits, [&](Tape &t, Var x) {
        return t.meanAll(t.entropyRows(t.softmaxRows(x)));
    });
    Matrix q = random_stochastic(6, 4, rng);
    check_gradient(logits, [&](Tape &t, Var x) {
        return t.meanAll(t.klRows(t.constant(q), t.softmaxRows(x)));
    });
    check_gradient(logits, [&](Tape &t, Var x) {
        return t.meanAll(t.klRows(t.softmaxRows(x), t.constant(q)));
    });
}

TEST_CASE("row normalization and concat") {
    std::mt19937_64 rng(4);
    Matrix m = random_matrix(5, 3, rng, 0.2, 1.0);
    Matrix other = random_matrix(5, 2, rng);
    Matrix probe = random_matrix(5, 3, rng);
    check_gradient(m, [&](Tape &t, Var x) {
        Var z = t.rowL2Normalize(x);
        return t.meanAll(t.hadamard(z, t.constant(probe)));
    });
    check_gradient(m, [&](Tape &t, Var x) {
        return t.meanAll(t.sigmoid(t.concatCols(x, t.constant(other))));
    });
}

TEST_CASE("min-max rescale over off-diagonal entries") {
    std::mt19937_64 rng(5);
    Matrix s = random_matrix(6, 6, rng);
    check_gradient(s, [&](Tape &t, Var x) {
        Var r = t.rescaleMinMaxOffdiag(x);
        return t.meanAll(t.hadamard(r, r));
    });
    // Constant off-diagonal rescales to zero with zero gradient.
    Tape t;
    Var x = t.leaf(Matrix::Constant(4, 4, 3.0));
    Var r = t.rescaleMinMaxOffdiag(x);
    CHECK(t.value(r).cwiseAbs().maxCoeff() == 0.0);
    t.backward(t.meanAll(r));
    CHECK(t.grad(x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("symmetrized max and dense adjacency normalization") {
    std::mt19937_64 rng(6);
    Matrix a = random_matrix(5, 5, rng, 0.05, 1.0);
    check_gradient(a, [&](Tape &t, Var x) {
        Var s = t.symMax(x);
        return t.meanAll(t.hadamard(s, s));
    });
    Matrix probe = random_matrix(5, 5, rng);
    check_gradient(a, [&](Tape &t, Var x) {
        Var n = t.normalizeAdjDense(t.symMax(x));
        return t.meanAll(t.hadamard(n, t.constant(probe)));
    });
    // Row sums of a normalized symmetric matrix stay within (0, 1].
    Tape t;
    Matrix sym = a.cwiseMax(a.transpose());
    Var n = t.normalizeAdjDense(t.constant(sym));
    const Matrix &val = t.value(n);
    CHECK((val - val.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("masked cross entropy") {
    std::mt19937_64 rng(7);
    Matrix logits = random_matrix(6, 3, rng, -1.5, 1.5);
    std::vector<int> labels = {0, 2, 1, 1, 0, 2};
    std::vector<std::uint8_t> mask = {1, 0, 1, 1, 0, 1};
    check_gradient(logits, [&](Tape &t, Var x) {
        return t.crossEntropyMasked(t.softmaxRows(x), labels, mask);
    });
    Tape t;
    CHECK_THROWS_AS(
        t.crossEntropyMasked(t.constant(random_stochastic(6, 3, rng)), labels,
                             std::vector<std::uint8_t>(6, 0)),
        std::invalid_argument);
}

TEST_CASE("conflict hinge") {
    std::mt19937_64 rng(8);
    Matrix z = random_matrix(6, 4, rng);
    for (int i = 0; i < 6; ++i) z.row(i) /= z.row(i).norm();
    std::vector<std::vector<int>> pos(6), neg(6);
    pos[0] = {1, 3};
    pos[2] = {4};
    neg[1] = {5};
    neg[3] = {0, 2};
    // Gradient flows through raw (pre-normalized) embeddings.
    Matrix raw = random_matrix(6, 4, rng, 0.3, 1.0);
    check_gradient(raw, [&](Tape &t, Var x) {
        return t.conflictHinge(t.rowL2Normalize(x), pos, neg, 0.8, 0.2, 1.3);
    });
    // Inactive hinges produce exactly zero loss.
    Tape t;
    Matrix e = Matrix::Identity(6, 6).leftCols(6);
    std::vector<std::vector<int>> pos2(6), neg2(6);
    neg2[0] = {1}; // orthogonal rows: z0 . z1 = 0 <= 0.2
    Var loss = t.conflictHinge(t.constant(e), pos2, neg2, 0.8, 0.2, 1.0);
    CHECK(t.value(loss)(0, 0) == 0.0);
}

TEST_CASE("backward requires scalar and accumulates through shared nodes") {
    Tape t;
    Var x = t.leaf(Matrix::Constant(2, 2, 1.5));
    Var y = t.add(x, x);
    CHECK_THROWS_AS(t.backward(y), std::invalid_argument);
    Var loss = t.sumAll(y);
    t.backward(loss);
    CHECK(t.grad(x)(0, 0) == doctest::Approx(2.0));
}

} // TEST_SUITE
