#include <doctest.h>

#include <random>

#include "coevolve/semantic.hpp"
#include "coevolve/tape.hpp"

using namespace coevolve;

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64 &rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
    return m;
}

} // namespace

TEST_SUITE("semantic") {

TEST_CASE("projector basics") {
    std::mt19937_64 rng(1);
    Matrix h = random_matrix(5, 4, rng);
    SUBCASE("zero weights give zero prompts") {
        ProjectorParams p;
        p.w = Matrix::Zero(4, 3);
        p.b = Matrix::Zero(1, 3);
        CHECK(project_prompts(p, h).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("identity square projector is a pass-through") {
        ProjectorParams p;
        p.w = Matrix::Identity(4, 4);
        p.b = Matrix::Zero(1, 4);
        CHECK((project_prompts(p, h) - h).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("shape mismatch rejected") {
        ProjectorParams p = ProjectorParams::init(6, 3, rng);
        CHECK_THROWS_AS(project_prompts(p, h), std::invalid_argument);
    }
    SUBCASE("gradient through the projector matches finite differences") {
        ProjectorParams p = ProjectorParams::init(4, 3, rng);
        Matrix probe = random_matrix(5, 3, rng);
        auto loss = [&](const ProjectorParams &q) {
            return project_prompts(q, h).cwiseProduct(probe).sum();
        };
        ad::Tape t;
        ad::Var w = t.leaf(p.w), b = t.leaf(p.b);
        ad::Var out = t.addRowBroadcast(t.matmul(t.constant(h), w), b);
        t.backward(t.sumAll(t.hadamard(out, t.constant(probe))));
        const double step = 1e-5;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 3; ++j) {
                ProjectorParams plus = p, minus = p;
                plus.w(i, j) += step;
                minus.w(i, j) -= step;
                double fd = (loss(plus) - loss(minus)) / (2 * step);
                double denom = std::max({1.0, std::abs(fd), std::abs(t.grad(w)(i, j))});
                CHECK(std::abs(t.grad(w)(i, j) - fd) / denom < 1e-4);
            }
    }
}

TEST_CASE("encoder forward contracts") {
    std::mt19937_64 rng(2);
    const int n = 6, dp = 3, dt = 5;
    SemanticEncoderParams sp = SemanticEncoderParams::init(dp, dt, 7, 4, 3, rng);
    Matrix t = random_matrix(n, dt, rng);

    SUBCASE("zero prompts depend only on the text") {
        Matrix zeros = Matrix::Zero(n, dp);
        auto [h1, p1] = encode(sp, zeros, t);
        auto [h2, p2] = encode(sp, zeros, t);
        CHECK((h1 - h2).cwiseAbs().maxCoeff() == 0.0); // deterministic
        for (int i = 0; i < n; ++i) CHECK(std::abs(p1.row(i).sum() - 1.0) < 1e-6);
    }
    SUBCASE("zero weights give a uniform posterior") {
        SemanticEncoderParams z = sp;
        z.wc.setZero();
        z.bc.setZero();
        auto [h, p] = encode(z, Matrix::Zero(n, dp), t);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) CHECK(p(i, c) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("identical text with different prompts separates embeddings") {
        Matrix same_t = t;
        same_t.row(1) = same_t.row(0);
        Matrix prompts = random_matrix(n, dp, rng);
        prompts.row(1) = -prompts.row(0); // generic distinct prompts
        auto [h, p] = encode(sp, prompts, same_t);
        CHECK((h.row(0) - h.row(1)).norm() > 1e-6);
    }
    SUBCASE("shape mismatch rejected") {
        CHECK_THROWS_AS(encode(sp, Matrix::Zero(n, dp + 1), t), std::invalid_argument);
        CHECK_THROWS_AS(encode(sp, Matrix::Zero(n - 1, dp), t), std::invalid_argument);
    }
}

TEST_CASE("row normalization") {
    SUBCASE("pinned example (3,4) -> (0.6,0.8)") {
        Matrix m(1, 2);
        m << 3.0, 4.0;
        Matrix z = row_normalize(m);
        CHECK(z(0, 0) == doctest::Approx(0.6));
        CHECK(z(0, 1) == doctest::Approx(0.8));
    }
    SUBCASE("unit row unchanged") {
        Matrix m(1, 3);
        m << 1.0, 0.0, 0.0;
        CHECK((row_normalize(m) - m).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("all rows end up unit length") {
        std::mt19937_64 rng(3);
        Matrix m = random_matrix(10, 6, rng, 0.1, 2.0);
        Matrix z = row_normalize(m);
        for (int i = 0; i < 10; ++i) CHECK(z.row(i).norm() == doctest::Approx(1.0));
    }
    SUBCASE("zero row errors") {
        Matrix m = Matrix::Zero(2, 3);
        m(0, 0) = 1.0;
        CHECK_THROWS_AS(row_normalize(m), NumericalError);
    }
}

} // TEST_SUITE
