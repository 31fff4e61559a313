#include <doctest.h>

#include <random>

#include "coevolve/conflict.hpp"
#include "coevolve/semantic.hpp"

using namespace coevolve;

namespace {

Matrix random_unit_rows(int n, int d, std::mt19937_64 &rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix m(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) m(i, j) = gauss(rng);
        m.row(i) /= m.row(i).norm();
    }
    return m;
}

Matrix random_ppr_values(int n, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) m(i, j) = unit(rng);
        m.row(i) /= m.row(i).sum();
    }
    return m;
}

/// Independent exhaustive double-loop oracle for the mining rule.
ConflictSets mine_oracle(const Matrix &z, const PprMatrix &ppr, const ConflictConfig &cfg) {
    const int n = static_cast<int>(z.rows());
    ConflictSets sets;
    sets.positives.resize(n);
    sets.negatives.resize(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (ppr(i, j) > cfg.ppr_pos_threshold) {
                sets.positives[i].push_back(j);
            } else if (z.row(i).dot(z.row(j)) > cfg.tau && ppr(i, j) < cfg.epsilon) {
                sets.negatives[i].push_back(j);
            }
        }
    return sets;
}

} // namespace

TEST_SUITE("conflict") {

TEST_CASE("config invariants") {
    ConflictConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.delta_pos = 0.1; // below delta_neg
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ConflictConfig{};
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ConflictConfig{};
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("pinned three-node mining example") {
    // z1 = z2 = (1,0), z3 = (0,1); Pi12 = 0.1, Pi13 = 0.8, Pi23 = 0.8.
    Matrix z(3, 2);
    z << 1, 0, 1, 0, 0, 1;
    Matrix pi(3, 3);
    pi << 0.1, 0.1, 0.8, 0.1, 0.1, 0.8, 0.8, 0.8, 0.1;
    // Rows need not be stochastic for the op itself; use values directly.
    PprMatrix ppr(pi, 0.15);
    ConflictSets sets = mine_conflicts(z, ppr, ConflictConfig{});
    CHECK(sets.negatives[0] == std::vector<int>{1});
    CHECK(sets.positives[0] == std::vector<int>{2});
    CHECK(sets.positives[2] == std::vector<int>{0, 1});
    CHECK(sets.negatives[2].empty());
}

TEST_CASE("uniform small ppr leaves positives empty, similarity drives negatives") {
    std::mt19937_64 rng(1);
    const int n = 20;
    Matrix z = random_unit_rows(n, 3, rng);
    PprMatrix ppr(Matrix::Constant(n, n, 1.0 / n), 0.15);
    ConflictSets sets = mine_conflicts(z, ppr, ConflictConfig{});
    CHECK(sets.numPositivePairs() == 0);
    long expected = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && z.row(i).dot(z.row(j)) > 0.5) ++expected;
    CHECK(sets.numNegativePairs() == expected);
}

TEST_CASE("tau at one empties the negative sets") {
    std::mt19937_64 rng(2);
    Matrix z = random_unit_rows(10, 4, rng);
    ConflictConfig cfg;
    cfg.tau = 1.0;
    PprMatrix ppr(Matrix::Constant(10, 10, 0.1), 0.15);
    ConflictSets sets = mine_conflicts(z, ppr, cfg);
    CHECK(sets.numNegativePairs() == 0);
}

TEST_CASE("mining equals the exhaustive oracle on random instances") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(0.05, 0.95);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 3 + static_cast<int>(rng() % 28);
        Matrix z = random_unit_rows(n, 2 + static_cast<int>(rng() % 5), rng);
        PprMatrix ppr(random_ppr_values(n, rng), 0.15);
        ConflictConfig cfg;
        cfg.tau = unit(rng);
        cfg.epsilon = unit(rng);
        cfg.ppr_pos_threshold = unit(rng);
        ConflictSets got = mine_conflicts(z, ppr, cfg);
        ConflictSets want = mine_oracle(z, ppr, cfg);
        REQUIRE(got.positives.size() == want.positives.size());
        for (int i = 0; i < n; ++i) {
            CHECK(got.positives[i] == want.positives[i]);
            CHECK(got.negatives[i] == want.negatives[i]);
            // Disjointness and no self-membership.
            for (int j : got.positives[i]) {
                CHECK(j != i);
                CHECK(std::find(got.negatives[i].begin(), got.negatives[i].end(), j) ==
                      got.negatives[i].end());
            }
        }
    }
}

TEST_CASE("mining rejects unnormalized embeddings") {
    Matrix z(2, 2);
    z << 2.0, 0.0, 0.0, 1.0;
    PprMatrix ppr(Matrix::Constant(2, 2, 0.5), 0.15);
    CHECK_THROWS_AS(mine_conflicts(z, ppr, ConflictConfig{}), std::invalid_argument);
}

TEST_CASE("conflict loss values") {
    ConflictConfig cfg; // dpos 0.8, dneg 0.2, lambda 1
    SUBCASE("inactive hinges give exactly zero") {
        Matrix z(3, 2);
        z << 1, 0, 1, 0, 0, 1;
        ConflictSets sets;
        sets.positives = {{1}, {0}, {}}; // cos = 1 >= 0.8
        sets.negatives = {{2}, {}, {}};  // cos = 0 <= 0.2
        auto [loss, grad] = conflict_loss(z, sets, cfg);
        CHECK(loss == 0.0);
        CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("single active positive hinge contributes (margin gap)/N") {
        // Two unit rows at cos = 0.6 = dpos - 0.2.
        Matrix z(2, 2);
        double c = 0.6;
        z << 1, 0, c, std::sqrt(1 - c * c);
        ConflictSets sets;
        sets.positives = {{1}, {}};
        sets.negatives = {{}, {}};
        auto [loss, grad] = conflict_loss(z, sets, cfg);
        CHECK(loss == doctest::Approx(0.2 / 2.0));
    }
    SUBCASE("gradient matches finite differences with frozen sets") {
        std::mt19937_64 rng(4);
        const int n = 8;
        Matrix z = random_unit_rows(n, 3, rng);
        PprMatrix ppr(random_ppr_values(n, rng), 0.15);
        ConflictConfig mine_cfg;
        mine_cfg.tau = 0.0 + 0.1; // mine plenty of pairs
        mine_cfg.epsilon = 0.9;
        mine_cfg.ppr_pos_threshold = 0.05;
        ConflictSets sets = mine_conflicts(z, ppr, mine_cfg);
        auto [loss, grad] = conflict_loss(z, sets, cfg);
        const double step = 1e-6;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 3; ++j) {
                Matrix plus = z, minus = z;
                plus(i, j) += step;
                minus(i, j) -= step;
                double fd = (conflict_loss(plus, sets, cfg).first -
                             conflict_loss(minus, sets, cfg).first) /
                            (2 * step);
                double denom = std::max({1.0, std::abs(fd), std::abs(grad(i, j))});
                CHECK(std::abs(grad(i, j) - fd) / denom < 1e-4);
            }
    }
}

TEST_CASE("loss is invariant under simultaneous permutation") {
    std::mt19937_64 rng(5);
    const int n = 10;
    Matrix z = random_unit_rows(n, 4, rng);
    PprMatrix ppr(random_ppr_values(n, rng), 0.15);
    ConflictConfig cfg;
    cfg.tau = 0.2;
    cfg.epsilon = 0.6;
    cfg.ppr_pos_threshold = 0.15;
    ConflictSets sets = mine_conflicts(z, ppr, cfg);
    double base = conflict_loss(z, sets, cfg).first;

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix zp(n, 4);
    Matrix pip(n, n);
    for (int i = 0; i < n; ++i) {
        zp.row(perm[i]) = z.row(i);
        for (int j = 0; j < n; ++j) pip(perm[i], perm[j]) = ppr(i, j);
    }
    ConflictSets setsp = mine_conflicts(zp, PprMatrix(pip, 0.15), cfg);
    CHECK(conflict_loss(zp, setsp, cfg).first == doctest::Approx(base));
}

TEST_CASE("pushing mined negatives apart lowers the negative term monotonically") {
    ConflictConfig cfg;
    Matrix z(2, 2);
    z << 1, 0, 0.9, std::sqrt(1 - 0.81);
    ConflictSets sets;
    sets.positives = {{}, {}};
    sets.negatives = {{1}, {}};
    double prev = conflict_loss(z, sets, cfg).first;
    for (double c = 0.8; c > 0.0; c -= 0.2) {
        z(1, 0) = c;
        z(1, 1) = std::sqrt(1 - c * c);
        double cur = conflict_loss(z, sets, cfg).first;
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("hard negative cosine helper") {
    Matrix z(3, 2);
    z << 1, 0, 0, 1, 1, 0;
    ConflictSets sets;
    sets.positives = {{}, {}, {}};
    sets.negatives = {{2}, {}, {0}};
    auto pairs = hard_negative_pairs(sets);
    REQUIRE(pairs.size() == 2);
    CHECK(mean_hard_negative_cosine(z, pairs) == doctest::Approx(1.0));
    CHECK(std::isnan(mean_hard_negative_cosine(z, {})));
}

} // TEST_SUITE
