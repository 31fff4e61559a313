#include "coevolve/conflict.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coevolve/tape.hpp"

namespace coevolve {

void ConflictConfig::validate() const {
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0,1]");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0,1)");
    if (!(ppr_pos_threshold > 0.0 && ppr_pos_threshold < 1.0))
        throw std::invalid_argument("ppr_pos_threshold must lie in (0,1)");
    if (!(delta_pos > delta_neg)) throw std::invalid_argument("delta_pos must exceed delta_neg");
    if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
}

long ConflictSets::numPositivePairs() const {
    long n = 0;
    for (const auto &p : positives) n += static_cast<long>(p.size());
    return n;
}

long ConflictSets::numNegativePairs() const {
    long n = 0;
    for (const auto &h : negatives) n += static_cast<long>(h.size());
    return n;
}

ConflictSets mine_conflicts(const Matrix &z, const PprMatrix &ppr, const ConflictConfig &cfg) {
    const int n = static_cast<int>(z.rows());
    if (ppr.size() != n) throw std::invalid_argument("mine_conflicts: PPR size mismatch");
    for (int i = 0; i < n; ++i) {
        double norm = z.row(i).norm();
        if (std::abs(norm - 1.0) > 1e-6)
            throw std::invalid_argument("mine_conflicts: row " + std::to_string(i) +
                                        " is not unit-normalized");
    }
    ConflictSets sets;
    sets.positives.resize(n);
    sets.negatives.resize(n);
    Matrix sim = z * z.transpose();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            bool positive = ppr(i, j) > cfg.ppr_pos_threshold;
            if (positive) sets.positives[i].push_back(j);
            // A pair meeting both predicates counts once, as a positive.
            if (!positive && sim(i, j) > cfg.tau && ppr(i, j) < cfg.epsilon)
                sets.negatives[i].push_back(j);
        }
    }
    return sets;
}

std::pair<double, Matrix> conflict_loss(const Matrix &z, const ConflictSets &sets,
                                        const ConflictConfig &cfg) {
    if (static_cast<Eigen::Index>(sets.positives.size()) != z.rows() ||
        static_cast<Eigen::Index>(sets.negatives.size()) != z.rows())
        throw std::invalid_argument("conflict_loss: set count does not match rows");
    ad::Tape t;
    ad::Var zv = t.leaf(z);
    ad::Var loss = t.conflictHinge(zv, sets.positives, sets.negatives, cfg.delta_pos,
                                   cfg.delta_neg, cfg.lambda);
    t.backward(loss);
    return {t.value(loss)(0, 0), t.grad(zv)};
}

std::vector<std::pair<int, int>> hard_negative_pairs(const ConflictSets &sets) {
    std::vector<std::pair<int, int>> pairs;
    for (size_t i = 0; i < sets.negatives.size(); ++i)
        for (int k : sets.negatives[i]) pairs.emplace_back(static_cast<int>(i), k);
    return pairs;
}

double mean_hard_negative_cosine(const Matrix &z,
                                 const std::vector<std::pair<int, int>> &pairs) {
    if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sum = 0.0;
    for (const auto &[i, k] : pairs) sum += z.row(i).dot(z.row(k));
    return sum / static_cast<double>(pairs.size());
}

} // namespace coevolve
