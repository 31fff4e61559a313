#ifndef COEVOLVE_CONFLICT_HPP_
#define COEVOLVE_CONFLICT_HPP_

#include <utility>
#include <vector>

#include "coevolve/graph.hpp"

namespace coevolve {

struct ConflictConfig {
    double tau = 0.5;               // semantic hallucination threshold
    double epsilon = 0.3;           // structural irrelevance threshold
    double ppr_pos_threshold = 0.7; // structural positive threshold
    double delta_pos = 0.8;         // positive margin
    double delta_neg = 0.2;         // negative margin
    double lambda = 1.0;            // negative-term weight

    void validate() const;
};

/// Per-node structural positives P_i and hard conflict negatives H_i,
/// node ids sorted ascending.
struct ConflictSets {
    std::vector<std::vector<int>> positives;
    std::vector<std::vector<int>> negatives;

    long numPositivePairs() const;
    long numNegativePairs() const;
};

/// Exact threshold scan over all ordered pairs of a row-normalized
/// embedding matrix: j in P_i iff ppr(i,j) > ppr_pos_threshold;
/// k in H_i iff z_i.z_k > tau, ppr(i,k) < epsilon and k not in P_i.
ConflictSets mine_conflicts(const Matrix &z, const PprMatrix &ppr, const ConflictConfig &cfg);

/// Margin loss (1/N) sum_i [ sum_{j in P_i} max(0, dpos - z_i.z_j)
/// + lambda sum_{k in H_i} max(0, z_i.z_k - dneg) ] and its gradient in z.
/// The sets are treated as constants.
std::pair<double, Matrix> conflict_loss(const Matrix &z, const ConflictSets &sets,
                                        const ConflictConfig &cfg);

/// Mean z_i.z_k over the listed hard-negative pairs; NaN when empty.
double mean_hard_negative_cosine(const Matrix &z,
                                 const std::vector<std::pair<int, int>> &pairs);
std::vector<std::pair<int, int>> hard_negative_pairs(const ConflictSets &sets);

} // namespace coevolve

#endif // COEVOLVE_CONFLICT_HPP_
