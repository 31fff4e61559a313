#ifndef COEVOLVE_STRUCTURE_HPP_
#define COEVOLVE_STRUCTURE_HPP_

#include <random>
#include <vector>

#include "coevolve/graph.hpp"

namespace coevolve {

/// Multi-head bilinear similarity plus the node-adaptive gate.
struct MetricParams {
    std::vector<Matrix> heads; // m matrices of d_embed x d_embed
    Matrix gate_w;             // d_embed x 1
    Matrix gate_b;             // 1 x 1

    static MetricParams init(int d_embed, int num_heads, std::mt19937_64 &rng);
    int numHeads() const { return static_cast<int>(heads.size()); }
};

/// S = (1/m) sum_k H W_k H^T, min-max rescaled to [0,1] over off-diagonal
/// entries (a constant matrix rescales to all zeros), diagonal zeroed.
Matrix similarity_matrix(const MetricParams &mp, const Matrix &h_sem,
                         int dense_cap = kDefaultDenseCap);

/// alpha_i = sigmoid(gate(h_i)); every entry lies in (0,1).
Vector gate_alpha(const MetricParams &mp, const Matrix &h_sem);

/// Fused candidate alpha_i * A_static(i,j) + (1 - alpha_i) * S(i,j).
Matrix fuse_dense(const SparseGraph &a_static, const Matrix &s, const Vector &alpha);

/// Top-k pruning of the fused candidate (graph_core rule, including the
/// union/max symmetrization).
SparseGraph fuse_and_prune(const SparseGraph &a_static, const Matrix &s, const Vector &alpha,
                           int k);

} // namespace coevolve

#endif // COEVOLVE_STRUCTURE_HPP_
