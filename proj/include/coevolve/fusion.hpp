#ifndef COEVOLVE_FUSION_HPP_
#define COEVOLVE_FUSION_HPP_

#include <random>
#include <utility>

#include "coevolve/common.hpp"

namespace coevolve {

/// Gate over [entropy(P_llm), entropy(P_gnn), H_struct].
struct FusionParams {
    Matrix w; // (2 + d_struct) x 1
    Matrix b; // 1 x 1

    static FusionParams init(int d_struct, std::mt19937_64 &rng);
};

/// Per-row entropy divided by log C, so values lie in [0,1].
/// Rejects rows that are not stochastic.
Vector normalized_entropy(const Matrix &p);

struct ConsistencyResult {
    double loss = 0.0;
    Matrix d_p_gnn; // gradient via the student side of the second term
    Matrix d_p_llm; // gradient via the student side of the first term
};

/// mean_i [ (1 - H(P_gnn_i)) KL(P_gnn_i || P_llm_i)
///        + (1 - H(P_llm_i)) KL(P_llm_i || P_gnn_i) ].
/// Teacher distributions and their confidence weights carry no gradient.
ConsistencyResult consistency_loss(const Matrix &p_gnn, const Matrix &p_llm);

/// beta = sigmoid(w . [H(P_llm), H(P_gnn), h_struct] + b) per node;
/// Y = beta P_llm + (1 - beta) P_gnn. Returns (Y, beta).
std::pair<Matrix, Vector> fuse_predictions(const FusionParams &fp, const Matrix &p_llm,
                                           const Matrix &p_gnn, const Vector &h_llm_entropy,
                                           const Vector &h_gnn_entropy, const Matrix &h_struct);

} // namespace coevolve

#endif // COEVOLVE_FUSION_HPP_
