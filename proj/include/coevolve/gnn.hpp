#ifndef COEVOLVE_GNN_HPP_
#define COEVOLVE_GNN_HPP_

#include <random>
#include <utility>

#include "coevolve/graph.hpp"

namespace coevolve {

/// Two-layer graph convolution with a linear classifier head.
struct GnnParams {
    Matrix w1, b1; // d_x x h, 1 x h
    Matrix w2, b2; // h x d_s, 1 x d_s
    Matrix wc, bc; // d_s x C, 1 x C

    static GnnParams init(int d_x, int hidden, int d_struct, int num_classes,
                          std::mt19937_64 &rng);
};

/// H_struct = A (relu(A X W1 + b1)) W2 + b2, P = softmax(H_struct Wc + bc).
/// `a_norm` is a normalized adjacency (self-loops included).
std::pair<Matrix, Matrix> gnn_forward(const GnnParams &params, const SparseGraph &a_norm,
                                      const Matrix &x);

/// Vector-Jacobian product: gradients of any scalar loss L with upstream
/// dL/dH_struct and dL/dP_gnn, with respect to every parameter tensor.
GnnParams gnn_backward(const GnnParams &params, const SparseGraph &a_norm, const Matrix &x,
                       const Matrix &d_h_struct, const Matrix &d_p_gnn);

} // namespace coevolve

#endif // COEVOLVE_GNN_HPP_
