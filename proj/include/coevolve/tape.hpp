#ifndef COEVOLVE_TAPE_HPP_
#define COEVOLVE_TAPE_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "coevolve/common.hpp"

namespace coevolve::ad {

/// Handle to a tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense matrices. Scalars are 1x1. Nodes are
/// created in topological order; backward() walks them in reverse.
/// One tape instance is built per optimizer step and discarded.
class Tape {
public:
    Var constant(Matrix v);
    Var leaf(Matrix v);

    const Matrix &value(Var v) const { return nodes_[v.id].value; }
    const Matrix &grad(Var v) const;
    bool requiresGrad(Var v) const { return nodes_[v.id].requires_grad; }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var hadamard(Var a, Var b);
    /// m + ones * row  (bias addition; row is 1 x C).
    Var addRowBroadcast(Var m, Var row);
    /// out(i, j) = m(i, j) * c(i)  (c is N x 1).
    Var mulColBroadcast(Var m, Var c);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var softmaxRows(Var a);
    Var concatCols(Var a, Var b);
    Var rowL2Normalize(Var a);
    /// Min-max rescale over off-diagonal entries to [0,1]; diagonal forced
    /// to zero. A constant off-diagonal rescales to all zeros.
    Var rescaleMinMaxOffdiag(Var s);
    /// out(i, j) = max(a(i, j), a(j, i)); gradient follows the argmax side.
    Var symMax(Var a);
    /// D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I.
    Var normalizeAdjDense(Var a);
    /// Per-row entropy of a row-stochastic matrix divided by log(C): N x 1.
    Var entropyRows(Var p);
    /// Per-row KL(p || q): N x 1. Probabilities floored at kProbFloor.
    Var klRows(Var p, Var q);
    Var meanAll(Var a);
    Var sumAll(Var a);
    /// -mean_{i in mask} log p(i, labels[i]).
    Var crossEntropyMasked(Var probs, const std::vector<int> &labels,
                           const std::vector<std::uint8_t> &mask);
    /// (1/N) sum_i [ sum_{j in pos_i} max(0, dpos - z_i.z_j)
    ///             + lambda * sum_{k in neg_i} max(0, z_i.z_k - dneg) ].
    Var conflictHinge(Var z, const std::vector<std::vector<int>> &pos,
                      const std::vector<std::vector<int>> &neg, double dpos, double dneg,
                      double lambda);

    /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    /// reachable leaf. `loss` must be 1x1.
    void backward(Var loss);

    int size() const { return static_cast<int>(nodes_.size()); }

    static constexpr double kProbFloor = 1e-12;

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        std::function<void(Tape &, const Matrix &)> backprop; // receives d(loss)/d(this)
    };

    Var push(Matrix value, bool requires_grad,
             std::function<void(Tape &, const Matrix &)> backprop);
    void accumulate(Var v, const Matrix &g);

    std::vector<Node> nodes_;
};

} // namespace coevolve::ad

#endif // COEVOLVE_TAPE_HPP_
