#include "coevolve/gnn.hpp"

#include "coevolve/tape.hpp"
#include "init_util.hpp"

namespace coevolve {

namespace {

void check_shapes(const GnnParams &p, const SparseGraph &a_norm, const Matrix &x) {
    if (x.rows() != a_norm.numNodes())
        throw std::invalid_argument("gnn: feature rows do not match node count");
    if (x.cols() != p.w1.rows()) throw std::invalid_argument("gnn: x/W1 dimension mismatch");
    if (p.w1.cols() != p.w2.rows()) throw std::invalid_argument("gnn: W1/W2 dimension mismatch");
    if (p.w2.cols() != p.wc.rows()) throw std::invalid_argument("gnn: W2/Wc dimension mismatch");
    if (p.b1.cols() != p.w1.cols() || p.b2.cols() != p.w2.cols() || p.bc.cols() != p.wc.cols())
        throw std::invalid_argument("gnn: bias dimension mismatch");
}

struct TapeGnn {
    ad::Var h_struct, p_gnn;
    ad::Var w1, b1, w2, b2, wc, bc;
};

TapeGnn build(ad::Tape &t, const GnnParams &p, const SparseGraph &a_norm, const Matrix &x,
              bool grads) {
    check_shapes(p, a_norm, x);
    TapeGnn g;
    auto param = [&](const Matrix &m) { return grads ? t.leaf(m) : t.constant(m); };
    g.w1 = param(p.w1);
    g.b1 = param(p.b1);
    g.w2 = param(p.w2);
    g.b2 = param(p.b2);
    g.wc = param(p.wc);
    g.bc = param(p.bc);
    ad::Var a = t.constant(a_norm.dense());
    ad::Var xin = t.constant(x);
    ad::Var h1 = t.relu(t.addRowBroadcast(t.matmul(t.matmul(a, xin), g.w1), g.b1));
    g.h_struct = t.addRowBroadcast(t.matmul(t.matmul(a, h1), g.w2), g.b2);
    g.p_gnn = t.softmaxRows(t.addRowBroadcast(t.matmul(g.h_struct, g.wc), g.bc));
    return g;
}

} // namespace

GnnParams GnnParams::init(int d_x, int hidden, int d_struct, int num_classes,
                          std::mt19937_64 &rng) {
    GnnParams p;
    p.w1 = detail::glorot(d_x, hidden, rng);
    p.b1 = Matrix::Zero(1, hidden);
    p.w2 = detail::glorot(hidden, d_struct, rng);
    p.b2 = Matrix::Zero(1, d_struct);
    p.wc = detail::glorot(d_struct, num_classes, rng);
    p.bc = Matrix::Zero(1, num_classes);
    return p;
}

std::pair<Matrix, Matrix> gnn_forward(const GnnParams &params, const SparseGraph &a_norm,
                                      const Matrix &x) {
    ad::Tape t;
    TapeGnn g = build(t, params, a_norm, x, /*grads=*/false);
    return {t.value(g.h_struct), t.value(g.p_gnn)};
}

GnnParams gnn_backward(const GnnParams &params, const SparseGraph &a_norm, const Matrix &x,
                       const Matrix &d_h_struct, const Matrix &d_p_gnn) {
    ad::Tape t;
    TapeGnn g = build(t, params, a_norm, x, /*grads=*/true);
    if (d_h_struct.rows() != t.value(g.h_struct).rows() ||
        d_h_struct.cols() != t.value(g.h_struct).cols() ||
        d_p_gnn.rows() != t.value(g.p_gnn).rows() || d_p_gnn.cols() != t.value(g.p_gnn).cols())
        throw std::invalid_argument("gnn_backward: upstream gradient shape mismatch");
    ad::Var loss = t.add(t.sumAll(t.hadamard(g.h_struct, t.constant(d_h_struct))),
                         t.sumAll(t.hadamard(g.p_gnn, t.constant(d_p_gnn))));
    t.backward(loss);
    GnnParams grad;
    grad.w1 = t.grad(g.w1);
    grad.b1 = t.grad(g.b1);
    grad.w2 = t.grad(g.w2);
    grad.b2 = t.grad(g.b2);
    grad.wc = t.grad(g.wc);
    grad.bc = t.grad(g.bc);
    return grad;
}

} // namespace coevolve
