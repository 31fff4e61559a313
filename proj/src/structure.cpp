#include "coevolve/structure.hpp"

#include <sstream>

#include "coevolve/tape.hpp"
#include "init_util.hpp"

namespace coevolve {

MetricParams MetricParams::init(int d_embed, int num_heads, std::mt19937_64 &rng) {
    if (num_heads < 1) throw std::invalid_argument("need at least one metric head");
    MetricParams p;
    p.heads.reserve(num_heads);
    // Identity-leaning heads: the similarity starts as the plain inner
    // product of the embeddings and each head learns its own deviation.
    // A cold random bilinear form would hand the GNN a junk graph on the
    // first reconstruction.
    for (int k = 0; k < num_heads; ++k)
        p.heads.push_back(Matrix::Identity(d_embed, d_embed) +
                          0.05 * detail::glorot(d_embed, d_embed, rng));
    p.gate_w = detail::glorot(d_embed, 1, rng);
    // Semantic-leaning prior: the first reconstruction must admit learned
    // edges into the top-k mask for their value gradients to exist at all;
    // nodes with reliable static edges push their gate back up from there.
    p.gate_b = Matrix::Constant(1, 1, -1.6);
    return p;
}

Matrix similarity_matrix(const MetricParams &mp, const Matrix &h_sem, int dense_cap) {
    if (h_sem.rows() > dense_cap) {
        std::ostringstream os;
        os << "similarity_matrix: " << h_sem.rows() << " nodes exceed dense cap " << dense_cap;
        throw std::invalid_argument(os.str());
    }
    for (const Matrix &w : mp.heads)
        if (w.rows() != h_sem.cols() || w.cols() != h_sem.cols())
            throw std::invalid_argument("similarity_matrix: head dimension mismatch");
    ad::Tape t;
    ad::Var h = t.constant(h_sem);
    ad::Var ht = t.transpose(h);
    ad::Var acc;
    for (const Matrix &w : mp.heads) {
        ad::Var s = t.matmul(t.matmul(h, t.constant(w)), ht);
        acc = acc.valid() ? t.add(acc, s) : s;
    }
    acc = t.scale(acc, 1.0 / static_cast<double>(mp.numHeads()));
    return t.value(t.rescaleMinMaxOffdiag(acc));
}

Vector gate_alpha(const MetricParams &mp, const Matrix &h_sem) {
    if (mp.gate_w.rows() != h_sem.cols())
        throw std::invalid_argument("gate_alpha: dimension mismatch");
    Matrix logits = h_sem * mp.gate_w;
    logits.array() += mp.gate_b(0, 0);
    // Clamp away from {0, 1} so the open-interval contract survives
    // saturated logits at double precision.
    return (1.0 + (-logits.array()).exp())
        .inverse()
        .min(1.0 - 1e-12)
        .max(1e-12)
        .matrix()
        .col(0);
}

Matrix fuse_dense(const SparseGraph &a_static, const Matrix &s, const Vector &alpha) {
    const int n = a_static.numNodes();
    if (s.rows() != n || s.cols() != n)
        throw std::invalid_argument("fuse_dense: similarity size mismatch");
    if (alpha.size() != n) throw std::invalid_argument("fuse_dense: gate size mismatch");
    Matrix fused = s.array().colwise() * (1.0 - alpha.array());
    for (const Edge &e : a_static.edges()) fused(e.src, e.dst) += alpha[e.src] * e.weight;
    return fused;
}

SparseGraph fuse_and_prune(const SparseGraph &a_static, const Matrix &s, const Vector &alpha,
                           int k) {
    return topk_sparsify(fuse_dense(a_static, s, alpha), k);
}

} // namespace coevolve
