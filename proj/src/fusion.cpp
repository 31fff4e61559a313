#include "coevolve/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "coevolve/tape.hpp"
#include "init_util.hpp"

namespace coevolve {

FusionParams FusionParams::init(int d_struct, std::mt19937_64 &rng) {
    FusionParams p;
    p.w = detail::glorot(2 + d_struct, 1, rng);
    p.b = Matrix::Zero(1, 1);
    return p;
}

Vector normalized_entropy(const Matrix &p) {
    if (p.cols() < 2) throw std::invalid_argument("normalized_entropy: need at least 2 classes");
    const double log_c = std::log(static_cast<double>(p.cols()));
    Vector h(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            double v = p(i, c);
            if (v < 0.0 || !std::isfinite(v))
                throw std::invalid_argument("normalized_entropy: negative or non-finite entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw std::invalid_argument("normalized_entropy: row " + std::to_string(i) +
                                        " is not stochastic");
        double e = 0.0;
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            double v = p(i, c);
            if (v > 0.0) e -= v * std::log(v);
        }
        h[i] = e / log_c;
    }
    return h;
}

ConsistencyResult consistency_loss(const Matrix &p_gnn, const Matrix &p_llm) {
    if (p_gnn.rows() != p_llm.rows() || p_gnn.cols() != p_llm.cols())
        throw std::invalid_argument("consistency_loss: shape mismatch");
    ad::Tape t;
    // Teachers (and their confidence weights) are constants; each KL's
    // student side is the leaf that receives gradient.
    ad::Var teacher_gnn = t.constant(p_gnn);
    ad::Var teacher_llm = t.constant(p_llm);
    ad::Var student_gnn = t.leaf(p_gnn);
    ad::Var student_llm = t.leaf(p_llm);
    ad::Var ones = t.constant(Matrix::Ones(p_gnn.rows(), 1));
    ad::Var conf_gnn = t.sub(ones, t.entropyRows(teacher_gnn));
    ad::Var conf_llm = t.sub(ones, t.entropyRows(teacher_llm));
    ad::Var term1 = t.hadamard(conf_gnn, t.klRows(teacher_gnn, student_llm));
    ad::Var term2 = t.hadamard(conf_llm, t.klRows(teacher_llm, student_gnn));
    ad::Var loss = t.meanAll(t.add(term1, term2));
    t.backward(loss);
    ConsistencyResult r;
    r.loss = t.value(loss)(0, 0);
    r.d_p_gnn = t.grad(student_gnn);
    r.d_p_llm = t.grad(student_llm);
    return r;
}

std::pair<Matrix, Vector> fuse_predictions(const FusionParams &fp, const Matrix &p_llm,
                                           const Matrix &p_gnn, const Vector &h_llm_entropy,
                                           const Vector &h_gnn_entropy, const Matrix &h_struct) {
    const Eigen::Index n = p_llm.rows();
    if (p_gnn.rows() != n || p_gnn.cols() != p_llm.cols())
        throw std::invalid_argument("fuse_predictions: probability shape mismatch");
    if (h_llm_entropy.size() != n || h_gnn_entropy.size() != n || h_struct.rows() != n)
        throw std::invalid_argument("fuse_predictions: row count mismatch");
    if (fp.w.rows() != 2 + h_struct.cols())
        throw std::invalid_argument("fuse_predictions: gate width mismatch");
    Vector beta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double logit = fp.b(0, 0) + fp.w(0, 0) * h_llm_entropy[i] + fp.w(1, 0) * h_gnn_entropy[i];
        for (Eigen::Index c = 0; c < h_struct.cols(); ++c)
            logit += fp.w(2 + c, 0) * h_struct(i, c);
        // Clamped into the open interval so saturated logits keep the
        // convex-combination contract at double precision.
        beta[i] = std::clamp(1.0 / (1.0 + std::exp(-logit)), 1e-12, 1.0 - 1e-12);
    }
    Matrix y = (p_llm.array().colwise() * beta.array()) +
               (p_gnn.array().colwise() * (1.0 - beta.array()));
    return {std::move(y), std::move(beta)};
}

} // namespace coevolve
