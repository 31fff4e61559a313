#include "coevolve/semantic.hpp"

#include <cmath>

#include "coevolve/tape.hpp"
#include "init_util.hpp"

namespace coevolve {

ProjectorParams ProjectorParams::init(int d_struct, int d_prompt, std::mt19937_64 &rng) {
    ProjectorParams p;
    // Near-zero prompts at the start: the encoder keeps the input
    // distribution it was warm-trained on and the prompt channel grows as
    // training finds it useful.
    p.w = 0.05 * detail::glorot(d_struct, d_prompt, rng);
    p.b = Matrix::Zero(1, d_prompt);
    return p;
}

SemanticEncoderParams SemanticEncoderParams::init(int d_prompt, int d_text, int hidden,
                                                  int d_embed, int num_classes,
                                                  std::mt19937_64 &rng) {
    SemanticEncoderParams p;
    p.w1 = detail::glorot(d_prompt + d_text, hidden, rng);
    p.b1 = Matrix::Zero(1, hidden);
    p.w2 = detail::glorot(hidden, d_embed, rng);
    p.b2 = Matrix::Zero(1, d_embed);
    p.wc = detail::glorot(d_embed, num_classes, rng);
    p.bc = Matrix::Zero(1, num_classes);
    return p;
}

Matrix project_prompts(const ProjectorParams &pp, const Matrix &h_struct) {
    if (h_struct.cols() != pp.w.rows())
        throw std::invalid_argument("project_prompts: dimension mismatch");
    Matrix out = h_struct * pp.w;
    out.rowwise() += pp.b.row(0);
    return out;
}

std::pair<Matrix, Matrix> encode(const SemanticEncoderParams &sp, const Matrix &prompts,
                                 const Matrix &t) {
    if (prompts.rows() != t.rows())
        throw std::invalid_argument("encode: prompt/text row mismatch");
    if (prompts.cols() + t.cols() != sp.w1.rows())
        throw std::invalid_argument("encode: input width does not match W1");
    ad::Tape tape;
    ad::Var input = tape.concatCols(tape.constant(prompts), tape.constant(t));
    ad::Var h1 = tape.relu(
        tape.addRowBroadcast(tape.matmul(input, tape.constant(sp.w1)), tape.constant(sp.b1)));
    ad::Var h_sem =
        tape.addRowBroadcast(tape.matmul(h1, tape.constant(sp.w2)), tape.constant(sp.b2));
    ad::Var p_llm = tape.softmaxRows(
        tape.addRowBroadcast(tape.matmul(h_sem, tape.constant(sp.wc)), tape.constant(sp.bc)));
    return {tape.value(h_sem), tape.value(p_llm)};
}

Matrix row_normalize(const Matrix &h) {
    Matrix out(h.rows(), h.cols());
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        double n = h.row(i).norm();
        if (n == 0.0 || !std::isfinite(n))
            throw NumericalError("row_normalize: degenerate row " + std::to_string(i));
        out.row(i) = h.row(i) / n;
    }
    return out;
}

} // namespace coevolve
