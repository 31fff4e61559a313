#ifndef COEVOLVE_SEMANTIC_HPP_
#define COEVOLVE_SEMANTIC_HPP_

#include <random>
#include <utility>

#include "coevolve/common.hpp"

namespace coevolve {

/// Linear map from structural embeddings to soft prompts.
struct ProjectorParams {
    Matrix w; // d_struct x d_prompt
    Matrix b; // 1 x d_prompt

    static ProjectorParams init(int d_struct, int d_prompt, std::mt19937_64 &rng);
};

/// Stand-in semantic encoder: a 2-layer MLP over the concatenated
/// (prompt, text) input plus a classifier head. This is the boundary a
/// full language-model backend would plug into.
struct SemanticEncoderParams {
    Matrix w1, b1; // (d_prompt + d_text) x hidden
    Matrix w2, b2; // hidden x d_embed
    Matrix wc, bc; // d_embed x C

    static SemanticEncoderParams init(int d_prompt, int d_text, int hidden, int d_embed,
                                      int num_classes, std::mt19937_64 &rng);
};

Matrix project_prompts(const ProjectorParams &pp, const Matrix &h_struct);

/// Returns (H_sem, P_llm). Prompt rows are concatenated in front of the
/// text rows, the vector analog of prepending prompt tokens.
std::pair<Matrix, Matrix> encode(const SemanticEncoderParams &sp, const Matrix &prompts,
                                 const Matrix &t);

/// Unit-L2 rows; errors on a zero row.
Matrix row_normalize(const Matrix &h);

} // namespace coevolve

#endif // COEVOLVE_SEMANTIC_HPP_
