#ifndef COEVOLVE_DATASET_HPP_
#define COEVOLVE_DATASET_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "coevolve/graph.hpp"

namespace coevolve {

using Mask = std::vector<std::uint8_t>;

/// Text-attributed graph: topology, numeric node features x (GNN channel),
/// text-derived feature vectors t (semantic channel), labels and splits.
struct TagDataset {
    SparseGraph graph{0, {}, false};
    Matrix x; // N x d_x
    Matrix t; // N x d_t
    LabelVector labels;
    int num_classes = 0;
    Mask train_mask, val_mask, test_mask;

    int numNodes() const { return graph.numNodes(); }
    void validate() const;
};

enum class PerturbationKind { kSemanticSwap, kEdgeDelete };

struct PerturbationReport {
    PerturbationKind kind = PerturbationKind::kSemanticSwap;
    double rate = 0.0;
    double threshold = 0.0;
    std::uint64_t seed = 0;
    long eligible_count = 0;
    std::vector<int> affected_nodes;                 // semantic_swap victims
    std::vector<int> donor_nodes;                    // donor per victim
    std::vector<std::pair<int, int>> affected_edges; // edge_delete removals
    std::string toJson() const;
};

struct SyntheticConfig {
    int num_nodes = 400;
    int num_classes = 4;
    double p_in = 0.02;
    double p_out = 0.06;
    int text_dim = 32;
    double text_noise = 1.0;
    double train_fraction = 0.6;
    double val_fraction = 0.2;
    std::uint64_t seed = 1;
};

/// Stochastic-block-model text-attributed graph. Text vectors are the class
/// template plus Gaussian noise; x is a copy of t. Splits are a seeded
/// shuffle at train/val fractions.
TagDataset generate_synthetic(const SyntheticConfig &cfg);

/// False-semantic-friends stress: among cross-class pairs (i, j) with
/// ppr(i, j) < threshold, a round(rate * #victims) subset of distinct
/// victims i gets t_i (and x_i) replaced by the text vector of a random
/// node from class y_j. Graph and labels untouched.
std::pair<TagDataset, PerturbationReport>
perturb_false_semantic_friends(const TagDataset &d, const PprMatrix &ppr, double rate,
                               double threshold, std::uint64_t seed);

/// Missing-structural-links stress: removes round(rate * #eligible) of the
/// same-class edges with ppr(i, j) > threshold. Features and labels
/// untouched.
std::pair<TagDataset, PerturbationReport>
perturb_missing_links(const TagDataset &d, const PprMatrix &ppr, double rate, double threshold,
                      std::uint64_t seed);

/// Directory format: edges.txt, features.csv, text.csv, labels.csv,
/// splits.csv, meta.json.
TagDataset load_dataset(const std::string &dir);
void save_dataset(const TagDataset &d, const std::string &dir);

} // namespace coevolve

#endif // COEVOLVE_DATASET_HPP_
