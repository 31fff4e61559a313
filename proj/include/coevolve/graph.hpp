#ifndef COEVOLVE_GRAPH_HPP_
#define COEVOLVE_GRAPH_HPP_

#include <utility>
#include <vector>

#include "coevolve/common.hpp"

namespace coevolve {

struct Edge {
    int src = 0;
    int dst = 0;
    double weight = 1.0;
};

/// Weighted sparse graph. Undirected graphs store the symmetric closure
/// (both (i,j) and (j,i)); self-loops appear once. Edges are kept sorted by
/// (src, dst) and immutable after construction.
class SparseGraph {
public:
    SparseGraph(int num_nodes, std::vector<Edge> edges, bool directed);

    /// Builds an undirected graph from one representative per edge
    /// (the symmetric counterparts are added automatically).
    static SparseGraph fromUndirectedPairs(int num_nodes, const std::vector<Edge> &pairs);

    int numNodes() const { return num_nodes_; }
    bool directed() const { return directed_; }
    const std::vector<Edge> &edges() const { return edges_; }

    /// Number of stored (directed) entries.
    int numEntries() const { return static_cast<int>(edges_.size()); }
    /// Undirected edge count: each {i,j} pair once, self-loops once.
    int numUndirectedEdges() const;

    bool hasEdge(int src, int dst) const;
    double weight(int src, int dst) const; // 0 if absent

    Matrix dense() const;

private:
    int num_nodes_;
    bool directed_;
    std::vector<Edge> edges_;       // sorted by (src, dst)
    std::vector<int> row_offsets_;  // CSR-style offsets into edges_
};

/// Dense personalized-PageRank matrix with restart probability gamma.
/// Rows sum to 1; entries lie in [0, 1]. Read-only after construction.
class PprMatrix {
public:
    PprMatrix(Matrix values, double gamma);

    const Matrix &values() const { return values_; }
    double gamma() const { return gamma_; }
    int size() const { return static_cast<int>(values_.rows()); }
    double operator()(int i, int j) const { return values_(i, j); }

private:
    Matrix values_;
    double gamma_;
};

using LabelVector = std::vector<int>;

/// A_hat = D^{-1/2} (A + I) D^{-1/2} with unit self-loops added to every
/// node. Input must be undirected with non-negative weights.
SparseGraph normalize_adjacency(const SparseGraph &g);

/// Closed-form PPR: gamma * (I - (1-gamma) A_hat)^{-1}, rows normalized to
/// sum to 1. `a_hat` is expected to come from normalize_adjacency.
PprMatrix ppr_closed_form(const SparseGraph &a_hat, double gamma,
                          int dense_cap = kDefaultDenseCap);

/// Independent fixed-point iteration for the same quantity:
/// P_{t+1} = gamma I + (1-gamma) P_t A_hat, stopped when the max-abs change
/// drops below `tol`. Throws NumericalError (carrying the residual) if
/// max_iter is exhausted.
PprMatrix ppr_power_iteration(const SparseGraph &a_hat, double gamma, double tol,
                              int max_iter, int dense_cap = kDefaultDenseCap);

/// Fraction of non-self-loop edges joining same-label endpoints, each
/// undirected edge counted once. Errors when no such edge exists.
double homophily_ratio(const SparseGraph &g, const LabelVector &labels);

/// Directed selection underlying topk_sparsify: per row the kept
/// (column, value) pairs, ordered by descending value with ties broken
/// toward the lowest column index. At most k entries per row; only
/// strictly-positive off-diagonal entries qualify.
std::vector<std::vector<std::pair<int, double>>> topk_rows(const Matrix &dense, int k);

/// Keeps, per row, the k largest strictly-positive off-diagonal entries
/// (ties broken toward the lowest column index), then symmetrizes by union
/// with the max-weight rule. Requires 1 <= k < N.
SparseGraph topk_sparsify(const Matrix &dense, int k);

} // namespace coevolve

#endif // COEVOLVE_GRAPH_HPP_
