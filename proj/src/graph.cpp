#include "coevolve/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace coevolve {

namespace {

void check_edge_valid(const Edge &e, int n) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) {
        std::ostringstream os;
        os << "edge (" << e.src << "," << e.dst << ") out of range for " << n << " nodes";
        throw std::invalid_argument(os.str());
    }
    if (!std::isfinite(e.weight) || e.weight < 0.0) {
        std::ostringstream os;
        os << "edge (" << e.src << "," << e.dst << ") has invalid weight " << e.weight;
        throw std::invalid_argument(os.str());
    }
}

} // namespace

SparseGraph::SparseGraph(int num_nodes, std::vector<Edge> edges, bool directed)
    : num_nodes_(num_nodes), directed_(directed), edges_(std::move(edges)) {
    if (num_nodes_ < 0) throw std::invalid_argument("negative node count");
    for (const Edge &e : edges_) check_edge_valid(e, num_nodes_);
    std::sort(edges_.begin(), edges_.end(), [](const Edge &a, const Edge &b) {
        return a.src != b.src ? a.src < b.src : a.dst < b.dst;
    });
    for (size_t i = 1; i < edges_.size(); ++i) {
        if (edges_[i].src == edges_[i - 1].src && edges_[i].dst == edges_[i - 1].dst) {
            std::ostringstream os;
            os << "duplicate edge (" << edges_[i].src << "," << edges_[i].dst << ")";
            throw std::invalid_argument(os.str());
        }
    }
    row_offsets_.assign(num_nodes_ + 1, 0);
    for (const Edge &e : edges_) row_offsets_[e.src + 1]++;
    for (int i = 0; i < num_nodes_; ++i) row_offsets_[i + 1] += row_offsets_[i];
    if (!directed_) {
        for (const Edge &e : edges_) {
            double w = weight(e.dst, e.src);
            if (w != e.weight) {
                std::ostringstream os;
                os << "undirected graph not symmetric at (" << e.src << "," << e.dst << ")";
                throw std::invalid_argument(os.str());
            }
        }
    }
}

SparseGraph SparseGraph::fromUndirectedPairs(int num_nodes, const std::vector<Edge> &pairs) {
    std::vector<Edge> closure;
    closure.reserve(pairs.size() * 2);
    for (const Edge &e : pairs) {
        closure.push_back(e);
        if (e.src != e.dst) closure.push_back({e.dst, e.src, e.weight});
    }
    return SparseGraph(num_nodes, std::move(closure), false);
}

int SparseGraph::numUndirectedEdges() const {
    if (directed_) throw std::invalid_argument("undirected edge count of a directed graph");
    int self = 0;
    for (const Edge &e : edges_)
        if (e.src == e.dst) ++self;
    return self + (numEntries() - self) / 2;
}

bool SparseGraph::hasEdge(int src, int dst) const {
    if (src < 0 || src >= num_nodes_) return false;
    for (int k = row_offsets_[src]; k < row_offsets_[src + 1]; ++k)
        if (edges_[k].dst == dst) return true;
    return false;
}

double SparseGraph::weight(int src, int dst) const {
    if (src < 0 || src >= num_nodes_) return 0.0;
    const Edge *base = edges_.data();
    int lo = row_offsets_[src], hi = row_offsets_[src + 1];
    while (lo < hi) {
        int mid = (lo + hi) / 2;
        if (base[mid].dst < dst)
            lo = mid + 1;
        else
            hi = mid;
    }
    if (lo < row_offsets_[src + 1] && base[lo].dst == dst) return base[lo].weight;
    return 0.0;
}

Matrix SparseGraph::dense() const {
    Matrix m = Matrix::Zero(num_nodes_, num_nodes_);
    for (const Edge &e : edges_) m(e.src, e.dst) = e.weight;
    return m;
}

PprMatrix::PprMatrix(Matrix values, double gamma) : values_(std::move(values)), gamma_(gamma) {
    if (values_.rows() != values_.cols()) throw std::invalid_argument("PPR matrix must be square");
    if (gamma_ <= 0.0 || gamma_ >= 1.0) throw std::invalid_argument("gamma must lie in (0,1)");
}

SparseGraph normalize_adjacency(const SparseGraph &g) {
    if (g.directed()) throw std::invalid_argument("normalize_adjacency requires an undirected graph");
    const int n = g.numNodes();
    // Row sums of A + I.
    Vector deg = Vector::Ones(n);
    for (const Edge &e : g.edges()) deg[e.src] += e.weight;
    std::vector<Edge> out;
    out.reserve(g.numEntries() + n);
    for (const Edge &e : g.edges()) {
        double w = e.weight;
        if (e.src == e.dst) w += 1.0; // existing self-loop: add the unit loop
        out.push_back({e.src, e.dst, w / std::sqrt(deg[e.src] * deg[e.dst])});
    }
    for (int i = 0; i < n; ++i)
        if (!g.hasEdge(i, i)) out.push_back({i, i, 1.0 / deg[i]});
    return SparseGraph(n, std::move(out), false);
}

namespace {

Matrix row_normalized(Matrix m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double s = m.row(i).sum();
        if (s <= 0.0 || !std::isfinite(s))
            throw NumericalError("PPR row sum is not positive", s);
        m.row(i) /= s;
    }
    return m;
}

void check_ppr_inputs(const SparseGraph &a_hat, double gamma, int dense_cap) {
    if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("gamma must lie in (0,1)");
    if (a_hat.numNodes() > dense_cap) {
        std::ostringstream os;
        os << "graph with " << a_hat.numNodes() << " nodes exceeds dense cap " << dense_cap;
        throw std::invalid_argument(os.str());
    }
}

} // namespace

PprMatrix ppr_closed_form(const SparseGraph &a_hat, double gamma, int dense_cap) {
    check_ppr_inputs(a_hat, gamma, dense_cap);
    const int n = a_hat.numNodes();
    Matrix system = Matrix::Identity(n, n) - (1.0 - gamma) * a_hat.dense();
    Eigen::PartialPivLU<Matrix> lu(system);
    Matrix pi = lu.solve(gamma * Matrix::Identity(n, n));
    if (!pi.allFinite()) throw NumericalError("PPR solve produced non-finite values");
    return PprMatrix(row_normalized(std::move(pi)), gamma);
}

PprMatrix ppr_power_iteration(const SparseGraph &a_hat, double gamma, double tol, int max_iter,
                              int dense_cap) {
    check_ppr_inputs(a_hat, gamma, dense_cap);
    if (tol <= 0.0) throw std::invalid_argument("tol must be positive");
    const int n = a_hat.numNodes();
    const Matrix a = a_hat.dense();
    Matrix pi = gamma * Matrix::Identity(n, n);
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        Matrix next = gamma * Matrix::Identity(n, n) + (1.0 - gamma) * (pi * a);
        residual = (next - pi).cwiseAbs().maxCoeff();
        pi.swap(next);
        if (residual < tol) return PprMatrix(row_normalized(std::move(pi)), gamma);
    }
    std::ostringstream os;
    os << "PPR power iteration did not converge in " << max_iter
       << " iterations (residual " << residual << ", tol " << tol << ")";
    throw NumericalError(os.str(), residual);
}

double homophily_ratio(const SparseGraph &g, const LabelVector &labels) {
    if (static_cast<int>(labels.size()) != g.numNodes())
        throw std::invalid_argument("label vector length does not match node count");
    long total = 0, same = 0;
    for (const Edge &e : g.edges()) {
        if (e.src == e.dst) continue;
        if (!g.directed() && e.src > e.dst) continue; // count each undirected edge once
        ++total;
        if (labels[e.src] == labels[e.dst]) ++same;
    }
    if (total == 0) throw DataError("homophily ratio undefined: no non-self-loop edges");
    return static_cast<double>(same) / static_cast<double>(total);
}

std::vector<std::vector<std::pair<int, double>>> topk_rows(const Matrix &dense, int k) {
    if (dense.rows() != dense.cols()) throw std::invalid_argument("top-k input must be square");
    const int n = static_cast<int>(dense.rows());
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (k >= n) {
        std::ostringstream os;
        os << "k = " << k << " must be below the node count " << n;
        throw std::invalid_argument(os.str());
    }
    std::vector<std::vector<std::pair<int, double>>> rows(n);
    std::vector<std::pair<double, int>> cand;
    for (int i = 0; i < n; ++i) {
        cand.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double v = dense(i, j);
            if (v > 0.0) cand.emplace_back(v, j);
        }
        int keep = std::min<int>(k, static_cast<int>(cand.size()));
        std::partial_sort(cand.begin(), cand.begin() + keep, cand.end(),
                          [](const auto &a, const auto &b) {
                              return a.first != b.first ? a.first > b.first : a.second < b.second;
                          });
        rows[i].reserve(keep);
        for (int t = 0; t < keep; ++t) rows[i].emplace_back(cand[t].second, cand[t].first);
    }
    return rows;
}

SparseGraph topk_sparsify(const Matrix &dense, int k) {
    const auto rows = topk_rows(dense, k);
    const int n = static_cast<int>(rows.size());
    // Union symmetrization, weight = max of the two directed weights.
    std::map<std::pair<int, int>, double> sym;
    for (int i = 0; i < n; ++i)
        for (const auto &[j, w] : rows[i]) {
            auto key = std::minmax(i, j);
            auto [it, inserted] = sym.try_emplace({key.first, key.second}, w);
            if (!inserted) it->second = std::max(it->second, w);
        }
    std::vector<Edge> pairs;
    pairs.reserve(sym.size());
    for (const auto &[key, w] : sym) pairs.push_back({key.first, key.second, w});
    return SparseGraph::fromUndirectedPairs(n, pairs);
}

} // namespace coevolve
