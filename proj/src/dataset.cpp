#include "coevolve/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "coevolve/io.hpp"

namespace coevolve {

namespace fs = std::filesystem;
using json = nlohmann::json;

void TagDataset::validate() const {
    const int n = numNodes();
    if (static_cast<int>(labels.size()) != n)
        throw DataError("label count does not match node count");
    if (x.rows() != n || t.rows() != n)
        throw DataError("feature row count does not match node count");
    if (num_classes < 2) throw DataError("need at least 2 classes");
    std::vector<char> seen(num_classes, 0);
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw DataError("label out of range");
        seen[y] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw DataError("a class has no nodes");
    if (static_cast<int>(train_mask.size()) != n || static_cast<int>(val_mask.size()) != n ||
        static_cast<int>(test_mask.size()) != n)
        throw DataError("mask length does not match node count");
    bool any_train = false;
    for (int i = 0; i < n; ++i) {
        if (train_mask[i] + val_mask[i] + test_mask[i] > 1)
            throw DataError("masks overlap at node " + std::to_string(i));
        any_train = any_train || train_mask[i];
    }
    if (!any_train) throw DataError("train mask is empty");
}

TagDataset generate_synthetic(const SyntheticConfig &cfg) {
    if (cfg.num_classes < 2) throw std::invalid_argument("need at least 2 classes");
    if (cfg.num_nodes < 4 * cfg.num_classes)
        throw std::invalid_argument("need at least 4 nodes per class");
    if (cfg.p_in < 0.0 || cfg.p_in > 1.0 || cfg.p_out < 0.0 || cfg.p_out > 1.0)
        throw std::invalid_argument("edge probabilities must lie in [0,1]");
    if (cfg.p_in == 0.0 && cfg.p_out == 0.0)
        throw std::invalid_argument("zero expected edges");
    if (cfg.text_dim < 1) throw std::invalid_argument("text dimension must be positive");
    if (cfg.text_noise < 0.0) throw std::invalid_argument("text noise must be non-negative");
    if (cfg.train_fraction <= 0.0 || cfg.val_fraction < 0.0 ||
        cfg.train_fraction + cfg.val_fraction >= 1.0)
        throw std::invalid_argument("invalid split fractions");

    const int n = cfg.num_nodes, c = cfg.num_classes;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    TagDataset d;
    d.num_classes = c;
    d.labels.resize(n);
    for (int i = 0; i < n; ++i) d.labels[i] = static_cast<int>(static_cast<long>(i) * c / n);

    std::vector<Edge> pairs;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double p = d.labels[i] == d.labels[j] ? cfg.p_in : cfg.p_out;
            if (unit(rng) < p) pairs.push_back({i, j, 1.0});
        }
    d.graph = SparseGraph::fromUndirectedPairs(n, pairs);

    // Rademacher class templates, then template + noise per node.
    Matrix templates(c, cfg.text_dim);
    for (int k = 0; k < c; ++k)
        for (int f = 0; f < cfg.text_dim; ++f) templates(k, f) = unit(rng) < 0.5 ? -1.0 : 1.0;
    d.t.resize(n, cfg.text_dim);
    for (int i = 0; i < n; ++i)
        for (int f = 0; f < cfg.text_dim; ++f)
            d.t(i, f) = templates(d.labels[i], f) + cfg.text_noise * gauss(rng);
    d.x = d.t;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const int n_train = static_cast<int>(std::lround(cfg.train_fraction * n));
    const int n_val = static_cast<int>(std::lround(cfg.val_fraction * n));
    d.train_mask.assign(n, 0);
    d.val_mask.assign(n, 0);
    d.test_mask.assign(n, 0);
    for (int i = 0; i < n; ++i) {
        if (i < n_train)
            d.train_mask[order[i]] = 1;
        else if (i < n_train + n_val)
            d.val_mask[order[i]] = 1;
        else
            d.test_mask[order[i]] = 1;
    }
    d.validate();
    return d;
}

namespace {

long rounded_count(double rate, long eligible) {
    return std::lround(rate * static_cast<double>(eligible));
}

void check_rate(double rate) {
    if (rate <= 0.0 || rate > 1.0) throw std::invalid_argument("rate must lie in (0,1]");
}

} // namespace

std::pair<TagDataset, PerturbationReport>
perturb_false_semantic_friends(const TagDataset &d, const PprMatrix &ppr, double rate,
                               double threshold, std::uint64_t seed) {
    check_rate(rate);
    if (ppr.size() != d.numNodes()) throw std::invalid_argument("PPR size mismatch");
    const int n = d.numNodes();

    // Victims: nodes with at least one cross-class partner below the
    // structural-proximity threshold.
    std::vector<int> victims;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j == i || d.labels[j] == d.labels[i]) continue;
            if (ppr(i, j) < threshold) {
                victims.push_back(i);
                break;
            }
        }
    }
    if (victims.empty()) throw DataError("false-semantic-friends: no eligible pairs");

    PerturbationReport rep;
    rep.kind = PerturbationKind::kSemanticSwap;
    rep.rate = rate;
    rep.threshold = threshold;
    rep.seed = seed;
    rep.eligible_count = static_cast<long>(victims.size());

    const long count = rounded_count(rate, rep.eligible_count);
    TagDataset out = d;
    if (count == 0) return {out, rep};

    std::mt19937_64 rng(seed);
    std::shuffle(victims.begin(), victims.end(), rng);
    victims.resize(count);

    std::vector<std::vector<int>> by_class(d.num_classes);
    for (int i = 0; i < n; ++i) by_class[d.labels[i]].push_back(i);

    for (int i : victims) {
        std::vector<int> partners;
        for (int j = 0; j < n; ++j)
            if (j != i && d.labels[j] != d.labels[i] && ppr(i, j) < threshold)
                partners.push_back(j);
        int j = partners[std::uniform_int_distribution<size_t>(0, partners.size() - 1)(rng)];
        const auto &members = by_class[d.labels[j]];
        int donor = members[std::uniform_int_distribution<size_t>(0, members.size() - 1)(rng)];
        out.t.row(i) = d.t.row(donor);
        out.x.row(i) = d.x.row(donor);
        rep.affected_nodes.push_back(i);
        rep.donor_nodes.push_back(donor);
    }
    return {out, rep};
}

std::pair<TagDataset, PerturbationReport>
perturb_missing_links(const TagDataset &d, const PprMatrix &ppr, double rate, double threshold,
                      std::uint64_t seed) {
    check_rate(rate);
    if (ppr.size() != d.numNodes()) throw std::invalid_argument("PPR size mismatch");

    std::vector<std::pair<int, int>> eligible;
    for (const Edge &e : d.graph.edges()) {
        if (e.src >= e.dst) continue; // one orientation per undirected edge
        if (d.labels[e.src] != d.labels[e.dst]) continue;
        if (ppr(e.src, e.dst) > threshold) eligible.emplace_back(e.src, e.dst);
    }
    if (eligible.empty()) throw DataError("missing-links: no eligible edges");

    PerturbationReport rep;
    rep.kind = PerturbationKind::kEdgeDelete;
    rep.rate = rate;
    rep.threshold = threshold;
    rep.seed = seed;
    rep.eligible_count = static_cast<long>(eligible.size());

    const long count = rounded_count(rate, rep.eligible_count);
    TagDataset out = d;
    if (count == 0) return {out, rep};

    std::mt19937_64 rng(seed);
    std::shuffle(eligible.begin(), eligible.end(), rng);
    eligible.resize(count);
    std::set<std::pair<int, int>> removed(eligible.begin(), eligible.end());

    std::vector<Edge> kept;
    for (const Edge &e : d.graph.edges()) {
        if (e.src > e.dst) continue;
        if (removed.count({std::min(e.src, e.dst), std::max(e.src, e.dst)})) continue;
        kept.push_back(e);
    }
    out.graph = SparseGraph::fromUndirectedPairs(d.numNodes(), kept);
    rep.affected_edges = std::move(eligible);
    return {out, rep};
}

std::string PerturbationReport::toJson() const {
    json j;
    j["kind"] = kind == PerturbationKind::kSemanticSwap ? "semantic_swap" : "edge_delete";
    j["rate"] = rate;
    j["threshold"] = threshold;
    j["seed"] = seed;
    j["eligible_count"] = eligible_count;
    if (kind == PerturbationKind::kSemanticSwap) {
        j["affected_nodes"] = affected_nodes;
        j["donor_nodes"] = donor_nodes;
    } else {
        json edges = json::array();
        for (const auto &[a, b] : affected_edges) edges.push_back({a, b});
        j["affected_edges"] = edges;
    }
    return j.dump(2);
}

void save_dataset(const TagDataset &d, const std::string &dir) {
    d.validate();
    fs::create_directories(dir);
    const fs::path base(dir);

    std::ofstream edges(base / "edges.txt");
    if (!edges) throw DataError("cannot write edges.txt under " + dir);
    edges << "# src dst weight\n";
    for (const Edge &e : d.graph.edges())
        if (e.src <= e.dst)
            edges << e.src << " " << e.dst << " " << format_double(e.weight) << "\n";
    edges.close();

    write_matrix_csv((base / "features.csv").string(), d.x, "f");
    write_matrix_csv((base / "text.csv").string(), d.t, "t");

    {
        std::ofstream out(base / "labels.csv");
        out << "label\n";
        for (int y : d.labels) out << y << "\n";
    }
    {
        std::ofstream out(base / "splits.csv");
        out << "split\n";
        for (int i = 0; i < d.numNodes(); ++i) {
            if (d.train_mask[i])
                out << "train\n";
            else if (d.val_mask[i])
                out << "val\n";
            else if (d.test_mask[i])
                out << "test\n";
            else
                out << "none\n";
        }
    }
    json meta;
    meta["num_nodes"] = d.numNodes();
    meta["num_classes"] = d.num_classes;
    meta["feature_dim"] = d.x.cols();
    meta["text_dim"] = d.t.cols();
    write_text_file((base / "meta.json").string(), meta.dump(2) + "\n");
}

TagDataset load_dataset(const std::string &dir) {
    const fs::path base(dir);
    if (!fs::exists(base / "meta.json")) throw DataError("no meta.json under " + dir);
    json meta = json::parse(read_text_file((base / "meta.json").string()));
    const int n = meta.at("num_nodes").get<int>();

    TagDataset d;
    d.num_classes = meta.at("num_classes").get<int>();

    std::ifstream in(base / "edges.txt");
    if (!in) throw DataError("cannot open edges.txt under " + dir);
    std::vector<Edge> pairs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        int src, dst;
        if (!(ls >> src >> dst)) {
            std::istringstream probe(line);
            std::string tok;
            if (probe >> tok)
                throw DataError("edges.txt line " + std::to_string(lineno) + " is malformed");
            continue; // blank or comment-only line
        }
        double w = 1.0;
        ls >> w;
        pairs.push_back({src, dst, w});
    }
    try {
        d.graph = SparseGraph::fromUndirectedPairs(n, pairs);
    } catch (const std::invalid_argument &e) {
        throw DataError(std::string("edges.txt: ") + e.what());
    }

    d.x = read_matrix_csv((base / "features.csv").string());
    d.t = read_matrix_csv((base / "text.csv").string());

    Matrix ly = read_matrix_csv((base / "labels.csv").string());
    if (ly.cols() != 1) throw DataError("labels.csv must have one column");
    d.labels.resize(ly.rows());
    for (Eigen::Index i = 0; i < ly.rows(); ++i) d.labels[i] = static_cast<int>(ly(i, 0));

    std::ifstream sp(base / "splits.csv");
    if (!sp) throw DataError("cannot open splits.csv under " + dir);
    std::getline(sp, line); // header
    d.train_mask.assign(n, 0);
    d.val_mask.assign(n, 0);
    d.test_mask.assign(n, 0);
    int row = 0;
    while (std::getline(sp, line)) {
        if (line.empty()) continue;
        if (row >= n) throw DataError("splits.csv has too many rows");
        if (line == "train")
            d.train_mask[row] = 1;
        else if (line == "val")
            d.val_mask[row] = 1;
        else if (line == "test")
            d.test_mask[row] = 1;
        else if (line != "none")
            throw DataError("splits.csv: unknown split '" + line + "'");
        ++row;
    }
    if (row != n) throw DataError("splits.csv row count does not match node count");
    d.validate();
    return d;
}

} // namespace coevolve
