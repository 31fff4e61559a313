#ifndef COEVOLVE_TRAINER_HPP_
#define COEVOLVE_TRAINER_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coevolve/conflict.hpp"
#include "coevolve/dataset.hpp"
#include "coevolve/fusion.hpp"
#include "coevolve/gnn.hpp"
#include "coevolve/semantic.hpp"
#include "coevolve/structure.hpp"

namespace coevolve {

struct Dims {
    int hidden = 128;     // GNN hidden width
    int d_struct = 64;    // structural embedding dim
    int d_prompt = 32;    // soft-prompt dim
    int enc_hidden = 128; // encoder hidden width
    int d_embed = 64;     // semantic embedding dim
    int heads = 4;        // metric heads
};

struct TrainConfig {
    int epochs = 100;       // total, warm-up included
    int warmup_epochs = 20; // leading epochs of independent pre-training
    int steps_per_phase = 1;
    double lr_semantic = 1e-4;
    double lr_gnn = 5e-3;
    double weight_decay = 0.0;
    int k = 10;              // top-k pruning degree
    double gamma_ppr = 0.15; // PPR restart probability
    ConflictConfig conflict;
    Dims dims;
    std::uint64_t seed = 1;
    // Ablations.
    bool no_sp = false;  // zero soft prompts
    bool no_ssl = false; // keep the static graph
    bool no_cal = false; // drop the conflict loss
    bool no_ugc = false; // drop the consistency loss
    // Loss weights (unweighted sum by default).
    double w_task = 1.0;
    double w_conflict = 1.0;
    double w_cons = 1.0;
    int dense_cap = kDefaultDenseCap;

    void validate() const;
};

struct EpochLog {
    int epoch = 0;
    std::string phase; // "warmup" | "coevolve"
    double train_task = 0.0, train_conflict = 0.0, train_cons = 0.0, train_total = 0.0;
    double val_task = 0.0;
    double val_acc = 0.0, val_f1 = 0.0, test_acc = 0.0, test_f1 = 0.0;
    double gnn_val_acc = 0.0, llm_val_acc = 0.0;
    double homophily_dynamic = 0.0;
    long hard_neg_count = 0;
    double hard_neg_cos_current = 0.0; // mean cosine of this epoch's mined set
    double hard_neg_cos_tracked = 0.0; // same pairs as first co-evolution epoch
    std::vector<long> hard_neg_hist;   // cosine histogram, 20 bins over [-1, 1]
    double entropy_gnn = 0.0, entropy_llm = 0.0;
    double beta_mean = 0.0, beta_min = 0.0, beta_max = 0.0;
    double alpha_mean = 0.0; // gate value from the last reconstruction
    int max_out_degree_presym = 0;
};

std::string epoch_logs_to_csv(const std::vector<EpochLog> &logs);
/// Long-format CSV (epoch, bin_lo, bin_hi, count) of the per-epoch mined
/// hard-negative cosine histograms.
std::string hard_negative_histograms_to_csv(const std::vector<EpochLog> &logs);

struct ModelParams {
    GnnParams gnn;
    ProjectorParams proj;
    SemanticEncoderParams enc;
    MetricParams metric;
    FusionParams fusion;

    static ModelParams init(const Dims &dims, int d_x, int d_t, int num_classes,
                            std::uint64_t seed);
    std::vector<std::pair<std::string, Matrix>> named() const;
    static ModelParams fromNamed(const std::vector<std::pair<std::string, Matrix>> &tensors);
    void save(const std::string &path) const;
    static ModelParams load(const std::string &path);
};

struct InferResult {
    Matrix y_final;
    Vector beta;
    Matrix p_gnn, p_llm;
    Matrix h_struct, h_sem;
    std::vector<int> predictions;
    std::optional<SparseGraph> dynamic_graph;
};

struct SplitMetrics {
    double acc = 0.0, f1 = 0.0;
};

struct EvalMetrics {
    SplitMetrics fused_train, fused_val, fused_test;
    SplitMetrics gnn_test, llm_test;
};

/// Five-stage sequential inference: GNN on the static graph, prompt
/// projection, semantic encoding, graph reconstruction, second GNN pass,
/// uncertainty-gated fusion.
InferResult infer(const TagDataset &d, const ModelParams &params, const TrainConfig &cfg);
EvalMetrics evaluate(const TagDataset &d, const InferResult &r);

struct TrainResult {
    ModelParams best_params;  // best validation accuracy over co-evolution epochs
    ModelParams final_params; // parameters after the last epoch
    int best_epoch = 0;
    std::vector<EpochLog> logs;
};

/// Decoupled-weight-decay Adam with per-tensor state, keyed by name.
class AdamW {
public:
    explicit AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8);
    void step(const std::string &name, Matrix &param, const Matrix &grad, double lr);

private:
    struct State {
        Matrix m, v;
        long t = 0;
    };
    double weight_decay_, beta1_, beta2_, eps_;
    std::map<std::string, State> states_;
};

/// Gauss-Seidel co-evolution driver: warm-up, then per epoch the semantic
/// update (A), graph reconstruction (B) and GNN update (C).
class Trainer {
public:
    struct PhaseOutcome {
        double task = 0.0, conflict = 0.0, cons = 0.0, total = 0.0;
        long mined_negatives = 0;
        double mined_cos = 0.0;
        std::vector<std::pair<int, int>> mined_pairs;
        std::vector<long> mined_hist;
    };

    Trainer(TagDataset dataset, TrainConfig cfg);

    void warmUp();
    /// Semantic update; `update = false` evaluates the phase-entry loss
    /// without touching parameters or optimizer state.
    PhaseOutcome stepA(bool update = true);
    void stepB();
    /// GNN update; same dry-run convention as stepA.
    PhaseOutcome stepC(bool update = true);
    TrainResult train();

    InferResult inferCurrent() const;

    const ModelParams &params() const { return params_; }
    ModelParams &mutableParams() { return params_; }
    const PprMatrix &ppr() const { return *ppr_; }
    const SparseGraph &dynamicGraph() const { return dynamic_graph_; }
    const SparseGraph &dynamicNormalized() const { return dynamic_normalized_; }
    const TagDataset &dataset() const { return dataset_; }
    const TrainConfig &config() const { return cfg_; }
    int maxOutDegreePresym() const { return max_out_degree_presym_; }
    const std::vector<EpochLog> &logs() const { return logs_; }

private:
    PhaseOutcome runSemanticPhase(bool update);
    PhaseOutcome runGnnPhase(bool update);
    void logEpoch(int epoch, bool warmup, const PhaseOutcome &a, const PhaseOutcome &c);

    TagDataset dataset_;
    TrainConfig cfg_;
    std::unique_ptr<PprMatrix> ppr_;
    ModelParams params_;
    SparseGraph static_normalized_{0, {}, false};
    SparseGraph dynamic_graph_{0, {}, false};
    SparseGraph dynamic_normalized_{0, {}, false};
    Matrix selection_mask_; // directed top-k mask from the last step B
    double dynamic_homophily_ = 0.0;
    double alpha_mean_ = 0.5;
    int max_out_degree_presym_ = 0;
    AdamW opt_semantic_;
    AdamW opt_gnn_;
    long sem_steps_done_ = 0, gnn_steps_done_ = 0;
    long sem_steps_total_ = 0, gnn_steps_total_ = 0;
    std::vector<std::pair<int, int>> tracked_pairs_; // first co-evolution mining
    bool tracked_pairs_set_ = false;
    std::vector<EpochLog> logs_;
};

} // namespace coevolve

#endif // COEVOLVE_TRAINER_HPP_
