#include "coevolve/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "coevolve/io.hpp"
#include "coevolve/metrics.hpp"
#include "coevolve/tape.hpp"

namespace coevolve {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double scheduled_lr(double base, long step, long total) {
    if (total <= 0) return base;
    long ramp = std::max<long>(1, total / 10);
    if (step < ramp) return base * static_cast<double>(step + 1) / static_cast<double>(ramp);
    if (total <= ramp) return base;
    double progress = static_cast<double>(step - ramp) / static_cast<double>(total - ramp);
    return base * 0.5 * (1.0 + std::cos(M_PI * progress));
}

std::vector<long> cosine_histogram(const Matrix &z,
                                   const std::vector<std::pair<int, int>> &pairs) {
    std::vector<long> bins(20, 0);
    for (const auto &[i, k] : pairs) {
        double c = z.row(i).dot(z.row(k));
        int b = std::clamp(static_cast<int>((c + 1.0) / 0.1), 0, 19);
        ++bins[b];
    }
    return bins;
}

double masked_ce(const Matrix &probs, const LabelVector &labels, const Mask &mask) {
    long count = 0;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if (!mask[i]) continue;
        ++count;
        loss -= std::log(std::max(probs(i, labels[i]), ad::Tape::kProbFloor));
    }
    return count ? loss / static_cast<double>(count) : 0.0;
}

Matrix dense_of(const SparseGraph &g) { return g.dense(); }

} // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (warmup_epochs < 0 || warmup_epochs > epochs)
        throw std::invalid_argument("warm-up epochs must lie in [0, epochs]");
    if (steps_per_phase < 1) throw std::invalid_argument("steps_per_phase must be at least 1");
    if (lr_semantic <= 0.0 || lr_gnn <= 0.0) throw std::invalid_argument("learning rates must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be non-negative");
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (gamma_ppr <= 0.0 || gamma_ppr >= 1.0) throw std::invalid_argument("gamma_ppr must lie in (0,1)");
    if (w_task < 0.0 || w_conflict < 0.0 || w_cons < 0.0)
        throw std::invalid_argument("loss weights must be non-negative");
    if (dims.hidden < 1 || dims.d_struct < 1 || dims.d_prompt < 1 || dims.enc_hidden < 1 ||
        dims.d_embed < 1 || dims.heads < 1)
        throw std::invalid_argument("model dimensions must be positive");
    if (dense_cap < 1) throw std::invalid_argument("dense cap must be positive");
    conflict.validate();
}

std::string hard_negative_histograms_to_csv(const std::vector<EpochLog> &logs) {
    std::ostringstream os;
    os << "epoch,bin_lo,bin_hi,count\n";
    for (const EpochLog &l : logs) {
        for (size_t b = 0; b < l.hard_neg_hist.size(); ++b)
            os << l.epoch << ',' << format_double(-1.0 + 0.1 * b) << ','
               << format_double(-1.0 + 0.1 * (b + 1)) << ',' << l.hard_neg_hist[b] << '\n';
    }
    return os.str();
}

std::string epoch_logs_to_csv(const std::vector<EpochLog> &logs) {
    std::ostringstream os;
    os << "epoch,phase,train_task,train_conflict,train_cons,train_total,val_task,"
          "val_acc,val_f1,test_acc,test_f1,gnn_val_acc,llm_val_acc,homophily_dynamic,hard_neg_count,"
          "hard_neg_cos_current,hard_neg_cos_tracked,entropy_gnn,entropy_llm,"
          "beta_mean,beta_min,beta_max,alpha_mean,max_out_degree_presym\n";
    for (const EpochLog &l : logs) {
        os << l.epoch << ',' << l.phase << ',' << format_double(l.train_task) << ','
           << format_double(l.train_conflict) << ',' << format_double(l.train_cons) << ','
           << format_double(l.train_total) << ',' << format_double(l.val_task) << ','
           << format_double(l.val_acc) << ',' << format_double(l.val_f1) << ','
           << format_double(l.test_acc) << ',' << format_double(l.test_f1) << ','
           << format_double(l.gnn_val_acc) << ',' << format_double(l.llm_val_acc) << ','
           << format_double(l.homophily_dynamic) << ',' << l.hard_neg_count << ','
           << format_double(l.hard_neg_cos_current) << ','
           << format_double(l.hard_neg_cos_tracked) << ',' << format_double(l.entropy_gnn) << ','
           << format_double(l.entropy_llm) << ',' << format_double(l.beta_mean) << ','
           << format_double(l.beta_min) << ',' << format_double(l.beta_max) << ','
           << format_double(l.alpha_mean) << ',' << l.max_out_degree_presym << '\n';
    }
    return os.str();
}

ModelParams ModelParams::init(const Dims &dims, int d_x, int d_t, int num_classes,
                              std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelParams p{
        GnnParams::init(d_x, dims.hidden, dims.d_struct, num_classes, rng),
        ProjectorParams::init(dims.d_struct, dims.d_prompt, rng),
        SemanticEncoderParams::init(dims.d_prompt, d_t, dims.enc_hidden, dims.d_embed,
                                    num_classes, rng),
        MetricParams::init(dims.d_embed, dims.heads, rng),
        FusionParams::init(dims.d_struct, rng),
    };
    return p;
}

std::vector<std::pair<std::string, Matrix>> ModelParams::named() const {
    std::vector<std::pair<std::string, Matrix>> t;
    t.emplace_back("gnn.w1", gnn.w1);
    t.emplace_back("gnn.b1", gnn.b1);
    t.emplace_back("gnn.w2", gnn.w2);
    t.emplace_back("gnn.b2", gnn.b2);
    t.emplace_back("gnn.wc", gnn.wc);
    t.emplace_back("gnn.bc", gnn.bc);
    t.emplace_back("proj.w", proj.w);
    t.emplace_back("proj.b", proj.b);
    t.emplace_back("enc.w1", enc.w1);
    t.emplace_back("enc.b1", enc.b1);
    t.emplace_back("enc.w2", enc.w2);
    t.emplace_back("enc.b2", enc.b2);
    t.emplace_back("enc.wc", enc.wc);
    t.emplace_back("enc.bc", enc.bc);
    for (size_t k = 0; k < metric.heads.size(); ++k)
        t.emplace_back("metric.head" + std::to_string(k), metric.heads[k]);
    t.emplace_back("metric.gate_w", metric.gate_w);
    t.emplace_back("metric.gate_b", metric.gate_b);
    t.emplace_back("fusion.w", fusion.w);
    t.emplace_back("fusion.b", fusion.b);
    return t;
}

ModelParams ModelParams::fromNamed(const std::vector<std::pair<std::string, Matrix>> &tensors) {
    std::map<std::string, Matrix> by_name(tensors.begin(), tensors.end());
    auto take = [&](const std::string &name) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint is missing tensor " + name);
        return it->second;
    };
    ModelParams p;
    p.gnn.w1 = take("gnn.w1");
    p.gnn.b1 = take("gnn.b1");
    p.gnn.w2 = take("gnn.w2");
    p.gnn.b2 = take("gnn.b2");
    p.gnn.wc = take("gnn.wc");
    p.gnn.bc = take("gnn.bc");
    p.proj.w = take("proj.w");
    p.proj.b = take("proj.b");
    p.enc.w1 = take("enc.w1");
    p.enc.b1 = take("enc.b1");
    p.enc.w2 = take("enc.w2");
    p.enc.b2 = take("enc.b2");
    p.enc.wc = take("enc.wc");
    p.enc.bc = take("enc.bc");
    p.metric.heads.clear();
    for (int k = 0;; ++k) {
        auto it = by_name.find("metric.head" + std::to_string(k));
        if (it == by_name.end()) break;
        p.metric.heads.push_back(it->second);
    }
    if (p.metric.heads.empty()) throw DataError("checkpoint has no metric heads");
    p.metric.gate_w = take("metric.gate_w");
    p.metric.gate_b = take("metric.gate_b");
    p.fusion.w = take("fusion.w");
    p.fusion.b = take("fusion.b");
    return p;
}

void ModelParams::save(const std::string &path) const { write_named_matrices(path, named()); }

ModelParams ModelParams::load(const std::string &path) {
    return fromNamed(read_named_matrices(path));
}

AdamW::AdamW(double weight_decay, double beta1, double beta2, double eps)
    : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(const std::string &name, Matrix &param, const Matrix &grad, double lr) {
    State &s = states_[name];
    if (s.t == 0) {
        s.m = Matrix::Zero(param.rows(), param.cols());
        s.v = Matrix::Zero(param.rows(), param.cols());
    }
    ++s.t;
    s.m = beta1_ * s.m + (1.0 - beta1_) * grad;
    s.v = beta2_ * s.v + (1.0 - beta2_) * grad.cwiseProduct(grad);
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
    Matrix mhat = s.m / bc1;
    Matrix vhat = s.v / bc2;
    param -= lr * (mhat.array() / (vhat.array().sqrt() + eps_) + weight_decay_ * param.array())
                 .matrix();
}

InferResult infer(const TagDataset &d, const ModelParams &params, const TrainConfig &cfg) {
    if (params.gnn.w1.rows() != d.x.cols())
        throw DataError("checkpoint/dataset mismatch: feature dimension");
    if (params.enc.w1.rows() != params.proj.w.cols() + d.t.cols())
        throw DataError("checkpoint/dataset mismatch: text dimension");
    if (params.gnn.wc.cols() != d.num_classes)
        throw DataError("checkpoint/dataset mismatch: class count");

    InferResult r;
    // Stage 1: structural context from the static graph.
    SparseGraph a_static_norm = normalize_adjacency(d.graph);
    auto [h_struct0, p_gnn0] = gnn_forward(params.gnn, a_static_norm, d.x);
    Matrix prompts = cfg.no_sp ? Matrix::Zero(d.numNodes(), params.proj.w.cols())
                               : project_prompts(params.proj, h_struct0);
    // Stage 2: semantic reasoning conditioned on the prompts.
    auto [h_sem, p_llm] = encode(params.enc, prompts, d.t);
    r.h_sem = h_sem;
    r.p_llm = p_llm;
    // Stage 3: dynamic graph reconstruction.
    SparseGraph graph = d.graph;
    if (!cfg.no_ssl) {
        Matrix z_sem = row_normalize(h_sem);
        Matrix s = similarity_matrix(params.metric, z_sem, cfg.dense_cap);
        Vector alpha = gate_alpha(params.metric, z_sem);
        graph = fuse_and_prune(d.graph, s, alpha, cfg.k);
        r.dynamic_graph = graph;
    }
    // Stage 4: second GNN pass on the reconstructed topology.
    SparseGraph a_dyn_norm = normalize_adjacency(graph);
    auto [h_struct1, p_gnn1] = gnn_forward(params.gnn, a_dyn_norm, d.x);
    r.h_struct = h_struct1;
    r.p_gnn = p_gnn1;
    // Stage 5: uncertainty-gated fusion.
    Vector ent_llm = normalized_entropy(p_llm);
    Vector ent_gnn = normalized_entropy(p_gnn1);
    auto [y, beta] = fuse_predictions(params.fusion, p_llm, p_gnn1, ent_llm, ent_gnn, h_struct1);
    r.y_final = std::move(y);
    r.beta = std::move(beta);
    r.predictions = argmax_rows(r.y_final);
    return r;
}

EvalMetrics evaluate(const TagDataset &d, const InferResult &r) {
    EvalMetrics m;
    auto fill = [&](const Mask &mask, SplitMetrics &out, const std::vector<int> &pred) {
        out.acc = accuracy(pred, d.labels, mask);
        out.f1 = macro_f1(pred, d.labels, mask, d.num_classes);
    };
    fill(d.train_mask, m.fused_train, r.predictions);
    fill(d.val_mask, m.fused_val, r.predictions);
    fill(d.test_mask, m.fused_test, r.predictions);
    fill(d.test_mask, m.gnn_test, argmax_rows(r.p_gnn));
    fill(d.test_mask, m.llm_test, argmax_rows(r.p_llm));
    return m;
}

Trainer::Trainer(TagDataset dataset, TrainConfig cfg)
    : dataset_(std::move(dataset)), cfg_(std::move(cfg)), opt_semantic_(cfg_.weight_decay),
      opt_gnn_(cfg_.weight_decay) {
    cfg_.validate();
    dataset_.validate();
    if (dataset_.numNodes() > cfg_.dense_cap)
        throw std::invalid_argument("dataset exceeds the configured dense cap");
    if (cfg_.k >= dataset_.numNodes())
        throw std::invalid_argument("k must be below the node count");
    static_normalized_ = normalize_adjacency(dataset_.graph);
    ppr_ = std::make_unique<PprMatrix>(
        ppr_closed_form(static_normalized_, cfg_.gamma_ppr, cfg_.dense_cap));
    params_ = ModelParams::init(cfg_.dims, static_cast<int>(dataset_.x.cols()),
                                static_cast<int>(dataset_.t.cols()), dataset_.num_classes,
                                cfg_.seed);
    dynamic_graph_ = dataset_.graph;
    dynamic_normalized_ = static_normalized_;
    try {
        dynamic_homophily_ = homophily_ratio(dynamic_graph_, dataset_.labels);
    } catch (const DataError &) {
        dynamic_homophily_ = kNaN;
    }
    sem_steps_total_ = static_cast<long>(cfg_.epochs) * cfg_.steps_per_phase;
    gnn_steps_total_ = static_cast<long>(cfg_.epochs) * cfg_.steps_per_phase;
}

void Trainer::warmUp() {
    const Matrix a_static = dense_of(static_normalized_);
    for (int epoch = 1; epoch <= cfg_.warmup_epochs; ++epoch) {
        double gnn_ce = 0.0, enc_ce = 0.0;
        // Structural view on (A_static, X), task loss only.
        for (int s = 0; s < cfg_.steps_per_phase; ++s) {
            ad::Tape t;
            ad::Var w1 = t.leaf(params_.gnn.w1), b1 = t.leaf(params_.gnn.b1);
            ad::Var w2 = t.leaf(params_.gnn.w2), b2 = t.leaf(params_.gnn.b2);
            ad::Var wc = t.leaf(params_.gnn.wc), bc = t.leaf(params_.gnn.bc);
            ad::Var a = t.constant(a_static);
            ad::Var x = t.constant(dataset_.x);
            ad::Var h1 = t.relu(t.addRowBroadcast(t.matmul(t.matmul(a, x), w1), b1));
            ad::Var h = t.addRowBroadcast(t.matmul(t.matmul(a, h1), w2), b2);
            ad::Var p = t.softmaxRows(t.addRowBroadcast(t.matmul(h, wc), bc));
            ad::Var loss = t.crossEntropyMasked(p, dataset_.labels, dataset_.train_mask);
            double lv = t.value(loss)(0, 0);
            if (!std::isfinite(lv)) throw NumericalError("warm-up GNN loss is not finite");
            if (s == 0) gnn_ce = lv;
            t.backward(loss);
            double lr = scheduled_lr(cfg_.lr_gnn, gnn_steps_done_, gnn_steps_total_);
            opt_gnn_.step("gnn.w1", params_.gnn.w1, t.grad(w1), lr);
            opt_gnn_.step("gnn.b1", params_.gnn.b1, t.grad(b1), lr);
            opt_gnn_.step("gnn.w2", params_.gnn.w2, t.grad(w2), lr);
            opt_gnn_.step("gnn.b2", params_.gnn.b2, t.grad(b2), lr);
            opt_gnn_.step("gnn.wc", params_.gnn.wc, t.grad(wc), lr);
            opt_gnn_.step("gnn.bc", params_.gnn.bc, t.grad(bc), lr);
            ++gnn_steps_done_;
        }
        // Semantic view on the raw text with zero prompts, task loss only.
        const Matrix zero_prompts = Matrix::Zero(dataset_.numNodes(), cfg_.dims.d_prompt);
        for (int s = 0; s < cfg_.steps_per_phase; ++s) {
            ad::Tape t;
            ad::Var w1 = t.leaf(params_.enc.w1), b1 = t.leaf(params_.enc.b1);
            ad::Var w2 = t.leaf(params_.enc.w2), b2 = t.leaf(params_.enc.b2);
            ad::Var wc = t.leaf(params_.enc.wc), bc = t.leaf(params_.enc.bc);
            ad::Var input = t.concatCols(t.constant(zero_prompts), t.constant(dataset_.t));
            ad::Var h1 = t.relu(t.addRowBroadcast(t.matmul(input, w1), b1));
            ad::Var h = t.addRowBroadcast(t.matmul(h1, w2), b2);
            ad::Var p = t.softmaxRows(t.addRowBroadcast(t.matmul(h, wc), bc));
            ad::Var loss = t.crossEntropyMasked(p, dataset_.labels, dataset_.train_mask);
            double lv = t.value(loss)(0, 0);
            if (!std::isfinite(lv)) throw NumericalError("warm-up encoder loss is not finite");
            if (s == 0) enc_ce = lv;
            t.backward(loss);
            double lr = scheduled_lr(cfg_.lr_semantic, sem_steps_done_, sem_steps_total_);
            opt_semantic_.step("enc.w1", params_.enc.w1, t.grad(w1), lr);
            opt_semantic_.step("enc.b1", params_.enc.b1, t.grad(b1), lr);
            opt_semantic_.step("enc.w2", params_.enc.w2, t.grad(w2), lr);
            opt_semantic_.step("enc.b2", params_.enc.b2, t.grad(b2), lr);
            opt_semantic_.step("enc.wc", params_.enc.wc, t.grad(wc), lr);
            opt_semantic_.step("enc.bc", params_.enc.bc, t.grad(bc), lr);
            ++sem_steps_done_;
        }
        PhaseOutcome o;
        o.task = 0.5 * (gnn_ce + enc_ce);
        o.total = o.task;
        o.conflict = 0.0;
        o.cons = 0.0;
        logEpoch(epoch, /*warmup=*/true, o, PhaseOutcome{});
    }
    // Co-evolution starts from the static topology.
    dynamic_graph_ = dataset_.graph;
    dynamic_normalized_ = static_normalized_;
    selection_mask_.resize(0, 0);
}

Trainer::PhaseOutcome Trainer::runSemanticPhase(bool update) {
    const int n = dataset_.numNodes();
    auto [h_struct, p_gnn] = gnn_forward(params_.gnn, dynamic_normalized_, dataset_.x);
    const Vector ent_gnn = normalized_entropy(p_gnn);
    const Matrix conf_gnn = (1.0 - ent_gnn.array()).matrix();

    PhaseOutcome out;
    ConflictSets sets;
    bool use_conflict = !cfg_.no_cal && cfg_.w_conflict > 0.0;
    if (use_conflict) {
        Matrix prompts0 = cfg_.no_sp ? Matrix::Zero(n, cfg_.dims.d_prompt)
                                     : project_prompts(params_.proj, h_struct);
        auto [h_sem0, p_llm0] = encode(params_.enc, prompts0, dataset_.t);
        Matrix z0 = row_normalize(h_sem0);
        sets = mine_conflicts(z0, *ppr_, cfg_.conflict);
        out.mined_pairs = hard_negative_pairs(sets);
        out.mined_negatives = static_cast<long>(out.mined_pairs.size());
        out.mined_cos = mean_hard_negative_cosine(z0, out.mined_pairs);
        out.mined_hist = cosine_histogram(z0, out.mined_pairs);
    } else {
        out.mined_cos = kNaN;
    }

    const int steps = update ? cfg_.steps_per_phase : 1;
    for (int s = 0; s < steps; ++s) {
        ad::Tape t;
        ad::Var pw = t.leaf(params_.proj.w), pb = t.leaf(params_.proj.b);
        ad::Var ew1 = t.leaf(params_.enc.w1), eb1 = t.leaf(params_.enc.b1);
        ad::Var ew2 = t.leaf(params_.enc.w2), eb2 = t.leaf(params_.enc.b2);
        ad::Var ewc = t.leaf(params_.enc.wc), ebc = t.leaf(params_.enc.bc);
        ad::Var fw = t.leaf(params_.fusion.w), fb = t.leaf(params_.fusion.b);

        ad::Var h_struct_c = t.constant(h_struct);
        ad::Var prompts = cfg_.no_sp
                              ? t.constant(Matrix::Zero(n, cfg_.dims.d_prompt))
                              : t.addRowBroadcast(t.matmul(h_struct_c, pw), pb);
        ad::Var input = t.concatCols(prompts, t.constant(dataset_.t));
        ad::Var h1 = t.relu(t.addRowBroadcast(t.matmul(input, ew1), eb1));
        ad::Var h_sem = t.addRowBroadcast(t.matmul(h1, ew2), eb2);
        ad::Var p_llm = t.softmaxRows(t.addRowBroadcast(t.matmul(h_sem, ewc), ebc));

        ad::Var ent_llm = t.entropyRows(p_llm);
        ad::Var gate_in = t.concatCols(t.concatCols(ent_llm, t.constant(ent_gnn)), h_struct_c);
        ad::Var beta = t.sigmoid(t.addRowBroadcast(t.matmul(gate_in, fw), fb));
        ad::Var ones = t.constant(Matrix::Ones(n, 1));
        ad::Var p_gnn_c = t.constant(p_gnn);
        ad::Var y = t.add(t.mulColBroadcast(p_llm, beta),
                          t.mulColBroadcast(p_gnn_c, t.sub(ones, beta)));
        ad::Var task = t.crossEntropyMasked(y, dataset_.labels, dataset_.train_mask);
        ad::Var loss = t.scale(task, cfg_.w_task);

        double conflict_value = 0.0;
        if (use_conflict) {
            ad::Var z = t.rowL2Normalize(h_sem);
            ad::Var conf = t.conflictHinge(z, sets.positives, sets.negatives,
                                           cfg_.conflict.delta_pos, cfg_.conflict.delta_neg,
                                           cfg_.conflict.lambda);
            conflict_value = t.value(conf)(0, 0);
            loss = t.add(loss, t.scale(conf, cfg_.w_conflict));
        }
        double cons_value = 0.0;
        if (!cfg_.no_ugc && cfg_.w_cons > 0.0) {
            ad::Var term1 = t.hadamard(t.constant(conf_gnn), t.klRows(p_gnn_c, p_llm));
            ad::Var p_llm_snap = t.constant(t.value(p_llm));
            ad::Var conf_llm = t.sub(ones, t.entropyRows(p_llm_snap));
            ad::Var term2 = t.hadamard(conf_llm, t.klRows(p_llm_snap, p_gnn_c));
            ad::Var cons = t.meanAll(t.add(term1, term2));
            cons_value = t.value(cons)(0, 0);
            loss = t.add(loss, t.scale(cons, cfg_.w_cons));
        }

        double total = t.value(loss)(0, 0);
        if (!std::isfinite(total)) throw NumericalError("semantic phase loss is not finite");
        if (s == 0) {
            out.task = t.value(task)(0, 0);
            out.conflict = conflict_value;
            out.cons = cons_value;
            out.total = total;
        }
        if (!update) break;
        t.backward(loss);
        double lr = scheduled_lr(cfg_.lr_semantic, sem_steps_done_, sem_steps_total_);
        if (!cfg_.no_sp) {
            opt_semantic_.step("proj.w", params_.proj.w, t.grad(pw), lr);
            opt_semantic_.step("proj.b", params_.proj.b, t.grad(pb), lr);
        }
        opt_semantic_.step("enc.w1", params_.enc.w1, t.grad(ew1), lr);
        opt_semantic_.step("enc.b1", params_.enc.b1, t.grad(eb1), lr);
        opt_semantic_.step("enc.w2", params_.enc.w2, t.grad(ew2), lr);
        opt_semantic_.step("enc.b2", params_.enc.b2, t.grad(eb2), lr);
        opt_semantic_.step("enc.wc", params_.enc.wc, t.grad(ewc), lr);
        opt_semantic_.step("enc.bc", params_.enc.bc, t.grad(ebc), lr);
        opt_semantic_.step("fusion.w", params_.fusion.w, t.grad(fw), lr);
        opt_semantic_.step("fusion.b", params_.fusion.b, t.grad(fb), lr);
        ++sem_steps_done_;
    }
    return out;
}

Trainer::PhaseOutcome Trainer::stepA(bool update) { return runSemanticPhase(update); }

void Trainer::stepB() {
    auto [h_struct, p_gnn] = gnn_forward(params_.gnn, dynamic_normalized_, dataset_.x);
    if (cfg_.no_ssl) {
        dynamic_graph_ = dataset_.graph;
        dynamic_normalized_ = static_normalized_;
        selection_mask_.resize(0, 0);
        max_out_degree_presym_ = 0;
        try {
            dynamic_homophily_ = homophily_ratio(dynamic_graph_, dataset_.labels);
        } catch (const DataError &) {
            dynamic_homophily_ = kNaN;
        }
        return;
    }
    Matrix prompts = cfg_.no_sp ? Matrix::Zero(dataset_.numNodes(), cfg_.dims.d_prompt)
                                : project_prompts(params_.proj, h_struct);
    auto [h_sem, p_llm] = encode(params_.enc, prompts, dataset_.t);
    // Cosine-scale similarity: unnormalized embeddings let large-norm rows
    // dominate every top-k selection.
    Matrix z_sem = row_normalize(h_sem);
    Matrix s = similarity_matrix(params_.metric, z_sem, cfg_.dense_cap);
    Vector alpha = gate_alpha(params_.metric, z_sem);
    alpha_mean_ = alpha.mean();
    Matrix fused = fuse_dense(dataset_.graph, s, alpha);
    auto rows = topk_rows(fused, cfg_.k);

    const int n = dataset_.numNodes();
    max_out_degree_presym_ = 0;
    selection_mask_ = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        max_out_degree_presym_ =
            std::max(max_out_degree_presym_, static_cast<int>(rows[i].size()));
        for (const auto &[j, w] : rows[i]) selection_mask_(i, j) = 1.0;
    }
    dynamic_graph_ = topk_sparsify(fused, cfg_.k);
    dynamic_normalized_ = normalize_adjacency(dynamic_graph_);
    try {
        dynamic_homophily_ = homophily_ratio(dynamic_graph_, dataset_.labels);
    } catch (const DataError &) {
        dynamic_homophily_ = kNaN;
    }
}

Trainer::PhaseOutcome Trainer::runGnnPhase(bool update) {
    const int n = dataset_.numNodes();
    auto [h_struct0, p_gnn0] = gnn_forward(params_.gnn, dynamic_normalized_, dataset_.x);
    Matrix prompts = cfg_.no_sp ? Matrix::Zero(n, cfg_.dims.d_prompt)
                                : project_prompts(params_.proj, h_struct0);
    auto [h_sem, p_llm] = encode(params_.enc, prompts, dataset_.t);
    const Vector ent_llm = normalized_entropy(p_llm);
    const Matrix conf_llm = (1.0 - ent_llm.array()).matrix();

    PhaseOutcome out;
    ConflictSets sets;
    bool use_conflict = !cfg_.no_cal && cfg_.w_conflict > 0.0;
    if (use_conflict) {
        Matrix z0 = row_normalize(h_struct0);
        sets = mine_conflicts(z0, *ppr_, cfg_.conflict);
        out.mined_pairs = hard_negative_pairs(sets);
        out.mined_negatives = static_cast<long>(out.mined_pairs.size());
        out.mined_cos = mean_hard_negative_cosine(z0, out.mined_pairs);
    } else {
        out.mined_cos = kNaN;
    }

    const bool train_metric = !cfg_.no_ssl && selection_mask_.size() > 0;
    const Matrix a_static_dense = dense_of(dataset_.graph);
    const Matrix a_dyn_norm_dense = dense_of(dynamic_normalized_);

    const int steps = update ? cfg_.steps_per_phase : 1;
    for (int s = 0; s < steps; ++s) {
        ad::Tape t;
        ad::Var gw1 = t.leaf(params_.gnn.w1), gb1 = t.leaf(params_.gnn.b1);
        ad::Var gw2 = t.leaf(params_.gnn.w2), gb2 = t.leaf(params_.gnn.b2);
        ad::Var gwc = t.leaf(params_.gnn.wc), gbc = t.leaf(params_.gnn.bc);
        ad::Var fw = t.leaf(params_.fusion.w), fb = t.leaf(params_.fusion.b);

        std::vector<ad::Var> head_vars;
        ad::Var gate_w, gate_b;
        ad::Var a_hat;
        if (train_metric) {
            ad::Var h_sem_c = t.constant(row_normalize(h_sem));
            ad::Var h_sem_t = t.transpose(h_sem_c);
            ad::Var acc;
            for (const Matrix &w : params_.metric.heads) {
                head_vars.push_back(t.leaf(w));
                ad::Var sim = t.matmul(t.matmul(h_sem_c, head_vars.back()), h_sem_t);
                acc = acc.valid() ? t.add(acc, sim) : sim;
            }
            acc = t.scale(acc, 1.0 / static_cast<double>(params_.metric.heads.size()));
            ad::Var s_mat = t.rescaleMinMaxOffdiag(acc);
            gate_w = t.leaf(params_.metric.gate_w);
            gate_b = t.leaf(params_.metric.gate_b);
            ad::Var alpha = t.sigmoid(t.addRowBroadcast(t.matmul(h_sem_c, gate_w), gate_b));
            ad::Var ones_n = t.constant(Matrix::Ones(n, 1));
            ad::Var fused = t.add(t.mulColBroadcast(t.constant(a_static_dense), alpha),
                                  t.mulColBroadcast(s_mat, t.sub(ones_n, alpha)));
            ad::Var dir = t.hadamard(fused, t.constant(selection_mask_));
            a_hat = t.normalizeAdjDense(t.symMax(dir));
        } else {
            a_hat = t.constant(a_dyn_norm_dense);
        }

        ad::Var x = t.constant(dataset_.x);
        ad::Var h1 = t.relu(t.addRowBroadcast(t.matmul(t.matmul(a_hat, x), gw1), gb1));
        ad::Var h_struct = t.addRowBroadcast(t.matmul(t.matmul(a_hat, h1), gw2), gb2);
        ad::Var p_gnn = t.softmaxRows(t.addRowBroadcast(t.matmul(h_struct, gwc), gbc));

        ad::Var ent_gnn = t.entropyRows(p_gnn);
        ad::Var gate_in = t.concatCols(t.concatCols(t.constant(ent_llm), ent_gnn), h_struct);
        ad::Var beta = t.sigmoid(t.addRowBroadcast(t.matmul(gate_in, fw), fb));
        ad::Var ones = t.constant(Matrix::Ones(n, 1));
        ad::Var p_llm_c = t.constant(p_llm);
        ad::Var y = t.add(t.mulColBroadcast(p_llm_c, beta),
                          t.mulColBroadcast(p_gnn, t.sub(ones, beta)));
        ad::Var task = t.crossEntropyMasked(y, dataset_.labels, dataset_.train_mask);
        ad::Var loss = t.scale(task, cfg_.w_task);

        double conflict_value = 0.0;
        if (use_conflict) {
            ad::Var z = t.rowL2Normalize(h_struct);
            ad::Var conf = t.conflictHinge(z, sets.positives, sets.negatives,
                                           cfg_.conflict.delta_pos, cfg_.conflict.delta_neg,
                                           cfg_.conflict.lambda);
            conflict_value = t.value(conf)(0, 0);
            loss = t.add(loss, t.scale(conf, cfg_.w_conflict));
        }
        double cons_value = 0.0;
        if (!cfg_.no_ugc && cfg_.w_cons > 0.0) {
            ad::Var term2 = t.hadamard(t.constant(conf_llm), t.klRows(p_llm_c, p_gnn));
            ad::Var p_gnn_snap = t.constant(t.value(p_gnn));
            ad::Var conf_gnn_snap = t.sub(ones, t.entropyRows(p_gnn_snap));
            ad::Var term1 = t.hadamard(conf_gnn_snap, t.klRows(p_gnn_snap, p_llm_c));
            ad::Var cons = t.meanAll(t.add(term1, term2));
            cons_value = t.value(cons)(0, 0);
            loss = t.add(loss, t.scale(cons, cfg_.w_cons));
        }

        double total = t.value(loss)(0, 0);
        if (!std::isfinite(total)) throw NumericalError("GNN phase loss is not finite");
        if (s == 0) {
            out.task = t.value(task)(0, 0);
            out.conflict = conflict_value;
            out.cons = cons_value;
            out.total = total;
        }
        if (!update) break;
        t.backward(loss);
        double lr = scheduled_lr(cfg_.lr_gnn, gnn_steps_done_, gnn_steps_total_);
        opt_gnn_.step("gnn.w1", params_.gnn.w1, t.grad(gw1), lr);
        opt_gnn_.step("gnn.b1", params_.gnn.b1, t.grad(gb1), lr);
        opt_gnn_.step("gnn.w2", params_.gnn.w2, t.grad(gw2), lr);
        opt_gnn_.step("gnn.b2", params_.gnn.b2, t.grad(gb2), lr);
        opt_gnn_.step("gnn.wc", params_.gnn.wc, t.grad(gwc), lr);
        opt_gnn_.step("gnn.bc", params_.gnn.bc, t.grad(gbc), lr);
        if (train_metric) {
            for (size_t h = 0; h < head_vars.size(); ++h)
                opt_gnn_.step("metric.head" + std::to_string(h), params_.metric.heads[h],
                              t.grad(head_vars[h]), lr);
            opt_gnn_.step("metric.gate_w", params_.metric.gate_w, t.grad(gate_w), lr);
            opt_gnn_.step("metric.gate_b", params_.metric.gate_b, t.grad(gate_b), lr);
        }
        opt_gnn_.step("fusion.w", params_.fusion.w, t.grad(fw), lr);
        opt_gnn_.step("fusion.b", params_.fusion.b, t.grad(fb), lr);
        ++gnn_steps_done_;
    }
    return out;
}

Trainer::PhaseOutcome Trainer::stepC(bool update) { return runGnnPhase(update); }

InferResult Trainer::inferCurrent() const { return infer(dataset_, params_, cfg_); }

void Trainer::logEpoch(int epoch, bool warmup, const PhaseOutcome &a, const PhaseOutcome &c) {
    EpochLog log;
    log.epoch = epoch;
    log.phase = warmup ? "warmup" : "coevolve";
    log.train_task = a.task;
    log.train_conflict = a.conflict;
    log.train_cons = a.cons;
    log.train_total = a.total;
    log.homophily_dynamic = dynamic_homophily_;
    log.alpha_mean = alpha_mean_;
    log.max_out_degree_presym = max_out_degree_presym_;

    Matrix p_gnn, p_llm, y_final, h_sem_eval;
    Vector beta;
    if (warmup) {
        auto [h_struct, pg] = gnn_forward(params_.gnn, static_normalized_, dataset_.x);
        Matrix prompts = Matrix::Zero(dataset_.numNodes(), cfg_.dims.d_prompt);
        auto [hs, pl] = encode(params_.enc, prompts, dataset_.t);
        Vector ent_l = normalized_entropy(pl);
        Vector ent_g = normalized_entropy(pg);
        auto [y, b] = fuse_predictions(params_.fusion, pl, pg, ent_l, ent_g, h_struct);
        p_gnn = pg;
        p_llm = pl;
        y_final = std::move(y);
        beta = std::move(b);
        h_sem_eval = hs;
    } else {
        InferResult r = infer(dataset_, params_, cfg_);
        p_gnn = r.p_gnn;
        p_llm = r.p_llm;
        y_final = r.y_final;
        beta = r.beta;
        h_sem_eval = r.h_sem;
    }
    std::vector<int> pred = argmax_rows(y_final);
    log.val_task = masked_ce(y_final, dataset_.labels, dataset_.val_mask);
    log.val_acc = accuracy(pred, dataset_.labels, dataset_.val_mask);
    log.val_f1 = macro_f1(pred, dataset_.labels, dataset_.val_mask, dataset_.num_classes);
    log.test_acc = accuracy(pred, dataset_.labels, dataset_.test_mask);
    log.test_f1 = macro_f1(pred, dataset_.labels, dataset_.test_mask, dataset_.num_classes);
    log.gnn_val_acc = accuracy(argmax_rows(p_gnn), dataset_.labels, dataset_.val_mask);
    log.llm_val_acc = accuracy(argmax_rows(p_llm), dataset_.labels, dataset_.val_mask);
    log.entropy_gnn = normalized_entropy(p_gnn).mean();
    log.entropy_llm = normalized_entropy(p_llm).mean();
    log.beta_mean = beta.mean();
    log.beta_min = beta.minCoeff();
    log.beta_max = beta.maxCoeff();

    log.hard_neg_count = a.mined_negatives;
    log.hard_neg_cos_current = a.mined_cos;
    log.hard_neg_hist = a.mined_hist;
    if (!warmup && !tracked_pairs_set_ && !a.mined_pairs.empty()) {
        tracked_pairs_ = a.mined_pairs;
        tracked_pairs_set_ = true;
    }
    if (tracked_pairs_set_) {
        // Fig-3b style tracking: the first co-evolution epoch's mined pairs,
        // measured on the training-path semantic embedding.
        auto [h_struct_t, pg_t] = gnn_forward(params_.gnn, dynamic_normalized_, dataset_.x);
        Matrix prompts_t = cfg_.no_sp ? Matrix::Zero(dataset_.numNodes(), cfg_.dims.d_prompt)
                                      : project_prompts(params_.proj, h_struct_t);
        auto [h_sem_t, pl_t] = encode(params_.enc, prompts_t, dataset_.t);
        try {
            Matrix z = row_normalize(h_sem_t);
            log.hard_neg_cos_tracked = mean_hard_negative_cosine(z, tracked_pairs_);
        } catch (const NumericalError &) {
            log.hard_neg_cos_tracked = kNaN;
        }
    } else {
        log.hard_neg_cos_tracked = kNaN;
    }
    (void)c;
    logs_.push_back(std::move(log));
}

TrainResult Trainer::train() {
    warmUp();
    TrainResult result;
    bool have_best = false;
    double best_val = -1.0;
    for (int epoch = cfg_.warmup_epochs + 1; epoch <= cfg_.epochs; ++epoch) {
        PhaseOutcome a = runSemanticPhase(true);
        stepB();
        PhaseOutcome c = runGnnPhase(true);
        logEpoch(epoch, /*warmup=*/false, a, c);
        const EpochLog &row = logs_.back();
        if (!have_best || row.val_acc > best_val) {
            have_best = true;
            best_val = row.val_acc;
            result.best_params = params_;
            result.best_epoch = epoch;
        }
    }
    result.final_params = params_;
    if (!have_best) {
        result.best_params = params_;
        result.best_epoch = cfg_.epochs;
    }
    result.logs = logs_;
    return result;
}

} // namespace coevolve
