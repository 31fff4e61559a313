// Command-line driver: dataset generation, training, stress perturbations,
// checkpoint evaluation and PPR export.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "coevolve/dataset.hpp"
#include "coevolve/io.hpp"
#include "coevolve/metrics.hpp"
#include "coevolve/trainer.hpp"

#ifndef COEVOLVE_REVISION
#define COEVOLVE_REVISION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace coevolve;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct GenerateArgs {
    std::string out;
    SyntheticConfig cfg;
};

struct TrainArgs {
    std::string data, out, config;
    TrainConfig cfg;
};

struct PerturbArgs {
    std::string data, out, kind;
    double rate = 0.1;
    double threshold = 0.3;
    double gamma_ppr = 0.15;
    int dense_cap = kDefaultDenseCap;
    std::uint64_t seed = 1;
};

struct EvalArgs {
    std::string data, checkpoint, out, config;
    TrainConfig cfg;
};

struct PprArgs {
    std::string data, out;
    double gamma_ppr = 0.15;
    int dense_cap = kDefaultDenseCap;
};

std::uint64_t dataset_fingerprint(const std::string &dir) {
    std::uint64_t h = 1469598103934665603ull;
    for (const char *name :
         {"edges.txt", "features.csv", "text.csv", "labels.csv", "splits.csv", "meta.json"}) {
        std::uint64_t f = fnv1a_file((fs::path(dir) / name).string());
        h ^= f;
        h *= 1099511628211ull;
    }
    return h;
}

json config_json(const TrainConfig &c) {
    json j;
    j["epochs"] = c.epochs;
    j["warmup_epochs"] = c.warmup_epochs;
    j["steps_per_phase"] = c.steps_per_phase;
    j["lr_semantic"] = c.lr_semantic;
    j["lr_gnn"] = c.lr_gnn;
    j["weight_decay"] = c.weight_decay;
    j["k"] = c.k;
    j["gamma_ppr"] = c.gamma_ppr;
    j["conflict"] = {{"tau", c.conflict.tau},
                     {"epsilon", c.conflict.epsilon},
                     {"ppr_pos_threshold", c.conflict.ppr_pos_threshold},
                     {"delta_pos", c.conflict.delta_pos},
                     {"delta_neg", c.conflict.delta_neg},
                     {"lambda", c.conflict.lambda}};
    j["dims"] = {{"hidden", c.dims.hidden},         {"d_struct", c.dims.d_struct},
                 {"d_prompt", c.dims.d_prompt},     {"enc_hidden", c.dims.enc_hidden},
                 {"d_embed", c.dims.d_embed},       {"heads", c.dims.heads}};
    j["seed"] = c.seed;
    j["ablations"] = {{"no_sp", c.no_sp}, {"no_ssl", c.no_ssl}, {"no_cal", c.no_cal},
                      {"no_ugc", c.no_ugc}};
    j["loss_weights"] = {{"task", c.w_task}, {"conflict", c.w_conflict}, {"cons", c.w_cons}};
    j["dense_cap"] = c.dense_cap;
    return j;
}

void write_manifest(const std::string &out_dir, const std::string &command,
                    const TrainConfig &cfg, const std::string &data_dir) {
    json j;
    j["command"] = command;
    j["revision"] = COEVOLVE_REVISION;
    j["seed"] = cfg.seed;
    j["out_dir"] = out_dir;
    j["data_dir"] = data_dir;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(dataset_fingerprint(data_dir)));
    j["dataset_fingerprint"] = buf;
    j["config"] = config_json(cfg);
    write_text_file((fs::path(out_dir) / "manifest.json").string(), j.dump(2) + "\n");
}

json split_json(const SplitMetrics &m) { return {{"acc", m.acc}, {"f1", m.f1}}; }

json results_json(const TagDataset &d, const InferResult &r, int best_epoch,
                  std::uint64_t seed) {
    EvalMetrics m = evaluate(d, r);
    json j;
    j["fused"] = {{"train", split_json(m.fused_train)},
                  {"val", split_json(m.fused_val)},
                  {"test", split_json(m.fused_test)}};
    j["views"] = {{"gnn_test", split_json(m.gnn_test)}, {"llm_test", split_json(m.llm_test)}};
    j["best_epoch"] = best_epoch;
    j["seed"] = seed;
    return j;
}

void export_inference(const std::string &out_dir, const InferResult &r) {
    write_matrix_csv((fs::path(out_dir) / "y_final.csv").string(), r.y_final, "class");
    write_matrix_csv((fs::path(out_dir) / "beta.csv").string(), r.beta, "beta");
    write_matrix_csv((fs::path(out_dir) / "h_struct.csv").string(), r.h_struct, "s");
    write_matrix_csv((fs::path(out_dir) / "h_sem.csv").string(), r.h_sem, "e");
    if (r.dynamic_graph) {
        std::ostringstream os;
        os << "# src dst weight\n";
        for (const Edge &e : r.dynamic_graph->edges())
            if (e.src <= e.dst)
                os << e.src << " " << e.dst << " " << format_double(e.weight) << "\n";
        write_text_file((fs::path(out_dir) / "dynamic_edges.txt").string(), os.str());
    }
}

int run_generate(const GenerateArgs &a) {
    TagDataset d = generate_synthetic(a.cfg);
    save_dataset(d, a.out);
    std::cout << "generated " << d.numNodes() << " nodes, " << d.graph.numUndirectedEdges()
              << " edges, homophily "
              << format_double(homophily_ratio(d.graph, d.labels)) << " -> " << a.out
              << "\n";
    return 0;
}

int run_train(const TrainArgs &a) {
    TagDataset d = load_dataset(a.data);
    fs::create_directories(a.out);
    write_manifest(a.out, "train", a.cfg, a.data);
    Trainer trainer(d, a.cfg);
    TrainResult r = trainer.train();
    write_text_file((fs::path(a.out) / "metrics.csv").string(), epoch_logs_to_csv(r.logs));
    write_text_file((fs::path(a.out) / "hard_neg_hist.csv").string(),
                    hard_negative_histograms_to_csv(r.logs));
    fs::create_directories(fs::path(a.out) / "checkpoints");
    r.best_params.save((fs::path(a.out) / "checkpoints" / "best.ckpt").string());
    r.final_params.save((fs::path(a.out) / "checkpoints" / "final.ckpt").string());
    InferResult inf = infer(d, r.best_params, a.cfg);
    json res = results_json(d, inf, r.best_epoch, a.cfg.seed);
    write_text_file((fs::path(a.out) / "results.json").string(), res.dump(2) + "\n");
    std::cout << "test acc " << format_double(res["fused"]["test"]["acc"].get<double>())
              << " f1 " << format_double(res["fused"]["test"]["f1"].get<double>())
              << " (best epoch " << r.best_epoch << ") -> " << a.out << "\n";
    return 0;
}

int run_perturb(const PerturbArgs &a) {
    TagDataset d = load_dataset(a.data);
    PprMatrix ppr =
        ppr_closed_form(normalize_adjacency(d.graph), a.gamma_ppr, a.dense_cap);
    std::pair<TagDataset, PerturbationReport> result =
        a.kind == "fsf"
            ? perturb_false_semantic_friends(d, ppr, a.rate, a.threshold, a.seed)
            : perturb_missing_links(d, ppr, a.rate, a.threshold, a.seed);
    save_dataset(result.first, a.out);
    write_text_file((fs::path(a.out) / "perturbation.json").string(),
                    result.second.toJson() + "\n");
    long affected = a.kind == "fsf"
                        ? static_cast<long>(result.second.affected_nodes.size())
                        : static_cast<long>(result.second.affected_edges.size());
    std::cout << a.kind << " rate " << a.rate << ": " << affected << " of "
              << result.second.eligible_count << " eligible affected -> " << a.out << "\n";
    return 0;
}

int run_eval(const EvalArgs &a) {
    TagDataset d = load_dataset(a.data);
    ModelParams params = ModelParams::load(a.checkpoint);
    fs::create_directories(a.out);
    InferResult r = infer(d, params, a.cfg);
    json res = results_json(d, r, /*best_epoch=*/0, a.cfg.seed);
    write_text_file((fs::path(a.out) / "results.json").string(), res.dump(2) + "\n");
    export_inference(a.out, r);
    std::cout << "test acc " << format_double(res["fused"]["test"]["acc"].get<double>())
              << " f1 " << format_double(res["fused"]["test"]["f1"].get<double>()) << " -> "
              << a.out << "\n";
    return 0;
}

int run_ppr(const PprArgs &a) {
    TagDataset d = load_dataset(a.data);
    PprMatrix ppr =
        ppr_closed_form(normalize_adjacency(d.graph), a.gamma_ppr, a.dense_cap);
    write_matrix_csv(a.out, ppr.values(), "n");
    std::cout << "ppr " << ppr.size() << "x" << ppr.size() << " (gamma " << a.gamma_ppr
              << ") -> " << a.out << "\n";
    return 0;
}

/// Flat `key = value` config file, sections `[...]` permitted as grouping
/// comments. Values for options already given on the command line are
/// skipped, so flags override the file.
void apply_config_file(CLI::App *cmd, const std::string &path, TrainConfig &cfg) {
    std::istringstream in(read_text_file(path));
    auto as_bool = [&](const std::string &v) {
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw DataError("config: boolean expected, got '" + v + "'");
    };
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto notspace = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty() || line.front() == '[') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
        value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
        if (cmd->count("--" + key) > 0) continue; // flag overrides file
        try {
            if (key == "epochs") cfg.epochs = std::stoi(value);
            else if (key == "warmup-epochs") cfg.warmup_epochs = std::stoi(value);
            else if (key == "steps-per-phase") cfg.steps_per_phase = std::stoi(value);
            else if (key == "lr-semantic") cfg.lr_semantic = std::stod(value);
            else if (key == "lr-gnn") cfg.lr_gnn = std::stod(value);
            else if (key == "weight-decay") cfg.weight_decay = std::stod(value);
            else if (key == "k") cfg.k = std::stoi(value);
            else if (key == "gamma-ppr") cfg.gamma_ppr = std::stod(value);
            else if (key == "tau") cfg.conflict.tau = std::stod(value);
            else if (key == "epsilon") cfg.conflict.epsilon = std::stod(value);
            else if (key == "ppr-pos-threshold") cfg.conflict.ppr_pos_threshold = std::stod(value);
            else if (key == "delta-pos") cfg.conflict.delta_pos = std::stod(value);
            else if (key == "delta-neg") cfg.conflict.delta_neg = std::stod(value);
            else if (key == "lambda") cfg.conflict.lambda = std::stod(value);
            else if (key == "hidden") cfg.dims.hidden = std::stoi(value);
            else if (key == "d-struct") cfg.dims.d_struct = std::stoi(value);
            else if (key == "d-prompt") cfg.dims.d_prompt = std::stoi(value);
            else if (key == "enc-hidden") cfg.dims.enc_hidden = std::stoi(value);
            else if (key == "d-embed") cfg.dims.d_embed = std::stoi(value);
            else if (key == "heads") cfg.dims.heads = std::stoi(value);
            else if (key == "w-task") cfg.w_task = std::stod(value);
            else if (key == "w-conflict") cfg.w_conflict = std::stod(value);
            else if (key == "w-cons") cfg.w_cons = std::stod(value);
            else if (key == "dense-cap") cfg.dense_cap = std::stoi(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "no-sp") cfg.no_sp = as_bool(value);
            else if (key == "no-ssl") cfg.no_ssl = as_bool(value);
            else if (key == "no-cal") cfg.no_cal = as_bool(value);
            else if (key == "no-ugc") cfg.no_ugc = as_bool(value);
            else throw DataError("config: unknown key '" + key + "'");
        } catch (const std::invalid_argument &) {
            throw DataError("config line " + std::to_string(lineno) + ": bad value for " + key);
        } catch (const std::out_of_range &) {
            throw DataError("config line " + std::to_string(lineno) + ": bad value for " + key);
        }
    }
}

void add_train_options(CLI::App *cmd, TrainConfig &cfg) {
    cmd->add_option("--seed", cfg.seed, "RNG seed");
    cmd->add_option("--epochs", cfg.epochs, "total epochs, warm-up included");
    cmd->add_option("--warmup-epochs", cfg.warmup_epochs, "independent pre-training epochs");
    cmd->add_option("--steps-per-phase", cfg.steps_per_phase, "optimizer steps per phase");
    cmd->add_option("--lr-semantic", cfg.lr_semantic, "semantic-view learning rate");
    cmd->add_option("--lr-gnn", cfg.lr_gnn, "structural-view learning rate");
    cmd->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay");
    cmd->add_option("--k", cfg.k, "top-k pruning degree");
    cmd->add_option("--gamma-ppr", cfg.gamma_ppr, "PPR restart probability");
    cmd->add_option("--tau", cfg.conflict.tau, "semantic hallucination threshold");
    cmd->add_option("--epsilon", cfg.conflict.epsilon, "structural irrelevance threshold");
    cmd->add_option("--ppr-pos-threshold", cfg.conflict.ppr_pos_threshold,
                    "structural positive threshold");
    cmd->add_option("--delta-pos", cfg.conflict.delta_pos, "positive margin");
    cmd->add_option("--delta-neg", cfg.conflict.delta_neg, "negative margin");
    cmd->add_option("--lambda", cfg.conflict.lambda, "negative-term weight");
    cmd->add_option("--hidden", cfg.dims.hidden, "GNN hidden width");
    cmd->add_option("--d-struct", cfg.dims.d_struct, "structural embedding dim");
    cmd->add_option("--d-prompt", cfg.dims.d_prompt, "soft prompt dim");
    cmd->add_option("--enc-hidden", cfg.dims.enc_hidden, "encoder hidden width");
    cmd->add_option("--d-embed", cfg.dims.d_embed, "semantic embedding dim");
    cmd->add_option("--heads", cfg.dims.heads, "metric head count");
    cmd->add_option("--w-task", cfg.w_task, "task loss weight");
    cmd->add_option("--w-conflict", cfg.w_conflict, "conflict loss weight");
    cmd->add_option("--w-cons", cfg.w_cons, "consistency loss weight");
    cmd->add_option("--dense-cap", cfg.dense_cap, "dense matrix node cap");
    cmd->add_flag("--no-sp", cfg.no_sp, "ablation: zero soft prompts");
    cmd->add_flag("--no-ssl", cfg.no_ssl, "ablation: keep the static graph");
    cmd->add_flag("--no-cal", cfg.no_cal, "ablation: drop the conflict loss");
    cmd->add_flag("--no-ugc", cfg.no_ugc, "ablation: drop the consistency loss");
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"CO-EVOLVE: dual-view co-evolution of graph structure and semantics"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App *cg = app.add_subcommand("generate", "generate a synthetic text-attributed graph");
    cg->add_option("--out", gen.out, "output dataset directory")->required();
    cg->add_option("--nodes", gen.cfg.num_nodes, "node count");
    cg->add_option("--classes", gen.cfg.num_classes, "class count");
    cg->add_option("--p-in", gen.cfg.p_in, "intra-class edge probability")
        ->check(CLI::Range(0.0, 1.0));
    cg->add_option("--p-out", gen.cfg.p_out, "inter-class edge probability")
        ->check(CLI::Range(0.0, 1.0));
    cg->add_option("--text-dim", gen.cfg.text_dim, "text feature dimension");
    cg->add_option("--text-noise", gen.cfg.text_noise, "per-dimension Gaussian noise scale");
    cg->add_option("--train-frac", gen.cfg.train_fraction, "train split fraction");
    cg->add_option("--val-frac", gen.cfg.val_fraction, "validation split fraction");
    cg->add_option("--seed", gen.cfg.seed, "RNG seed");

    TrainArgs tr;
    CLI::App *ct = app.add_subcommand("train", "train the co-evolution model");
    ct->add_option("--data", tr.data, "dataset directory")->required();
    ct->add_option("--out", tr.out, "output directory")->required();
    ct->add_option("--config", tr.config, "flat key = value config file; flags override");
    add_train_options(ct, tr.cfg);

    PerturbArgs pe;
    CLI::App *cp = app.add_subcommand("perturb", "apply a stress perturbation");
    cp->add_option("--data", pe.data, "dataset directory")->required();
    cp->add_option("--out", pe.out, "output dataset directory")->required();
    cp->add_option("--kind", pe.kind, "fsf (semantic swap) or msl (edge deletion)")
        ->required()
        ->check(CLI::IsMember({"fsf", "msl"}));
    cp->add_option("--rate", pe.rate, "fraction of the eligible set, in (0,1]")
        ->required()
        ->check(CLI::Range(std::nextafter(0.0, 1.0), 1.0));
    cp->add_option("--threshold", pe.threshold, "PPR eligibility threshold");
    cp->add_option("--gamma-ppr", pe.gamma_ppr, "PPR restart probability");
    cp->add_option("--dense-cap", pe.dense_cap, "dense matrix node cap");
    cp->add_option("--seed", pe.seed, "RNG seed");

    EvalArgs ev;
    CLI::App *ce = app.add_subcommand("eval", "evaluate a checkpoint with the staged protocol");
    ce->add_option("--data", ev.data, "dataset directory")->required();
    ce->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
    ce->add_option("--out", ev.out, "output directory")->required();
    ce->add_option("--config", ev.config, "flat key = value config file; flags override");
    add_train_options(ce, ev.cfg);

    PprArgs pp;
    CLI::App *cr = app.add_subcommand("ppr", "export the static-graph PPR matrix as CSV");
    cr->add_option("--data", pp.data, "dataset directory")->required();
    cr->add_option("--out", pp.out, "output CSV path")->required();
    cr->add_option("--gamma-ppr", pp.gamma_ppr, "PPR restart probability");
    cr->add_option("--dense-cap", pp.dense_cap, "dense matrix node cap");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : kExitUsage;
    }

    try {
        if (cg->parsed()) return run_generate(gen);
        if (ct->parsed()) {
            if (!tr.config.empty()) apply_config_file(ct, tr.config, tr.cfg);
            return run_train(tr);
        }
        if (cp->parsed()) return run_perturb(pe);
        if (ce->parsed()) {
            if (!ev.config.empty()) apply_config_file(ce, ev.config, ev.cfg);
            return run_eval(ev);
        }
        if (cr->parsed()) return run_ppr(pp);
    } catch (const DataError &e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument &e) {
        std::cerr << "invalid arguments: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericalError &e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return 0;
}
