#include "cama/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "cama/cam.hpp"
#include "cama/rng.hpp"
#include "cama/tu_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cama {

namespace {

const std::set<std::string> kMethods{"cama",   "cama-grad",  "cama-subgraph", "cama-subgraph-grad",
                                     "random", "degree",     "gradargmax",    "pagerank",
                                     "betweenness", "none"};

void apply_json(ExperimentConfig& c, const json& j) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("version", c.version);
    get("dataset", c.dataset);
    get("data_root", c.data_root);
    get("feature_policy", c.feature_policy);
    get("arch", c.arch);
    get("surrogate", c.surrogate);
    get("mode", c.mode);
    get("method", c.method);
    get("attack_type", c.attack_type);
    get("edge_frac", c.edge_frac);
    get("node_frac", c.node_frac);
    get("feat_frac", c.feat_frac);
    get("lambda", c.lambda_mag);
    get("s1", c.s1);
    get("s2", c.s2);
    get("subgraph_frac", c.subgraph_frac);
    get("epochs_mask", c.epochs_mask);
    get("lambda_ent", c.lambda_ent);
    get("mask_lr", c.mask_lr);
    get("folds", c.folds);
    get("epochs", c.epochs);
    get("lr", c.lr);
    get("seed", c.seed);
    get("threads", c.threads);
    get("out", c.out_dir);
}

json config_json(const ExperimentConfig& c) {
    json j;
    j["version"] = c.version;
    j["dataset"] = c.dataset;
    j["data_root"] = c.data_root;
    j["feature_policy"] = c.feature_policy;
    j["arch"] = c.arch;
    j["surrogate"] = c.surrogate;
    j["mode"] = c.mode;
    j["method"] = c.method;
    j["attack_type"] = c.attack_type;
    j["edge_frac"] = c.edge_frac;
    j["node_frac"] = c.node_frac;
    j["feat_frac"] = c.feat_frac;
    j["lambda"] = c.lambda_mag;
    j["s1"] = c.s1;
    j["s2"] = c.s2;
    j["subgraph_frac"] = c.subgraph_frac;
    j["epochs_mask"] = c.epochs_mask;
    j["lambda_ent"] = c.lambda_ent;
    j["mask_lr"] = c.mask_lr;
    j["folds"] = c.folds;
    j["epochs"] = c.epochs;
    j["lr"] = c.lr;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["out"] = c.out_dir;
    return j;
}

void parallel_folds(int k, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, k));
    if (threads == 1) {
        for (int f = 0; f < k; ++f) fn(f);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (int f = next.fetch_add(1); f < k; f = next.fetch_add(1)) fn(f);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct FoldWork {
    std::vector<GraphAttackRecord> records;
    double clean_acc = 0.0;
    double attacked_acc = 0.0;
    double attack_seconds = 0.0;
    ModelParams victim;
    ModelParams surrogate;
};

TrainConfig train_config_for(const ExperimentConfig& cfg, Arch arch, uint64_t seed) {
    TrainConfig tc;
    tc.arch = arch;
    tc.epochs = cfg.epochs;
    tc.lr = cfg.lr;
    tc.seed = seed;
    return tc;
}

AttackResult attack_one(const ModelParams& attacker, const Graph& g, const ExperimentConfig& cfg,
                        uint64_t attack_seed) {
    const Budget budget =
        Budget::for_graph(g, cfg.edge_frac, cfg.node_frac, cfg.feat_frac, cfg.lambda_mag);
    const std::string& m = cfg.method;
    const bool feature = cfg.attack_type == "feature";

    if (m == "none") {
        AttackResult r;
        r.method = "none";
        r.structural = !feature;
        r.budget = budget;
        if (feature)
            r.perturbed_features = g.features;
        else
            r.perturbed_edges = g.edges;
        return r;
    }

    const bool cam_based = m.rfind("cama", 0) == 0;
    RankedCamMatrix ranked;
    int predicted = -1;
    if (cam_based) {
        TraceOptions opt;
        opt.grad_features = true;
        ForwardTrace tr = forward(g, attacker, opt);
        const bool grad_variant = m == "cama-grad" || m == "cama-subgraph-grad";
        HeatMap heat = grad_variant ? grad_cam_heatmap(tr, attacker) : cam_heatmap(tr, attacker);
        ranked = ranked_cam_matrix(heat);
        predicted = argmax_class(tr.logit_values());
    }

    if (feature) {
        if (m == "cama" || m == "cama-grad") return feature_attack(attacker, g, ranked, budget, m);
        const int r_nodes = budget.r_nodes;
        if (m == "random")
            return feature_attack_on_nodes(attacker, g, random_nodes(g, r_nodes, attack_seed), budget,
                                           m);
        if (m == "degree")
            return feature_attack_on_nodes(attacker, g, degree_nodes(g, r_nodes), budget, m);
        if (m == "pagerank")
            return feature_attack_on_nodes(attacker, g, pagerank_nodes(g, r_nodes), budget, m);
        if (m == "betweenness")
            return feature_attack_on_nodes(attacker, g, betweenness_nodes(g, r_nodes), budget, m);
        throw std::invalid_argument("method '" + m + "' does not support feature attacks");
    }

    if (m == "cama" || m == "cama-grad") {
        SimilarityConstraint sc{cfg.s1, cfg.s2};
        return cama_structure(attacker, g, ranked, budget, sc, m);
    }
    if (m == "cama-subgraph" || m == "cama-subgraph-grad") {
        MaskOptConfig opt;
        opt.epochs = cfg.epochs_mask;
        opt.lr = cfg.mask_lr;
        opt.lambda_ent = cfg.lambda_ent;
        opt.subgraph_fraction = cfg.subgraph_frac;
        return cama_subgraph(attacker, g, ranked.column(predicted), budget, opt, m);
    }
    if (m == "random") return random_flips(attacker, g, budget.delta_edges, attack_seed);
    if (m == "degree") return degree_flips(attacker, g, budget.delta_edges);
    if (m == "gradargmax") return grad_argmax(attacker, g, budget.delta_edges);
    throw std::invalid_argument("method '" + m + "' does not support structure attacks");
}

ResultRow summarize(const ExperimentConfig& cfg, const Dataset& ds,
                    const std::vector<FoldWork>& folds) {
    ResultRow row;
    row.dataset = cfg.dataset;
    row.victim = cfg.arch;
    row.method = cfg.method;
    row.attack_type = cfg.attack_type;
    double clean = 0.0, attacked = 0.0, secs = 0.0;
    int n_records = 0, n_active = 0;
    double flips = 0.0, degs = 0.0;
    int degs_n = 0;
    for (const auto& fw : folds) {
        clean += fw.clean_acc;
        attacked += fw.attacked_acc;
        secs += fw.attack_seconds;
        n_records += static_cast<int>(fw.records.size());
        for (const auto& rec : fw.records) {
            if (rec.result.skipped) continue;
            ++n_active;
            flips += rec.result.structural
                         ? static_cast<double>(rec.result.flips_used)
                         : static_cast<double>(rec.result.feature_deltas.size());
            // Feature attacks record their target nodes; for structure
            // attacks the flip endpoints stand in. Degrees come from the
            // clean graph.
            std::vector<int> sel = rec.result.selected_nodes;
            if (sel.empty() && !rec.result.flips.empty()) {
                std::set<int> endpoints;
                for (const Flip& f : rec.result.flips) {
                    endpoints.insert(f.u);
                    endpoints.insert(f.v);
                }
                sel.assign(endpoints.begin(), endpoints.end());
            }
            if (!sel.empty()) {
                degs += avg_degree_selected(ds.graphs[rec.graph_id], sel);
                ++degs_n;
            }
        }
    }
    const int k = static_cast<int>(folds.size());
    row.clean_acc = clean / k;
    row.attacked_acc = attacked / k;
    row.change_pp = (row.attacked_acc - row.clean_acc) * 100.0;
    row.mean_flips = n_active ? flips / n_active : 0.0;
    row.mean_avg_degree_selected = degs_n ? degs / degs_n : 0.0;
    row.sec_per_graph = n_records ? secs / n_records : 0.0;
    return row;
}

}  // namespace

void ExperimentConfig::validate() const {
    auto frac = [](double v, const char* name) {
        if (!(v > 0.0 && v <= 1.0))
            throw std::invalid_argument(std::string(name) + " must lie in (0, 1]");
    };
    frac(edge_frac, "edge_frac");
    frac(node_frac, "node_frac");
    frac(feat_frac, "feat_frac");
    frac(subgraph_frac, "subgraph_frac");
    if (!kMethods.count(method)) throw std::invalid_argument("unknown method: " + method);
    if (attack_type != "feature" && attack_type != "structure")
        throw std::invalid_argument("attack_type must be feature or structure");
    if (mode != "whitebox" && mode != "blackbox" && mode != "poison")
        throw std::invalid_argument("mode must be whitebox, blackbox or poison");
    if (mode == "poison" && attack_type != "structure")
        throw std::invalid_argument("poisoning requires a structure method");
    arch_from_string(arch);
    arch_from_string(surrogate);
    feature_policy_from_string(feature_policy);
    if (folds < 2) throw std::invalid_argument("folds must be >= 2");
    if (epochs < 1 || epochs_mask < 1) throw std::invalid_argument("epochs must be >= 1");
}

std::string ExperimentConfig::to_json_string() const { return config_json(*this).dump(2); }

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
    json j = json::parse(text);
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    if (!j.contains("version")) throw std::invalid_argument("config missing 'version'");
    ExperimentConfig c;
    apply_json(c, j);
    return c;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_string(ss.str());
}

void ResultTable::add(ResultRow row) {
    auto key = [](const ResultRow& r) {
        return std::tie(r.dataset, r.victim, r.method, r.attack_type);
    };
    for (const auto& existing : rows)
        if (key(existing) == key(row))
            throw std::logic_error("duplicate result row for " + row.dataset + "/" + row.victim +
                                   "/" + row.method + "/" + row.attack_type);
    rows.push_back(std::move(row));
    std::sort(rows.begin(), rows.end(),
              [&](const ResultRow& a, const ResultRow& b) { return key(a) < key(b); });
}

std::string ResultTable::to_csv() const {
    std::string out =
        "dataset,victim,method,attack_type,clean_acc,attacked_acc,change_pp,mean_flips,"
        "mean_avg_degree_selected\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%.2f,%.2f,%.2f,%.4f,%.4f\n", r.dataset.c_str(),
                      r.victim.c_str(), r.method.c_str(), r.attack_type.c_str(), r.clean_acc * 100.0,
                      r.attacked_acc * 100.0, r.change_pp, r.mean_flips,
                      r.mean_avg_degree_selected);
        out += buf;
    }
    return out;
}

ResultTable ResultTable::from_csv(const std::string& text) {
    ResultTable t;
    std::stringstream ss(text);
    std::string line;
    bool header = true;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::stringstream ls(line);
        std::string tok;
        std::vector<std::string> f;
        while (std::getline(ls, tok, ',')) f.push_back(tok);
        if (f.size() != 9) throw std::runtime_error("bad results.csv row: " + line);
        ResultRow r;
        r.dataset = f[0];
        r.victim = f[1];
        r.method = f[2];
        r.attack_type = f[3];
        r.clean_acc = std::stod(f[4]) / 100.0;
        r.attacked_acc = std::stod(f[5]) / 100.0;
        r.change_pp = std::stod(f[6]);
        r.mean_flips = std::stod(f[7]);
        r.mean_avg_degree_selected = std::stod(f[8]);
        t.rows.push_back(r);
    }
    return t;
}

std::string ResultTable::to_json_string() const {
    json rows_json = json::array();
    for (const auto& r : rows) {
        json jr;
        jr["dataset"] = r.dataset;
        jr["victim"] = r.victim;
        jr["method"] = r.method;
        jr["attack_type"] = r.attack_type;
        jr["clean_acc"] = r.clean_acc;
        jr["attacked_acc"] = r.attacked_acc;
        jr["change_pp"] = r.change_pp;
        jr["mean_flips"] = r.mean_flips;
        jr["mean_avg_degree_selected"] = r.mean_avg_degree_selected;
        jr["sec_per_graph"] = r.sec_per_graph;
        rows_json.push_back(jr);
    }
    json j;
    j["rows"] = rows_json;
    return j.dump(2);
}

double RunOutput::mean_clean() const {
    double s = 0.0;
    for (double a : fold_clean_acc) s += a;
    return fold_clean_acc.empty() ? 0.0 : s / fold_clean_acc.size();
}

double RunOutput::mean_attacked() const {
    double s = 0.0;
    for (double a : fold_attacked_acc) s += a;
    return fold_attacked_acc.empty() ? 0.0 : s / fold_attacked_acc.size();
}

uint64_t fold_model_seed(uint64_t master, int fold, Arch arch) {
    return mix_seed(master, 0x0f01d + fold * 2 + (arch == Arch::gin0 ? 1 : 0));
}

Dataset load_dataset_for(const ExperimentConfig& cfg) {
    const FeaturePolicy policy = feature_policy_from_string(cfg.feature_policy);
    const fs::path nested = fs::path(cfg.data_root) / cfg.dataset;
    if (fs::exists(nested / (cfg.dataset + "_A.txt")))
        return load_tu_dataset(nested.string(), cfg.dataset, policy);
    return load_tu_dataset(cfg.data_root, cfg.dataset, policy);
}

namespace {

RunOutput run_evasion(const ExperimentConfig& cfg, const Dataset& ds, bool blackbox) {
    cfg.validate();
    const Arch victim_arch = arch_from_string(cfg.arch);
    const Arch surrogate_arch = arch_from_string(blackbox ? cfg.surrogate : cfg.arch);
    const FoldSplit folds = split_folds(ds, cfg.folds, cfg.seed);

    std::vector<FoldWork> work(cfg.folds);
    parallel_folds(cfg.folds, cfg.threads, [&](int f) {
        FoldWork& fw = work[f];
        fw.victim = train(ds, folds, f,
                          train_config_for(cfg, victim_arch, fold_model_seed(cfg.seed, f, victim_arch)));
        const ModelParams* attacker = &fw.victim;
        if (blackbox && !(surrogate_arch == victim_arch)) {
            fw.surrogate = train(
                ds, folds, f,
                train_config_for(cfg, surrogate_arch, fold_model_seed(cfg.seed, f, surrogate_arch)));
            attacker = &fw.surrogate;
        } else if (blackbox) {
            fw.surrogate = fw.victim;
            attacker = &fw.surrogate;
        }

        const auto val = folds.fold_indices(f);
        int clean_correct = 0, attacked_correct = 0;
        const auto t0 = std::chrono::steady_clock::now();
        for (int idx : val) {
            const Graph& g = ds.graphs[idx];
            GraphAttackRecord rec;
            rec.graph_id = g.id;
            rec.fold = f;
            rec.result = attack_one(*attacker, g, cfg, mix_seed(cfg.seed, 0xa77ac + f, g.id));
            rec.victim_pred_clean = predict_class(g, fw.victim);
            rec.victim_pred_attacked = predict_class(rec.result.perturbed_graph(g), fw.victim);
            if (rec.victim_pred_clean == g.label) ++clean_correct;
            if (rec.victim_pred_attacked == g.label) ++attacked_correct;
            fw.records.push_back(std::move(rec));
        }
        fw.attack_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        fw.clean_acc = static_cast<double>(clean_correct) / val.size();
        fw.attacked_acc = static_cast<double>(attacked_correct) / val.size();
    });

    RunOutput out;
    out.table.add(summarize(cfg, ds, work));  // before the records move out
    for (auto& fw : work) {
        out.fold_clean_acc.push_back(fw.clean_acc);
        out.fold_attacked_acc.push_back(fw.attacked_acc);
        out.victim_params.push_back(std::move(fw.victim));
        if (blackbox) out.surrogate_params.push_back(std::move(fw.surrogate));
        for (auto& rec : fw.records) out.records.push_back(std::move(rec));
    }
    return out;
}

}  // namespace

RunOutput run_whitebox(const ExperimentConfig& cfg, const Dataset& ds) {
    return run_evasion(cfg, ds, /*blackbox=*/false);
}

RunOutput run_blackbox(const ExperimentConfig& cfg, const Dataset& ds) {
    return run_evasion(cfg, ds, /*blackbox=*/true);
}

RunOutput run_poison(const ExperimentConfig& cfg, const Dataset& ds) {
    cfg.validate();
    const Arch victim_arch = arch_from_string(cfg.arch);
    const Arch surrogate_arch = arch_from_string(cfg.surrogate);
    const FoldSplit folds = split_folds(ds, cfg.folds, cfg.seed);

    std::vector<FoldWork> work(cfg.folds);
    parallel_folds(cfg.folds, cfg.threads, [&](int f) {
        FoldWork& fw = work[f];
        const auto train_idx = folds.complement_indices(f);
        const auto val_idx = folds.fold_indices(f);
        fw.surrogate = train(
            ds, folds, f,
            train_config_for(cfg, surrogate_arch, fold_model_seed(cfg.seed, f, surrogate_arch)));

        Dataset poisoned = ds;
        const auto t0 = std::chrono::steady_clock::now();
        for (int idx : train_idx) {
            const Graph& g = ds.graphs[idx];
            GraphAttackRecord rec;
            rec.graph_id = g.id;
            rec.fold = f;
            rec.result = attack_one(fw.surrogate, g, cfg, mix_seed(cfg.seed, 0xa77ac + f, g.id));
            rec.victim_pred_clean = predict_class(g, fw.surrogate);
            poisoned.graphs[idx] = rec.result.perturbed_graph(g);
            rec.victim_pred_attacked = predict_class(poisoned.graphs[idx], fw.surrogate);
            fw.records.push_back(std::move(rec));
        }
        fw.attack_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const TrainConfig victim_cfg =
            train_config_for(cfg, victim_arch, fold_model_seed(cfg.seed, f, victim_arch));
        ModelParams poisoned_victim = train_on_indices(poisoned, train_idx, victim_cfg);
        fw.victim = train_on_indices(ds, train_idx, victim_cfg);  // unpoisoned reference
        fw.attacked_acc = evaluate(poisoned_victim, ds, val_idx);
        fw.clean_acc = evaluate(fw.victim, ds, val_idx);
    });

    RunOutput out;
    out.table.add(summarize(cfg, ds, work));  // before the records move out
    for (auto& fw : work) {
        out.fold_clean_acc.push_back(fw.clean_acc);
        out.fold_attacked_acc.push_back(fw.attacked_acc);
        out.victim_params.push_back(std::move(fw.victim));
        out.surrogate_params.push_back(std::move(fw.surrogate));
        for (auto& rec : fw.records) out.records.push_back(std::move(rec));
    }
    return out;
}

std::string flip_log_json(const GraphAttackRecord& rec) {
    json j;
    j["graph_id"] = rec.graph_id;
    j["method"] = rec.result.method;
    j["column_used"] = rec.result.column_used;
    j["success"] = rec.result.success;
    json flips = json::array();
    for (const Flip& f : rec.result.flips)
        flips.push_back(json::array({f.u, f.v, f.add ? "add" : "del"}));
    j["flips"] = flips;
    json deltas = json::array();
    for (const FeatureDelta& d : rec.result.feature_deltas)
        deltas.push_back(json::array({d.node, d.feature, d.delta}));
    j["feature_deltas"] = deltas;
    return j.dump();
}

void emit_results(const RunOutput& out, const ExperimentConfig& cfg, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "flips");
    {
        std::ofstream csv(fs::path(dir) / "results.csv", std::ios::binary);
        if (!csv) throw std::runtime_error("cannot write results.csv under " + dir);
        csv << out.table.to_csv();
    }
    {
        json j = json::parse(out.table.to_json_string());
        j["fold_clean_acc"] = out.fold_clean_acc;
        j["fold_attacked_acc"] = out.fold_attacked_acc;
        std::ofstream js(fs::path(dir) / "results.json", std::ios::binary);
        js << j.dump(2) << "\n";
    }
    {
        std::ofstream cj(fs::path(dir) / "config.resolved.json", std::ios::binary);
        cj << cfg.to_json_string() << "\n";
    }
    for (const auto& rec : out.records) {
        // Evasion attacks touch each graph once; poisoning hits each graph
        // in every fold it trains, so the fold joins the file name there.
        const std::string name = cfg.mode == "poison"
                                     ? "f" + std::to_string(rec.fold) + "_" +
                                           std::to_string(rec.graph_id) + ".json"
                                     : std::to_string(rec.graph_id) + ".json";
        std::ofstream fj(fs::path(dir) / "flips" / name, std::ios::binary);
        fj << flip_log_json(rec) << "\n";
    }
}

}  // namespace cama
