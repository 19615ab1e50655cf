#pragma once

#include <string>
#include <vector>

#include "cama/attack.hpp"
#include "cama/gnn.hpp"
#include "cama/graph.hpp"

namespace cama {

struct ExperimentConfig {
    int version = 1;
    std::string dataset = "MUTAG_SYN";
    std::string data_root = "data";
    std::string feature_policy = "one_hot_label";
    std::string arch = "gcn";       // victim
    std::string surrogate = "gcn";  // attacker model for blackbox / poison
    std::string mode = "whitebox";  // whitebox | blackbox | poison
    std::string method = "cama";    // cama | cama-grad | cama-subgraph | cama-subgraph-grad |
                                    // random | degree | gradargmax | pagerank | betweenness | none
    std::string attack_type = "structure";  // feature | structure

    double edge_frac = 0.10;
    double node_frac = 0.10;
    double feat_frac = 0.10;
    double lambda_mag = 0.1;
    double s1 = 1.0;
    double s2 = 0.95;
    double subgraph_frac = 0.5;
    int epochs_mask = 30;
    double lambda_ent = 1.0;
    double mask_lr = 0.1;

    int folds = 10;
    int epochs = 200;
    double lr = 0.01;
    uint64_t seed = 0;  // master seed: split, init and attacker streams derive from it
    int threads = 0;    // 0 = hardware concurrency
    std::string out_dir = "out";

    void validate() const;  // throws std::invalid_argument on bad values
    std::string to_json_string() const;
    static ExperimentConfig from_json_string(const std::string& text);
    static ExperimentConfig load_file(const std::string& path);
};

struct ResultRow {
    std::string dataset, victim, method, attack_type;
    double clean_acc = 0.0;     // fraction in [0,1]
    double attacked_acc = 0.0;  // fraction in [0,1]
    double change_pp = 0.0;     // (attacked - clean) * 100, negative for drops
    double mean_flips = 0.0;
    double mean_avg_degree_selected = 0.0;
    double sec_per_graph = 0.0;  // emitted in JSON only, never in the CSV
};

struct ResultTable {
    std::vector<ResultRow> rows;  // sorted by (dataset, victim, method, attack_type)

    void add(ResultRow row);
    std::string to_csv() const;
    std::string to_json_string() const;
    static ResultTable from_csv(const std::string& text);
};

struct GraphAttackRecord {
    int graph_id = 0;
    int fold = 0;
    AttackResult result;
    int victim_pred_clean = -1;
    int victim_pred_attacked = -1;
};

struct RunOutput {
    ResultTable table;
    std::vector<GraphAttackRecord> records;        // per validation graph, fold-major order
    std::vector<double> fold_clean_acc;            // per fold
    std::vector<double> fold_attacked_acc;         // per fold
    std::vector<ModelParams> victim_params;        // per fold
    std::vector<ModelParams> surrogate_params;     // per fold (blackbox / poison)

    double mean_clean() const;
    double mean_attacked() const;
};

// Per fold: train the victim on the other folds, attack its validation
// graphs with the victim's own CAM/gradients, evaluate on the perturbed
// graphs; aggregates the 10-fold mean.
RunOutput run_whitebox(const ExperimentConfig& cfg, const Dataset& ds);

// As above, but perturbations come from an independently trained surrogate
// and only the evaluation uses the victim.
RunOutput run_blackbox(const ExperimentConfig& cfg, const Dataset& ds);

// Structure perturbations are generated on the training folds via the
// surrogate; the victim is retrained from scratch on the perturbed training
// graphs and evaluated on the clean validation fold. fold_clean_acc holds
// the unpoisoned reference accuracies from an identical pipeline.
RunOutput run_poison(const ExperimentConfig& cfg, const Dataset& ds);

// results.csv (deterministic columns), results.json (adds sec_per_graph and
// per-fold lists), flips/<graph_id>.json, config.resolved.json.
void emit_results(const RunOutput& out, const ExperimentConfig& cfg, const std::string& dir);

// The flip-log record for one attacked graph.
std::string flip_log_json(const GraphAttackRecord& rec);

// Loads cfg.dataset from cfg.data_root, accepting both layouts
// <root>/<name>/<name>_*.txt and <root>/<name>_*.txt.
Dataset load_dataset_for(const ExperimentConfig& cfg);

// Deterministic helper used by all modes: per-fold model seed.
uint64_t fold_model_seed(uint64_t master, int fold, Arch arch);

}  // namespace cama
