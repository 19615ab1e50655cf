#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "cama/gradcheck.hpp"
#include "cama/harness.hpp"
#include "cama/synth.hpp"
#include "cama/tu_io.hpp"

namespace fs = std::filesystem;
using namespace cama;

namespace {

struct CliState {
    std::string config_path;
    ExperimentConfig cfg;

    // optional overrides captured from flags
    std::optional<std::string> dataset, data_root, feature_policy, arch, surrogate, method,
        attack_type, out_dir;
    std::optional<double> edge_frac, node_frac, feat_frac, lambda, s1, s2, subgraph_frac, lambda_ent,
        mask_lr, lr;
    std::optional<int> epochs_mask, folds, epochs, threads;
    std::optional<uint64_t> seed;

    void add_common(CLI::App* app) {
        app->add_option("--config", config_path, "JSON config file; flags override its values");
        app->add_option("--dataset", dataset, "dataset name (TU file prefix)");
        app->add_option("--data-root", data_root, "directory holding the dataset");
        app->add_option("--feature-policy", feature_policy,
                        "one_hot_label | label_plus_attributes | scalar_degree");
        app->add_option("--arch", arch, "victim architecture: gcn | gin0");
        app->add_option("--surrogate", surrogate, "surrogate architecture: gcn | gin0");
        app->add_option("--method", method,
                        "cama | cama-grad | cama-subgraph | cama-subgraph-grad | random | degree | "
                        "gradargmax | pagerank | betweenness | none");
        app->add_option("--attack-type", attack_type, "feature | structure");
        app->add_option("--edge-frac", edge_frac, "structure budget fraction of |E|");
        app->add_option("--node-frac", node_frac, "feature budget fraction of nodes");
        app->add_option("--feat-frac", feat_frac, "feature budget fraction of dimensions");
        app->add_option("--lambda", lambda, "feature noise magnitude");
        app->add_option("--s1", s1, "similarity threshold for edge insertion");
        app->add_option("--s2", s2, "similarity threshold for edge deletion");
        app->add_option("--subgraph-frac", subgraph_frac, "subgraph proportion for the mask attack");
        app->add_option("--epochs-mask", epochs_mask, "mask training epochs");
        app->add_option("--lambda-ent", lambda_ent, "entropy loss weight");
        app->add_option("--mask-lr", mask_lr, "mask optimizer step size");
        app->add_option("--folds", folds, "cross-validation folds");
        app->add_option("--epochs", epochs, "training epochs");
        app->add_option("--lr", lr, "training step size");
        app->add_option("--seed", seed, "master seed (split, init, random attacker)");
        app->add_option("--threads", threads, "worker threads (0 = hardware)");
        app->add_option("--out", out_dir, "output directory");
    }

    ExperimentConfig resolve(const std::string& mode) {
        ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load_file(config_path);
        auto ov = [](auto& opt, auto& field) {
            if (opt) field = *opt;
        };
        ov(dataset, c.dataset);
        ov(data_root, c.data_root);
        ov(feature_policy, c.feature_policy);
        ov(arch, c.arch);
        ov(surrogate, c.surrogate);
        ov(method, c.method);
        ov(attack_type, c.attack_type);
        ov(edge_frac, c.edge_frac);
        ov(node_frac, c.node_frac);
        ov(feat_frac, c.feat_frac);
        ov(lambda, c.lambda_mag);
        ov(s1, c.s1);
        ov(s2, c.s2);
        ov(subgraph_frac, c.subgraph_frac);
        ov(epochs_mask, c.epochs_mask);
        ov(lambda_ent, c.lambda_ent);
        ov(mask_lr, c.mask_lr);
        ov(folds, c.folds);
        ov(epochs, c.epochs);
        ov(lr, c.lr);
        ov(seed, c.seed);
        ov(threads, c.threads);
        ov(out_dir, c.out_dir);
        c.mode = mode;
        c.validate();
        return c;
    }
};

// Dataset problems (missing path, corrupt files) are usage errors: exit 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Dataset load_or_usage(const ExperimentConfig& cfg) {
    try {
        return load_dataset_for(cfg);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

int do_train(const ExperimentConfig& cfg) {
    Dataset ds = load_or_usage(cfg);
    const Arch arch = arch_from_string(cfg.arch);
    FoldSplit folds = split_folds(ds, cfg.folds, cfg.seed);
    fs::create_directories(cfg.out_dir);

    std::vector<double> accs(cfg.folds);
    for (int f = 0; f < cfg.folds; ++f) {
        TrainConfig tc;
        tc.arch = arch;
        tc.epochs = cfg.epochs;
        tc.lr = cfg.lr;
        tc.seed = fold_model_seed(cfg.seed, f, arch);
        ModelParams params = train(ds, folds, f, tc);
        accs[f] = evaluate(params, ds, folds.fold_indices(f));
        save_model(params, (fs::path(cfg.out_dir) / ("model_f" + std::to_string(f) + ".json")).string());
        std::printf("fold %d: validation accuracy %.4f\n", f, accs[f]);
    }
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= cfg.folds;
    std::printf("%s on %s: mean validation accuracy %.4f over %d folds\n", cfg.arch.c_str(),
                cfg.dataset.c_str(), mean, cfg.folds);
    return 0;
}

int do_run(const ExperimentConfig& cfg) {
    Dataset ds = load_or_usage(cfg);
    RunOutput out;
    if (cfg.mode == "whitebox")
        out = run_whitebox(cfg, ds);
    else if (cfg.mode == "blackbox")
        out = run_blackbox(cfg, ds);
    else
        out = run_poison(cfg, ds);
    emit_results(out, cfg, cfg.out_dir);
    std::printf("%s", out.table.to_csv().c_str());
    std::printf("outputs written to %s\n", cfg.out_dir.c_str());
    return 0;
}

int do_stats(const ExperimentConfig& cfg) {
    Dataset ds = load_or_usage(cfg);
    DatasetStats st = graph_stats(ds);
    std::printf("%s: %d graphs / %d classes / %.2f mean nodes / %.2f mean edges\n", cfg.dataset.c_str(),
                st.graph_count, st.class_count, st.mean_nodes, st.mean_edges);
    return 0;
}

int do_gradcheck() {
    GradCheckReport rep = run_gradcheck();
    for (const auto& line : rep.messages) std::printf("%s\n", line.c_str());
    std::printf("%d checks, %d failures\n", rep.checks, rep.failures);
    return rep.ok() ? 0 : 1;
}

int do_synth(const std::string& name, uint64_t seed, const std::string& out) {
    SynthSpec spec;
    spec.name = name;
    spec.seed = seed;
    Dataset ds = make_synth_benchmark(spec);
    const fs::path dir = fs::path(out) / name;
    save_tu_dataset(ds, dir.string());
    DatasetStats st = graph_stats(ds);
    std::printf("wrote %s: %d graphs / %d classes / %.2f mean nodes / %.2f mean edges\n",
                dir.string().c_str(), st.graph_count, st.class_count, st.mean_nodes, st.mean_edges);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-classification robustness toolkit: trains small GNNs and attacks them with "
                 "CAM-guided feature and structure perturbations"};
    app.require_subcommand(1);

    CliState st;
    auto* train_cmd = app.add_subcommand("train", "train per-fold victim models and report accuracy");
    auto* attack_cmd = app.add_subcommand("attack", "white-box evasion attack over validation folds");
    auto* transfer_cmd =
        app.add_subcommand("transfer", "black-box transfer: surrogate generates, victim evaluates");
    auto* poison_cmd =
        app.add_subcommand("poison", "poison training folds via surrogate and retrain the victim");
    auto* stats_cmd = app.add_subcommand("stats", "print dataset statistics");
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference checks of the autodiff engine");
    auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic benchmark dataset");
    for (auto* c : {train_cmd, attack_cmd, transfer_cmd, poison_cmd, stats_cmd}) st.add_common(c);

    std::string synth_name = "MUTAG_SYN", synth_out = "data";
    uint64_t synth_seed = 7;
    synth_cmd->add_option("--name", synth_name, "dataset name / file prefix");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");
    synth_cmd->add_option("--out", synth_out, "parent directory for the dataset folder");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (grad_cmd->parsed()) return do_gradcheck();
        if (synth_cmd->parsed()) return do_synth(synth_name, synth_seed, synth_out);

        std::string mode = "whitebox";
        if (transfer_cmd->parsed()) mode = "blackbox";
        if (poison_cmd->parsed()) mode = "poison";

        ExperimentConfig cfg;
        try {
            cfg = st.resolve(mode);
        } catch (const std::exception& e) {
            std::cerr << "config error: " << e.what() << "\n\n" << app.help() << "\n";
            return 2;
        }

        if (train_cmd->parsed()) return do_train(cfg);
        if (stats_cmd->parsed()) return do_stats(cfg);
        if (attack_cmd->parsed() || transfer_cmd->parsed() || poison_cmd->parsed()) return do_run(cfg);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
