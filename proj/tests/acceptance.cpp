// Acceptance suite: runs every gate criterion end to end and prints one
// PASS/FAIL line per criterion. Exit code is the number of failures.
//
// Dataset resolution: a real MUTAG in TU layout is used when present (env
// CAMA_DATA_ROOT, or <source>/data/MUTAG); otherwise the bundled synthetic
// benchmark of identical scale stands in, and the banner says so.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cama/gradcheck.hpp"
#include "cama/harness.hpp"
#include "cama/synth.hpp"
#include "cama/tu_io.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;
using namespace cama;
using Clock = std::chrono::steady_clock;

namespace {

struct Ctx {
    std::string data_root;
    std::string dataset_name;
    bool stand_in = false;
    Dataset ds;
    int failures = 0;

    std::vector<const RunOutput*> audited_runs;  // criterion 8 input
    std::vector<Dataset const*> audited_ds;

    // seed-1 feature-attack rows reused by criterion 9
    double cama_feature_avg_degree = -1.0;
    bool have_cama_feature_row = false;
};

double now_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

void report(Ctx& ctx, int crit, bool pass, const std::string& what, double secs) {
    std::printf("[%s] criterion %2d: %s (%.1f s)\n", pass ? "PASS" : "FAIL", crit, what.c_str(),
                secs);
    std::fflush(stdout);
    if (!pass) ++ctx.failures;
}

ExperimentConfig base_config(const Ctx& ctx, uint64_t seed) {
    ExperimentConfig cfg;
    cfg.dataset = ctx.dataset_name;
    cfg.data_root = ctx.data_root;
    cfg.seed = seed;
    cfg.threads = 2;
    return cfg;
}

void resolve_dataset(Ctx& ctx) {
    const char* env_root = std::getenv("CAMA_DATA_ROOT");
    std::vector<fs::path> real_candidates;
    if (env_root) real_candidates.push_back(fs::path(env_root));
    real_candidates.push_back(fs::path(CAMA_SOURCE_DIR) / "data");
    for (const auto& root : real_candidates) {
        if (fs::exists(root / "MUTAG" / "MUTAG_A.txt")) {
            ctx.data_root = root.string();
            ctx.dataset_name = "MUTAG";
            ctx.stand_in = false;
            return;
        }
    }
    ctx.stand_in = true;
    ctx.dataset_name = "MUTAG_SYN";
    const fs::path bundled = fs::path(CAMA_SOURCE_DIR) / "data";
    if (fs::exists(bundled / "MUTAG_SYN" / "MUTAG_SYN_A.txt")) {
        ctx.data_root = bundled.string();
        return;
    }
    // last resort: generate into a scratch dir so the loader still runs
    static testutil::TempDir tmp("accept-ds");
    save_tu_dataset(make_synth_benchmark(), (tmp.path / "MUTAG_SYN").string());
    ctx.data_root = tmp.str();
}

// ---------------------------------------------------------------- criterion 1
void criterion1(Ctx& ctx) {
    const auto t0 = Clock::now();
    ExperimentConfig cfg = base_config(ctx, 0);
    ctx.ds = load_dataset_for(cfg);
    const double load_secs = now_between(t0, Clock::now());
    DatasetStats st = graph_stats(ctx.ds);

    const bool pass = st.graph_count == 188 && st.class_count == 2 &&
                      std::fabs(st.mean_nodes - 17.93) <= 0.01 &&
                      std::fabs(st.mean_edges - 19.79) <= 0.01 && load_secs < 1.0;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "dataset fidelity [%s]: %d graphs / %d classes / %.4f mean nodes / %.4f mean edges",
                  ctx.stand_in ? "MUTAG_SYN stand-in; real MUTAG not bundled" : "MUTAG",
                  st.graph_count, st.class_count, st.mean_nodes, st.mean_edges);
    report(ctx, 1, pass, buf, load_secs);
}

// ---------------------------------------------------------------- criterion 2
void criterion2(Ctx& ctx) {
    const auto t0 = Clock::now();
    GradCheckReport rep = run_gradcheck();
    const double secs = now_between(t0, Clock::now());
    const bool pass = rep.ok() && secs < 30.0;
    if (!rep.ok())
        for (const auto& line : rep.messages)
            if (line.find("FAIL") != std::string::npos) std::printf("    %s\n", line.c_str());
    char buf[160];
    std::snprintf(buf, sizeof buf, "gradient oracle: %d finite-difference checks, %d failures",
                  rep.checks, rep.failures);
    report(ctx, 2, pass, buf, secs);
}

// ---------------------------------------------------------------- criterion 3
void criterion3(Ctx& ctx) {
    const auto t0 = Clock::now();
    bool pass = true;
    std::ostringstream detail;
    for (const char* arch : {"gcn", "gin0"}) {
        const double bar = std::string(arch) == "gcn" ? 0.75 : 0.80;
        detail << arch << ":";
        for (uint64_t seed : {1, 2, 3}) {
            ExperimentConfig cfg = base_config(ctx, seed);
            cfg.arch = arch;
            cfg.method = "none";
            RunOutput out = run_whitebox(cfg, ctx.ds);
            const double mean = out.mean_clean();
            detail << " " << std::fixed << std::setprecision(3) << mean;
            if (mean < bar) pass = false;
        }
        detail << (std::string(arch) == "gcn" ? " (need >=0.75)" : " (need >=0.80)") << "  ";
    }
    const double secs = now_between(t0, Clock::now());
    if (secs >= 300.0) pass = false;
    report(ctx, 3, pass, "clean training, 3 seeds: " + detail.str(), secs);
}

// ---------------------------------------------------------------- criterion 4
std::vector<RunOutput> g_kept;  // keeps run outputs alive for criterion 8

const RunOutput& run_and_keep(Ctx& ctx, const ExperimentConfig& cfg, std::vector<RunOutput>& store) {
    RunOutput out = cfg.mode == "poison"    ? run_poison(cfg, ctx.ds)
                    : cfg.mode == "blackbox" ? run_blackbox(cfg, ctx.ds)
                                             : run_whitebox(cfg, ctx.ds);
    store.push_back(std::move(out));
    ctx.audited_runs.push_back(&store.back());
    ctx.audited_ds.push_back(&ctx.ds);
    return store.back();
}

void criterion4(Ctx& ctx) {
    const auto t0 = Clock::now();
    g_kept.reserve(32);  // pointers into g_kept must stay valid for criterion 8

    ExperimentConfig cfg = base_config(ctx, 1);
    cfg.attack_type = "feature";
    cfg.method = "cama";
    const RunOutput& cama = run_and_keep(ctx, cfg, g_kept);
    cfg.method = "random";
    const RunOutput& random = run_and_keep(ctx, cfg, g_kept);

    const double drop_cama = (cama.mean_clean() - cama.mean_attacked()) * 100.0;
    const double drop_random = (random.mean_clean() - random.mean_attacked()) * 100.0;
    ctx.cama_feature_avg_degree = cama.table.rows[0].mean_avg_degree_selected;
    ctx.have_cama_feature_row = true;

    const double secs = now_between(t0, Clock::now());
    const bool pass = drop_cama >= 5.0 && drop_cama > drop_random && secs < 300.0;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "white-box feature attack gcn: cama drop %.2f pp (need >=5), random %.2f pp",
                  drop_cama, drop_random);
    report(ctx, 4, pass, buf, secs);
}

// ---------------------------------------------------------------- criterion 5
void criterion5(Ctx& ctx) {
    const auto t0 = Clock::now();
    bool pass = true;
    std::ostringstream detail;
    for (uint64_t seed : {1, 2, 3}) {
        ExperimentConfig cfg = base_config(ctx, seed);
        cfg.attack_type = "structure";
        cfg.method = "cama";
        const RunOutput& cama = run_and_keep(ctx, cfg, g_kept);
        cfg.method = "cama-subgraph";
        const RunOutput& sub = run_and_keep(ctx, cfg, g_kept);
        cfg.method = "random";
        const RunOutput& rnd = run_and_keep(ctx, cfg, g_kept);
        const double d_cama = (cama.mean_clean() - cama.mean_attacked()) * 100.0;
        const double d_sub = (sub.mean_clean() - sub.mean_attacked()) * 100.0;
        const double d_rnd = (rnd.mean_clean() - rnd.mean_attacked()) * 100.0;
        detail << "s" << seed << "[sub " << std::fixed << std::setprecision(2) << d_sub << " cama "
               << d_cama << " rnd " << d_rnd << "] ";
        if (!(d_cama >= 5.0 && d_sub >= 15.0 && d_sub > d_cama && d_cama > d_rnd)) pass = false;
    }
    const double secs = now_between(t0, Clock::now());
    if (secs >= 900.0) pass = false;
    report(ctx, 5, pass,
           "white-box structure attacks gcn (need cama>=5, subgraph>=15, sub>cama>random): " +
               detail.str(),
           secs);
}

// ---------------------------------------------------------------- criterion 6
void criterion6(Ctx& ctx) {
    const auto t0 = Clock::now();
    ExperimentConfig cfg = base_config(ctx, 1);
    cfg.mode = "blackbox";
    cfg.arch = "gin0";
    cfg.surrogate = "gcn";
    cfg.attack_type = "structure";
    cfg.method = "cama";
    const RunOutput& out = run_and_keep(ctx, cfg, g_kept);
    const double drop = (out.mean_clean() - out.mean_attacked()) * 100.0;
    const double secs = now_between(t0, Clock::now());
    const bool pass = drop >= 15.0 && secs < 900.0;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "black-box transfer gcn->gin0 structure cama: drop %.2f pp (need >=15)", drop);
    report(ctx, 6, pass, buf, secs);
}

// ---------------------------------------------------------------- criterion 7
void criterion7(Ctx& ctx) {
    const auto t0 = Clock::now();
    bool pass = true;
    std::ostringstream detail;
    for (uint64_t seed : {1, 2, 3}) {
        ExperimentConfig cfg = base_config(ctx, seed);
        cfg.mode = "poison";
        cfg.arch = "gin0";
        cfg.surrogate = "gcn";
        cfg.attack_type = "structure";
        cfg.method = "cama";
        const RunOutput& out = run_and_keep(ctx, cfg, g_kept);
        if (out.fold_attacked_acc.size() != 10) pass = false;
        const double poisoned = out.mean_attacked(), clean = out.mean_clean();
        detail << "s" << seed << "[" << std::fixed << std::setprecision(4) << poisoned << " vs "
               << clean << "] ";
        if (!(poisoned < clean)) pass = false;
    }
    const double secs = now_between(t0, Clock::now());
    report(ctx, 7, pass,
           "poisoning gin0 via gcn-surrogate cama (poisoned mean < clean mean, 3 seeds): " +
               detail.str(),
           secs);
}

// ---------------------------------------------------------------- criterion 8
void criterion8(Ctx& ctx) {
    const auto t0 = Clock::now();
    long checked = 0, violations = 0;
    std::string first;
    for (size_t i = 0; i < ctx.audited_runs.size(); ++i) {
        const RunOutput* run = ctx.audited_runs[i];
        const Dataset* ds = ctx.audited_ds[i];
        for (const auto& rec : run->records) {
            ++checked;
            auto bad = audit_attack(ds->graphs[rec.graph_id], rec.result);
            if (!bad.empty()) {
                violations += static_cast<long>(bad.size());
                if (first.empty()) first = bad.front();
            }
        }
    }
    const double secs = now_between(t0, Clock::now());
    char buf[240];
    std::snprintf(buf, sizeof buf,
                  "budget/validity audit over %ld attack records from criteria 4-7: %ld violations%s%s",
                  checked, violations, first.empty() ? "" : " e.g. ", first.c_str());
    report(ctx, 8, violations == 0 && checked > 0, buf, secs);
}

// ---------------------------------------------------------------- criterion 9
void criterion9(Ctx& ctx) {
    const auto t0 = Clock::now();
    ExperimentConfig cfg = base_config(ctx, 1);
    cfg.attack_type = "feature";
    cfg.method = "degree";
    const RunOutput& deg = run_and_keep(ctx, cfg, g_kept);
    const double deg_avg = deg.table.rows[0].mean_avg_degree_selected;
    const double cama_avg = ctx.cama_feature_avg_degree;
    const double secs = now_between(t0, Clock::now());
    const bool pass = ctx.have_cama_feature_row && cama_avg < deg_avg;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "localization: cama mean selected-node degree %.4f < degree baseline %.4f",
                  cama_avg, deg_avg);
    report(ctx, 9, pass, buf, secs);
}

// --------------------------------------------------------------- criterion 10
void criterion10(Ctx& ctx) {
    const auto t0 = Clock::now();
    Rng rng(4242);
    bool pass = true;
    long checked = 0;
    for (int it = 0; it < 1000 && pass; ++it) {
        const int n = 1 + static_cast<int>(rng.next_below(20));
        const int c = 1 + static_cast<int>(rng.next_below(4));
        HeatMap h = testutil::random_heatmap(n, c, rng);
        auto cols = column_rank(h);
        for (int col = 0; col < c && pass; ++col) {
            if (cols[col] != testutil::oracle_column_rank(h, col)) pass = false;
            if (!testutil::is_permutation_of_n(cols[col], n)) pass = false;
            for (int i = 0; i + 1 < n; ++i)
                if (h(cols[col][i], col) < h(cols[col][i + 1], col)) pass = false;
            // tie rule: equal heats keep ascending ids
            for (int i = 0; i + 1 < n; ++i)
                if (h(cols[col][i], col) == h(cols[col][i + 1], col) &&
                    cols[col][i] > cols[col][i + 1])
                    pass = false;
        }
        if (global_rank(h) != testutil::oracle_global_rank(h)) pass = false;
        RankedCamMatrix ranked = ranked_cam_matrix(h);
        if (ranked.num_columns() != c + 1) pass = false;
        for (int col = 0; col <= c; ++col)
            if (!testutil::is_permutation_of_n(ranked.column(col), n)) pass = false;
        ++checked;
    }
    const double secs = now_between(t0, Clock::now());
    pass = pass && secs < 10.0 && checked == 1000;
    char buf[160];
    std::snprintf(buf, sizeof buf, "ranking oracles on %ld random heat maps (n<=20, C<=4)", checked);
    report(ctx, 10, pass, buf, secs);
}

// --------------------------------------------------------------- criterion 11
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return "<missing " + p.string() + ">";
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion11(Ctx& ctx) {
    const auto t0 = Clock::now();
    testutil::TempDir out1("accept-det1"), out2("accept-det2");
    const std::string common = std::string(CAMA_CLI_PATH) + " attack --dataset " + ctx.dataset_name +
                               " --data-root " + ctx.data_root +
                               " --arch gcn --method cama --attack-type structure --seed 1 "
                               "--threads 2 --out ";
    const int rc1 = std::system((common + out1.str() + " > /dev/null 2>&1").c_str());
    const int rc2 = std::system((common + out2.str() + " > /dev/null 2>&1").c_str());
    bool pass = WEXITSTATUS(rc1) == 0 && WEXITSTATUS(rc2) == 0;
    long files = 0;
    if (pass) {
        pass = slurp(out1.path / "results.csv") == slurp(out2.path / "results.csv");
        for (const auto& entry : fs::directory_iterator(out1.path / "flips")) {
            ++files;
            const auto other = out2.path / "flips" / entry.path().filename();
            if (slurp(entry.path()) != slurp(other)) pass = false;
        }
        if (files == 0) pass = false;
    }
    const double secs = now_between(t0, Clock::now());
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "determinism: two identical cli attack runs, results.csv + %ld flip logs byte-identical",
                  files);
    report(ctx, 11, pass, buf, secs);
}

}  // namespace

int main() {
    Ctx ctx;
    resolve_dataset(ctx);
    std::printf("acceptance suite — dataset: %s at %s%s\n", ctx.dataset_name.c_str(),
                ctx.data_root.c_str(),
                ctx.stand_in ? " (synthetic stand-in at MUTAG scale; provide real MUTAG via "
                               "CAMA_DATA_ROOT or data/MUTAG to run against it)"
                             : "");
    std::fflush(stdout);

    criterion1(ctx);
    criterion2(ctx);
    criterion3(ctx);
    criterion4(ctx);
    criterion5(ctx);
    criterion6(ctx);
    criterion7(ctx);
    criterion8(ctx);
    criterion9(ctx);
    criterion10(ctx);
    criterion11(ctx);

    std::printf("%d of 11 criteria passed\n", 11 - ctx.failures);
    return ctx.failures;
}
