#include "cama/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "cama/centrality.hpp"
#include "cama/rng.hpp"

namespace cama {

Budget Budget::for_graph(const Graph& g, double edge_frac, double node_frac, double feat_frac,
                         double lambda) {
    Budget b;
    b.delta_edges = std::max(1, static_cast<int>(std::ceil(edge_frac * g.edge_count())));
    b.r_nodes = std::max(1, static_cast<int>(std::ceil(node_frac * g.n)));
    b.k_features = std::max(1, static_cast<int>(std::ceil(feat_frac * g.features.cols())));
    b.lambda_mag = lambda;
    return b;
}

Graph AttackResult::perturbed_graph(const Graph& clean) const {
    Graph g = clean;
    if (structural) {
        g.edges = perturbed_edges;
        g.rebuild_degrees();
    } else {
        g.features = perturbed_features;
    }
    g.check_valid();
    return g;
}

Matrix similarity_matrix(const ForwardTrace& trace) {
    const Matrix& h = trace.tape->value(trace.hidden.front());
    const int n = h.rows();
    std::vector<double> norm(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < h.cols(); ++j) s += h(i, j) * h(i, j);
        norm[i] = std::sqrt(s);
    }
    Matrix sim(n, n);
    for (int u = 0; u < n; ++u) {
        sim(u, u) = norm[u] > 0.0 ? 1.0 : 0.0;
        for (int v = u + 1; v < n; ++v) {
            double dot = 0.0;
            for (int j = 0; j < h.cols(); ++j) dot += h(u, j) * h(v, j);
            const double d = norm[u] * norm[v];
            const double c = d > 0.0 ? dot / d : 0.0;
            sim(u, v) = c;
            sim(v, u) = c;
        }
    }
    return sim;
}

std::vector<double> feature_noise(const ModelParams& params, const Graph& g, int k, double lambda) {
    const int d = g.features.cols();
    if (k > d) throw std::invalid_argument("feature_noise: k exceeds feature dimension");
    TraceOptions opt;
    opt.grad_features = true;
    ForwardTrace tr = forward(g, params, opt);
    Tape::Ref loss = tr.tape->softmax_cross_entropy(tr.logits, g.label);
    tr.tape->backward(loss);
    const Matrix gx = tr.tape->grad_of(tr.x);

    std::vector<double> col_grad(d, 0.0);
    for (int i = 0; i < gx.rows(); ++i)
        for (int j = 0; j < d; ++j) col_grad[j] += gx(i, j);

    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::fabs(col_grad[a]) > std::fabs(col_grad[b]); });

    std::vector<double> eps(d, 0.0);
    for (int t = 0; t < k; ++t) {
        const int j = order[t];
        eps[j] = lambda * (col_grad[j] >= 0.0 ? 1.0 : -1.0);  // sign(0) := +1
    }
    return eps;
}

namespace {

bool misclassifies(const ModelParams& params, const Matrix& features, const Matrix& adjacency,
                   int label) {
    return argmax_class(predict_logits(features, adjacency, params)) != label;
}

AttackResult skipped_result(const Graph& g, const std::string& method, bool structural,
                            const Budget& budget) {
    AttackResult r;
    r.method = method;
    r.structural = structural;
    r.skipped = true;
    r.success = false;
    r.budget = budget;
    if (structural)
        r.perturbed_edges = g.edges;
    else
        r.perturbed_features = g.features;
    return r;
}

Matrix apply_feature_noise(const Matrix& features, const std::vector<int>& nodes,
                           const std::vector<double>& eps) {
    Matrix out = features;
    for (int u : nodes)
        for (int j = 0; j < out.cols(); ++j) out(u, j) += eps[j];
    return out;
}

void record_feature_deltas(AttackResult& r, const std::vector<int>& nodes,
                           const std::vector<double>& eps) {
    r.feature_deltas.clear();
    for (int u : nodes)
        for (int j = 0; j < static_cast<int>(eps.size()); ++j)
            if (eps[j] != 0.0) r.feature_deltas.push_back({u, j, eps[j]});
}

std::vector<Edge> edges_with_flips(const Graph& g, const std::vector<Flip>& flips) {
    std::set<Edge> edges(g.edges.begin(), g.edges.end());
    for (const Flip& f : flips) {
        Edge e{f.u, f.v};
        if (f.add)
            edges.insert(e);
        else
            edges.erase(e);
    }
    return {edges.begin(), edges.end()};
}

Matrix adjacency_of(const std::vector<Edge>& edges, int n) {
    Matrix a(n, n);
    for (const auto& [u, v] : edges) {
        a(u, v) = 1.0;
        a(v, u) = 1.0;
    }
    return a;
}

}  // namespace

AttackResult feature_attack_on_nodes(const ModelParams& params, const Graph& g,
                                     const std::vector<int>& nodes, const Budget& budget,
                                     const std::string& method) {
    if (misclassifies(params, g.features, g.adjacency_matrix(), g.label))
        return skipped_result(g, method, /*structural=*/false, budget);
    const auto eps = feature_noise(params, g, budget.k_features, budget.lambda_mag);
    AttackResult r;
    r.method = method;
    r.structural = false;
    r.budget = budget;
    r.selected_nodes = nodes;
    r.perturbed_features = apply_feature_noise(g.features, nodes, eps);
    record_feature_deltas(r, nodes, eps);
    r.success = misclassifies(params, r.perturbed_features, g.adjacency_matrix(), g.label);
    return r;
}

AttackResult feature_attack(const ModelParams& params, const Graph& g, const RankedCamMatrix& ranked,
                            const Budget& budget, const std::string& method) {
    if (misclassifies(params, g.features, g.adjacency_matrix(), g.label))
        return skipped_result(g, method, /*structural=*/false, budget);

    const auto eps = feature_noise(params, g, budget.k_features, budget.lambda_mag);
    const Matrix adjacency = g.adjacency_matrix();
    const int r_nodes = std::min(budget.r_nodes, g.n);

    AttackResult r;
    r.method = method;
    r.structural = false;
    r.budget = budget;
    for (int c = 0; c < ranked.num_columns(); ++c) {
        const auto& col = ranked.column(c);
        std::vector<int> nodes(col.begin(), col.begin() + r_nodes);
        r.perturbed_features = apply_feature_noise(g.features, nodes, eps);
        r.selected_nodes = nodes;
        r.column_used = c;
        r.column_order = col;
        record_feature_deltas(r, nodes, eps);
        if (misclassifies(params, r.perturbed_features, adjacency, g.label)) {
            r.success = true;
            return r;
        }
    }
    r.success = false;
    return r;
}

std::vector<Flip> structure_flips_for_column(const Graph& g, const std::vector<int>& column,
                                             int delta_edges, const Matrix& sim,
                                             const SimilarityConstraint& sc) {
    std::vector<Flip> flips;
    if (column.empty() || delta_edges <= 0) return flips;
    int remaining = delta_edges;
    std::vector<int> targets{column[0]};
    for (size_t i = 1; i < column.size() && remaining > 0; ++i) {
        const int u = column[i];
        for (int v : targets) {
            const bool present = g.has_edge(u, v);
            const bool ok = present ? sim(u, v) >= sc.s2 : sim(u, v) <= sc.s1;
            if (!ok) continue;
            flips.push_back({std::min(u, v), std::max(u, v), !present});
            if (--remaining == 0) break;
        }
        targets.push_back(u);
    }
    return flips;
}

AttackResult cama_structure(const ModelParams& params, const Graph& g, const RankedCamMatrix& ranked,
                            const Budget& budget, const SimilarityConstraint& sc,
                            const std::string& method) {
    if (misclassifies(params, g.features, g.adjacency_matrix(), g.label))
        return skipped_result(g, method, /*structural=*/true, budget);

    ForwardTrace tr = forward(g, params);
    const Matrix sim = similarity_matrix(tr);

    AttackResult r;
    r.method = method;
    r.structural = true;
    r.budget = budget;
    r.sim = sc;
    r.sim_matrix = sim;
    for (int c = 0; c < ranked.num_columns(); ++c) {
        r.flips = structure_flips_for_column(g, ranked.column(c), budget.delta_edges, sim, sc);
        r.perturbed_edges = edges_with_flips(g, r.flips);
        r.flips_used = static_cast<int>(r.flips.size());
        r.column_used = c;
        r.column_order = ranked.column(c);
        if (misclassifies(params, g.features, adjacency_of(r.perturbed_edges, g.n), g.label)) {
            r.success = true;
            return r;
        }
    }
    r.success = false;
    return r;
}

AttackResult cama_subgraph(const ModelParams& params, const Graph& g,
                           const std::vector<int>& predicted_column, const Budget& budget,
                           const MaskOptConfig& opt, const std::string& method) {
    const Matrix clean_adj = g.adjacency_matrix();
    if (misclassifies(params, g.features, clean_adj, g.label))
        return skipped_result(g, method, /*structural=*/true, budget);

    int n_sub = static_cast<int>(std::floor(opt.subgraph_fraction * g.n));
    std::vector<int> v_sub;
    if (n_sub < 2) {
        v_sub.resize(g.n);  // too few candidates: fall back to the whole graph
        std::iota(v_sub.begin(), v_sub.end(), 0);
    } else {
        v_sub.assign(predicted_column.begin(), predicted_column.begin() + n_sub);
    }
    std::sort(v_sub.begin(), v_sub.end());

    std::vector<std::pair<int, int>> pairs;
    for (size_t i = 0; i < v_sub.size(); ++i)
        for (size_t j = i + 1; j < v_sub.size(); ++j) pairs.emplace_back(v_sub[i], v_sub[j]);
    const int num_pairs = static_cast<int>(pairs.size());

    Matrix flip_dir(g.n, g.n);  // 1 - 2a
    for (int u = 0; u < g.n; ++u)
        for (int v = 0; v < g.n; ++v) flip_dir(u, v) = 1.0 - 2.0 * clean_adj(u, v);

    AttackResult r;
    r.method = method;
    r.structural = true;
    r.budget = budget;
    r.v_sub = v_sub;
    r.column_order = predicted_column;

    Matrix mask(num_pairs, 1);
    Matrix m1(num_pairs, 1), m2(num_pairs, 1);
    const int flips_per_epoch = std::min(budget.delta_edges, num_pairs);

    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        Tape tape;
        Tape::Ref mask_leaf = tape.leaf(mask, true);
        Tape::Ref spread = tape.scatter_pairs(tape.sigmoid(mask_leaf), pairs, g.n);
        Tape::Ref relaxed =
            tape.add(tape.constant(clean_adj), tape.hadamard(tape.constant(flip_dir), spread));
        Tape::Ref x = tape.constant(g.features);
        ForwardTrace tr = forward_on_tape(tape, nullptr, params, x, relaxed, false);
        Tape::Ref l_cw = tape.cw_margin(tr.logits, g.label);
        Tape::Ref l_ent = tape.entropy_mean(mask_leaf);
        Tape::Ref l_atk = tape.add(l_cw, tape.scalar_mul(l_ent, opt.lambda_ent));

        const double cw = tape.value(l_cw)(0, 0), ent = tape.value(l_ent)(0, 0);
        r.epoch_cw.push_back(cw);
        r.epoch_ent.push_back(ent);
        if (!std::isfinite(cw) || !std::isfinite(ent))
            throw std::runtime_error("cama_subgraph: non-finite attack loss at epoch " +
                                     std::to_string(epoch) + " (cw=" + std::to_string(cw) +
                                     ", ent=" + std::to_string(ent) + ")");

        tape.backward(l_atk);
        const Matrix grad = tape.grad_of(mask_leaf);
        const double bc1 = 1.0 - std::pow(opt.beta1, epoch);
        const double bc2 = 1.0 - std::pow(opt.beta2, epoch);
        for (int p = 0; p < num_pairs; ++p) {
            m1(p, 0) = opt.beta1 * m1(p, 0) + (1.0 - opt.beta1) * grad(p, 0);
            m2(p, 0) = opt.beta2 * m2(p, 0) + (1.0 - opt.beta2) * grad(p, 0) * grad(p, 0);
            mask(p, 0) -= opt.lr * (m1(p, 0) / bc1) / (std::sqrt(m2(p, 0) / bc2) + opt.adam_eps);
        }

        // Discretize: the first epoch exploits the highest-sigmoid pairs;
        // later epochs sample delta distinct pairs with probability
        // proportional to sigma(m), which keeps the per-epoch candidate sets
        // diverse. The stream derives only from the graph and epoch, so the
        // attack stays a deterministic function of (params, graph, config).
        std::vector<int> chosen;
        if (epoch == 1) {
            std::vector<int> order(num_pairs);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](int a, int b) { return mask(a, 0) > mask(b, 0); });
            chosen.assign(order.begin(), order.begin() + flips_per_epoch);
        } else {
            Rng draw(mix_seed(0x5ab6'9a11u, static_cast<uint64_t>(g.id), static_cast<uint64_t>(epoch)));
            std::vector<double> weight(num_pairs);
            for (int p2 = 0; p2 < num_pairs; ++p2) weight[p2] = 1.0 / (1.0 + std::exp(-mask(p2, 0)));
            for (int take = 0; take < flips_per_epoch; ++take) {
                double total = 0.0;
                for (double w : weight) total += w;
                double roll = draw.next_double() * total;
                int pick = -1;
                for (int p2 = 0; p2 < num_pairs; ++p2) {
                    if (weight[p2] <= 0.0) continue;
                    roll -= weight[p2];
                    pick = p2;
                    if (roll <= 0.0) break;
                }
                chosen.push_back(pick);
                weight[pick] = 0.0;
            }
        }
        r.flips.clear();
        for (int p2 : chosen) {
            const auto [u, v] = pairs[p2];
            r.flips.push_back({u, v, !g.has_edge(u, v)});
        }
        std::sort(r.flips.begin(), r.flips.end(),
                  [](const Flip& a, const Flip& b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
        r.perturbed_edges = edges_with_flips(g, r.flips);
        r.flips_used = flips_per_epoch;
        if (misclassifies(params, g.features, adjacency_of(r.perturbed_edges, g.n), g.label)) {
            r.success = true;
            return r;
        }
    }
    r.success = false;
    return r;
}

std::vector<int> random_nodes(const Graph& g, int r, uint64_t seed) {
    if (r > g.n) throw std::invalid_argument("random_nodes: r exceeds node count");
    std::vector<int> ids(g.n);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(mix_seed(seed, 0x5e1ec7u));
    rng.shuffle(ids);
    ids.resize(r);
    return ids;
}

std::vector<int> degree_nodes(const Graph& g, int r) {
    if (r > g.n) throw std::invalid_argument("degree_nodes: r exceeds node count");
    std::vector<double> score(g.degree.begin(), g.degree.end());
    return top_k_by_score(score, r);
}

std::vector<int> pagerank_nodes(const Graph& g, int r) {
    if (r > g.n) throw std::invalid_argument("pagerank_nodes: r exceeds node count");
    return top_k_by_score(pagerank_scores(g), r);
}

std::vector<int> betweenness_nodes(const Graph& g, int r) {
    if (r > g.n) throw std::invalid_argument("betweenness_nodes: r exceeds node count");
    return top_k_by_score(betweenness_scores(g), r);
}

namespace {

AttackResult finish_structure_oneshot(const ModelParams& params, const Graph& g,
                                      std::vector<Flip> flips, const Budget& budget,
                                      const std::string& method) {
    AttackResult r;
    r.method = method;
    r.structural = true;
    r.budget = budget;
    std::sort(flips.begin(), flips.end(),
              [](const Flip& a, const Flip& b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
    r.flips = std::move(flips);
    r.flips_used = static_cast<int>(r.flips.size());
    r.perturbed_edges = edges_with_flips(g, r.flips);
    r.success = misclassifies(params, g.features, adjacency_of(r.perturbed_edges, g.n), g.label);
    return r;
}

}  // namespace

AttackResult random_flips(const ModelParams& params, const Graph& g, int delta_edges, uint64_t seed) {
    const long total_pairs = static_cast<long>(g.n) * (g.n - 1) / 2;
    Budget b;
    b.delta_edges = delta_edges;
    if (misclassifies(params, g.features, g.adjacency_matrix(), g.label))
        return skipped_result(g, "random", true, b);
    if (delta_edges > total_pairs)
        throw std::invalid_argument("random_flips: budget exceeds the number of node pairs");
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(total_pairs);
    for (int u = 0; u < g.n; ++u)
        for (int v = u + 1; v < g.n; ++v) pairs.emplace_back(u, v);
    Rng rng(mix_seed(seed, 0xf11b5u));
    rng.shuffle(pairs);
    std::vector<Flip> flips;
    for (int t = 0; t < delta_edges; ++t) {
        auto [u, v] = pairs[t];
        flips.push_back({u, v, !g.has_edge(u, v)});
    }
    return finish_structure_oneshot(params, g, std::move(flips), b, "random");
}

AttackResult degree_flips(const ModelParams& params, const Graph& g, int delta_edges) {
    Budget b;
    b.delta_edges = delta_edges;
    if (misclassifies(params, g.features, g.adjacency_matrix(), g.label))
        return skipped_result(g, "degree", true, b);
    std::vector<double> score(g.degree.begin(), g.degree.end());
    const auto ranking = top_k_by_score(score, g.n);
    // Same expanding-set walk as the CAM structure attack, with the degree
    // ranking and no similarity restriction.
    std::vector<Flip> flips;
    int remaining = delta_edges;
    std::vector<int> targets{ranking[0]};
    for (size_t i = 1; i < ranking.size() && remaining > 0; ++i) {
        const int u = ranking[i];
        for (int v : targets) {
            flips.push_back({std::min(u, v), std::max(u, v), !g.has_edge(u, v)});
            if (--remaining == 0) break;
        }
        targets.push_back(u);
    }
    return finish_structure_oneshot(params, g, std::move(flips), b, "degree");
}

AttackResult grad_argmax(const ModelParams& params, const Graph& g, int delta_edges) {
    Budget b;
    b.delta_edges = delta_edges;
    if (misclassifies(params, g.features, g.adjacency_matrix(), g.label))
        return skipped_result(g, "gradargmax", true, b);

    TraceOptions opt;
    opt.grad_adjacency = true;
    ForwardTrace tr = forward(g, params, opt);
    Tape::Ref loss = tr.tape->softmax_cross_entropy(tr.logits, g.label);
    tr.tape->backward(loss);
    const Matrix ga = tr.tape->grad_of(tr.adjacency);

    struct Cand {
        double mag;
        int u, v;
        bool add;
    };
    std::vector<Cand> cands;
    for (int u = 0; u < g.n; ++u)
        for (int v = u + 1; v < g.n; ++v) {
            const double grad = ga(u, v) + ga(v, u);
            const bool present = g.has_edge(u, v);
            // Feasible only when moving across the 0/1 boundary raises the
            // loss: add an absent edge on positive gradient, delete a present
            // edge on negative gradient.
            if (!present && grad > 0.0)
                cands.push_back({grad, u, v, true});
            else if (present && grad < 0.0)
                cands.push_back({-grad, u, v, false});
        }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.mag != b.mag) return a.mag > b.mag;
        return std::tie(a.u, a.v) < std::tie(b.u, b.v);
    });
    std::vector<Flip> flips;
    for (int t = 0; t < std::min<int>(delta_edges, cands.size()); ++t)
        flips.push_back({cands[t].u, cands[t].v, cands[t].add});
    return finish_structure_oneshot(params, g, std::move(flips), b, "gradargmax");
}

double avg_degree_selected(const Graph& g, const std::vector<int>& nodes) {
    if (nodes.empty()) throw std::invalid_argument("avg_degree_selected: empty node set");
    double s = 0.0;
    for (int v : nodes) s += g.degree.at(v);
    return s / static_cast<double>(nodes.size());
}

std::vector<std::string> audit_attack(const Graph& clean, const AttackResult& r) {
    std::vector<std::string> bad;
    auto fail = [&](const std::string& msg) { bad.push_back(r.method + ": " + msg); };
    if (r.skipped) {
        if (r.structural && r.perturbed_edges != clean.edges) fail("skipped graph has edge changes");
        if (!r.structural && !(r.perturbed_features == clean.features))
            fail("skipped graph has feature changes");
        return bad;
    }

    if (r.structural) {
        // Reconstructing through Graph validates symmetry-by-construction,
        // hollowness, ranges and sortedness.
        Graph pert = clean;
        pert.edges = r.perturbed_edges;
        pert.rebuild_degrees();
        try {
            pert.check_valid();
        } catch (const std::exception& e) {
            fail(std::string("invalid perturbed graph: ") + e.what());
            return bad;
        }
        std::set<Edge> before(clean.edges.begin(), clean.edges.end());
        std::set<Edge> after(r.perturbed_edges.begin(), r.perturbed_edges.end());
        std::set<Edge> diff;
        for (const Edge& e : before)
            if (!after.count(e)) diff.insert(e);
        for (const Edge& e : after)
            if (!before.count(e)) diff.insert(e);
        if (static_cast<int>(diff.size()) > r.budget.delta_edges)
            fail("edge hamming distance " + std::to_string(diff.size()) + " exceeds budget " +
                 std::to_string(r.budget.delta_edges));
        if (static_cast<int>(r.flips.size()) != static_cast<int>(diff.size()))
            fail("flip log length does not match the edge diff");
        for (const Flip& f : r.flips) {
            Edge e{f.u, f.v};
            if (!diff.count(e)) fail("logged flip not present in edge diff");
            if (f.add == clean.has_edge(f.u, f.v)) fail("flip direction inconsistent with clean graph");
            if (!r.sim_matrix.empty()) {
                if (f.add && r.sim_matrix(f.u, f.v) > r.sim.s1)
                    fail("inserted edge violates similarity threshold s1");
                if (!f.add && r.sim_matrix(f.u, f.v) < r.sim.s2)
                    fail("deleted edge violates similarity threshold s2");
            }
            if (!r.v_sub.empty()) {
                const bool in_sub = std::binary_search(r.v_sub.begin(), r.v_sub.end(), f.u) &&
                                    std::binary_search(r.v_sub.begin(), r.v_sub.end(), f.v);
                if (!in_sub) fail("flip escapes the attack subgraph");
            }
        }
    } else {
        if (!r.perturbed_features.same_shape(clean.features)) {
            fail("feature shape changed");
            return bad;
        }
        std::set<int> modified_rows;
        std::vector<int> per_row_changes(clean.n, 0);
        for (int i = 0; i < clean.n; ++i)
            for (int j = 0; j < clean.features.cols(); ++j) {
                const double d = r.perturbed_features(i, j) - clean.features(i, j);
                if (d == 0.0) continue;
                modified_rows.insert(i);
                ++per_row_changes[i];
                if (std::fabs(std::fabs(d) - r.budget.lambda_mag) > 1e-12)
                    fail("feature delta magnitude is not lambda");
            }
        if (static_cast<int>(modified_rows.size()) > r.budget.r_nodes)
            fail("more than r nodes modified");
        for (int i : modified_rows)
            if (per_row_changes[i] != r.budget.k_features)
                fail("node " + std::to_string(i) + " modified in " +
                     std::to_string(per_row_changes[i]) + " features, expected k");
        // Logged deltas must reproduce the perturbed matrix exactly.
        Matrix rebuilt = clean.features;
        for (const auto& fd : r.feature_deltas) rebuilt(fd.node, fd.feature) += fd.delta;
        if (!(rebuilt == r.perturbed_features)) fail("feature delta log does not rebuild the matrix");
    }
    return bad;
}

}  // namespace cama
