#include "cama/synth.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "cama/rng.hpp"
#include "cama/tu_io.hpp"

namespace cama {

namespace {

// Node labels: 0 = backbone carbon, 1 = bridge (N-like), 2 = terminal oxygen-
// like, 3/4/5 = halogen-like distractors, 6 = methyl-like distractor.
constexpr int kCarbon = 0, kBridge = 1, kTerminal = 2, kMethyl = 6;

struct Builder {
    std::vector<int> labels;
    std::set<Edge> edges;
    std::vector<int> backbone;          // ring nodes, all kCarbon
    std::vector<int> removable_leaves;  // distractor leaves safe to delete
    std::set<Edge> chords;              // extra backbone-backbone closures

    int add_node(int label) {
        labels.push_back(label);
        return static_cast<int>(labels.size()) - 1;
    }
    void add_edge(int u, int v) {
        if (u == v) throw std::logic_error("synth: self loop");
        edges.insert({std::min(u, v), std::max(u, v)});
    }
    int n() const { return static_cast<int>(labels.size()); }
    int e() const { return static_cast<int>(edges.size()); }
};

void add_ring(Builder& b, Rng& rng) {
    const int size = rng.next_double() < 0.3 ? 5 : 6;
    if (b.backbone.empty()) {
        std::vector<int> ring;
        for (int i = 0; i < size; ++i) ring.push_back(b.add_node(kCarbon));
        for (int i = 0; i < size; ++i) b.add_edge(ring[i], ring[(i + 1) % size]);
        b.backbone = ring;
        return;
    }
    // Fuse onto an existing backbone edge: a path of size-2 new nodes closes
    // a new cycle through that edge.
    std::vector<Edge> ring_edges;
    for (const Edge& e : b.edges)
        if (b.labels[e.first] == kCarbon && b.labels[e.second] == kCarbon)
            ring_edges.push_back(e);
    const Edge base = ring_edges[rng.next_below(ring_edges.size())];
    int prev = base.first;
    for (int i = 0; i < size - 2; ++i) {
        const int nu = b.add_node(kCarbon);
        b.backbone.push_back(nu);
        b.add_edge(prev, nu);
        prev = nu;
    }
    b.add_edge(prev, base.second);
}

int random_backbone(Builder& b, Rng& rng) { return b.backbone[rng.next_below(b.backbone.size())]; }

// Nitro-like group: bridge node on the backbone carrying two or three
// terminal leaves. Class evidence is "at least two terminals on a bridge",
// so the three-leaf variant stays positive under any single deletion and
// only coordinated edits flip it.
void add_strong_group(Builder& b, Rng& rng) {
    const int host = random_backbone(b, rng);
    const int bridge = b.add_node(kBridge);
    b.add_edge(host, bridge);
    b.add_edge(bridge, b.add_node(kTerminal));
    b.add_edge(bridge, b.add_node(kTerminal));
    if (rng.next_double() < 0.5) b.add_edge(bridge, b.add_node(kTerminal));
}

// Near-miss with identical atom counts: bridge with one terminal leaf, plus
// a stray terminal on the same host carbon. Keeping the stray local means a
// single bridge-terminal bond turns the pattern into the nitro-like one.
void add_weak_group(Builder& b, Rng& rng) {
    const int host = random_backbone(b, rng);
    const int bridge = b.add_node(kBridge);
    b.add_edge(host, bridge);
    b.add_edge(bridge, b.add_node(kTerminal));
    b.add_edge(host, b.add_node(kTerminal));
}

void add_distractor_leaf(Builder& b, Rng& rng, int label) {
    const int host = random_backbone(b, rng);
    const int leaf = b.add_node(label);
    b.add_edge(host, leaf);
    b.removable_leaves.push_back(leaf);
}

bool try_add_chord(Builder& b, Rng& rng) {
    for (int attempt = 0; attempt < 40; ++attempt) {
        const int u = random_backbone(b, rng);
        const int v = random_backbone(b, rng);
        if (u == v) continue;
        const Edge e{std::min(u, v), std::max(u, v)};
        if (b.edges.count(e)) continue;
        b.edges.insert(e);
        b.chords.insert(e);
        return true;
    }
    return false;
}

bool try_remove_chord(Builder& b) {
    if (b.chords.empty()) return false;
    const Edge e = *b.chords.begin();
    b.chords.erase(b.chords.begin());
    b.edges.erase(e);
    return true;
}

// Deletes one cycle edge between backbone carbons, keeping the graph
// connected; broken rings give trained models structural variety.
bool try_remove_cycle_edge(Builder& b, Rng& rng) {
    std::vector<Edge> carbon_edges;
    for (const Edge& e : b.edges)
        if (b.labels[e.first] == kCarbon && b.labels[e.second] == kCarbon && !b.chords.count(e))
            carbon_edges.push_back(e);
    if (carbon_edges.empty()) return false;
    const Edge victim = carbon_edges[rng.next_below(carbon_edges.size())];
    b.edges.erase(victim);
    // connectivity check via BFS over the remaining edges
    const int n = b.n();
    std::vector<std::vector<int>> adj(n);
    for (const Edge& e : b.edges) {
        adj[e.first].push_back(e.second);
        adj[e.second].push_back(e.first);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : adj[v])
            if (!seen[w]) {
                seen[w] = 1;
                ++reached;
                stack.push_back(w);
            }
    }
    if (reached != n) {
        b.edges.insert(victim);
        return false;
    }
    return true;
}

bool try_remove_leaf(Builder& b) {
    if (b.removable_leaves.empty()) return false;
    const int leaf = b.removable_leaves.back();
    // Only ever remove the most recently added distractor when it is the
    // last node, so node ids stay dense without renumbering.
    if (leaf != b.n() - 1) return false;
    b.removable_leaves.pop_back();
    std::erase_if(b.edges, [&](const Edge& e) { return e.first == leaf || e.second == leaf; });
    b.labels.pop_back();
    return true;
}

}  // namespace

Dataset make_synth_benchmark(const SynthSpec& spec) {
    if (spec.negatives <= 0 || spec.negatives >= spec.num_graphs)
        throw std::invalid_argument("synth: bad class split");

    Rng master(mix_seed(spec.seed, 0x5d2a17u));
    std::vector<int> labels(spec.num_graphs, 1);
    std::fill(labels.begin(), labels.begin() + spec.negatives, 0);
    master.shuffle(labels);

    std::vector<Builder> builders(spec.num_graphs);
    for (int i = 0; i < spec.num_graphs; ++i) {
        Builder& b = builders[i];
        Rng rng(mix_seed(spec.seed, 0x9a7bu, static_cast<uint64_t>(i)));
        // Sizes are tuned so the raw totals land below the targets; the
        // adjustment pass then only ever adds leaves and chords.
        const double ring_roll = rng.next_double();
        const int rings = ring_roll < 0.25 ? 1 : ring_roll < 0.70 ? 2 : ring_roll < 0.95 ? 3 : 4;
        for (int rr = 0; rr < rings; ++rr) add_ring(b, rng);
        // In-distribution structural noise: occasional extra backbone bonds
        // and broken rings, so classifiers do not hang their decision on a
        // single incidental edge.
        if (rng.next_double() < 0.55) try_add_chord(b, rng);
        if (rng.next_double() < 0.35) try_remove_cycle_edge(b, rng);

        // A quarter of the graphs draw their substituents from one shared
        // "conflicting evidence" distribution regardless of label, so trained
        // classifiers keep a subpopulation with small decision margins; the
        // rest carry clear class evidence (nitro-like groups only on
        // positives). The ambiguity roll must not depend on the label.
        const bool ambiguous = rng.next_double() < 0.22;
        if (ambiguous) {
            add_strong_group(b, rng);
            add_weak_group(b, rng);
            add_weak_group(b, rng);
            if (rng.next_double() < 0.5) add_weak_group(b, rng);
        } else if (labels[i] == 1) {
            add_strong_group(b, rng);
            if (rng.next_double() < 0.10) add_strong_group(b, rng);
            if (rng.next_double() < 0.25) add_weak_group(b, rng);
        } else {
            add_weak_group(b, rng);
            if (rng.next_double() < 0.65) add_weak_group(b, rng);
        }
        const int extra = 1 + static_cast<int>(rng.next_below(2));
        for (int t = 0; t < extra; ++t) {
            const double roll = rng.next_double();
            const int lbl = roll < 0.45 ? kMethyl : 3 + static_cast<int>(rng.next_below(3));
            add_distractor_leaf(b, rng, lbl);
        }
        // Group atoms also get incidental extra bonds with unchanged labels,
        // so "bridge with two terminal neighbors" must be learned as
        // degree-invariant evidence rather than an exact local degree code.
        if (rng.next_double() < 0.25) {
            std::vector<int> group_atoms;
            for (int v = 0; v < b.n(); ++v)
                if (b.labels[v] == kBridge || b.labels[v] == kTerminal) group_atoms.push_back(v);
            if (!group_atoms.empty()) {
                const int a = group_atoms[rng.next_below(group_atoms.size())];
                const int c = random_backbone(b, rng);
                const Edge e{std::min(a, c), std::max(a, c)};
                if (!b.edges.count(e)) b.edges.insert(e);
            }
        }
    }

    // Drive node and edge totals onto the targets: leaves move both counts
    // together, chords move edges alone. Process graphs round-robin so the
    // adjustment stays spread out.
    auto totals = [&]() {
        int n = 0, e = 0;
        for (const auto& b : builders) {
            n += b.n();
            e += b.e();
        }
        return std::pair<int, int>{n, e};
    };
    Rng adjust(mix_seed(spec.seed, 0xad715u));
    for (int guard = 0; guard < 200000; ++guard) {
        auto [n, e] = totals();
        if (n == spec.total_nodes && e == spec.total_edges) break;
        const int i = static_cast<int>(adjust.next_below(builders.size()));
        Builder& b = builders[i];
        if (n < spec.total_nodes) {
            const int lbl = adjust.next_double() < 0.5 ? kMethyl : 3 + static_cast<int>(adjust.next_below(3));
            add_distractor_leaf(b, adjust, lbl);
        } else if (n > spec.total_nodes) {
            try_remove_leaf(b);
        } else if (e < spec.total_edges) {
            try_add_chord(b, adjust);
        } else {
            try_remove_chord(b);
        }
    }
    {
        auto [n, e] = totals();
        if (n != spec.total_nodes || e != spec.total_edges)
            throw std::logic_error("synth: failed to hit node/edge targets (" + std::to_string(n) +
                                   ", " + std::to_string(e) + ")");
    }

    // Make sure every node label 0..6 appears somewhere; each missing label
    // claims a distinct distractor leaf.
    std::vector<int> label_count(7, 0);
    for (const auto& b : builders)
        for (int l : b.labels) ++label_count[l];
    size_t donor_graph = 0, donor_leaf = 0;
    for (int l = 0; l < 7; ++l) {
        if (label_count[l] > 0) continue;
        while (donor_graph < builders.size() &&
               donor_leaf >= builders[donor_graph].removable_leaves.size()) {
            ++donor_graph;
            donor_leaf = 0;
        }
        if (donor_graph == builders.size())
            throw std::logic_error("synth: no distractor leaf available for label coverage");
        Builder& b = builders[donor_graph];
        --label_count[b.labels[b.removable_leaves[donor_leaf]]];
        b.labels[b.removable_leaves[donor_leaf]] = l;
        ++label_count[l];
        ++donor_leaf;
    }

    Dataset ds;
    ds.name = spec.name;
    ds.num_classes = 2;
    ds.feature_policy = FeaturePolicy::one_hot_label;
    ds.node_label_vocab = {0, 1, 2, 3, 4, 5, 6};
    ds.graph_label_vocab = {-1, 1};
    for (int i = 0; i < spec.num_graphs; ++i) {
        Builder& b = builders[i];
        Graph g;
        g.id = i;
        g.n = b.n();
        g.edges.assign(b.edges.begin(), b.edges.end());
        g.label = labels[i];
        g.raw_node_labels = b.labels;
        g.rebuild_degrees();
        g.features = build_features(g.raw_node_labels, Matrix(), g.degree,
                                    FeaturePolicy::one_hot_label, ds.node_label_vocab);
        g.check_valid();
        ds.graphs.push_back(std::move(g));
    }
    ds.feature_dim = 7;
    return ds;
}

}  // namespace cama
