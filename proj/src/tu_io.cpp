#include "cama/tu_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace cama {
namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

bool is_blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

long parse_int(const std::string& tok, const std::string& where) {
    size_t pos = 0;
    long v;
    try {
        v = std::stol(tok, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error(where + ": expected integer, got '" + tok + "'");
    }
    while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
    if (pos != tok.size()) throw std::runtime_error(where + ": trailing junk in '" + tok + "'");
    return v;
}

double parse_real(const std::string& tok, const std::string& where) {
    size_t pos = 0;
    double v;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error(where + ": expected real, got '" + tok + "'");
    }
    while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
    if (pos != tok.size()) throw std::runtime_error(where + ": trailing junk in '" + tok + "'");
    return v;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> toks;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            toks.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    toks.push_back(cur);
    return toks;
}

}  // namespace

Matrix build_features(const std::vector<int>& raw_labels, const Matrix& raw_attributes,
                      const std::vector<int>& degrees, FeaturePolicy policy,
                      const std::vector<int>& label_vocab) {
    const int n = static_cast<int>(policy == FeaturePolicy::scalar_degree ? degrees.size()
                                                                          : raw_labels.size());
    auto onehot_index = [&](int lbl) {
        auto it = std::lower_bound(label_vocab.begin(), label_vocab.end(), lbl);
        if (it == label_vocab.end() || *it != lbl)
            throw std::runtime_error("build_features: node label " + std::to_string(lbl) +
                                     " not in vocabulary");
        return static_cast<int>(it - label_vocab.begin());
    };

    switch (policy) {
        case FeaturePolicy::one_hot_label: {
            Matrix x(n, static_cast<int>(label_vocab.size()));
            for (int i = 0; i < n; ++i) x(i, onehot_index(raw_labels[i])) = 1.0;
            return x;
        }
        case FeaturePolicy::label_plus_attributes: {
            const int da = raw_attributes.cols();
            Matrix x(n, static_cast<int>(label_vocab.size()) + da);
            for (int i = 0; i < n; ++i) {
                x(i, onehot_index(raw_labels[i])) = 1.0;
                for (int j = 0; j < da; ++j)
                    x(i, static_cast<int>(label_vocab.size()) + j) = raw_attributes(i, j);
            }
            return x;
        }
        case FeaturePolicy::scalar_degree: {
            Matrix x(n, 1);
            for (int i = 0; i < n; ++i) x(i, 0) = static_cast<double>(degrees[i]);
            return x;
        }
    }
    throw std::logic_error("build_features: bad policy");
}

Dataset load_tu_dataset(const std::string& dir, const std::string& name, FeaturePolicy policy) {
    const std::string prefix = (fs::path(dir) / (name + "_")).string();
    const std::string a_path = prefix + "A.txt";
    const std::string ind_path = prefix + "graph_indicator.txt";
    const std::string glab_path = prefix + "graph_labels.txt";
    const std::string nlab_path = prefix + "node_labels.txt";
    const std::string nattr_path = prefix + "node_attributes.txt";

    const bool need_labels =
        policy == FeaturePolicy::one_hot_label || policy == FeaturePolicy::label_plus_attributes;
    const bool need_attrs = policy == FeaturePolicy::label_plus_attributes;
    for (const std::string& p : {a_path, ind_path, glab_path})
        if (!fs::exists(p)) throw std::runtime_error("missing required file " + p);
    if (need_labels && !fs::exists(nlab_path))
        throw std::runtime_error("feature policy " + to_string(policy) + " requires " + nlab_path);
    if (need_attrs && !fs::exists(nattr_path))
        throw std::runtime_error("feature policy " + to_string(policy) + " requires " + nattr_path);

    // graph_indicator: node -> graph, both 1-based in the files.
    std::vector<int> node_graph;  // 0-based graph index per global node
    {
        auto lines = read_lines(ind_path);
        for (size_t i = 0; i < lines.size(); ++i) {
            if (is_blank(lines[i])) continue;
            long g = parse_int(lines[i], ind_path + ":" + std::to_string(i + 1));
            if (g < 1) throw std::runtime_error(ind_path + ": graph id < 1");
            node_graph.push_back(static_cast<int>(g - 1));
        }
    }
    const int total_nodes = static_cast<int>(node_graph.size());
    if (total_nodes == 0) throw std::runtime_error(ind_path + ": no nodes");
    const int num_graphs = *std::max_element(node_graph.begin(), node_graph.end()) + 1;

    // Per-graph local index for every global node (file order within a graph).
    std::vector<int> local_index(total_nodes);
    std::vector<int> graph_size(num_graphs, 0);
    for (int v = 0; v < total_nodes; ++v) local_index[v] = graph_size[node_graph[v]]++;
    for (int g = 0; g < num_graphs; ++g)
        if (graph_size[g] == 0)
            throw std::runtime_error(ind_path + ": graph " + std::to_string(g + 1) + " has no nodes");

    // graph labels -> contiguous 0..C-1 by sorted raw value
    std::vector<int> raw_graph_labels;
    {
        auto lines = read_lines(glab_path);
        for (size_t i = 0; i < lines.size(); ++i) {
            if (is_blank(lines[i])) continue;
            raw_graph_labels.push_back(
                static_cast<int>(parse_int(lines[i], glab_path + ":" + std::to_string(i + 1))));
        }
    }
    if (static_cast<int>(raw_graph_labels.size()) != num_graphs)
        throw std::runtime_error(glab_path + ": expected " + std::to_string(num_graphs) +
                                 " labels, got " + std::to_string(raw_graph_labels.size()));
    std::vector<int> glabel_vocab(raw_graph_labels);
    std::sort(glabel_vocab.begin(), glabel_vocab.end());
    glabel_vocab.erase(std::unique(glabel_vocab.begin(), glabel_vocab.end()), glabel_vocab.end());

    // node labels / attributes
    std::vector<int> raw_node_labels;
    if (fs::exists(nlab_path) && need_labels) {
        auto lines = read_lines(nlab_path);
        for (size_t i = 0; i < lines.size(); ++i) {
            if (is_blank(lines[i])) continue;
            raw_node_labels.push_back(
                static_cast<int>(parse_int(lines[i], nlab_path + ":" + std::to_string(i + 1))));
        }
        if (static_cast<int>(raw_node_labels.size()) != total_nodes)
            throw std::runtime_error(nlab_path + ": expected " + std::to_string(total_nodes) +
                                     " node labels, got " + std::to_string(raw_node_labels.size()));
    }
    std::vector<std::vector<double>> raw_attr_rows;
    if (fs::exists(nattr_path) && need_attrs) {
        auto lines = read_lines(nattr_path);
        for (size_t i = 0; i < lines.size(); ++i) {
            if (is_blank(lines[i])) continue;
            std::vector<double> row;
            for (const auto& tok : split_commas(lines[i]))
                row.push_back(parse_real(tok, nattr_path + ":" + std::to_string(i + 1)));
            if (!raw_attr_rows.empty() && raw_attr_rows[0].size() != row.size())
                throw std::runtime_error(nattr_path + ":" + std::to_string(i + 1) +
                                         ": inconsistent attribute count");
            raw_attr_rows.push_back(std::move(row));
        }
        if (static_cast<int>(raw_attr_rows.size()) != total_nodes)
            throw std::runtime_error(nattr_path + ": expected " + std::to_string(total_nodes) +
                                     " attribute rows, got " + std::to_string(raw_attr_rows.size()));
    }

    // Edge file: directed pairs that must come in matched (u,v)/(v,u) sets.
    // Duplicates of the same direction collapse; an unmatched direction is a
    // hard error naming its line.
    std::vector<std::set<std::pair<int, int>>> fwd(num_graphs);  // local u<v pairs seen
    std::map<std::pair<long, long>, size_t> dir_seen;            // directed global pair -> first line
    {
        auto lines = read_lines(a_path);
        for (size_t i = 0; i < lines.size(); ++i) {
            if (is_blank(lines[i])) continue;
            auto toks = split_commas(lines[i]);
            if (toks.size() != 2)
                throw std::runtime_error(a_path + ":" + std::to_string(i + 1) +
                                         ": expected 'u, v', got '" + lines[i] + "'");
            const std::string where = a_path + ":" + std::to_string(i + 1);
            long u = parse_int(toks[0], where);
            long v = parse_int(toks[1], where);
            if (u < 1 || u > total_nodes || v < 1 || v > total_nodes)
                throw std::runtime_error(where + ": edge references unknown node (" +
                                         std::to_string(u) + ", " + std::to_string(v) + ")");
            if (u == v) throw std::runtime_error(where + ": self loop on node " + std::to_string(u));
            const int gu = node_graph[u - 1], gv = node_graph[v - 1];
            if (gu != gv)
                throw std::runtime_error(where + ": edge crosses graphs " + std::to_string(gu + 1) +
                                         " and " + std::to_string(gv + 1));
            dir_seen.emplace(std::make_pair(u, v), i + 1);
            int lu = local_index[u - 1], lv = local_index[v - 1];
            if (lu > lv) std::swap(lu, lv);
            fwd[gu].insert({lu, lv});
        }
    }
    for (const auto& [pair, line_no] : dir_seen) {
        if (!dir_seen.count({pair.second, pair.first}))
            throw std::runtime_error(a_path + ":" + std::to_string(line_no) + ": directed edge (" +
                                     std::to_string(pair.first) + ", " + std::to_string(pair.second) +
                                     ") has no reverse pair");
    }

    // Node label vocabulary over the whole dataset.
    std::vector<int> nlabel_vocab(raw_node_labels);
    std::sort(nlabel_vocab.begin(), nlabel_vocab.end());
    nlabel_vocab.erase(std::unique(nlabel_vocab.begin(), nlabel_vocab.end()), nlabel_vocab.end());

    Dataset ds;
    ds.name = name;
    ds.feature_policy = policy;
    ds.num_classes = static_cast<int>(glabel_vocab.size());
    ds.node_label_vocab = nlabel_vocab;
    ds.graph_label_vocab = glabel_vocab;

    // Assemble graphs.
    std::vector<std::vector<int>> nodes_of(num_graphs);
    for (int v = 0; v < total_nodes; ++v) nodes_of[node_graph[v]].push_back(v);
    for (int g = 0; g < num_graphs; ++g) {
        Graph gr;
        gr.id = g;
        gr.n = graph_size[g];
        gr.edges.assign(fwd[g].begin(), fwd[g].end());
        const int raw = raw_graph_labels[g];
        gr.label = static_cast<int>(std::lower_bound(glabel_vocab.begin(), glabel_vocab.end(), raw) -
                                    glabel_vocab.begin());
        if (!raw_node_labels.empty()) {
            gr.raw_node_labels.reserve(gr.n);
            for (int v : nodes_of[g]) gr.raw_node_labels.push_back(raw_node_labels[v]);
        }
        if (!raw_attr_rows.empty()) {
            gr.raw_node_attributes.resize(gr.n, static_cast<int>(raw_attr_rows[0].size()));
            for (int i = 0; i < gr.n; ++i)
                for (int j = 0; j < gr.raw_node_attributes.cols(); ++j)
                    gr.raw_node_attributes(i, j) = raw_attr_rows[nodes_of[g][i]][j];
        }
        gr.rebuild_degrees();
        gr.features =
            build_features(gr.raw_node_labels, gr.raw_node_attributes, gr.degree, policy, nlabel_vocab);
        gr.check_valid();
        ds.graphs.push_back(std::move(gr));
    }
    ds.feature_dim = ds.graphs.front().features.cols();
    for (const auto& g : ds.graphs)
        if (g.features.cols() != ds.feature_dim)
            throw std::runtime_error("inconsistent feature dimension across graphs");
    return ds;
}

void save_tu_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    const std::string prefix = (fs::path(dir) / (ds.name + "_")).string();

    std::ofstream a(prefix + "A.txt"), ind(prefix + "graph_indicator.txt"),
        glab(prefix + "graph_labels.txt");
    if (!a || !ind || !glab) throw std::runtime_error("cannot write dataset files under " + dir);

    const bool has_nlab = std::any_of(ds.graphs.begin(), ds.graphs.end(),
                                      [](const Graph& g) { return !g.raw_node_labels.empty(); });
    const bool has_attr = std::any_of(ds.graphs.begin(), ds.graphs.end(),
                                      [](const Graph& g) { return !g.raw_node_attributes.empty(); });
    std::ofstream nlab, nattr;
    if (has_nlab) nlab.open(prefix + "node_labels.txt");
    if (has_attr) nattr.open(prefix + "node_attributes.txt");

    long base = 1;  // global 1-based id of each graph's node 0
    char buf[64];
    for (const auto& g : ds.graphs) {
        for (int i = 0; i < g.n; ++i) ind << (g.id + 1) << "\n";
        for (const auto& [u, v] : g.edges) {
            a << (base + u) << ", " << (base + v) << "\n";
            a << (base + v) << ", " << (base + u) << "\n";
        }
        glab << ds.graph_label_vocab.at(g.label) << "\n";
        if (has_nlab)
            for (int i = 0; i < g.n; ++i) nlab << g.raw_node_labels.at(i) << "\n";
        if (has_attr)
            for (int i = 0; i < g.n; ++i) {
                for (int j = 0; j < g.raw_node_attributes.cols(); ++j) {
                    std::snprintf(buf, sizeof buf, "%.17g", g.raw_node_attributes(i, j));
                    nattr << (j ? ", " : "") << buf;
                }
                nattr << "\n";
            }
        base += g.n;
    }
}

}  // namespace cama
