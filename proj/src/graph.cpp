#include "advimmune/graph.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace advimmune {

bool Graph::has_edge(int i, int j) const {
    const auto& row = adj[i];
    return std::binary_search(row.begin(), row.end(), j);
}

long long Graph::num_directed_edges() const {
    long long m = 0;
    for (const auto& row : adj) m += static_cast<long long>(row.size());
    return m;
}

std::string scenario_name(Scenario s) {
    return s == Scenario::RemoveOnly ? "remove-only" : "remove-add";
}

Scenario parse_scenario(const std::string& name) {
    if (name == "remove-only") return Scenario::RemoveOnly;
    if (name == "remove-add") return Scenario::RemoveAdd;
    throw ConfigError("unknown scenario '" + name + "' (expected remove-only or remove-add)");
}

bool AttackSpec::is_fixed(int i, int j) const {
    const auto& row = fixed_out[i];
    return std::binary_search(row.begin(), row.end(), j);
}

bool AttackSpec::is_fragile(int i, int j) const {
    if (fragile_is_complement) return i != j && !is_fixed(i, j);
    const auto& row = fragile_out[i];
    return std::binary_search(row.begin(), row.end(), j);
}

void AttackSpec::validate(const Graph& g) const {
    int n = g.num_nodes;
    if (static_cast<int>(fixed_out.size()) != n || static_cast<int>(local_budget.size()) != n)
        throw ConfigError("attack spec does not match graph size");
    if (!fragile_is_complement && static_cast<int>(fragile_out.size()) != n)
        throw ConfigError("attack spec does not match graph size");
    for (int i = 0; i < n; ++i) {
        if (fixed_out[i].empty())
            throw ConfigError("node " + std::to_string(i) + " has no fixed out-edge");
        for (int j : fixed_out[i]) {
            if (j == i) throw ConfigError("self-loop in fixed edges");
            if (!g.has_edge(i, j))
                throw ConfigError("fixed edge not present in graph");
        }
        if (local_budget[i] < 0) throw ConfigError("negative local budget");
        if (fragile_is_complement) continue;
        for (int j : fragile_out[i]) {
            if (j == i) throw ConfigError("self-loop in fragile edges");
            if (is_fixed(i, j)) throw ConfigError("fixed and fragile sets overlap");
        }
    }
    if (global_budget < 0) throw ConfigError("negative global budget");
}

namespace {

void finalize_rows(Graph& g) {
    g.degrees.resize(g.num_nodes);
    for (int i = 0; i < g.num_nodes; ++i) {
        auto& row = g.adj[i];
        std::sort(row.begin(), row.end());
        g.degrees[i] = static_cast<int>(row.size());
    }
}

}  // namespace

Graph load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open edge list: " + path);

    std::vector<std::pair<long long, long long>> raw;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        long long a, b;
        if (!(ss >> a >> b))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed edge line");
        std::string rest;
        if (ss >> rest)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed edge line");
        if (a == b)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": self-loop");
        raw.emplace_back(a, b);
    }
    if (raw.empty()) throw ConfigError(path + ": no edges");

    std::vector<long long> ids;
    ids.reserve(raw.size() * 2);
    for (auto [a, b] : raw) {
        ids.push_back(a);
        ids.push_back(b);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    auto compact = [&](long long id) {
        return static_cast<int>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
    };

    Graph g;
    g.num_nodes = static_cast<int>(ids.size());
    g.original_ids = ids;
    g.adj.resize(g.num_nodes);

    std::set<std::pair<int, int>> seen;
    int dups = 0;
    for (auto [a, b] : raw) {
        int u = compact(a), v = compact(b);
        auto key = std::minmax(u, v);
        if (!seen.insert(key).second) {
            ++dups;
            continue;
        }
        g.adj[u].push_back(v);
        g.adj[v].push_back(u);
    }
    g.duplicate_edges = dups;
    finalize_rows(g);
    return g;
}

Graph largest_connected_component(const Graph& g) {
    if (g.num_nodes == 0) throw ConfigError("empty graph");

    std::vector<int> comp(g.num_nodes, -1);
    int ncomp = 0;
    std::vector<int> stack;
    for (int s = 0; s < g.num_nodes; ++s) {
        if (comp[s] >= 0) continue;
        comp[s] = ncomp;
        stack.push_back(s);
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v : g.adj[u]) {
                if (comp[v] < 0) {
                    comp[v] = ncomp;
                    stack.push_back(v);
                }
            }
        }
        ++ncomp;
    }

    std::vector<int> size(ncomp, 0);
    for (int c : comp) ++size[c];
    // ties go to the component holding the smallest original id, which is the
    // first one discovered since nodes are scanned in id order
    int best = 0;
    for (int c = 1; c < ncomp; ++c)
        if (size[c] > size[best]) best = c;

    std::vector<int> keep;
    for (int i = 0; i < g.num_nodes; ++i)
        if (comp[i] == best) keep.push_back(i);

    std::vector<int> remap(g.num_nodes, -1);
    for (int i = 0; i < static_cast<int>(keep.size()); ++i) remap[keep[i]] = i;

    Graph out;
    out.num_nodes = static_cast<int>(keep.size());
    out.adj.resize(out.num_nodes);
    out.original_ids.resize(out.num_nodes);
    for (int i = 0; i < out.num_nodes; ++i) {
        int old = keep[i];
        out.original_ids[i] = g.original_ids[old];
        for (int v : g.adj[old]) out.adj[i].push_back(remap[v]);
    }
    if (g.features.size() > 0) {
        out.features.resize(out.num_nodes, g.features.cols());
        for (int i = 0; i < out.num_nodes; ++i) out.features.row(i) = g.features.row(keep[i]);
    }
    if (!g.labels.empty()) {
        out.labels.resize(out.num_nodes);
        for (int i = 0; i < out.num_nodes; ++i) out.labels[i] = g.labels[keep[i]];
        out.num_classes = g.num_classes;
    }
    out.duplicate_edges = g.duplicate_edges;
    finalize_rows(out);
    return out;
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[b] = a;
        return true;
    }
};

}  // namespace

std::vector<Edge> minimum_spanning_tree(const Graph& g) {
    std::vector<Edge> undirected;
    for (int i = 0; i < g.num_nodes; ++i)
        for (int j : g.adj[i])
            if (i < j) undirected.push_back({i, j});
    std::sort(undirected.begin(), undirected.end());

    UnionFind uf(g.num_nodes);
    std::vector<Edge> tree;
    for (const Edge& e : undirected)
        if (uf.unite(e.src, e.dst)) {
            tree.push_back({e.src, e.dst});
            tree.push_back({e.dst, e.src});
        }
    if (static_cast<int>(tree.size()) != 2 * (g.num_nodes - 1))
        throw ConfigError("graph is disconnected; extract the largest connected component first");
    std::sort(tree.begin(), tree.end());
    return tree;
}

AttackSpec build_attack_spec(const Graph& g, Scenario scenario,
                             const std::vector<Edge>& fixed_edges, int remove_add_offset) {
    AttackSpec spec;
    spec.scenario = scenario;
    spec.fixed_out.resize(g.num_nodes);
    for (const Edge& e : fixed_edges) spec.fixed_out[e.src].push_back(e.dst);
    for (auto& row : spec.fixed_out) std::sort(row.begin(), row.end());

    spec.local_budget.resize(g.num_nodes);
    spec.global_budget = static_cast<long long>(g.num_nodes) * g.num_nodes;

    if (scenario == Scenario::RemoveOnly) {
        spec.fragile_out.resize(g.num_nodes);
        for (int i = 0; i < g.num_nodes; ++i) {
            std::set_difference(g.adj[i].begin(), g.adj[i].end(), spec.fixed_out[i].begin(),
                                spec.fixed_out[i].end(), std::back_inserter(spec.fragile_out[i]));
            spec.local_budget[i] = g.degrees[i];
        }
    } else {
        spec.fragile_is_complement = true;
        for (int i = 0; i < g.num_nodes; ++i)
            spec.local_budget[i] = std::max(g.degrees[i] - remove_add_offset, 0);
    }
    spec.validate(g);
    return spec;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

bool numeric_token(const std::string& s) {
    if (s.empty()) return false;
    std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (i == s.size()) return false;
    bool digit = false;
    for (; i < s.size(); ++i) {
        char c = s[i];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == 'e' || c == 'E' ||
            c == '-' || c == '+') {
            digit = digit || std::isdigit(static_cast<unsigned char>(c));
        } else {
            return false;
        }
    }
    return digit;
}

}  // namespace

void load_labels(Graph& g, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open labels: " + path);

    std::map<long long, int> id_to_internal;
    for (int i = 0; i < g.num_nodes; ++i) id_to_internal[g.original_ids[i]] = i;

    g.labels.assign(g.num_nodes, -1);
    std::string line;
    int lineno = 0;
    int max_label = -1;
    bool seen_data = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cols = split_csv(line);
        if (cols.size() != 2)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected node_id,label");
        if (!numeric_token(cols[0])) {
            if (!seen_data) continue;  // header
            throw ConfigError(path + ":" + std::to_string(lineno) + ": bad node id");
        }
        seen_data = true;
        long long id = std::stoll(cols[0]);
        int label = std::stoi(cols[1]);
        if (label < 0)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": negative label");
        auto it = id_to_internal.find(id);
        if (it == id_to_internal.end()) continue;  // node dropped by LCC
        g.labels[it->second] = label;
        max_label = std::max(max_label, label);
    }
    if (max_label < 0) throw ConfigError(path + ": no labels matched graph nodes");
    g.num_classes = max_label + 1;
}

void load_features(Graph& g, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open features: " + path);

    // rows are positional: row i belongs to original id i
    for (int i = 0; i < g.num_nodes; ++i)
        if (g.original_ids[i] < 0 ||
            g.original_ids[i] >= static_cast<long long>(1) << 31)
            throw ConfigError("features file requires 0-based integer node ids");

    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cols = split_csv(line);
        if (lineno == 1 && !cols.empty() && !numeric_token(cols[0])) continue;  // header
        std::vector<double> row;
        row.reserve(cols.size());
        for (const auto& c : cols) {
            if (!numeric_token(c))
                throw ConfigError(path + ":" + std::to_string(lineno) + ": bad feature value");
            row.push_back(std::stod(c));
        }
        if (width == 0) width = row.size();
        if (row.size() != width)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": ragged feature row");
        rows.push_back(std::move(row));
    }
    long long max_id = *std::max_element(g.original_ids.begin(), g.original_ids.end());
    if (max_id >= static_cast<long long>(rows.size()))
        throw ConfigError(path + ": fewer feature rows than node ids require");

    g.features.resize(g.num_nodes, static_cast<int>(width));
    for (int i = 0; i < g.num_nodes; ++i) {
        const auto& row = rows[static_cast<std::size_t>(g.original_ids[i])];
        for (std::size_t j = 0; j < width; ++j) g.features(i, static_cast<int>(j)) = row[j];
    }
}

void save_id_map(const Graph& g, const std::string& path, const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write id map: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "original_id,internal_id\n";
    for (int i = 0; i < g.num_nodes; ++i) out << g.original_ids[i] << "," << i << "\n";
}

Graph graph_from_undirected(int n, const std::vector<Edge>& edges) {
    Graph g;
    g.num_nodes = n;
    g.adj.resize(n);
    g.original_ids.resize(n);
    std::iota(g.original_ids.begin(), g.original_ids.end(), 0LL);
    std::set<std::pair<int, int>> seen;
    for (const Edge& e : edges) {
        if (e.src == e.dst) throw ConfigError("self-loop in edge list");
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
            throw ConfigError("edge endpoint out of range");
        auto key = std::minmax(e.src, e.dst);
        if (!seen.insert(key).second) continue;
        g.adj[e.src].push_back(e.dst);
        g.adj[e.dst].push_back(e.src);
    }
    finalize_rows(g);
    return g;
}

Graph generate_planted_partition(int n, int blocks, double p_in, double p_out,
                                 std::uint64_t seed) {
    if (n <= 0 || blocks <= 0 || blocks > n)
        throw ConfigError("bad planted partition parameters");
    if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1)
        throw ConfigError("planted partition probabilities must lie in [0,1]");

    auto block_of = [&](int i) {
        return static_cast<int>(static_cast<long long>(i) * blocks / n);
    };

    Rng rng(seed);
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double p = block_of(i) == block_of(j) ? p_in : p_out;
            if (rng.uniform01() < p) edges.push_back({i, j});
        }

    Graph g = graph_from_undirected(n, edges);
    g.labels.resize(n);
    for (int i = 0; i < n; ++i) g.labels[i] = block_of(i);
    g.num_classes = blocks;
    return g;
}

Eigen::MatrixXd synth_block_features(const std::vector<int>& labels, int num_classes,
                                     int bits_per_class, double flip_prob,
                                     std::uint64_t seed) {
    int n = static_cast<int>(labels.size());
    int d = num_classes * bits_per_class;
    Rng rng(seed);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, d);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < num_classes; ++c)
            for (int b = 0; b < bits_per_class; ++b) {
                double bit = (labels[i] == c) ? 1.0 : 0.0;
                if (rng.uniform01() < flip_prob) bit = 1.0 - bit;
                x(i, c * bits_per_class + b) = bit;
            }
    return x;
}

}  // namespace advimmune
