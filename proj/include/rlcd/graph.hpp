#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlcd {

enum class Kind { observed, latent };

// Sorted set of variable ids.  Small graphs, so flat vectors beat std::set.
using VarSet = std::vector<int>;

inline VarSet make_set(std::initializer_list<int> xs) {
    VarSet v(xs);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

inline void set_insert(VarSet& s, int x) {
    auto it = std::lower_bound(s.begin(), s.end(), x);
    if (it == s.end() || *it != x) s.insert(it, x);
}

inline bool set_contains(const VarSet& s, int x) {
    return std::binary_search(s.begin(), s.end(), x);
}

inline VarSet set_union(const VarSet& a, const VarSet& b) {
    VarSet out;
    out.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline VarSet set_minus(const VarSet& a, const VarSet& b) {
    VarSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline VarSet set_intersect(const VarSet& a, const VarSet& b) {
    VarSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline bool sets_disjoint(const VarSet& a, const VarSet& b) {
    return set_intersect(a, b).empty();
}

// A cover: a non-empty set of variables treated as one unit.
struct Cover {
    VarSet members;

    Cover() = default;
    explicit Cover(VarSet m) : members(std::move(m)) {}
    Cover(std::initializer_list<int> xs) : members(make_set(xs)) {}

    bool operator==(const Cover& o) const { return members == o.members; }
    bool operator<(const Cover& o) const { return members < o.members; }
    size_t size() const { return members.size(); }
};

// A set of covers, kept sorted so iteration order is deterministic.
using CoverSet = std::vector<Cover>;

inline void normalize(CoverSet& cs) {
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
}

inline VarSet cover_union(const CoverSet& cs) {
    VarSet out;
    for (const auto& c : cs) out = set_union(out, c.members);
    return out;
}

// ||S|| = |union of all member variables|, duplicates across covers counted once.
inline size_t effective_cardinality(const CoverSet& cs) {
    return cover_union(cs).size();
}

// Sep(X) = the set of singleton covers over X.
inline CoverSet sep(const VarSet& xs) {
    CoverSet out;
    out.reserve(xs.size());
    for (int x : xs) out.push_back(Cover{{x}});
    return out;
}

struct Node {
    int id = -1;
    Kind kind = Kind::observed;
    std::string name;
};

// A cluster record: the children covers committed as the pure children of a
// parent cover during discovery.
struct ClusterRecord {
    Cover parent;
    CoverSet children;
};

using Edge = std::pair<int, int>;

// Working/output graph of the discovery procedure: observed plus synthesized
// latent nodes, directed and undirected edges, cluster records and sepsets.
// Also doubles as the plain DAG type when only directed edges are present.
class MixedGraph {
public:
    std::vector<Node> nodes;                       // indexed by position; ids unique
    std::set<Edge> directed_edges;                 // (parent, child)
    std::set<Edge> undirected_edges;               // normalized first < second
    std::vector<ClusterRecord> clusters;
    std::map<Edge, VarSet> sepsets;                // key normalized first < second

    int add_node(Kind kind, const std::string& name = "") {
        int id = next_id_++;
        Node n;
        n.id = id;
        n.kind = kind;
        n.name = name.empty() ? default_name(kind, id) : name;
        nodes.push_back(n);
        index_[id] = nodes.size() - 1;
        return id;
    }

    // Re-adds a node with a fixed id (deserialization).
    void add_node_with_id(int id, Kind kind, const std::string& name) {
        if (index_.count(id)) throw std::runtime_error("duplicate node id " + std::to_string(id));
        Node n{id, kind, name};
        nodes.push_back(n);
        index_[id] = nodes.size() - 1;
        next_id_ = std::max(next_id_, id + 1);
    }

    bool has_node(int id) const { return index_.count(id) > 0; }

    const Node& node(int id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw std::runtime_error("unknown node id " + std::to_string(id));
        return nodes[it->second];
    }

    bool is_latent(int id) const { return node(id).kind == Kind::latent; }
    bool is_observed(int id) const { return node(id).kind == Kind::observed; }

    VarSet all_ids() const {
        VarSet out;
        out.reserve(nodes.size());
        for (const auto& n : nodes) out.push_back(n.id);
        std::sort(out.begin(), out.end());
        return out;
    }

    VarSet observed_ids() const {
        VarSet out;
        for (const auto& n : nodes) if (n.kind == Kind::observed) out.push_back(n.id);
        std::sort(out.begin(), out.end());
        return out;
    }

    VarSet latent_ids() const {
        VarSet out;
        for (const auto& n : nodes) if (n.kind == Kind::latent) out.push_back(n.id);
        std::sort(out.begin(), out.end());
        return out;
    }

    void add_edge(int parent, int child) { directed_edges.insert({parent, child}); }
    bool has_edge(int parent, int child) const { return directed_edges.count({parent, child}) > 0; }

    void add_undirected(int a, int b) {
        if (a == b) throw std::runtime_error("self loop");
        undirected_edges.insert({std::min(a, b), std::max(a, b)});
    }
    bool has_undirected(int a, int b) const {
        return undirected_edges.count({std::min(a, b), std::max(a, b)}) > 0;
    }
    void remove_undirected(int a, int b) {
        undirected_edges.erase({std::min(a, b), std::max(a, b)});
    }

    bool adjacent(int a, int b) const {
        return has_edge(a, b) || has_edge(b, a) || has_undirected(a, b);
    }

    VarSet parents(int v) const {
        VarSet out;
        for (const auto& [p, c] : directed_edges) if (c == v) out.push_back(p);
        std::sort(out.begin(), out.end());
        return out;
    }

    VarSet children(int v) const {
        VarSet out;
        for (const auto& [p, c] : directed_edges) if (p == v) out.push_back(c);
        std::sort(out.begin(), out.end());
        return out;
    }

    VarSet neighbors(int v) const {
        VarSet out;
        for (const auto& [p, c] : directed_edges) {
            if (p == v) set_insert(out, c);
            if (c == v) set_insert(out, p);
        }
        for (const auto& [a, b] : undirected_edges) {
            if (a == v) set_insert(out, b);
            if (b == v) set_insert(out, a);
        }
        return out;
    }

    // Strict descendants via directed edges (a node is not its own descendant).
    VarSet descendants(int v) const {
        VarSet out;
        std::vector<int> stack{v};
        std::set<int> seen;
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            for (const auto& [p, c] : directed_edges) {
                if (p == cur && !seen.count(c)) {
                    seen.insert(c);
                    out.push_back(c);
                    stack.push_back(c);
                }
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    void record_sepset(int a, int b, const VarSet& s) {
        sepsets[{std::min(a, b), std::max(a, b)}] = s;
    }

    std::optional<VarSet> sepset(int a, int b) const {
        auto it = sepsets.find({std::min(a, b), std::max(a, b)});
        if (it == sepsets.end()) return std::nullopt;
        return it->second;
    }

    void remove_node(int id) {
        auto it = index_.find(id);
        if (it == index_.end()) return;
        nodes.erase(nodes.begin() + static_cast<long>(it->second));
        reindex();
        for (auto e = directed_edges.begin(); e != directed_edges.end();)
            e = (e->first == id || e->second == id) ? directed_edges.erase(e) : std::next(e);
        for (auto e = undirected_edges.begin(); e != undirected_edges.end();)
            e = (e->first == id || e->second == id) ? undirected_edges.erase(e) : std::next(e);
        for (auto r = clusters.begin(); r != clusters.end();) {
            bool touches = set_contains(r->parent.members, id);
            for (const auto& c : r->children) touches = touches || set_contains(c.members, id);
            r = touches ? clusters.erase(r) : std::next(r);
        }
    }

    static std::string default_name(Kind kind, int id) {
        return (kind == Kind::latent ? "L" : "X") + std::to_string(id);
    }

private:
    void reindex() {
        index_.clear();
        for (size_t i = 0; i < nodes.size(); ++i) index_[nodes[i].id] = i;
    }

    std::map<int, size_t> index_;
    int next_id_ = 0;
};

// Ground-truth directed acyclic graph over observed + latent variables.
using Dag = MixedGraph;

}  // namespace rlcd
