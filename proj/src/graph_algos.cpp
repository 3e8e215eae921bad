#include "rlcd/graph_algos.hpp"

#include <functional>
#include <map>

namespace rlcd {

std::optional<std::vector<int>> topological_sort(const MixedGraph& g) {
    VarSet ids = g.all_ids();
    std::map<int, int> indeg;
    for (int v : ids) indeg[v] = 0;
    for (const auto& [p, c] : g.directed_edges) indeg[c]++;
    std::vector<int> ready;
    for (int v : ids) if (indeg[v] == 0) ready.push_back(v);
    std::vector<int> order;
    while (!ready.empty()) {
        std::sort(ready.begin(), ready.end(), std::greater<int>());
        int v = ready.back();
        ready.pop_back();
        order.push_back(v);
        for (const auto& [p, c] : g.directed_edges) {
            if (p == v && --indeg[c] == 0) ready.push_back(c);
        }
    }
    if (order.size() != ids.size()) return std::nullopt;
    return order;
}

bool has_directed_cycle(const MixedGraph& g) { return !topological_sort(g).has_value(); }

VarSet pure_children(const MixedGraph& g, const Cover& v) {
    VarSet out;
    for (const auto& n : g.nodes) {
        if (set_contains(v.members, n.id)) continue;
        VarSet pa = g.parents(n.id);
        if (!pa.empty() && pa == v.members) out.push_back(n.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

VarSet covered_children(const MixedGraph& g, const Cover& v) {
    VarSet out;
    for (const auto& n : g.nodes) {
        if (set_contains(v.members, n.id)) continue;
        VarSet pa = g.parents(n.id);
        if (!pa.empty() && set_minus(pa, v.members).empty()) out.push_back(n.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

VarSet measured_descendants(const MixedGraph& g, const VarSet& vars) {
    VarSet out;
    for (int v : vars) {
        for (int d : g.descendants(v)) {
            if (g.is_observed(d)) set_insert(out, d);
        }
    }
    return out;
}

VarSet measured_descendants(const MixedGraph& g, const CoverSet& s) {
    return measured_descendants(g, cover_union(s));
}

// ---- Bron-Kerbosch with pivoting ----

namespace {

void bron_kerbosch(const std::map<int, VarSet>& adj, VarSet r, VarSet p, VarSet x,
                   std::vector<VarSet>& out) {
    if (p.empty() && x.empty()) {
        out.push_back(r);
        return;
    }
    // pivot: vertex of P or X with most neighbors in P
    int pivot = -1;
    size_t best = 0;
    for (int u : set_union(p, x)) {
        size_t k = set_intersect(adj.at(u), p).size();
        if (pivot == -1 || k > best) {
            pivot = u;
            best = k;
        }
    }
    VarSet cand = pivot == -1 ? p : set_minus(p, adj.at(pivot));
    for (int v : cand) {
        VarSet r2 = r;
        set_insert(r2, v);
        bron_kerbosch(adj, r2, set_intersect(p, adj.at(v)), set_intersect(x, adj.at(v)), out);
        p = set_minus(p, {v});
        set_insert(x, v);
    }
}

}  // namespace

std::vector<VarSet> maximal_cliques(const MixedGraph& skeleton) {
    std::map<int, VarSet> adj;
    VarSet ids = skeleton.all_ids();
    for (int v : ids) adj[v] = {};
    for (const auto& [a, b] : skeleton.undirected_edges) {
        set_insert(adj[a], b);
        set_insert(adj[b], a);
    }
    // directed edges count as adjacency too so the same routine works on
    // mixed graphs in tests
    for (const auto& [a, b] : skeleton.directed_edges) {
        set_insert(adj[a], b);
        set_insert(adj[b], a);
    }
    std::vector<VarSet> out;
    bron_kerbosch(adj, {}, ids, {}, out);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<CliqueGroup> group_cliques(const std::vector<VarSet>& cliques,
                                       const MixedGraph& skeleton) {
    std::vector<VarSet> big;
    for (const auto& q : cliques)
        if (q.size() >= 3) big.push_back(q);
    std::sort(big.begin(), big.end());

    // union-find over cliques with >=2 shared members
    std::vector<size_t> root(big.size());
    for (size_t i = 0; i < big.size(); ++i) root[i] = i;
    std::function<size_t(size_t)> find = [&](size_t i) {
        while (root[i] != i) i = root[i] = root[root[i]];
        return i;
    };
    for (size_t i = 0; i < big.size(); ++i)
        for (size_t j = i + 1; j < big.size(); ++j)
            if (set_intersect(big[i], big[j]).size() >= 2) root[find(i)] = find(j);

    std::map<size_t, CliqueGroup> groups;
    for (size_t i = 0; i < big.size(); ++i) {
        auto& grp = groups[find(i)];
        grp.cliques.push_back(big[i]);
        grp.x_q = set_union(grp.x_q, big[i]);
    }
    std::vector<CliqueGroup> out;
    for (auto& [_, grp] : groups) {
        std::sort(grp.cliques.begin(), grp.cliques.end());
        for (int v : grp.x_q)
            for (int nb : skeleton.neighbors(v))
                if (!set_contains(grp.x_q, nb)) set_insert(grp.n_q, nb);
        out.push_back(grp);
    }
    std::sort(out.begin(), out.end(),
              [](const CliqueGroup& a, const CliqueGroup& b) { return a.x_q < b.x_q; });
    return out;
}

// ---- atomic covers ----

namespace {

// Enumerate subsets of `pool` of given size, lexicographic.
void subsets_of_size(const VarSet& pool, size_t k, const std::function<void(const VarSet&)>& fn) {
    if (k > pool.size()) return;
    std::vector<size_t> idx(k);
    for (size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
        VarSet s;
        s.reserve(k);
        for (size_t i : idx) s.push_back(pool[i]);
        fn(s);
        size_t i = k;
        while (i > 0 && idx[i - 1] == pool.size() - (k - i) - 1) --i;
        if (i == 0) break;
        ++idx[i - 1];
        for (size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

// Max effective cardinality over families of mutually disjoint covers picked
// from `cands`, together with a promise that the rest of the neighbor pool
// keeps `need` elements. Returns true if some family has union >= need while
// leaving >= need neighbors outside the family.
bool exists_children_family(const std::vector<Cover>& cands, const VarSet& neighbor_pool,
                            size_t need) {
    // DFS over disjoint families; graphs are small.
    std::function<bool(size_t, VarSet)> go = [&](size_t i, VarSet used) -> bool {
        if (used.size() >= need &&
            set_minus(neighbor_pool, used).size() >= need)
            return true;
        if (i >= cands.size()) return false;
        if (go(i + 1, used)) return true;  // skip cands[i]
        if (sets_disjoint(cands[i].members, used))
            return go(i + 1, set_union(used, cands[i].members));
        return false;
    };
    return go(0, {});
}

bool def4_base(const MixedGraph& g, const Cover& v, const std::vector<Cover>& known) {
    size_t k = v.members.size();
    size_t t = 0;
    for (int m : v.members)
        if (g.is_observed(m)) ++t;
    if (k == 1 && t == 1) return true;

    VarSet pch = covered_children(g, v);
    if (pch.empty()) return false;
    // Def 3 requires the union of the children's parents to be exactly v.
    VarSet pa_union;
    for (int c : pch) pa_union = set_union(pa_union, g.parents(c));
    if (pa_union != v.members) return false;
    // members must be tied together through shared children; a cover whose
    // members parent disjoint child sets is a union of units, not a unit
    if (k > 1) {
        std::map<int, int> comp;
        for (int m : v.members) comp[m] = m;
        std::function<int(int)> find = [&](int x) {
            while (comp[x] != x) x = comp[x] = comp[comp[x]];
            return x;
        };
        for (int c : pch) {
            VarSet pa = set_intersect(g.parents(c), v.members);
            for (size_t i = 1; i < pa.size(); ++i) comp[find(pa[i])] = find(pa[0]);
        }
        std::set<int> roots;
        for (int m : v.members) roots.insert(find(m));
        if (roots.size() > 1) return false;
    }

    size_t need = k + 1 - t;
    std::vector<Cover> cands;
    for (const auto& c : known)
        if (set_minus(c.members, pch).empty()) cands.push_back(c);

    VarSet nbrs;
    for (int m : v.members)
        for (int nb : g.neighbors(m))
            if (!set_contains(v.members, nb)) set_insert(nbrs, nb);
    // N may draw from the children too as long as it avoids the chosen C.
    return exists_children_family(cands, nbrs, need);
}

}  // namespace

AtomicCoverAnalysis find_atomic_covers(const MixedGraph& g, int max_cover_size) {
    AtomicCoverAnalysis res;
    std::vector<Cover> known;
    for (int x : g.observed_ids()) known.push_back(Cover{{x}});

    // candidates: any subset of size <= cap containing at least one latent
    VarSet all = g.all_ids();
    std::vector<Cover> candidates;
    for (int size = 1; size <= max_cover_size; ++size) {
        subsets_of_size(all, static_cast<size_t>(size), [&](const VarSet& s) {
            bool has_lat = false;
            for (int m : s) has_lat = has_lat || g.is_latent(m);
            if (has_lat) candidates.push_back(Cover{s});
        });
    }

    // least fixpoint, ignoring the no-partition clause
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& v : candidates) {
            if (std::find(known.begin(), known.end(), v) != known.end()) continue;
            if (def4_base(g, v, known)) {
                known.push_back(v);
                changed = true;
            }
        }
    }

    // no-partition filter: an atomic cover must not decompose into two or
    // more smaller atomic covers
    std::map<VarSet, bool> memo;
    std::function<bool(const Cover&)> final_atomic = [&](const Cover& v) -> bool {
        auto it = memo.find(v.members);
        if (it != memo.end()) return it->second;
        bool base = std::find(known.begin(), known.end(), v) != known.end();
        if (base && v.members.size() > 1) {
            // decomposable(s): s splits into one or more final atomic parts
            std::function<bool(const VarSet&)> decomposable = [&](const VarSet& s) -> bool {
                if (s.empty()) return true;
                size_t n = s.size();
                for (uint32_t mask = 1; mask < (1u << n); ++mask) {
                    if (!(mask & 1)) continue;  // part must contain the first element
                    VarSet part, rest;
                    for (size_t i = 0; i < n; ++i) (mask >> i & 1 ? part : rest).push_back(s[i]);
                    if (final_atomic(Cover{part}) && decomposable(rest)) return true;
                }
                return false;
            };
            // look for a split into >= 2 final parts
            size_t n = v.members.size();
            for (uint32_t mask = 1; mask + 1 < (1u << n) && base; ++mask) {
                if (!(mask & 1)) continue;
                VarSet part, rest;
                for (size_t i = 0; i < n; ++i)
                    (mask >> i & 1 ? part : rest).push_back(v.members[i]);
                if (final_atomic(Cover{part}) && decomposable(rest)) base = false;
            }
        }
        memo[v.members] = base;
        return base;
    };

    for (const auto& v : known)
        if (final_atomic(v)) res.covers.push_back(v);
    std::sort(res.covers.begin(), res.covers.end());
    return res;
}

// ---- graph operators ----

namespace {

// Children of `cover`, grouped: true when they all share the identical parent
// set (i.e. they form a single cluster).
bool single_cluster(const MixedGraph& g, const VarSet& kids) {
    if (kids.empty()) return false;
    VarSet pa = g.parents(kids.front());
    for (int c : kids)
        if (g.parents(c) != pa) return false;
    return true;
}

}  // namespace

MixedGraph minimal_graph_operator(const MixedGraph& g_in) {
    MixedGraph g = g_in;
    bool changed = true;
    while (changed) {
        changed = false;
        // candidate P: small all-latent covers whose pure-child set is an
        // equally sized all-latent cover
        VarSet lats = g.latent_ids();
        std::vector<Cover> candidates;
        for (size_t i = 0; i < lats.size(); ++i) {
            candidates.push_back(Cover{{lats[i]}});
            for (size_t j = i + 1; j < lats.size(); ++j)
                if (g.children(lats[i]) == g.children(lats[j]))
                    candidates.push_back(Cover{{lats[i], lats[j]}});
        }
        for (const auto& p : candidates) {
            VarSet pch = covered_children(g, p);
            if (pch.size() != p.members.size()) continue;
            // every P member must actually parent the child cover
            bool covers_all = true;
            for (int pm : p.members) {
                bool has = false;
                for (int c : pch) has = has || g.has_edge(pm, c);
                covers_all = covers_all && has;
            }
            if (!covers_all) continue;
            bool l_all_latent = true;
            for (int m : pch) l_all_latent = l_all_latent && g.is_latent(m);
            if (!l_all_latent) continue;
            Cover l{pch};
            VarSet l_kids = covered_children(g, l);
            VarSet l_sibs;  // co-children of L's parents
            for (int m : pch)
                for (int pa : g.parents(m))
                    for (int sib : g.children(pa))
                        if (!set_contains(pch, sib)) set_insert(l_sibs, sib);
            bool cond3 = (!l_kids.empty() && single_cluster(g, l_kids)) ||
                         (!l_sibs.empty() && single_cluster(g, l_sibs));
            if (!cond3) continue;

            // merge: delete L, P's edges go directly to L's children
            VarSet kids;
            for (int m : pch) kids = set_union(kids, g.children(m));
            for (int m : pch) g.remove_node(m);
            for (int pm : p.members)
                for (int c : kids)
                    if (g.has_node(c)) g.add_edge(pm, c);
            changed = true;
            break;  // structure changed, restart the scan
        }
    }
    return g;
}

MixedGraph skeleton_operator(const MixedGraph& g_in) {
    MixedGraph g = g_in;
    auto analysis = find_atomic_covers(g);
    for (const auto& v : analysis.covers) {
        VarSet pch = covered_children(g, v);
        for (int m : v.members) {
            if (!g.is_latent(m)) continue;
            for (int c : pch)
                if (!g.adjacent(m, c)) g.add_edge(m, c);
        }
    }
    return g;
}

// ---- CPDAG / Meek ----

namespace {

bool creates_cycle_if(const MixedGraph& g, int from, int to) {
    // would from->to close a directed cycle, i.e. is `from` reachable from `to`?
    VarSet d = g.descendants(to);
    return to == from || set_contains(d, from);
}

// Orient a-b as a->b if admissible. Returns false on a conflict.
bool direct_edge(MixedGraph& g, int a, int b, OrientStats* stats) {
    if (g.has_edge(a, b)) return true;
    if (g.has_edge(b, a)) {
        if (stats)
            stats->conflicts.push_back("conflicting orientation " + std::to_string(a) + "->" +
                                       std::to_string(b));
        return false;
    }
    if (!g.has_undirected(a, b)) return false;
    g.remove_undirected(a, b);
    g.add_edge(a, b);
    return true;
}

}  // namespace

void meek_closure(MixedGraph& g, OrientStats* stats) {
    VarSet ids = g.all_ids();
    bool changed = true;
    auto orient = [&](int a, int b) {
        if (!g.has_undirected(a, b)) return false;
        if (creates_cycle_if(g, a, b)) return false;
        // refuse to create a new v-structure at b
        for (int p : g.parents(b))
            if (p != a && !g.adjacent(p, a)) return false;
        if (direct_edge(g, a, b, stats)) {
            if (stats) stats->meek_orientations++;
            return true;
        }
        return false;
    };
    while (changed) {
        changed = false;
        for (const auto& e : std::vector<Edge>(g.undirected_edges.begin(), g.undirected_edges.end())) {
            for (int flip = 0; flip < 2; ++flip) {
                int b = flip ? e.first : e.second;
                int c = flip ? e.second : e.first;
                if (!g.has_undirected(b, c)) continue;
                // R1: a -> b, b - c, a and c nonadjacent  =>  b -> c
                bool fire = false;
                for (int a : g.parents(b))
                    if (!g.adjacent(a, c)) { fire = true; break; }
                if (fire && orient(b, c)) { changed = true; continue; }
                // R2: b -> a -> c and b - c  =>  b -> c
                fire = false;
                for (int a : g.children(b))
                    if (g.has_edge(a, c)) { fire = true; break; }
                if (fire && orient(b, c)) { changed = true; continue; }
                // R3: b - a1 -> c, b - a2 -> c, a1,a2 nonadjacent, b - c  =>  b -> c
                fire = false;
                {
                    VarSet cand;
                    for (int a : g.parents(c))
                        if (g.has_undirected(b, a)) cand.push_back(a);
                    for (size_t i = 0; i < cand.size() && !fire; ++i)
                        for (size_t j = i + 1; j < cand.size() && !fire; ++j)
                            if (!g.adjacent(cand[i], cand[j])) fire = true;
                }
                if (fire && orient(b, c)) { changed = true; continue; }
                // R4: b - a, a -> d, d -> c, b - d (or adj), a,c nonadjacent  =>  b -> c
                fire = false;
                for (int d : g.parents(c)) {
                    if (!g.adjacent(b, d)) continue;
                    for (int a : g.parents(d)) {
                        if (a == b || !g.has_undirected(b, a)) continue;
                        if (!g.adjacent(a, c)) { fire = true; break; }
                    }
                    if (fire) break;
                }
                if (fire && orient(b, c)) { changed = true; continue; }
            }
        }
    }
}

MixedGraph dag_to_cpdag(const MixedGraph& g) {
    if (has_directed_cycle(g)) throw std::runtime_error("dag_to_cpdag: input has a directed cycle");
    MixedGraph out;
    for (const auto& n : g.nodes) out.add_node_with_id(n.id, n.kind, n.name);
    out.clusters = g.clusters;
    out.sepsets = g.sepsets;
    // start all-undirected, then force v-structure edges
    for (const auto& [p, c] : g.directed_edges) out.add_undirected(p, c);
    for (const auto& [a, b] : g.undirected_edges) out.add_undirected(a, b);
    for (const auto& n : g.nodes) {
        VarSet pa = g.parents(n.id);
        for (size_t i = 0; i < pa.size(); ++i)
            for (size_t j = i + 1; j < pa.size(); ++j)
                if (!g.adjacent(pa[i], pa[j])) {
                    direct_edge(out, pa[i], n.id, nullptr);
                    direct_edge(out, pa[j], n.id, nullptr);
                }
    }
    meek_closure(out);
    return out;
}

MixedGraph orient_from_sepsets(const MixedGraph& g, OrientStats* stats) {
    MixedGraph out = g;
    VarSet obs = out.observed_ids();
    // unshielded observed triples x - z - y with z not in sepset(x, y)
    for (int z : obs) {
        VarSet nb;
        for (int v : out.neighbors(z))
            if (out.is_observed(v)) nb.push_back(v);
        for (size_t i = 0; i < nb.size(); ++i) {
            for (size_t j = i + 1; j < nb.size(); ++j) {
                int x = nb[i], y = nb[j];
                if (out.adjacent(x, y)) continue;
                auto s = out.sepset(x, y);
                if (!s.has_value()) continue;
                if (set_contains(*s, z)) continue;
                bool ok_x = out.has_edge(x, z) || out.has_undirected(x, z);
                bool ok_y = out.has_edge(y, z) || out.has_undirected(y, z);
                if (!ok_x || !ok_y) {
                    if (stats)
                        stats->conflicts.push_back("v-structure " + std::to_string(x) + "->" +
                                                   std::to_string(z) + "<-" + std::to_string(y) +
                                                   " conflicts with prior orientation");
                    continue;
                }
                bool a = direct_edge(out, x, z, stats);
                bool b = direct_edge(out, y, z, stats);
                if (a && b && stats) stats->v_structures++;
            }
        }
    }
    meek_closure(out, stats);
    return out;
}

}  // namespace rlcd
