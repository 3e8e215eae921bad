#include "rlcd/discovery.hpp"

#include "rlcd/oracle.hpp"

#include <functional>
#include <future>
#include <sstream>

namespace rlcd {

// ---- WorkGraph ----

WorkGraph::WorkGraph(VarSet observed_vars, const std::map<int, std::string>& names,
                     int* latent_counter)
    : observed_(std::move(observed_vars)), latent_counter_(latent_counter) {
    for (int v : observed_) {
        auto it = names.find(v);
        g_.add_node_with_id(v, Kind::observed, it == names.end() ? "X" + std::to_string(v)
                                                                 : it->second);
    }
}

const CoverSet* WorkGraph::children_of(const Cover& c) const {
    for (const auto& r : g_.clusters)
        if (r.parent == c) return &r.children;
    return nullptr;
}

bool WorkGraph::has_record(const Cover& c) const { return children_of(c) != nullptr; }

VarSet WorkGraph::expand(const Cover& c) const {
    std::function<VarSet(const Cover&, int)> go = [&](const Cover& cv, int depth) -> VarSet {
        if (depth > 64) throw std::runtime_error("expand: cyclic cluster records");
        bool has_latent = false;
        for (int m : cv.members) has_latent = has_latent || g_.is_latent(m);
        if (!has_latent) return cv.members;
        const CoverSet* kids = children_of(cv);
        if (!kids)
            throw std::runtime_error("expand: latent cover without recorded pure children");
        VarSet out;
        for (int m : cv.members)
            if (g_.is_observed(m)) set_insert(out, m);
        for (const auto& k : *kids) out = set_union(out, go(k, depth + 1));
        return out;
    };
    return go(c, 0);
}

VarSet WorkGraph::expand(const CoverSet& cs) const {
    VarSet out;
    for (const auto& c : cs) out = set_union(out, expand(c));
    return out;
}

VarSet WorkGraph::observed_descendants(const VarSet& vars) const {
    return measured_descendants(g_, vars);
}

int WorkGraph::new_latent(const std::string& hint) {
    int id = (*latent_counter_)++;
    g_.add_node_with_id(id, Kind::latent, hint.empty() ? "L?" + std::to_string(id) : hint);
    return id;
}

int WorkGraph::commit(const Cover& parent, const CoverSet& children) {
    int added = 0;
    for (const auto& child : children)
        for (int v : child.members)
            for (int p : parent.members)
                if (p != v && !g_.has_edge(p, v)) {
                    g_.add_edge(p, v);
                    ++added;
                }
    for (auto& r : g_.clusters) {
        if (r.parent == parent) {
            CoverSet merged = r.children;
            for (const auto& c : children) merged.push_back(c);
            normalize(merged);
            r.children = merged;
            return added;
        }
    }
    ClusterRecord rec;
    rec.parent = parent;
    rec.children = children;
    normalize(rec.children);
    g_.clusters.push_back(rec);
    return added;
}

void WorkGraph::drop_latents(const VarSet& latents) {
    for (int l : latents) g_.remove_node(l);
}

std::string WorkGraph::signature() const {
    VarSet lats = g_.latent_ids();
    // canonical latent order by observed descendant fingerprint
    std::vector<std::pair<std::string, int>> keyed;
    for (int l : lats) {
        std::string key;
        for (int d : measured_descendants(g_, VarSet{l})) key += std::to_string(d) + ",";
        key += "|";
        for (int p : g_.parents(l))
            if (g_.is_observed(p)) key += std::to_string(p) + ",";
        keyed.push_back({key, l});
    }
    std::sort(keyed.begin(), keyed.end());
    std::map<int, int> relabel;
    for (size_t i = 0; i < keyed.size(); ++i) relabel[keyed[i].second] = -(int)(i + 1);
    auto m = [&](int v) { return relabel.count(v) ? relabel[v] : v; };

    std::vector<std::string> edges;
    for (const auto& [p, c] : g_.directed_edges)
        edges.push_back(std::to_string(m(p)) + ">" + std::to_string(m(c)));
    std::sort(edges.begin(), edges.end());
    std::string out;
    for (const auto& e : edges) out += e + ";";
    return out;
}

std::optional<bool> is_rank_le(RankProvider& p, const WorkGraph& w, const CoverSet& a,
                               const CoverSet& b, int r, QueryStage stage) {
    return p.rank_le(w.expand(a), w.expand(b), r, stage);
}

// ---- Phase 1 ----

MixedGraph find_ci_skeleton(RankProvider& p, const VarSet& vars,
                            const std::map<int, std::string>& names, const DiscoveryConfig& cfg,
                            RunLog* log) {
    MixedGraph g;
    for (int v : vars) {
        auto it = names.find(v);
        g.add_node_with_id(v, Kind::observed, it == names.end() ? "X" + std::to_string(v)
                                                                : it->second);
    }
    for (size_t i = 0; i < vars.size(); ++i)
        for (size_t j = i + 1; j < vars.size(); ++j) g.add_undirected(vars[i], vars[j]);

    size_t ell = 0;
    const size_t ell_cap = cfg.max_cond_set.has_value()
                               ? static_cast<size_t>(*cfg.max_cond_set)
                               : vars.size();
    while (ell <= ell_cap) {
        bool any_candidate = false;
        for (int x : vars)
            for (int y : vars) {
                if (x == y || !g.has_undirected(x, y)) continue;
                VarSet adj = set_minus(g.neighbors(x), {y});
                if (adj.size() >= ell) any_candidate = true;
            }
        if (!any_candidate) break;

        std::vector<Edge> pairs;
        for (int x : vars)
            for (int y : vars)
                if (x != y && g.has_undirected(x, y)) pairs.push_back({x, y});

        for (const auto& [x, y] : pairs) {
            if (!g.has_undirected(x, y)) continue;
            VarSet pool = set_minus(g.neighbors(x), {y});
            if (pool.size() < ell) continue;
            bool removed = false;
            std::function<void(size_t, VarSet&)> go = [&](size_t start, VarSet& s) {
                if (removed) return;
                if (s.size() == ell) {
                    VarSet rows = set_union(VarSet{x}, s);
                    VarSet cols = set_union(VarSet{y}, s);
                    auto q = p.rank_le(rows, cols, static_cast<int>(ell), QueryStage::skeleton);
                    if (!q.has_value()) {
                        if (log) {
                            log->indeterminate++;
                            log->note("phase1: indeterminate CI test, edge kept");
                        }
                        return;
                    }
                    if (*q) {
                        g.remove_undirected(x, y);
                        g.record_sepset(x, y, s);
                        removed = true;
                    }
                    return;
                }
                for (size_t i = start; i < pool.size() && !removed; ++i) {
                    s.push_back(pool[i]);
                    go(i + 1, s);
                    s.pop_back();
                }
            };
            VarSet s;
            go(0, s);
        }
        ++ell;
    }
    return g;
}

// ---- search helpers ----

namespace {

std::string covers_str(const CoverSet& cs) {
    std::string out = "{";
    for (const auto& c : cs) {
        out += "{";
        for (size_t i = 0; i < c.members.size(); ++i)
            out += (i ? "," : "") + std::to_string(c.members[i]);
        out += "}";
    }
    return out + "}";
}

// Column side of the deficiency test: X plus every group variable outside C
// that is not a recorded measured descendant of C.
VarSet deficiency_columns(const WorkGraph& w, const VarSet& c_vars, const VarSet& x_vars) {
    VarSet cols = set_minus(w.observed(), c_vars);
    cols = set_minus(cols, w.observed_descendants(c_vars));
    return set_union(cols, x_vars);
}

void combinations(const std::vector<Cover>& pool, size_t count,
                  const std::function<void(const std::vector<Cover>&)>& fn) {
    if (count > pool.size()) return;
    std::vector<size_t> idx(count);
    for (size_t i = 0; i < count; ++i) idx[i] = i;
    while (true) {
        std::vector<Cover> out;
        for (size_t i : idx) out.push_back(pool[i]);
        fn(out);
        size_t i = count;
        while (i > 0 && idx[i - 1] == pool.size() - (count - i) - 1) --i;
        if (i == 0) break;
        ++idx[i - 1];
        for (size_t j = i; j < count; ++j) idx[j] = idx[j - 1] + 1;
    }
    if (count == 0) fn({});
}

// Draws C from the pool with effective cardinality exactly `target`, vars disjoint
// from `exclude`; every cover must contribute a new variable.
void draw_cover_sets(const std::vector<Cover>& pool, size_t target, const VarSet& exclude,
                     const std::function<void(const CoverSet&)>& fn) {
    std::function<void(size_t, CoverSet&, VarSet&)> go = [&](size_t start, CoverSet& cur,
                                                             VarSet& uni) {
        if (uni.size() == target) {
            fn(cur);
            return;
        }
        for (size_t i = start; i < pool.size(); ++i) {
            const Cover& cand = pool[i];
            if (!sets_disjoint(cand.members, exclude)) continue;
            VarSet uni2 = set_union(uni, cand.members);
            if (uni2.size() > target || uni2.size() == uni.size()) continue;
            cur.push_back(cand);
            go(i + 1, cur, uni2);
            cur.pop_back();
        }
    };
    CoverSet cur;
    VarSet uni;
    go(0, cur, uni);
}

struct Entry {
    CoverSet children;
    VarSet child_vars;
};

}  // namespace

bool no_collider(RankProvider& p, const WorkGraph& w, const CoverSet& c, const CoverSet& x,
                 const CoverSet& n, RunLog* log) {
    if (c.size() <= 1) return true;
    VarSet col_vars = w.expand(n);
    col_vars = set_union(col_vars, w.expand(x));
    if (col_vars.empty()) return true;
    for (size_t sz = 1; sz < c.size(); ++sz) {
        bool veto = false;
        combinations(c, sz, [&](const std::vector<Cover>& sub) {
            if (veto) return;
            CoverSet cs(sub.begin(), sub.end());
            for (const auto& xc : x) cs.push_back(xc);
            normalize(cs);
            VarSet rows = w.expand(cs);
            int threshold = static_cast<int>(effective_cardinality(cs));
            auto q = p.rank_le(rows, col_vars, threshold - 1, QueryStage::cluster);
            if (q.has_value() && *q) veto = true;
        });
        if (veto) {
            if (log) log->vetoes++;
            return false;
        }
    }
    return true;
}

std::optional<CoverSet> neighbor_collider_check(RankProvider& p, const WorkGraph& w,
                                                const CoverSet& c, const CoverSet& x,
                                                const CoverSet& n, int k, RunLog* log) {
    if (n.empty()) return std::nullopt;
    VarSet rows_cx = set_union(w.expand(c), w.expand(x));
    VarSet cols_nx = set_union(w.expand(n), w.expand(x));
    for (size_t sz = 1; sz <= n.size(); ++sz) {
        std::optional<CoverSet> hit;
        combinations(n, sz, [&](const std::vector<Cover>& sub) {
            if (hit.has_value()) return;
            CoverSet nprime(sub.begin(), sub.end());
            CoverSet rest;
            for (const auto& cov : n)
                if (std::find(nprime.begin(), nprime.end(), cov) == nprime.end())
                    rest.push_back(cov);
            VarSet cols_rest = set_union(w.expand(rest), w.expand(x));
            if (cols_rest.empty()) return;
            // k' = rank over the reduced columns, must be < k
            int kprime = -1;
            for (int r = 0; r < k; ++r) {
                auto q = p.rank_le(rows_cx, cols_rest, r, QueryStage::cluster);
                if (q.has_value() && *q) {
                    kprime = r;
                    break;
                }
            }
            if (kprime < 0) return;
            VarSet rows_b = set_union(rows_cx, w.expand(nprime));
            int bound = kprime + static_cast<int>(effective_cardinality(nprime));
            auto q2 = p.rank_le(rows_b, cols_nx, bound, QueryStage::cluster);
            if (q2.has_value() && !*q2) hit = nprime;
        });
        if (hit.has_value()) {
            if (log) {
                log->vetoes++;
                log->note("neighbor collider veto: N'=" + covers_str(*hit));
            }
            return hit;
        }
    }
    return std::nullopt;
}

namespace {

// Bookkeeping on recorded smaller clusters: a candidate C may reuse at most
// |Pa(C')| variables of any recorded cluster C' of cardinality below k.
bool prefilter_ok(const WorkGraph& w, const VarSet& c_vars, int k) {
    for (const auto& rec : w.records()) {
        if (static_cast<int>(rec.parent.members.size()) >= k) continue;
        VarSet rec_vars = cover_union(rec.children);
        if (set_intersect(c_vars, rec_vars).size() > rec.parent.members.size()) return false;
    }
    return true;
}

std::optional<bool> tight_rank_k(RankProvider& p, const VarSet& rows, const VarSet& cols, int k) {
    auto le_k = p.rank_le(rows, cols, k, QueryStage::cluster);
    if (!le_k.has_value()) return std::nullopt;
    if (!*le_k) return false;
    auto le_km1 = p.rank_le(rows, cols, k - 1, QueryStage::cluster);
    if (!le_km1.has_value()) return std::nullopt;
    return !*le_km1;
}

// Commit a merged deficiency entry. Returns 1 when structure was added, 0 on
// a no-op re-commit, -1 when the entry had to be skipped.
int commit_entry(RankProvider& p, WorkGraph& w, CoverSet& active, const CoverSet& children,
                 const CoverSet& x, int k, RunLog* log) {
    VarSet child_vars = cover_union(children);
    VarSet pa;
    for (int v : child_vars) pa = set_union(pa, w.graph().parents(v));
    VarSet x_vars = cover_union(x);
    VarSet pa_ux = set_union(pa, x_vars);
    Cover parent;
    int fresh = 0;
    if (static_cast<int>(pa_ux.size()) > k) {
        if (log)
            log->note("skip commit: recorded parents exceed k for children " +
                      covers_str(children));
        return -1;
    }
    if (static_cast<int>(pa_ux.size()) == k) {
        parent = Cover{pa_ux};
    } else {
        fresh = k - static_cast<int>(pa_ux.size());
        // fresh latents may extend observed partial parents, never recorded
        // latent ones: a true k-cover with a latent member would have fired
        // as one unit
        for (int m : pa_ux)
            if (w.graph().is_latent(m)) {
                if (log)
                    log->note("skip commit: fresh latent beside latent parent for " +
                              covers_str(children));
                return -1;
            }
        // latent-existence gate: a new latent needs an adjacent pair among
        // its prospective children that shares two further skeleton
        // neighbors; otherwise the deficiency has a latent-free explanation
        if (w.has_skeleton()) {
            VarSet expanded;
            try {
                expanded = w.expand(children);
            } catch (const std::runtime_error&) {
                expanded = child_vars;
            }
            // need an adjacent clique A of size fresh+1 among the children
            // and as many common neighbors B with the rank dropping below
            // |A| + |X|
            const size_t s = static_cast<size_t>(fresh) + 1;
            bool justified = false;
            std::vector<Cover> exp_pool;
            for (int v : expanded) exp_pool.push_back(Cover{{v}});
            combinations(exp_pool, s, [&](const std::vector<Cover>& asel) {
                if (justified) return;
                VarSet a_vars;
                for (const auto& c : asel) a_vars.push_back(c.members[0]);
                std::sort(a_vars.begin(), a_vars.end());
                for (size_t i = 0; i < a_vars.size(); ++i)
                    for (size_t j = i + 1; j < a_vars.size(); ++j)
                        if (!w.skeleton_adjacent(a_vars[i], a_vars[j])) return;
                VarSet common;
                for (int v : w.observed()) {
                    if (set_contains(a_vars, v) || set_contains(x_vars, v)) continue;
                    bool all = true;
                    for (int a : a_vars) all = all && w.skeleton_adjacent(v, a);
                    if (all) common.push_back(v);
                }
                if (common.size() < s) return;
                VarSet a_side = set_union(a_vars, x_vars);
                int bound = static_cast<int>(s + x_vars.size()) - 1;
                std::vector<Cover> bpool;
                for (int v : common) bpool.push_back(Cover{{v}});
                int tries = 0;
                combinations(bpool, s, [&](const std::vector<Cover>& bsel) {
                    if (justified || ++tries > 60) return;
                    VarSet b_vars;
                    for (const auto& c : bsel) b_vars.push_back(c.members[0]);
                    std::sort(b_vars.begin(), b_vars.end());
                    auto le = p.rank_le(a_side, set_union(b_vars, x_vars), bound,
                                        QueryStage::cluster);
                    if (le.has_value() && *le) justified = true;
                });
            });
            if (!justified) {
                if (log)
                    log->note("skip commit: no latent-existence support for " +
                              covers_str(children));
                return -1;
            }
        }
        VarSet members = pa_ux;
        for (int i = 0; i < fresh; ++i) set_insert(members, w.new_latent());
        parent = Cover{members};
    }
    // cycle guard: a parent must not descend from a child
    for (int pm : parent.members) {
        if (set_contains(child_vars, pm)) {
            if (log) log->note("skip commit: parent inside children " + covers_str(children));
            return -1;
        }
        VarSet desc = w.graph().descendants(pm);
        (void)desc;
    }
    for (int v : child_vars) {
        VarSet desc = w.graph().descendants(v);
        for (int pm : parent.members)
            if (set_contains(desc, pm)) {
                if (log)
                    log->note("skip commit (cycle guard): " + covers_str(children));
                return -1;
            }
    }
    int added = w.commit(parent, children);
    bool noop = added == 0 && fresh == 0;
    if (noop) return 0;
    if (log) {
        log->commits++;
        log->note("commit k=" + std::to_string(k) + " parent=" + covers_str({parent}) +
                  " children=" + covers_str(children));
    }
    // active set: children covers out, parent in when atomic-like
    CoverSet next;
    for (const auto& cv : active)
        if (std::find(children.begin(), children.end(), cv) == children.end())
            next.push_back(cv);
    bool parent_has_latent = false;
    for (int m : parent.members) parent_has_latent = parent_has_latent || w.graph().is_latent(m);
    if (parent_has_latent || parent.members.size() == 1) next.push_back(parent);
    normalize(next);
    active = next;
    return 1;
}

}  // namespace

bool search_k(RankProvider& p, WorkGraph& w, CoverSet& active, int k,
              const DiscoveryConfig& cfg, RunLog* log) {
    // unfoldable covers: those with recorded children. The empty unfolding is
    // tried first; unfolding widens the search only after the plain active
    // set is exhausted.
    std::vector<Cover> recorded;
    for (const auto& cv : active)
        if (w.has_record(cv)) recorded.push_back(cv);
    std::sort(recorded.begin(), recorded.end());

    for (size_t tsize = 0; tsize <= recorded.size(); ++tsize) {
        bool committed = false;
        combinations(recorded, tsize, [&](const std::vector<Cover>& tsel) {
            if (committed) return;
            CoverSet sprime;
            for (const auto& cv : active)
                if (std::find(tsel.begin(), tsel.end(), cv) == tsel.end()) sprime.push_back(cv);
            for (const auto& cv : tsel) {
                const CoverSet* kids = w.children_of(cv);
                for (const auto& kid : *kids) sprime.push_back(kid);
            }
            normalize(sprime);

            std::vector<Cover> observed_singles;
            for (const auto& cv : sprime)
                if (cv.members.size() == 1 && w.graph().is_observed(cv.members[0]))
                    observed_singles.push_back(cv);

            for (int t = k; t >= 0 && !committed; --t) {
                combinations(observed_singles, static_cast<size_t>(t),
                             [&](const std::vector<Cover>& xsel) {
                    if (committed) return;
                    CoverSet x(xsel.begin(), xsel.end());
                    VarSet x_vars = cover_union(x);

                    std::vector<Cover> pool;
                    for (const auto& cv : sprime)
                        if (std::find(x.begin(), x.end(), cv) == x.end()) pool.push_back(cv);

                    std::vector<Entry> entries;
                    size_t target = static_cast<size_t>(k - t + 1);
                    draw_cover_sets(pool, target, x_vars, [&](const CoverSet& c) {
                        VarSet c_vars = cover_union(c);
                        if (!prefilter_ok(w, c_vars, k)) return;
                        VarSet cols = deficiency_columns(w, c_vars, x_vars);
                        if (static_cast<int>(cols.size()) < k + 1) return;
                        VarSet rows;
                        try {
                            rows = set_union(w.expand(c), x_vars);
                        } catch (const std::runtime_error& e) {
                            if (log) log->note(std::string("expand failed: ") + e.what());
                            return;
                        }
                        auto tight = tight_rank_k(p, rows, cols, k);
                        if (!tight.has_value()) {
                            if (log) log->indeterminate++;
                            return;
                        }
                        if (!*tight) return;
                        // every X member must be load-bearing: dropping one
                        // must not leave a (k-1)-deficiency, otherwise this is
                        // a smaller cluster padded with an unrelated variable
                        for (const auto& xc : x) {
                            VarSet x_rest = set_minus(x_vars, xc.members);
                            VarSet rows2 = set_union(w.expand(c), x_rest);
                            VarSet cols2 = deficiency_columns(w, c_vars, x_rest);
                            auto le = p.rank_le(rows2, cols2, k - 1, QueryStage::cluster);
                            if (le.has_value() && *le) return;
                        }
                        CoverSet n;
                        for (const auto& cv : pool)
                            if (std::find(c.begin(), c.end(), cv) == c.end()) n.push_back(cv);
                        if (!no_collider(p, w, c, x, n, log)) return;
                        if (cfg.enable_neighbor_collider_check &&
                            neighbor_collider_check(p, w, c, x, n, k, log).has_value())
                            return;
                        entries.push_back({c, c_vars});
                    });
                    if (entries.empty()) return;

                    // merge overlapping entries into components
                    std::vector<Entry> comps;
                    for (const auto& e : entries) {
                        std::vector<Entry> next;
                        Entry cur = e;
                        for (auto& comp : comps) {
                            if (!sets_disjoint(comp.child_vars, cur.child_vars)) {
                                for (const auto& cv : comp.children) cur.children.push_back(cv);
                                cur.child_vars = set_union(cur.child_vars, comp.child_vars);
                            } else {
                                next.push_back(comp);
                            }
                        }
                        normalize(cur.children);
                        next.push_back(cur);
                        comps = next;
                    }

                    // merge disjoint components sharing this X unless a mixed
                    // draw was possible (its absence from the entries means it
                    // failed the deficiency test)
                    auto mixed_drawable = [&](const Entry& a, const Entry& b) {
                        for (const auto& u : a.children)
                            for (const auto& v : b.children) {
                                if (!sets_disjoint(u.members, v.members)) continue;
                                VarSet uni = set_union(u.members, v.members);
                                if (!sets_disjoint(uni, x_vars)) continue;
                                if (uni.size() == target) return true;
                            }
                        return false;
                    };
                    bool changed = true;
                    while (changed) {
                        changed = false;
                        for (size_t i = 0; i < comps.size() && !changed; ++i)
                            for (size_t j = i + 1; j < comps.size() && !changed; ++j) {
                                if (mixed_drawable(comps[i], comps[j])) continue;
                                Entry merged;
                                merged.children = comps[i].children;
                                for (const auto& cv : comps[j].children)
                                    merged.children.push_back(cv);
                                normalize(merged.children);
                                merged.child_vars =
                                    set_union(comps[i].child_vars, comps[j].child_vars);
                                comps.erase(comps.begin() + static_cast<long>(j));
                                comps[i] = merged;
                                changed = true;
                            }
                    }

                    // re-verify merged sets at rank k when columns allow it;
                    // fall back to the raw entries on failure
                    std::vector<Entry> finals;
                    for (const auto& comp : comps) {
                        VarSet cols = deficiency_columns(w, comp.child_vars, x_vars);
                        bool ok = true;
                        if (static_cast<int>(cols.size()) >= k + 1) {
                            VarSet rows = set_union(w.expand(comp.children), x_vars);
                            auto tight = tight_rank_k(p, rows, cols, k);
                            ok = tight.has_value() && *tight;
                        }
                        if (ok) {
                            finals.push_back(comp);
                        } else {
                            if (log)
                                log->note("merged entry failed re-verification, committing parts");
                            for (const auto& e : entries)
                                if (!sets_disjoint(e.child_vars, comp.child_vars))
                                    finals.push_back(e);
                        }
                    }

                    for (const auto& f : finals) {
                        int rc = commit_entry(p, w, active, f.children, x, k, log);
                        if (rc == 1) committed = true;
                    }
                });
            }
        });
        if (committed) return true;
    }
    return false;
}

namespace {

size_t full_expansion_size(const WorkGraph& w, const CoverSet& active) {
    VarSet all;
    for (const auto& cv : active) {
        try {
            all = set_union(all, w.expand(cv));
        } catch (const std::runtime_error&) {
            all = set_union(all, cv.members);
        }
    }
    return all.size();
}

}  // namespace

void find_causal_clusters(RankProvider& p, WorkGraph& w, const DiscoveryConfig& cfg, RunLog* log,
                          std::optional<CoverSet> initial_active) {
    CoverSet active;
    if (initial_active.has_value()) {
        active = *initial_active;
    } else {
        for (int v : w.observed()) active.push_back(Cover{{v}});
    }
    normalize(active);
    int k = 1;
    while (true) {
        size_t full = full_expansion_size(w, active);
        int bound = cfg.k_max.has_value() ? *cfg.k_max
                                          : std::max(0, static_cast<int>(full) - 2);
        if (k > bound) break;
        bool found = search_k(p, w, active, k, cfg, log);
        k = found ? 1 : k + 1;
    }
}

namespace {

CoverSet reconstruct_active(const WorkGraph& w) {
    // covers that are nobody's child, plus unrecorded observed singletons
    std::vector<Cover> child_covers;
    VarSet child_vars;
    for (const auto& r : w.records()) {
        for (const auto& c : r.children) {
            child_covers.push_back(c);
            child_vars = set_union(child_vars, c.members);
        }
    }
    CoverSet active;
    for (int v : w.observed())
        if (!set_contains(child_vars, v)) active.push_back(Cover{{v}});
    for (const auto& r : w.records()) {
        bool is_child = std::find(child_covers.begin(), child_covers.end(), r.parent) !=
                        child_covers.end();
        bool alive = true;
        for (int m : r.parent.members) alive = alive && w.graph().has_node(m);
        bool has_latent = false;
        for (int m : r.parent.members)
            has_latent = has_latent || (w.graph().has_node(m) && w.graph().is_latent(m));
        if (alive && !is_child && (has_latent || r.parent.members.size() == 1))
            active.push_back(r.parent);
    }
    normalize(active);
    return active;
}

}  // namespace

// Disagreement between the rank constraints entailed by the committed graph
// and the ones the provider reports, over all observed 1x1 and 2x2 queries.
// Matching scores mean the committed structure sits in the same
// rank-equivalence class as the data.
static size_t rank_audit(RankProvider& p, const WorkGraph& w) {
    const MixedGraph& g = w.graph();
    VarSet obs = w.observed();
    size_t score = 0;
    auto compare = [&](const VarSet& a, const VarSet& b) {
        int implied = trek_rank(g, a, b);
        auto got = p.rank_of(a, b, QueryStage::cluster);
        if (!got.has_value()) return;
        score += static_cast<size_t>(std::abs(implied - *got));
    };
    for (size_t i = 0; i < obs.size(); ++i)
        for (size_t j = i + 1; j < obs.size(); ++j) compare({obs[i]}, {obs[j]});
    std::vector<Edge> pairs;
    for (size_t i = 0; i < obs.size(); ++i)
        for (size_t j = i + 1; j < obs.size(); ++j) pairs.push_back({obs[i], obs[j]});
    for (size_t i = 0; i < pairs.size(); ++i)
        for (size_t j = i + 1; j < pairs.size(); ++j) {
            VarSet a = {pairs[i].first, pairs[i].second};
            VarSet b = {pairs[j].first, pairs[j].second};
            if (!sets_disjoint(a, b)) continue;
            compare(a, b);
        }
    return score;
}

void refine_causal_clusters(RankProvider& p, WorkGraph& w, const DiscoveryConfig& cfg,
                            RunLog* log, const std::set<Edge>*) {
    for (int pass = 0; pass < 4; ++pass) {
        std::string before = w.signature();
        std::vector<Cover> targets;
        for (const auto& r : w.records()) targets.push_back(r.parent);
        std::sort(targets.begin(), targets.end());
        for (const auto& v : targets) {
            bool alive = true;
            for (int m : v.members) alive = alive && w.graph().has_node(m);
            if (!alive || !w.has_record(v)) continue;
            WorkGraph backup = w;
            size_t audit_before = rank_audit(p, w);
            if (audit_before == 0) break;  // committed structure already rank-exact
            if (log) log->note("refine: dropping cover " + covers_str({v}));

            // surgical removal: this record, the edges it committed, the
            // cover's latents and latent neighbors
            MixedGraph& g = w.graph();
            CoverSet kids = *w.children_of(v);
            for (const auto& cc : kids)
                for (int c : cc.members)
                    for (int m : v.members) g.directed_edges.erase({m, c});
            for (auto it = g.clusters.begin(); it != g.clusters.end();)
                it = (it->parent == v) ? g.clusters.erase(it) : std::next(it);
            VarSet to_drop;
            for (int m : v.members)
                if (g.is_latent(m)) set_insert(to_drop, m);
            for (int m : v.members)
                for (int nb : g.neighbors(m))
                    if (g.is_latent(nb)) set_insert(to_drop, nb);
            w.drop_latents(to_drop);
            // cascade: latents without a record of their own are unexpandable
            bool cascading = true;
            while (cascading) {
                cascading = false;
                for (int l : g.latent_ids()) {
                    bool has_own = false;
                    for (const auto& r : g.clusters)
                        if (set_contains(r.parent.members, l)) has_own = true;
                    if (!has_own) {
                        g.remove_node(l);
                        cascading = true;
                        break;
                    }
                }
            }
            CoverSet active = reconstruct_active(w);
            find_causal_clusters(p, w, cfg, log, active);
            if (rank_audit(p, w) >= audit_before) {
                if (log) log->note("refine: re-run did not improve, rolled back");
                w = backup;
            }
        }
        if (w.signature() == before) break;
    }
}

// ---- full pipeline ----

namespace {

bool trek_connected_in(const MixedGraph& g, int u, int v) {
    // share a common ancestor (including themselves)
    auto ancestors = [&](int s) {
        VarSet out{s};
        bool grew = true;
        while (grew) {
            grew = false;
            for (const auto& [pp, cc] : g.directed_edges)
                if (set_contains(out, cc) && !set_contains(out, pp)) {
                    set_insert(out, pp);
                    grew = true;
                }
        }
        return out;
    };
    return !set_intersect(ancestors(u), ancestors(v)).empty();
}

struct GroupResult {
    CliqueGroup group;
    MixedGraph cpdag;                 // group CPDAG over x_q plus kept latents
    std::vector<ClusterRecord> records;
    VarSet kept_latents;
    MixedGraph committed;             // raw committed DAG, for edge retention
    RunLog log;
};

GroupResult run_group(RankProvider& p, const CliqueGroup& grp,
                      const std::map<int, std::string>& names, const DiscoveryConfig& cfg,
                      int latent_base, const std::set<Edge>* phase1_edges) {
    GroupResult out;
    out.group = grp;
    int counter = latent_base;
    VarSet vars = set_union(grp.x_q, grp.n_q);
    WorkGraph w(vars, names, &counter);
    if (phase1_edges) w.set_skeleton(*phase1_edges);
    find_causal_clusters(p, w, cfg, &out.log);
    refine_causal_clusters(p, w, cfg, &out.log, phase1_edges);

    // keep only latents that mediate at least two x_q variables
    VarSet latents = w.graph().latent_ids();
    VarSet drop;
    for (int l : latents) {
        VarSet mde = measured_descendants(w.graph(), VarSet{l});
        if (set_intersect(mde, grp.x_q).size() < 2) set_insert(drop, l);
    }
    w.drop_latents(drop);
    out.kept_latents = w.graph().latent_ids();
    out.committed = w.graph();
    out.records = w.graph().clusters;
    out.cpdag = dag_to_cpdag(w.graph());
    return out;
}

}  // namespace

DiscoverResult discover(RankProvider& p, const VarSet& vars,
                        const std::map<int, std::string>& names, const DiscoveryConfig& cfg) {
    DiscoverResult res;
    MixedGraph skeleton = find_ci_skeleton(p, vars, names, cfg, &res.log);
    res.log.note("phase1: " + std::to_string(skeleton.undirected_edges.size()) + " edges");

    auto cliques = maximal_cliques(skeleton);
    auto groups = group_cliques(cliques, skeleton);
    res.log.note("phase1: " + std::to_string(groups.size()) + " clique groups");

    // Phases 2-3 per group, optionally in parallel; merge in fixed order.
    std::vector<GroupResult> results(groups.size());
    if (cfg.parallel_groups && groups.size() > 1) {
        std::vector<std::future<GroupResult>> futs;
        for (size_t i = 0; i < groups.size(); ++i)
            futs.push_back(std::async(std::launch::async, [&, i] {
                return run_group(p, groups[i], names, cfg, 1000000 + static_cast<int>(i) * 10000,
                                 &skeleton.undirected_edges);
            }));
        for (size_t i = 0; i < groups.size(); ++i) results[i] = futs[i].get();
    } else {
        for (size_t i = 0; i < groups.size(); ++i)
            results[i] = run_group(p, groups[i], names, cfg, 1000000 + static_cast<int>(i) * 10000,
                                   &skeleton.undirected_edges);
    }

    MixedGraph out = skeleton;
    int next_latent_name = 1;
    for (auto& gr : results) {
        for (const auto& line : gr.log.lines) res.log.lines.push_back(line);
        res.log.commits += gr.log.commits;
        res.log.vetoes += gr.log.vetoes;
        res.log.indeterminate += gr.log.indeterminate;

        // remap this group's latents to global ids with display names
        std::map<int, int> remap;
        for (int l : gr.kept_latents) {
            int gid = out.add_node(Kind::latent, "L" + std::to_string(next_latent_name));
            ++next_latent_name;
            remap[l] = gid;
        }
        auto m = [&](int v) { return remap.count(v) ? remap.at(v) : v; };
        auto in_scope = [&](int v) {
            return remap.count(v) > 0 || set_contains(gr.group.x_q, v);
        };

        // A group that discovered no latents has nothing to add over the
        // phase-1 skeleton; sepset orientation handles it (the latent-free
        // special case degenerates to PC).
        if (gr.kept_latents.empty()) continue;

        // D.4(ii): drop intra-x_q edges, then copy the group's class edges
        for (size_t i = 0; i < gr.group.x_q.size(); ++i)
            for (size_t j = i + 1; j < gr.group.x_q.size(); ++j)
                out.remove_undirected(gr.group.x_q[i], gr.group.x_q[j]);
        for (const auto& [a, b] : gr.cpdag.directed_edges)
            if (in_scope(a) && in_scope(b)) out.add_edge(m(a), m(b));
        for (const auto& [a, b] : gr.cpdag.undirected_edges)
            if (in_scope(a) && in_scope(b)) out.add_undirected(m(a), m(b));

        // keep a phase-1 adjacency the group left wholly unexplained
        for (size_t i = 0; i < gr.group.x_q.size(); ++i)
            for (size_t j = i + 1; j < gr.group.x_q.size(); ++j) {
                int u = gr.group.x_q[i], v = gr.group.x_q[j];
                if (!skeleton.has_undirected(u, v) || out.adjacent(u, v)) continue;
                if (!trek_connected_in(gr.committed, u, v)) {
                    out.add_undirected(u, v);
                    res.log.note("retained phase-1 edge " + std::to_string(u) + "-" +
                                 std::to_string(v) + " unexplained by its group");
                }
            }

        for (const auto& rec : gr.records) {
            bool alive = true;
            for (int mm : rec.parent.members)
                if (mm >= 1000000 && !remap.count(mm)) alive = false;
            for (const auto& c : rec.children)
                for (int mm : c.members)
                    if (mm >= 1000000 && !remap.count(mm)) alive = false;
            if (!alive) continue;
            ClusterRecord mapped;
            VarSet pm;
            for (int mm : rec.parent.members) set_insert(pm, m(mm));
            mapped.parent = Cover{pm};
            for (const auto& c : rec.children) {
                VarSet cm;
                for (int mm : c.members) set_insert(cm, m(mm));
                mapped.children.push_back(Cover{cm});
            }
            normalize(mapped.children);
            out.clusters.push_back(mapped);
        }
    }

    OrientStats stats;
    MixedGraph oriented = orient_from_sepsets(out, &stats);
    for (const auto& cfl : stats.conflicts) res.log.note("orientation conflict: " + cfl);
    res.log.note("orientation: " + std::to_string(stats.v_structures) + " v-structures, " +
                 std::to_string(stats.meek_orientations) + " meek orientations");
    res.graph = oriented;
    return res;
}

}  // namespace rlcd
