#include "rlcd/oracle.hpp"

#include <deque>
#include <functional>

namespace rlcd {

// ---- trek rank via max flow ----
//
// Two-sided trek network: an A-side copy of the graph with reversed edges, a
// B-side copy with forward edges, and a crossover arc at every vertex (the
// trek source). Unit vertex capacities via in/out node splitting make the max
// flow equal the minimum |C_A| + |C_B| over t-separating pairs.

namespace {

struct FlowNet {
    // adjacency with residual capacities
    struct Arc {
        int to;
        int cap;
        size_t rev;
    };
    std::vector<std::vector<Arc>> adj;

    explicit FlowNet(size_t n) : adj(n) {}

    void add(int u, int v, int cap) {
        adj[u].push_back({v, cap, adj[v].size()});
        adj[v].push_back({u, 0, adj[u].size() - 1});
    }

    int max_flow(int s, int t) {
        int flow = 0;
        while (true) {
            // BFS for an augmenting path
            std::vector<std::pair<int, size_t>> pre(adj.size(), {-1, 0});
            std::deque<int> q{s};
            pre[s] = {s, 0};
            while (!q.empty() && pre[t].first == -1) {
                int u = q.front();
                q.pop_front();
                for (size_t i = 0; i < adj[u].size(); ++i) {
                    const Arc& a = adj[u][i];
                    if (a.cap > 0 && pre[a.to].first == -1) {
                        pre[a.to] = {u, i};
                        q.push_back(a.to);
                    }
                }
            }
            if (pre[t].first == -1) break;
            for (int v = t; v != s;) {
                auto [u, i] = pre[v];
                adj[u][i].cap -= 1;
                adj[adj[u][i].to][adj[u][i].rev].cap += 1;
                v = u;
            }
            ++flow;
        }
        return flow;
    }
};

}  // namespace

int trek_rank(const Dag& g, const VarSet& a, const VarSet& b) {
    VarSet ids = g.all_ids();
    std::map<int, int> idx;
    for (size_t i = 0; i < ids.size(); ++i) idx[ids[i]] = static_cast<int>(i);
    for (int v : a) (void)g.node(v);
    for (int v : b) (void)g.node(v);

    const int n = static_cast<int>(ids.size());
    // nodes: per vertex v: a_in, a_out, b_in, b_out; plus source, sink
    auto a_in = [&](int v) { return 4 * idx[v]; };
    auto a_out = [&](int v) { return 4 * idx[v] + 1; };
    auto b_in = [&](int v) { return 4 * idx[v] + 2; };
    auto b_out = [&](int v) { return 4 * idx[v] + 3; };
    const int S = 4 * n, T = 4 * n + 1;

    FlowNet net(static_cast<size_t>(4 * n + 2));
    const int INF = n + 2;
    for (int v : ids) {
        net.add(a_in(v), a_out(v), 1);
        net.add(b_in(v), b_out(v), 1);
        net.add(a_out(v), b_in(v), INF);  // crossover at the trek source
    }
    for (const auto& [p, c] : g.directed_edges) {
        net.add(a_out(c), a_in(p), INF);  // walk up against edges on the A side
        net.add(b_out(p), b_in(c), INF);  // walk down along edges on the B side
    }
    for (int v : a) net.add(S, a_in(v), 1);
    for (int v : b) net.add(b_out(v), T, 1);
    return net.max_flow(S, T);
}

// ---- brute-force oracle ----

namespace {

struct Trek {
    VarSet up;    // vertices of the path into the A-side sink (incl. source)
    VarSet down;  // vertices of the path into the B-side sink (incl. source)
};

void directed_paths_from(const Dag& g, int src, std::vector<std::vector<int>>& out) {
    // all directed paths starting at src (as vertex sequences)
    std::function<void(std::vector<int>&)> go = [&](std::vector<int>& path) {
        out.push_back(path);
        for (int c : g.children(path.back())) {
            path.push_back(c);
            go(path);
            path.pop_back();
        }
    };
    std::vector<int> p{src};
    go(p);
}

}  // namespace

int trek_rank_bruteforce(const Dag& g, const VarSet& a, const VarSet& b, size_t max_nodes) {
    if (g.nodes.size() > max_nodes)
        throw std::runtime_error("trek_rank_bruteforce: oracle too large (" +
                                 std::to_string(g.nodes.size()) + " nodes)");
    std::vector<Trek> treks;
    for (int z : g.all_ids()) {
        std::vector<std::vector<int>> paths;
        directed_paths_from(g, z, paths);
        for (const auto& p1 : paths) {
            if (!set_contains(a, p1.back())) continue;
            for (const auto& p2 : paths) {
                if (!set_contains(b, p2.back())) continue;
                Trek t;
                t.up = VarSet(p1.begin(), p1.end());
                std::sort(t.up.begin(), t.up.end());
                t.down = VarSet(p2.begin(), p2.end());
                std::sort(t.down.begin(), t.down.end());
                treks.push_back(t);
            }
        }
    }
    if (treks.empty()) return 0;

    VarSet pool;
    for (const auto& t : treks) {
        pool = set_union(pool, t.up);
        pool = set_union(pool, t.down);
    }
    size_t cap = std::min(a.size(), b.size());
    for (size_t total = 0; total <= cap; ++total) {
        // all (C_A, C_B) with |C_A| + |C_B| = total
        for (size_t ka = 0; ka <= total; ++ka) {
            size_t kb = total - ka;
            bool found = false;
            std::function<void(size_t, size_t, VarSet&)> pick_a = [&](size_t start, size_t left,
                                                                      VarSet& ca) {
                if (found) return;
                if (left == 0) {
                    std::function<void(size_t, size_t, VarSet&)> pick_b =
                        [&](size_t s2, size_t l2, VarSet& cb) {
                            if (found) return;
                            if (l2 == 0) {
                                for (const auto& t : treks) {
                                    if (set_intersect(t.up, ca).empty() &&
                                        set_intersect(t.down, cb).empty())
                                        return;  // unblocked trek
                                }
                                found = true;
                                return;
                            }
                            for (size_t i = s2; i + l2 <= pool.size(); ++i) {
                                cb.push_back(pool[i]);
                                pick_b(i + 1, l2 - 1, cb);
                                cb.pop_back();
                                if (found) return;
                            }
                        };
                    VarSet cb;
                    pick_b(0, kb, cb);
                    return;
                }
                for (size_t i = start; i + left <= pool.size(); ++i) {
                    ca.push_back(pool[i]);
                    pick_a(i + 1, left - 1, ca);
                    ca.pop_back();
                    if (found) return;
                }
            };
            VarSet ca;
            pick_a(0, ka, ca);
            if (found) return static_cast<int>(total);
        }
    }
    return static_cast<int>(cap);
}

// ---- d-separation (Bayes-ball style reachability) ----

bool d_separated(const Dag& g, const VarSet& a, const VarSet& b, const VarSet& c) {
    if (!sets_disjoint(a, b) || !sets_disjoint(a, c) || !sets_disjoint(b, c))
        throw std::runtime_error("d_separated: sets must be pairwise disjoint");

    // ancestors of C (for collider opening)
    std::set<int> anc_c(c.begin(), c.end());
    {
        bool grew = true;
        while (grew) {
            grew = false;
            for (const auto& [p, ch] : g.directed_edges)
                if (anc_c.count(ch) && !anc_c.count(p)) {
                    anc_c.insert(p);
                    grew = true;
                }
        }
    }

    // reachability over (node, direction): direction=0 arrived from child
    // (moving up), 1 arrived from parent (moving down)
    std::set<std::pair<int, int>> seen;
    std::deque<std::pair<int, int>> q;
    for (int s : a) q.push_back({s, 0});
    while (!q.empty()) {
        auto [v, dir] = q.front();
        q.pop_front();
        if (seen.count({v, dir})) continue;
        seen.insert({v, dir});
        bool in_c = set_contains(c, v);
        if (!in_c && set_contains(b, v)) return false;
        if (dir == 0) {
            // arrived moving up: may continue to parents and down to children
            if (!in_c) {
                for (int p : g.parents(v)) q.push_back({p, 0});
                for (int ch : g.children(v)) q.push_back({ch, 1});
            }
        } else {
            // arrived from a parent
            if (!in_c)
                for (int ch : g.children(v)) q.push_back({ch, 1});
            if (anc_c.count(v))
                for (int p : g.parents(v)) q.push_back({p, 0});
        }
    }
    return true;
}

// ---- population covariance ----

Eigen::MatrixXd PopulationCovariance::observed_block(const Dag& g) const {
    VarSet obs = g.observed_ids();
    auto ix = index();
    Eigen::MatrixXd out(obs.size(), obs.size());
    for (size_t i = 0; i < obs.size(); ++i)
        for (size_t j = 0; j < obs.size(); ++j)
            out(static_cast<long>(i), static_cast<long>(j)) =
                sigma(ix.at(obs[i]), ix.at(obs[j]));
    return out;
}

PopulationCovariance population_covariance(const ScmModel& m) {
    VarSet ids = m.graph.all_ids();
    const long n = static_cast<long>(ids.size());
    std::map<int, long> idx;
    for (long i = 0; i < n; ++i) idx[ids[static_cast<size_t>(i)]] = i;

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [e, w] : m.weights) {
        if (!m.graph.has_edge(e.first, e.second))
            throw std::runtime_error("weight for non-edge");
        A(idx.at(e.second), idx.at(e.first)) = w;  // child row
    }
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(n, n);
    for (int v : ids) {
        double var = m.noise_variances.at(v);
        if (var <= 0.0) throw std::runtime_error("non-positive noise variance");
        omega(idx.at(v), idx.at(v)) = var;
    }
    Eigen::MatrixXd ima = Eigen::MatrixXd::Identity(n, n) - A;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ima);
    if (!lu.isInvertible())
        throw std::runtime_error("population_covariance: singular I-A (graph not a DAG?)");
    Eigen::MatrixXd inv = lu.inverse();
    PopulationCovariance out;
    out.sigma = inv * omega * inv.transpose();
    out.sigma = ((out.sigma + out.sigma.transpose()) / 2.0).eval();  // symmetrize
    out.var_order = ids;
    return out;
}

}  // namespace rlcd
