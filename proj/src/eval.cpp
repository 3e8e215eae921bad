#include "rlcd/eval.hpp"

#include <functional>
#include <set>

#include "rlcd/graph_algos.hpp"

namespace rlcd {

namespace {

// Observed variables are matched by name across the two graphs; latents get
// side-local labels resolved through the alignment.
struct Universe {
    std::map<std::string, int> observed;  // name -> canonical index
    int n_obs = 0;
};

Universe make_universe(const MixedGraph& a, const MixedGraph& b) {
    Universe u;
    for (const auto& g : {&a, &b})
        for (const auto& n : g->nodes)
            if (n.kind == Kind::observed && !u.observed.count(n.name))
                u.observed[n.name] = u.n_obs++;
    return u;
}

using EdgeSet = std::set<std::pair<long, long>>;

// Encode node v of graph g into canonical space: observed -> [0, n_obs),
// latents -> latent_code(v) offset past the observed block.
EdgeSet skeleton_edges(const MixedGraph& g, const Universe& u,
                       const std::function<long(int)>& latent_code, bool observed_only) {
    EdgeSet out;
    auto code = [&](int v) -> long {
        const Node& n = g.node(v);
        if (n.kind == Kind::observed) return u.observed.at(n.name);
        return latent_code(v);
    };
    auto add = [&](int a, int b) {
        if (observed_only && (g.is_latent(a) || g.is_latent(b))) return;
        long ca = code(a), cb = code(b);
        if (ca < 0 || cb < 0) return;  // dropped latent
        out.insert({std::min(ca, cb), std::max(ca, cb)});
    };
    for (const auto& [a, b] : g.directed_edges) add(a, b);
    for (const auto& [a, b] : g.undirected_edges) add(a, b);
    return out;
}

double f1_of(const EdgeSet& est, const EdgeSet& truth) {
    if (est.empty() && truth.empty()) return 1.0;
    long tp = 0;
    for (const auto& e : est) tp += truth.count(e);
    long fp = static_cast<long>(est.size()) - tp;
    long fn = static_cast<long>(truth.size()) - tp;
    if (tp == 0) return 0.0;
    double prec = double(tp) / double(tp + fp);
    double rec = double(tp) / double(tp + fn);
    return 2.0 * prec * rec / (prec + rec);
}

}  // namespace

std::map<int, int> align_latents(const MixedGraph& estimated, const MixedGraph& truth,
                                 int exact_bound, bool* exact_flag) {
    Universe u = make_universe(estimated, truth);
    VarSet el = estimated.latent_ids();
    VarSet tl = truth.latent_ids();
    if (exact_flag) *exact_flag = true;

    // truth latent v -> canonical code
    std::map<int, long> tcode;
    for (size_t i = 0; i < tl.size(); ++i) tcode[tl[i]] = u.n_obs + static_cast<long>(i);
    EdgeSet truth_edges = skeleton_edges(
        truth, u, [&](int v) { return tcode.at(v); }, false);

    auto score = [&](const std::map<int, int>& assign) {
        long pad = u.n_obs + static_cast<long>(tl.size());
        std::map<int, long> ecode;
        for (int e : el) {
            auto it = assign.find(e);
            if (it != assign.end() && it->second >= 0)
                ecode[e] = tcode.at(it->second);
            else
                ecode[e] = pad++;
        }
        EdgeSet est_edges = skeleton_edges(
            estimated, u, [&](int v) { return ecode.at(v); }, false);
        return f1_of(est_edges, truth_edges);
    };

    std::map<int, int> best;
    for (int e : el) best[e] = -1;
    if (el.empty() || tl.empty()) return best;

    size_t m = std::max(el.size(), tl.size());
    if (m > static_cast<size_t>(exact_bound)) {
        // greedy fallback: repeatedly take the pair with the largest shared
        // observed-neighbor overlap
        if (exact_flag) *exact_flag = false;
        auto obs_nbrs = [&](const MixedGraph& g, int v) {
            std::set<std::string> out;
            for (int nb : g.neighbors(v))
                if (g.is_observed(nb)) out.insert(g.node(nb).name);
            return out;
        };
        std::set<int> used_t;
        std::set<int> left(el.begin(), el.end());
        while (!left.empty() && used_t.size() < tl.size()) {
            int be = -1, bt = -1;
            long bscore = -1;
            for (int e : left)
                for (int t : tl) {
                    if (used_t.count(t)) continue;
                    auto a = obs_nbrs(estimated, e);
                    auto b = obs_nbrs(truth, t);
                    long s = 0;
                    for (const auto& x : a) s += b.count(x);
                    if (s > bscore) {
                        bscore = s;
                        be = e;
                        bt = t;
                    }
                }
            best[be] = bt;
            used_t.insert(bt);
            left.erase(be);
        }
        return best;
    }

    double best_f1 = -1.0;
    // choose which estimated latents match (others are padding), then permute
    size_t kmatch = std::min(el.size(), tl.size());
    std::vector<int> esel(el.begin(), el.end());
    std::function<void(size_t, std::vector<int>&)> choose = [&](size_t start,
                                                                std::vector<int>& chosen) {
        if (chosen.size() == kmatch) {
            std::vector<int> targets(tl.begin(), tl.end());
            std::sort(targets.begin(), targets.end());
            std::vector<int> tsel(targets.begin(), targets.end());
            // permute target subsets of size kmatch
            std::vector<int> pick(kmatch);
            std::vector<bool> used(tsel.size(), false);
            std::function<void(size_t)> perm = [&](size_t depth) {
                if (depth == kmatch) {
                    std::map<int, int> assign;
                    for (int e : el) assign[e] = -1;
                    for (size_t i = 0; i < kmatch; ++i) assign[chosen[i]] = pick[i];
                    double f = score(assign);
                    if (f > best_f1) {
                        best_f1 = f;
                        best = assign;
                    }
                    return;
                }
                for (size_t i = 0; i < tsel.size(); ++i) {
                    if (used[i]) continue;
                    used[i] = true;
                    pick[depth] = tsel[i];
                    perm(depth + 1);
                    used[i] = false;
                }
            };
            perm(0);
            return;
        }
        for (size_t i = start; i < esel.size(); ++i) {
            chosen.push_back(esel[i]);
            choose(i + 1, chosen);
            chosen.pop_back();
        }
    };
    std::vector<int> chosen;
    choose(0, chosen);
    return best;
}

namespace {

std::pair<EdgeSet, EdgeSet> aligned_edge_sets(const MixedGraph& estimated,
                                              const MixedGraph& truth,
                                              const std::map<int, int>& alignment,
                                              bool observed_only) {
    Universe u = make_universe(estimated, truth);
    VarSet tl = truth.latent_ids();
    std::map<int, long> tcode;
    for (size_t i = 0; i < tl.size(); ++i) tcode[tl[i]] = u.n_obs + static_cast<long>(i);
    EdgeSet te = skeleton_edges(
        truth, u, [&](int v) { return tcode.at(v); }, observed_only);
    long pad = u.n_obs + static_cast<long>(tl.size());
    std::map<int, long> ecode;
    for (int e : estimated.latent_ids()) {
        auto it = alignment.find(e);
        if (it != alignment.end() && it->second >= 0)
            ecode[e] = tcode.at(it->second);
        else
            ecode[e] = pad++;
    }
    EdgeSet ee = skeleton_edges(
        estimated, u, [&](int v) { return ecode.count(v) ? ecode.at(v) : -1; }, observed_only);
    return {ee, te};
}

}  // namespace

double skeleton_f1(const MixedGraph& estimated, const MixedGraph& truth, F1Scope scope,
                   const std::map<int, int>* alignment) {
    std::map<int, int> a;
    if (alignment)
        a = *alignment;
    else
        a = align_latents(estimated, truth);
    auto [ee, te] = aligned_edge_sets(estimated, truth, a, scope == F1Scope::observed_only);
    return f1_of(ee, te);
}

long shd(const MixedGraph& estimated, const MixedGraph& truth,
         const std::map<int, int>* alignment) {
    std::map<int, int> a;
    if (alignment)
        a = *alignment;
    else
        a = align_latents(estimated, truth);
    auto [ee, te] = aligned_edge_sets(estimated, truth, a, false);
    long diff = 0;
    for (const auto& e : ee) diff += te.count(e) ? 0 : 1;
    for (const auto& e : te) diff += ee.count(e) ? 0 : 1;
    return diff;
}

EvalReport evaluate(const MixedGraph& estimated, const MixedGraph& truth, bool normalize_truth,
                    int exact_bound) {
    MixedGraph t = truth;
    if (normalize_truth) t = minimal_graph_operator(skeleton_operator(truth));
    EvalReport rep;
    rep.best_alignment = align_latents(estimated, t, exact_bound, &rep.alignment_exact);
    rep.f1_full = skeleton_f1(estimated, t, F1Scope::full, &rep.best_alignment);
    rep.f1_observed = skeleton_f1(estimated, t, F1Scope::observed_only, &rep.best_alignment);
    rep.shd = shd(estimated, t, &rep.best_alignment);
    return rep;
}

}  // namespace rlcd
