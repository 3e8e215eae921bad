#pragma once

#include "rlcd/graph_algos.hpp"
#include "rlcd/rank_test.hpp"

namespace rlcd {

struct DiscoveryConfig {
    double alpha_phase1 = 0.05;
    double alpha_rank = 0.005;
    std::optional<int> k_max;
    bool enable_neighbor_collider_check = false;
    std::optional<int> max_cond_set;
    bool parallel_groups = false;
};

// Working state of the cluster search over one clique group.
class WorkGraph {
public:
    WorkGraph(VarSet observed_vars, const std::map<int, std::string>& names, int* latent_counter);

    // Phase-1 skeleton over (at least) this graph's observed variables; when
    // set, fresh latents are created only where the latent-existence
    // condition can hold.
    void set_skeleton(const std::set<Edge>& edges) { skeleton_ = edges; }
    bool has_skeleton() const { return skeleton_.has_value(); }
    bool skeleton_adjacent(int a, int b) const {
        return skeleton_.has_value() &&
               skeleton_->count({std::min(a, b), std::max(a, b)}) > 0;
    }

    const VarSet& observed() const { return observed_; }
    const MixedGraph& graph() const { return g_; }
    MixedGraph& graph() { return g_; }

    // Recorded children covers of a cover (empty when none).
    const CoverSet* children_of(const Cover& c) const;
    bool has_record(const Cover& c) const;
    const std::vector<ClusterRecord>& records() const { return g_.clusters; }

    // Recursive surrogate expansion of covers into observed variables using
    // recorded pure children. Throws on an unexpandable latent.
    VarSet expand(const Cover& c) const;
    VarSet expand(const CoverSet& cs) const;

    VarSet observed_descendants(const VarSet& vars) const;

    int new_latent(const std::string& hint = "");

    // Commits `children` as the pure children of `parent`; returns the number
    // of edges added.
    int commit(const Cover& parent, const CoverSet& children);

    // Removes latent nodes (and records/edges touching them).
    void drop_latents(const VarSet& latents);

    // Canonical structural signature, invariant to latent relabeling.
    std::string signature() const;

private:
    VarSet observed_;
    MixedGraph g_;
    int* latent_counter_;
    std::optional<std::set<Edge>> skeleton_;
};

// Cover-level rank query: latent members are expanded recursively into their
// recorded pure children before the provider is consulted.
std::optional<bool> is_rank_le(RankProvider& p, const WorkGraph& w, const CoverSet& a,
                               const CoverSet& b, int r,
                               QueryStage stage = QueryStage::cluster);

struct RunLog {
    std::vector<std::string> lines;
    size_t commits = 0;
    size_t vetoes = 0;
    size_t indeterminate = 0;
    void note(const std::string& s) { lines.push_back(s); }
};

// Phase 1: PC stage-1 adjacency search with rank CI tests; records sepsets.
MixedGraph find_ci_skeleton(RankProvider& p, const VarSet& vars,
                            const std::map<int, std::string>& names,
                            const DiscoveryConfig& cfg, RunLog* log = nullptr);

// NoCollider check of a candidate deficiency.
bool no_collider(RankProvider& p, const WorkGraph& w, const CoverSet& c, const CoverSet& x,
                 const CoverSet& n, RunLog* log = nullptr);

// Optional extended check for colliders hiding in N; returns the detected
// subset when it fires.
std::optional<CoverSet> neighbor_collider_check(RankProvider& p, const WorkGraph& w,
                                                const CoverSet& c, const CoverSet& x,
                                                const CoverSet& n, int k,
                                                RunLog* log = nullptr);

// One sweep of the cluster search at a fixed k. Returns true when a cluster
// was committed (the active set is updated in place).
bool search_k(RankProvider& p, WorkGraph& w, CoverSet& active, int k,
              const DiscoveryConfig& cfg, RunLog* log = nullptr);

// Phase 2 driver: k resets to 1 on success, increments on failure, stops at
// the admissibility bound.
void find_causal_clusters(RankProvider& p, WorkGraph& w, const DiscoveryConfig& cfg,
                          RunLog* log = nullptr, std::optional<CoverSet> initial_active = {});

// Phase 3: delete each latent cover plus latent neighbors, re-run the cluster
// search, accept results that keep the committed structure consistent with
// the phase-1 skeleton; iterate to fixpoint.
void refine_causal_clusters(RankProvider& p, WorkGraph& w, const DiscoveryConfig& cfg,
                            RunLog* log = nullptr,
                            const std::set<Edge>* phase1_edges = nullptr);

struct DiscoverResult {
    MixedGraph graph;
    RunLog log;
};

// The full three-phase procedure.
DiscoverResult discover(RankProvider& p, const VarSet& vars,
                        const std::map<int, std::string>& names, const DiscoveryConfig& cfg);

}  // namespace rlcd
