#pragma once

#include "rlcd/graph.hpp"

namespace rlcd {

// ---- basic graph utilities ----

bool has_directed_cycle(const MixedGraph& g);

// Topological order of the directed part; nullopt when cyclic.
std::optional<std::vector<int>> topological_sort(const MixedGraph& g);

// Nodes whose full parent set equals exactly v's members and which are not
// members of v.
VarSet pure_children(const MixedGraph& g, const Cover& v);

// Looser notion used by the graph operators and the atomic-cover predicate:
// nodes outside v with a non-empty parent set contained in v.
VarSet covered_children(const MixedGraph& g, const Cover& v);

// Observed strict descendants of any variable in s.
VarSet measured_descendants(const MixedGraph& g, const CoverSet& s);
VarSet measured_descendants(const MixedGraph& g, const VarSet& vars);

// ---- cliques and clique groups ----

// All maximal cliques of the undirected skeleton, sorted for determinism.
std::vector<VarSet> maximal_cliques(const MixedGraph& skeleton);

struct CliqueGroup {
    std::vector<VarSet> cliques;
    VarSet x_q;  // union of the group's cliques
    VarSet n_q;  // neighbors of x_q in the skeleton, outside x_q
};

// Groups cliques of cardinality >= 3 by transitive closure of the
// two-shared-member overlap relation.
std::vector<CliqueGroup> group_cliques(const std::vector<VarSet>& cliques,
                                       const MixedGraph& skeleton);

// ---- atomic covers (Definition of the minimal identifiable unit) ----

struct AtomicCoverAnalysis {
    std::vector<Cover> covers;  // all atomic covers found (size-capped search)
    bool is_atomic(const Cover& v) const {
        return std::find(covers.begin(), covers.end(), v) != covers.end();
    }
};

// Exhaustive detection of atomic covers on a small graph. max_cover_size caps
// the candidate search.
AtomicCoverAnalysis find_atomic_covers(const MixedGraph& g, int max_cover_size = 4);

// ---- rank-invariant graph operators ----

// Merge an all-latent cover L into its all-latent parent cover P when L is
// exactly the pure-child set of P, |L| = |P|, and L's children (or siblings)
// form a single cluster. Applied to fixpoint.
MixedGraph minimal_graph_operator(const MixedGraph& g);

// For each atomic cover, make every latent member adjacent to every covered
// child of the cover.
MixedGraph skeleton_operator(const MixedGraph& g);

// ---- Markov equivalence ----

// Completed partially directed graph of a DAG: v-structure edges stay
// directed, compelled edges directed by Meek closure, the rest undirected.
MixedGraph dag_to_cpdag(const MixedGraph& g);

struct OrientStats {
    int v_structures = 0;
    int meek_orientations = 0;
    std::vector<std::string> conflicts;
};

// PC stage-2 style orientation: v-structures from recorded sepsets over
// unshielded observed triples, then Meek rules 1-4 to fixpoint. Never removes
// edges or orients an edge both ways; conflicts are reported, not resolved.
MixedGraph orient_from_sepsets(const MixedGraph& g, OrientStats* stats = nullptr);

// Meek rules 1-4 applied to fixpoint on a partially directed graph.
void meek_closure(MixedGraph& g, OrientStats* stats = nullptr);

}  // namespace rlcd
