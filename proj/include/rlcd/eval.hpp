#pragma once

#include "rlcd/graph.hpp"

namespace rlcd {

struct EvalReport {
    double f1_full = 0.0;
    double f1_observed = 0.0;
    long shd = 0;
    std::map<int, int> best_alignment;  // estimated latent -> truth latent (or -1 pad)
    bool alignment_exact = true;        // false when the greedy fallback was used
};

// Best alignment of estimated latents onto truth latents: pads the smaller
// side with isolated latents, tries combinations when the estimate has more
// latents, permutations otherwise. Exact up to `exact_bound` latents.
std::map<int, int> align_latents(const MixedGraph& estimated, const MixedGraph& truth,
                                 int exact_bound = 8, bool* exact = nullptr);

enum class F1Scope { full, observed_only };

double skeleton_f1(const MixedGraph& estimated, const MixedGraph& truth, F1Scope scope,
                   const std::map<int, int>* alignment = nullptr);

// Skeleton-level structural Hamming distance under the given alignment.
long shd(const MixedGraph& estimated, const MixedGraph& truth,
         const std::map<int, int>* alignment = nullptr);

// Full report; when normalize_truth is set, truth is rewritten by the
// skeleton and minimal-graph operators first.
EvalReport evaluate(const MixedGraph& estimated, const MixedGraph& truth,
                    bool normalize_truth = false, int exact_bound = 8);

}  // namespace rlcd
