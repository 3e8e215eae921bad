#pragma once

#include <Eigen/Dense>

#include "rlcd/graph.hpp"

namespace rlcd {

// Exact population-level answers computed from graph structure alone.

// rank(Sigma_{A,B}) = min size of a t-separating pair, computed as a maximum
// flow with unit vertex capacities on the two-sided trek network. A and B may
// overlap and may include latents.
int trek_rank(const Dag& g, const VarSet& a, const VarSet& b);

// Oracle by enumeration: all treks between A and B, exhaustive search over
// blocking pairs (C_A, C_B). Refuses graphs above the size bound.
int trek_rank_bruteforce(const Dag& g, const VarSet& a, const VarSet& b,
                         size_t max_nodes = 10);

// Standard d-separation for pairwise disjoint a, b, c.
bool d_separated(const Dag& g, const VarSet& a, const VarSet& b, const VarSet& c);

// Weighted DAG + noise specification.
enum class NoiseKind { gaussian, uniform };

struct ScmModel {
    Dag graph;
    std::map<Edge, double> weights;          // keyed exactly by graph edges
    std::map<int, double> noise_variances;   // strictly positive
    NoiseKind noise_kind = NoiseKind::gaussian;
};

// Exact covariance of the joint distribution: Sigma = (I-A)^-1 Omega (I-A)^-T
// with A the child-row weighted adjacency. Rows/columns ordered by sorted
// node id; the mapping is returned alongside.
struct PopulationCovariance {
    Eigen::MatrixXd sigma;      // over all variables
    std::vector<int> var_order; // row i of sigma is var_order[i]
    Eigen::MatrixXd observed_block(const Dag& g) const;
    std::map<int, int> index() const {
        std::map<int, int> m;
        for (size_t i = 0; i < var_order.size(); ++i) m[var_order[i]] = static_cast<int>(i);
        return m;
    }
};

PopulationCovariance population_covariance(const ScmModel& m);

}  // namespace rlcd
