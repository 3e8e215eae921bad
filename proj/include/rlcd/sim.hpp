#pragma once

#include <random>

#include "rlcd/oracle.hpp"
#include "rlcd/rank_test.hpp"

namespace rlcd {

enum class GraphFamily { tree, measurement, general, latent_free };

struct GraphSpec {
    GraphFamily family = GraphFamily::tree;
    int n_observed = 12;
    int n_latent = 4;
    uint64_t seed = 0;
    int children_per_latent = 3;
    double observed_density = 0.25;  // latent_free edge probability
    bool compliant = false;          // rejection-sample until both checkers pass
    std::string preset;              // named fixture overrides everything else
};

// Deterministic in seed. Throws on infeasible knob combinations or unknown
// presets.
Dag generate_graph(const GraphSpec& spec);

// Named example-graph fixtures.
Dag fixture(const std::string& name);
std::vector<std::string> fixture_names();

struct ConditionReport {
    bool ok = true;
    std::vector<std::string> violations;
};

// Basic graphical condition: every latent belongs to at least one atomic
// cover and no latent is involved in a triangle.
ConditionReport check_condition_basic(const Dag& g);

// Collider condition: for collider configurations between atomic covers with
// a latent involved, |C| + |A| >= |V1| + |V2|.
ConditionReport check_condition_collider(const Dag& g, size_t max_nodes = 26);

struct ScmSpec {
    uint64_t seed = 0;
    double weight_low = -10.0;
    double weight_high = 10.0;
    double weight_min_abs = 0.5;
    NoiseKind noise_kind = NoiseKind::gaussian;
};

ScmModel generate_scm(const Dag& g, const ScmSpec& spec);

// Topological forward simulation; returns observed columns only, named after
// the graph's observed nodes, in sorted id order.
DataMatrix sample(const ScmModel& m, long n, uint64_t seed);

}  // namespace rlcd
