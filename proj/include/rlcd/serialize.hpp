#pragma once

#include <string>

#include "rlcd/graph.hpp"

namespace rlcd {

std::string to_json(const MixedGraph& g);
MixedGraph graph_from_json(const std::string& text);

MixedGraph load_graph(const std::string& path);
void save_graph(const MixedGraph& g, const std::string& path);

// DOT export: latents as dashed ellipses, undirected edges without arrowheads.
std::string to_dot(const MixedGraph& g);

// Atomic write: temp file + rename.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace rlcd
