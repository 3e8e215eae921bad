#include "rlcd/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rlcd {

using nlohmann::json;

std::string to_json(const MixedGraph& g) {
    json j;
    j["nodes"] = json::array();
    for (const auto& n : g.nodes)
        j["nodes"].push_back({{"id", n.id},
                              {"kind", n.kind == Kind::latent ? "latent" : "observed"},
                              {"name", n.name}});
    j["directed_edges"] = json::array();
    for (const auto& [p, c] : g.directed_edges) j["directed_edges"].push_back({p, c});
    j["undirected_edges"] = json::array();
    for (const auto& [a, b] : g.undirected_edges) j["undirected_edges"].push_back({a, b});
    j["clusters"] = json::array();
    for (const auto& r : g.clusters) {
        json jr;
        jr["parent"] = r.parent.members;
        jr["children"] = json::array();
        for (const auto& c : r.children) jr["children"].push_back(c.members);
        j["clusters"].push_back(jr);
    }
    j["sepsets"] = json::array();
    for (const auto& [pair, s] : g.sepsets)
        j["sepsets"].push_back({{"pair", {pair.first, pair.second}}, {"sep", s}});
    return j.dump(2);
}

MixedGraph graph_from_json(const std::string& text) {
    json j = json::parse(text);
    MixedGraph g;
    for (const auto& n : j.at("nodes")) {
        std::string kind = n.at("kind").get<std::string>();
        if (kind != "latent" && kind != "observed")
            throw std::runtime_error("graph json: bad node kind '" + kind + "'");
        g.add_node_with_id(n.at("id").get<int>(),
                           kind == "latent" ? Kind::latent : Kind::observed,
                           n.at("name").get<std::string>());
    }
    for (const auto& e : j.at("directed_edges")) g.add_edge(e.at(0).get<int>(), e.at(1).get<int>());
    if (j.contains("undirected_edges"))
        for (const auto& e : j["undirected_edges"])
            g.add_undirected(e.at(0).get<int>(), e.at(1).get<int>());
    if (j.contains("clusters"))
        for (const auto& jr : j["clusters"]) {
            ClusterRecord r;
            r.parent = Cover{jr.at("parent").get<VarSet>()};
            std::sort(r.parent.members.begin(), r.parent.members.end());
            for (const auto& c : jr.at("children")) {
                VarSet m = c.get<VarSet>();
                std::sort(m.begin(), m.end());
                r.children.push_back(Cover{m});
            }
            g.clusters.push_back(r);
        }
    if (j.contains("sepsets"))
        for (const auto& js : j["sepsets"]) {
            VarSet s = js.at("sep").get<VarSet>();
            std::sort(s.begin(), s.end());
            g.record_sepset(js.at("pair").at(0).get<int>(), js.at("pair").at(1).get<int>(), s);
        }
    return g;
}

MixedGraph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return graph_from_json(ss.str());
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void save_graph(const MixedGraph& g, const std::string& path) {
    write_file_atomic(path, to_json(g));
}

std::string to_dot(const MixedGraph& g) {
    std::ostringstream out;
    out << "digraph rlcd {\n";
    for (const auto& n : g.nodes) {
        out << "  n" << n.id << " [label=\"" << n.name << "\"";
        if (n.kind == Kind::latent) out << ", shape=ellipse, style=dashed";
        out << "];\n";
    }
    for (const auto& [p, c] : g.directed_edges) out << "  n" << p << " -> n" << c << ";\n";
    for (const auto& [a, b] : g.undirected_edges)
        out << "  n" << a << " -> n" << b << " [dir=none];\n";
    out << "}\n";
    return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << content;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

}  // namespace rlcd
