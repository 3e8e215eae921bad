#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "rlcd/discovery.hpp"
#include "rlcd/eval.hpp"
#include "rlcd/oracle.hpp"
#include "rlcd/rank_test.hpp"
#include "rlcd/serialize.hpp"
#include "rlcd/sim.hpp"

using namespace rlcd;
using nlohmann::json;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

constexpr const char* kVersion = "0.1.0";

// plain-text key=value config file; CLI flags win over file values
std::map<std::string, std::string> load_config(const std::string& path) {
    std::map<std::string, std::string> out;
    if (path.empty()) return out;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config " + path + ": expected key=value, got '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
        };
        trim(key);
        trim(val);
        out[key] = val;
    }
    return out;
}

// resolution order: CLI flag > config file > built-in default; the manifest
// records where each value came from
class OptionResolver {
public:
    OptionResolver(const CLI::App* cmd, std::map<std::string, std::string> file)
        : cmd_(cmd), file_(std::move(file)) {}

    template <typename T>
    T get(const std::string& flag, const std::string& key, T def) {
        const CLI::Option* opt = cmd_->get_option_no_throw(flag);
        if (opt && opt->count() > 0) {
            record(key, opt->as<std::string>(), "cli");
            return opt->as<T>();
        }
        auto it = file_.find(key);
        if (it != file_.end()) {
            record(key, it->second, "config");
            std::stringstream ss(it->second);
            T v;
            ss >> v;
            if (ss.fail()) throw std::runtime_error("config value for " + key + " unparsable");
            return v;
        }
        std::stringstream ss;
        ss << def;
        record(key, ss.str(), "default");
        return def;
    }

    bool get_flag(const std::string& flag, const std::string& key, bool def) {
        const CLI::Option* opt = cmd_->get_option_no_throw(flag);
        if (opt && opt->count() > 0) {
            record(key, "true", "cli");
            return true;
        }
        auto it = file_.find(key);
        if (it != file_.end()) {
            record(key, it->second, "config");
            return it->second == "1" || it->second == "true";
        }
        record(key, def ? "true" : "false", "default");
        return def;
    }

    json snapshot() const { return snapshot_; }

private:
    void record(const std::string& key, const std::string& value, const std::string& src) {
        snapshot_[key] = {{"value", value}, {"source", src}};
    }
    const CLI::App* cmd_;
    std::map<std::string, std::string> file_;
    json snapshot_;
};

void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    const json& seeds, const json& inputs, const json& outputs,
                    double wall_clock_sec, const json& extra = json::object()) {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["seeds"] = seeds;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["tool_version"] = kVersion;
    m["wall_clock_sec"] = wall_clock_sec;
    for (auto& [k, v] : extra.items()) m[k] = v;
    write_file_atomic((out_dir / "run.json").string(), m.dump(2));
}

VarSet parse_names(const MixedGraph& g, const std::string& csv) {
    VarSet out;
    if (csv.empty()) return out;
    std::stringstream ss(csv);
    std::string name;
    while (std::getline(ss, name, ',')) {
        bool found = false;
        for (const auto& n : g.nodes)
            if (n.name == name) {
                set_insert(out, n.id);
                found = true;
            }
        if (!found) throw std::runtime_error("unknown variable name '" + name + "'");
    }
    return out;
}

GraphFamily family_from(const std::string& s) {
    if (s == "tree") return GraphFamily::tree;
    if (s == "measurement") return GraphFamily::measurement;
    if (s == "general") return GraphFamily::general;
    if (s == "latent_free") return GraphFamily::latent_free;
    throw std::runtime_error("unknown family '" + s + "'");
}

void write_csv(const DataMatrix& d, const std::string& path) {
    std::ostringstream out;
    for (size_t j = 0; j < d.column_names.size(); ++j)
        out << (j ? "," : "") << d.column_names[j];
    out << "\n";
    out.precision(10);
    for (long i = 0; i < d.values.rows(); ++i) {
        for (long j = 0; j < d.values.cols(); ++j) out << (j ? "," : "") << d.values(i, j);
        out << "\n";
    }
    write_file_atomic(path, out.str());
}

struct BenchCell {
    std::string family;
    long n = 0;
    uint64_t seed = 0;
    bool ok = false;
    double f1_full = 0, f1_observed = 0;
    long shd_v = 0;
    double runtime = 0;
    std::string error;
};

BenchCell run_bench_cell(const std::string& family, long n, uint64_t seed,
                         const DiscoveryConfig& cfg, bool oracle_mode, int n_observed,
                         int n_latent) {
    BenchCell cell;
    cell.family = family;
    cell.n = n;
    cell.seed = seed;
    auto t0 = clk::now();
    try {
        GraphSpec gs;
        gs.family = family_from(family);
        gs.n_observed = n_observed;
        gs.n_latent = n_latent;
        gs.seed = seed;
        gs.compliant = gs.family != GraphFamily::latent_free;
        Dag truth = generate_graph(gs);
        std::map<int, std::string> names;
        for (const auto& nn : truth.nodes) names[nn.id] = nn.name;
        VarSet obs = truth.observed_ids();

        DiscoverResult res;
        if (oracle_mode) {
            ExactRankProvider p(truth);
            res = discover(p, obs, names, cfg);
        } else {
            ScmSpec ss;
            ss.seed = seed + 1;
            ScmModel m = generate_scm(truth, ss);
            DataMatrix data = sample(m, n, seed + 2);
            auto cov = sample_covariance(data);
            FiniteSampleRankProvider p(cov, n, obs, cfg.alpha_phase1, cfg.alpha_rank);
            res = discover(p, obs, names, cfg);
        }
        auto rep = evaluate(res.graph, truth, false);
        cell.f1_full = rep.f1_full;
        cell.f1_observed = rep.f1_observed;
        cell.shd_v = rep.shd;
        cell.ok = true;
    } catch (const std::exception& e) {
        cell.error = e.what();
    }
    cell.runtime = std::chrono::duration<double>(clk::now() - t0).count();
    return cell;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rank-based latent causal discovery"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "plain-text key=value config file");

    auto* disc = app.add_subcommand("discover", "run the three-phase discovery");
    std::string data_csv, oracle_graph, out_dir = ".";
    disc->add_option("--data", data_csv, "headered CSV of samples");
    disc->add_option("--oracle-graph", oracle_graph, "ground-truth graph JSON (exact provider)");
    disc->add_option("--out", out_dir, "output directory");
    disc->add_option("--alpha-phase1", "skeleton test level");
    disc->add_option("--alpha-rank", "cluster rank test level");
    disc->add_option("--k-max", "cover size bound");
    disc->add_option("--max-cond-set", "phase-1 conditioning set cap");
    disc->add_option("--seed", "run seed (recorded in the manifest)");
    disc->add_flag("--parallel", "run clique groups in parallel");
    disc->add_flag("--neighbor-collider-check", "enable the extended collider check");
    disc->add_flag("--unit-variance", "standardize columns to unit variance");

    auto* sim = app.add_subcommand("simulate", "generate a ground-truth graph and samples");
    std::string family = "tree", preset;
    sim->add_option("--family", family, "tree|measurement|general|latent_free");
    sim->add_option("--preset", preset, "named fixture graph");
    sim->add_option("--n", "sample count");
    sim->add_option("--n-observed", "observed variable count");
    sim->add_option("--n-latent", "latent variable count");
    sim->add_option("--seed", "generation seed");
    sim->add_option("--noise", "gaussian|uniform");
    sim->add_option("--out", out_dir, "output directory");
    sim->add_flag("--compliant", "rejection-sample until both condition checkers pass");

    auto* eval_cmd = app.add_subcommand("evaluate", "score an estimated graph against truth");
    std::string est_path, truth_path, report_path;
    eval_cmd->add_option("--estimated", est_path, "estimated graph JSON")->required();
    eval_cmd->add_option("--truth", truth_path, "ground-truth graph JSON")->required();
    eval_cmd->add_option("--report", report_path, "write the report JSON here");
    eval_cmd->add_flag("--normalize-truth",
                       "rewrite truth by the skeleton and minimal-graph operators first");

    auto* orc = app.add_subcommand("oracle", "exact rank / d-separation queries on a graph");
    std::string graph_path, rank_q, dsep_q;
    orc->add_option("--graph", graph_path, "graph JSON")->required();
    orc->add_option("--rank", rank_q, "A;B (comma-separated names)");
    orc->add_option("--dsep", dsep_q, "A;B|C");

    auto* bench = app.add_subcommand("bench", "simulate -> discover -> evaluate over a grid");
    std::string families = "tree", sizes = "2000,5000,10000", seeds = "1,2,3";
    bench->add_option("--families", families, "comma-separated family list");
    bench->add_option("--sizes", sizes, "comma-separated sample sizes");
    bench->add_option("--seeds", seeds, "comma-separated seeds");
    bench->add_option("--out", out_dir, "output directory");
    bench->add_option("--alpha-phase1", "skeleton test level");
    bench->add_option("--alpha-rank", "cluster rank test level");
    bench->add_option("--k-max", "cover size bound");
    bench->add_option("--max-cond-set", "phase-1 conditioning set cap");
    bench->add_option("--n-observed", "observed variable count");
    bench->add_option("--n-latent", "latent variable count");
    bench->add_flag("--oracle-mode", "use the exact provider instead of samples");
    bench->add_flag("--parallel", "run cells in a worker pool");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    auto t_start = clk::now();
    try {
        auto file_cfg = load_config(config_path);

        if (disc->parsed()) {
            OptionResolver r(disc, file_cfg);
            DiscoveryConfig cfg;
            cfg.alpha_phase1 = r.get("--alpha-phase1", "alpha_phase1", 0.05);
            cfg.alpha_rank = r.get("--alpha-rank", "alpha_rank", 0.005);
            if (cfg.alpha_phase1 <= 0 || cfg.alpha_phase1 >= 1 || cfg.alpha_rank <= 0 ||
                cfg.alpha_rank >= 1)
                throw std::runtime_error("alpha levels must lie in (0,1)");
            int kmax = r.get("--k-max", "k_max", -1);
            if (kmax > 0) cfg.k_max = kmax;
            int mcs = r.get("--max-cond-set", "max_cond_set", -1);
            if (mcs >= 0) cfg.max_cond_set = mcs;
            cfg.parallel_groups = r.get_flag("--parallel", "parallel", false);
            cfg.enable_neighbor_collider_check =
                r.get_flag("--neighbor-collider-check", "neighbor_collider_check", false);
            bool unit_var = r.get_flag("--unit-variance", "unit_variance", false);
            uint64_t seed = r.get("--seed", "seed", uint64_t{0});

            if (data_csv.empty() == oracle_graph.empty())
                throw std::runtime_error("need exactly one of --data or --oracle-graph");
            fs::create_directories(out_dir);

            std::unique_ptr<RankProvider> provider;
            std::map<int, std::string> names;
            VarSet vars;
            if (!data_csv.empty()) {
                DataMatrix d = load_csv(data_csv, unit_var);
                auto cov = sample_covariance(d);
                for (size_t j = 0; j < d.column_names.size(); ++j) {
                    vars.push_back(static_cast<int>(j));
                    names[static_cast<int>(j)] = d.column_names[j];
                }
                provider = std::make_unique<FiniteSampleRankProvider>(
                    cov, d.n_samples(), vars, cfg.alpha_phase1, cfg.alpha_rank);
            } else {
                Dag g = load_graph(oracle_graph);
                vars = g.observed_ids();
                for (const auto& n : g.nodes) names[n.id] = n.name;
                provider = std::make_unique<ExactRankProvider>(g);
            }

            DiscoverResult res = discover(*provider, vars, names, cfg);
            save_graph(res.graph, (fs::path(out_dir) / "result.graph.json").string());
            write_file_atomic((fs::path(out_dir) / "result.dot").string(), to_dot(res.graph));
            json extra;
            extra["query_counts"] = {{"rank_queries", provider->query_count()},
                                     {"cache_hits", provider->cache_hits()},
                                     {"commits", res.log.commits},
                                     {"vetoes", res.log.vetoes},
                                     {"indeterminate", res.log.indeterminate}};
            extra["log"] = res.log.lines;
            write_manifest(out_dir, "discover", r.snapshot(), json::array({seed}),
                           json::array({data_csv.empty() ? oracle_graph : data_csv}),
                           json::array({"result.graph.json", "result.dot"}),
                           std::chrono::duration<double>(clk::now() - t_start).count(), extra);
            std::cout << "discover: " << res.graph.latent_ids().size() << " latents, "
                      << res.graph.directed_edges.size() << " directed and "
                      << res.graph.undirected_edges.size() << " undirected edges; "
                      << provider->query_count() << " rank queries\n";
        } else if (sim->parsed()) {
            OptionResolver r(sim, file_cfg);
            long n = r.get("--n", "n", long{10000});
            uint64_t seed = r.get("--seed", "seed", uint64_t{1});
            GraphSpec gs;
            gs.family = family_from(family);
            gs.preset = preset;
            gs.n_observed = r.get("--n-observed", "n_observed", 12);
            gs.n_latent = r.get("--n-latent", "n_latent", 3);
            gs.seed = seed;
            gs.compliant = r.get_flag("--compliant", "compliant", false);
            std::string noise = r.get("--noise", "noise", std::string("gaussian"));

            Dag truth = generate_graph(gs);
            ScmSpec ss;
            ss.seed = seed + 1;
            ss.noise_kind = noise == "uniform" ? NoiseKind::uniform : NoiseKind::gaussian;
            ScmModel m = generate_scm(truth, ss);
            DataMatrix d = sample(m, n, seed + 2);

            fs::create_directories(out_dir);
            save_graph(truth, (fs::path(out_dir) / "truth.graph.json").string());
            write_csv(d, (fs::path(out_dir) / "data.csv").string());
            write_manifest(out_dir, "simulate", r.snapshot(), json::array({seed}), json::array(),
                           json::array({"truth.graph.json", "data.csv"}),
                           std::chrono::duration<double>(clk::now() - t_start).count());
            std::cout << "simulate: " << truth.observed_ids().size() << " observed, "
                      << truth.latent_ids().size() << " latent, " << n << " samples\n";
        } else if (eval_cmd->parsed()) {
            MixedGraph est = load_graph(est_path);
            MixedGraph truth = load_graph(truth_path);
            bool norm = eval_cmd->get_option("--normalize-truth")->count() > 0;
            EvalReport rep = evaluate(est, truth, norm);
            json j;
            j["f1_full"] = rep.f1_full;
            j["f1_observed"] = rep.f1_observed;
            j["shd"] = rep.shd;
            j["alignment_exact"] = rep.alignment_exact;
            json align = json::object();
            for (auto& [e, t] : rep.best_alignment) align[std::to_string(e)] = t;
            j["best_alignment"] = align;
            if (!report_path.empty()) write_file_atomic(report_path, j.dump(2));
            std::cout << j.dump() << "\n";
            std::cout << "f1_full=" << rep.f1_full << " f1_observed=" << rep.f1_observed
                      << " shd=" << rep.shd << "\n";
        } else if (orc->parsed()) {
            Dag g = load_graph(graph_path);
            if (!rank_q.empty()) {
                auto semi = rank_q.find(';');
                if (semi == std::string::npos) throw std::runtime_error("--rank wants A;B");
                VarSet a = parse_names(g, rank_q.substr(0, semi));
                VarSet b = parse_names(g, rank_q.substr(semi + 1));
                std::cout << "rank = " << trek_rank(g, a, b) << "\n";
            }
            if (!dsep_q.empty()) {
                auto semi = dsep_q.find(';');
                auto pipe = dsep_q.find('|');
                if (semi == std::string::npos || pipe == std::string::npos || pipe < semi)
                    throw std::runtime_error("--dsep wants A;B|C");
                VarSet a = parse_names(g, dsep_q.substr(0, semi));
                VarSet b = parse_names(g, dsep_q.substr(semi + 1, pipe - semi - 1));
                VarSet c = parse_names(g, dsep_q.substr(pipe + 1));
                std::cout << "d-separated = " << (d_separated(g, a, b, c) ? "true" : "false")
                          << "\n";
            }
            if (rank_q.empty() && dsep_q.empty())
                throw std::runtime_error("oracle: give --rank and/or --dsep");
        } else if (bench->parsed()) {
            OptionResolver r(bench, file_cfg);
            DiscoveryConfig cfg;
            cfg.alpha_phase1 = r.get("--alpha-phase1", "alpha_phase1", 0.05);
            cfg.alpha_rank = r.get("--alpha-rank", "alpha_rank", 0.005);
            int kmax = r.get("--k-max", "k_max", -1);
            if (kmax > 0) cfg.k_max = kmax;
            int mcs = r.get("--max-cond-set", "max_cond_set", -1);
            if (mcs >= 0) cfg.max_cond_set = mcs;
            int n_obs = r.get("--n-observed", "n_observed", 12);
            int n_lat = r.get("--n-latent", "n_latent", 3);
            bool oracle_mode = r.get_flag("--oracle-mode", "oracle_mode", false);
            bool parallel = r.get_flag("--parallel", "parallel", false);

            auto split = [](const std::string& s) {
                std::vector<std::string> out;
                std::stringstream ss(s);
                std::string f;
                while (std::getline(ss, f, ',')) out.push_back(f);
                return out;
            };
            std::vector<std::string> fam_list = split(families);
            std::vector<long> size_list;
            for (const auto& s : split(sizes)) size_list.push_back(std::stol(s));
            std::vector<uint64_t> seed_list;
            for (const auto& s : split(seeds)) seed_list.push_back(std::stoul(s));

            std::vector<std::tuple<std::string, long, uint64_t>> grid;
            for (const auto& f : fam_list)
                for (long n : size_list)
                    for (uint64_t s : seed_list) grid.push_back({f, n, s});
            std::vector<BenchCell> cells(grid.size());
            if (parallel) {
                std::vector<std::future<BenchCell>> futs;
                for (auto& [f, n, s] : grid)
                    futs.push_back(std::async(std::launch::async, run_bench_cell, f, n, s, cfg,
                                              oracle_mode, n_obs, n_lat));
                for (size_t i = 0; i < futs.size(); ++i) cells[i] = futs[i].get();
            } else {
                for (size_t i = 0; i < grid.size(); ++i) {
                    auto& [f, n, s] = grid[i];
                    cells[i] = run_bench_cell(f, n, s, cfg, oracle_mode, n_obs, n_lat);
                }
            }

            std::ostringstream csv;
            csv << "family,N,seed,f1_full,f1_observed,shd,runtime\n";
            csv.precision(6);
            for (const auto& c : cells) {
                if (c.ok)
                    csv << c.family << "," << c.n << "," << c.seed << "," << c.f1_full << ","
                        << c.f1_observed << "," << c.shd_v << "," << c.runtime << "\n";
                else
                    csv << c.family << "," << c.n << "," << c.seed << ",error,error,error,"
                        << c.runtime << "\n";
            }
            for (const auto& f : fam_list)
                for (long n : size_list) {
                    std::vector<const BenchCell*> sel;
                    for (const auto& c : cells)
                        if (c.ok && c.family == f && c.n == n) sel.push_back(&c);
                    if (sel.empty()) continue;
                    auto stat = [&](auto getter) {
                        double mean = 0;
                        for (auto* c : sel) mean += getter(*c);
                        mean /= double(sel.size());
                        double var = 0;
                        for (auto* c : sel) var += (getter(*c) - mean) * (getter(*c) - mean);
                        double sd = sel.size() > 1 ? std::sqrt(var / double(sel.size() - 1)) : 0.0;
                        return std::pair<double, double>{mean, sd};
                    };
                    auto [f1m, f1s] = stat([](const BenchCell& c) { return c.f1_full; });
                    auto [fom, fos] = stat([](const BenchCell& c) { return c.f1_observed; });
                    auto [shm, shs] = stat([](const BenchCell& c) { return double(c.shd_v); });
                    csv << f << "," << n << ",mean(std)," << f1m << "(" << f1s << "),"
                        << fom << "(" << fos << ")," << shm << "(" << shs << "),\n";
                }
            fs::create_directories(out_dir);
            write_file_atomic((fs::path(out_dir) / "bench.csv").string(), csv.str());
            json seeds_j = json::array();
            for (auto s : seed_list) seeds_j.push_back(s);
            json extra = json::object();
            for (const auto& c : cells)
                if (!c.ok)
                    extra["failures"].push_back(c.family + "/" + std::to_string(c.n) + "/" +
                                                std::to_string(c.seed) + ": " + c.error);
            write_manifest(out_dir, "bench", r.snapshot(), seeds_j, json::array(),
                           json::array({"bench.csv"}),
                           std::chrono::duration<double>(clk::now() - t_start).count(), extra);
            std::cout << csv.str();
        }
    } catch (const std::logic_error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
