// pimann: artifact-driven command line for the IVF-PQ / PIM toolkit.
//
// Every subcommand reads and writes files inside one output directory:
//   gen          base.bvecs, queries.bvecs, dataset.json
//   groundtruth  groundtruth.ivecs, groundtruth.fvecs
//   build        index/
//   layout       layout.json
//   dse          dse_history.csv, dse_best.json
//   search       results.ivecs, results.fvecs, search.json [, assignment.csv]
//   simulate     sim.json, sim_phases.csv [, sweep.csv]
//   report       report.csv, report.txt

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pimann/dataset.hpp"
#include "pimann/dse.hpp"
#include "pimann/ivfpq.hpp"
#include "pimann/layout.hpp"
#include "pimann/perf_model.hpp"
#include "pimann/scheduler.hpp"
#include "pimann/search.hpp"
#include "pimann/serialization.hpp"
#include "pimann/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pimann;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kMissing = 3, kInfeasible = 4 };

// Held for the lifetime of one subcommand.
class DirLock {
  public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".pimann.lock") {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw ConfigError("output directory is locked by another pimann command (" + path_.string() +
                              "); remove the file if no command is running");
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    ~DirLock() {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    fs::path path_;
    int fd_ = -1;
};

fs::path profile_dir() {
    if (const char* env = std::getenv("PIMANN_PROFILE_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
#ifdef PIMANN_DEFAULT_PROFILE_DIR
    return PIMANN_DEFAULT_PROFILE_DIR;
#else
    return {};
#endif
}

void need(const fs::path& p, const std::string& step) {
    if (!fs::exists(p)) {
        throw MissingArtifactError(p.string() + " not found; run `pimann " + step + "` first");
    }
}

json read_json(const fs::path& p, const std::string& step) {
    need(p, step);
    std::ifstream in(p);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + p.string());
    }
    out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

VectorSet load_base(const fs::path& dir) {
    need(dir / "base.bvecs", "gen");
    return load_vectors(dir / "base.bvecs", VectorFormat::bvecs);
}

VectorSet load_queries(const fs::path& dir) {
    need(dir / "queries.bvecs", "gen");
    return load_vectors(dir / "queries.bvecs", VectorFormat::bvecs);
}

IvfPqIndex load_built(const fs::path& dir) {
    need(dir / "index" / "meta.json", "build");
    return load_index(dir / "index");
}

NeighborLists load_truth(const fs::path& dir) {
    need(dir / "groundtruth.ivecs", "groundtruth");
    return load_neighbors(dir / "groundtruth.ivecs", dir / "groundtruth.fvecs");
}

NeighborLists head_rows(const NeighborLists& l, std::size_t n) {
    NeighborLists out(n, l.k);
    std::copy_n(l.ids.begin(), n * l.k, out.ids.begin());
    std::copy_n(l.distances.begin(), n * l.k, out.distances.begin());
    return out;
}

struct Layout {
    HwConfig hw;
    SliceMap map;
};

Layout load_layout(const fs::path& dir) {
    const json j = read_json(dir / "layout.json", "layout");
    try {
        return {j.at("hw").get<HwConfig>(), j.at("map").get<SliceMap>()};
    } catch (const json::exception& e) {
        throw FormatError("layout.json: " + std::string(e.what()));
    }
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
}

// ---------------------------------------------------------------- gen

struct GenArgs {
    SyntheticSpec spec;
    std::string base_file;
    std::string query_file;
    std::string format = "fvecs";
    std::size_t raw_dim = 0;
};

void cmd_gen(const fs::path& dir, const GenArgs& a) {
    json meta;
    VectorSet base;
    VectorSet queries;
    if (!a.base_file.empty()) {
        require(!a.query_file.empty(), "--base-file needs --query-file");
        const VectorFormat f = parse_vector_format(a.format);
        base = load_vectors(a.base_file, f, a.raw_dim);
        queries = load_vectors(a.query_file, f, a.raw_dim);
        require(base.dim == queries.dim, "base and query dimensions differ");
        if (!base.integral() || base.elem_bits != 8) {
            base = quantize_to_u8(base);
            queries = quantize_to_u8(queries);
        }
        meta = {{"source", "import"}, {"base_file", a.base_file}, {"query_file", a.query_file}, {"format", a.format}};
    } else {
        const auto& s = a.spec;
        const SyntheticData data = generate_synthetic(s);
        base = data.base;
        queries = data.queries;
        meta = {{"source", "synthetic"}, {"n", s.n}, {"d", s.d}, {"queries", s.n_queries}, {"blobs", s.n_blobs},
                {"skew", s.skew}, {"seed", s.seed}, {"intrinsic_dim", s.intrinsic_dim},
                {"blob_sigma", s.blob_sigma}, {"noise_sigma", s.noise_sigma}};
    }
    write_vectors(dir / "base.bvecs", base, VectorFormat::bvecs);
    write_vectors(dir / "queries.bvecs", queries, VectorFormat::bvecs);
    meta["count"] = base.count;
    meta["query_count"] = queries.count;
    meta["dim"] = base.dim;
    write_json(dir / "dataset.json", meta);
    std::cout << "wrote " << base.count << " base and " << queries.count << " query vectors (D=" << base.dim
              << ") to " << dir << "\n";
}

// ---------------------------------------------------------------- groundtruth

void cmd_groundtruth(const fs::path& dir, std::size_t k) {
    const VectorSet base = load_base(dir);
    const VectorSet queries = load_queries(dir);
    const NeighborLists gt = brute_force_ground_truth(base, queries, k);
    write_neighbors(dir / "groundtruth.ivecs", dir / "groundtruth.fvecs", gt);
    std::cout << "exact top-" << k << " for " << queries.count << " queries\n";
}

// ---------------------------------------------------------------- build

void cmd_build(const fs::path& dir, IndexConfig config, std::uint64_t seed, const std::string& config_file) {
    if (!config_file.empty()) {
        std::ifstream in(config_file);
        require(static_cast<bool>(in), "cannot read " + config_file);
        try {
            config = json::parse(in).get<IndexConfig>();
        } catch (const json::exception& e) {
            throw ConfigError(config_file + ": " + e.what());
        }
    }
    const VectorSet base = load_base(dir);
    config.validate(base.dim);
    const auto t0 = std::chrono::steady_clock::now();
    const IvfPqIndex index = build_index(config, base, seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_index(index, dir / "index");
    std::cout << "built nlist=" << config.nlist << " M=" << config.M << " CB=" << config.CB << " over "
              << index.count << " points in " << fmt(secs) << " s; largest list " << index.max_list_size() << "\n";
}

// ---------------------------------------------------------------- layout

struct LayoutArgs {
    std::string profile = "desk-64";
    std::size_t dpus = 0;
    double w_access = 0.5;
    double w_size = 0.5;
    std::uint64_t th1 = 0;
    double budget = -1;
    std::size_t profile_queries = 0;
    std::size_t P = 0;
};

void cmd_layout(const fs::path& dir, const LayoutArgs& a) {
    const IvfPqIndex index = load_built(dir);
    VectorSet queries = load_queries(dir);
    if (a.profile_queries != 0 && a.profile_queries < queries.count) {
        queries = slice_rows(queries, 0, a.profile_queries);
    }
    HwConfig hw = load_profile(a.profile, profile_dir());
    if (a.dpus != 0) {
        hw.dpu_count = a.dpus;
    }
    hw.validate();
    const std::size_t P = a.P != 0 ? a.P : index.config.P;
    const auto prepared = prepare_queries(index, queries);
    const auto probes = locate_all(index, prepared, P);
    LayoutOptions opt;
    opt.n_dpus = hw.dpu_count;
    opt.w_access = a.w_access;
    opt.w_size = a.w_size;
    opt.th1_bytes = a.th1;
    opt.replica_budget = a.budget;
    const LayoutResult res = optimize_layout(index, probes, hw, opt);
    res.map.validate(cluster_sizes(index));
    json j = {{"hw", hw},
              {"profile_queries", queries.count},
              {"P", P},
              {"w_access", a.w_access},
              {"w_size", a.w_size},
              {"replica_budget", a.budget},
              {"th1", {{"bytes", res.th1.th1_bytes}, {"objective", res.th1.objective}, {"iterations", res.th1.iterations}}},
              {"map", res.map}};
    write_json(dir / "layout.json", j);
    std::size_t replicas = 0;
    for (auto t : res.map.th2) {
        replicas += t;
    }
    std::cout << res.map.placements.size() << " slice copies on " << res.map.n_dpus << " DPUs, th1 "
              << res.th1.th1_bytes << " B, " << replicas << " extra cluster copies, heat max/mean "
              << fmt(res.map.max_heat() / std::max(1e-12, res.map.mean_heat())) << "\n";
}

// ---------------------------------------------------------------- dse

struct DseArgs {
    std::string spec_file;
    std::string profile = "desk-64";
    std::size_t budget = 0;
    std::size_t init = 0;
    double floor = -1;
    std::size_t sample_queries = 0;
    std::uint64_t seed = 1;
};

int cmd_dse(const fs::path& dir, const DseArgs& a) {
    DseBounds bounds;
    DseBudget budget;
    if (!a.spec_file.empty()) {
        std::ifstream in(a.spec_file);
        require(static_cast<bool>(in), "cannot read " + a.spec_file);
        try {
            const json j = json::parse(in);
            if (j.contains("bounds")) {
                bounds = j.at("bounds").get<DseBounds>();
            }
            if (j.contains("budget")) {
                budget = j.at("budget").get<DseBudget>();
            }
        } catch (const json::exception& e) {
            throw ConfigError(a.spec_file + ": " + e.what());
        }
    }
    if (a.budget != 0) {
        budget.max_evaluations = a.budget;
    }
    if (a.init != 0) {
        budget.init_samples = a.init;
    } else {
        budget.init_samples = std::min(budget.init_samples, budget.max_evaluations);
    }
    if (a.floor >= 0) {
        budget.recall_floor = a.floor;
    }
    if (a.sample_queries != 0) {
        budget.sample_queries = a.sample_queries;
    }
    budget.seed = a.seed;
    budget.validate();

    const VectorSet base = load_base(dir);
    const VectorSet queries = load_queries(dir);
    const NeighborLists truth = load_truth(dir);
    require(truth.count == queries.count, "ground truth does not match queries.bvecs; rerun groundtruth");
    const std::size_t n = std::min(budget.sample_queries, queries.count);
    EvaluatorOptions eo;
    eo.seed = a.seed;
    Evaluator ev(base, slice_rows(queries, 0, n), head_rows(truth, n), load_profile(a.profile, profile_dir()), eo);
    std::vector<Evaluation> history;
    int status = kOk;
    json best;
    try {
        DseResult r = explore(ev, bounds, budget);
        history = r.history;
        best = {{"point", r.best.point},
                {"time_est", r.best.time_est},
                {"recall", r.best.recall},
                {"feasible", true},
                {"exhaustive", r.exhaustive}};
        std::cout << "best " << r.best.point.str() << ": time " << fmt(r.best.time_est) << " s, recall@10 "
                  << fmt(r.best.recall) << " after " << history.size() << " evaluations\n";
    } catch (const NoFeasiblePoint& e) {
        best = {{"point", e.closest.point},
                {"time_est", e.closest.time_est},
                {"recall", e.closest.recall},
                {"feasible", false}};
        std::cerr << "pimann: " << e.what() << "\n";
        status = kInfeasible;
    }
    std::ofstream csv(dir / "dse_history.csv");
    write_history_csv(csv, history);
    best["recall_floor"] = budget.recall_floor;
    best["index_builds"] = ev.index_builds();
    write_json(dir / "dse_best.json", best);
    return status;
}

// ---------------------------------------------------------------- search

struct SearchArgs {
    std::size_t K = 0;
    std::size_t P = 0;
    bool use_layout = false;
    std::size_t batch = 256;
    double th3 = 0.25;
};

void cmd_search(const fs::path& dir, const SearchArgs& a) {
    const IvfPqIndex index = load_built(dir);
    const VectorSet queries = load_queries(dir);
    const std::size_t K = a.K != 0 ? a.K : index.config.K;
    const std::size_t P = a.P != 0 ? a.P : index.config.P;
    require(K >= 1 && P >= 1 && P <= index.config.nlist, "need 1 <= P <= nlist and K >= 1");
    const auto t0 = std::chrono::steady_clock::now();
    const NeighborLists res = search(index, queries, K, P);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_neighbors(dir / "results.ivecs", dir / "results.fvecs", res);
    json j = {{"K", K}, {"P", P}, {"queries", queries.count}, {"host_seconds", secs}};
    if (fs::exists(dir / "groundtruth.ivecs")) {
        const NeighborLists truth = load_truth(dir);
        const std::size_t k = std::min<std::size_t>({10, K, truth.k});
        if (truth.count == res.count) {
            j["recall_at"] = k;
            j["recall"] = recall_at_k(res, truth, k);
            std::cout << "recall@" << k << " " << fmt(j["recall"].get<double>()) << "\n";
        }
    }
    if (a.use_layout) {
        const Layout lay = load_layout(dir);
        ScheduleOptions so;
        so.th3 = a.th3;
        const auto prepared = prepare_queries(index, queries);
        const auto probes = locate_all(index, prepared, P);
        ModelParams p = params_for(index.config, index.dim, index.count, a.batch);
        p.P = static_cast<double>(P);
        p.K = static_cast<double>(K);
        const auto batches = run_batches(probes, a.batch, lay.map, p, lay.hw, so);
        std::ofstream csv(dir / "assignment.csv");
        write_assignment_csv(csv, batches);
        std::size_t tasks = 0;
        std::size_t postponed = 0;
        for (const auto& b : batches) {
            tasks += b.tasks.size();
            postponed += b.postponed.size();
        }
        j["batches"] = batches.size();
        j["tasks"] = tasks;
        j["postponed"] = postponed;
        j["th3"] = a.th3;
        std::cout << tasks << " tasks in " << batches.size() << " batches, " << postponed << " postponements\n";
    }
    write_json(dir / "search.json", j);
    std::cout << queries.count << " queries in " << fmt(secs) << " s on the host\n";
}

// ---------------------------------------------------------------- simulate

struct SimArgs {
    std::size_t batch = 256;
    double th3 = 0.25;
    std::size_t P = 0;
    bool no_sqt = false;
    bool no_wram = false;
    bool no_forwarding = false;
    std::vector<std::string> sweeps;
};

void cmd_simulate(const fs::path& dir, const SimArgs& a) {
    const IvfPqIndex index = load_built(dir);
    const VectorSet queries = load_queries(dir);
    const Layout lay = load_layout(dir);
    const std::size_t P = a.P != 0 ? a.P : index.config.P;
    const auto prepared = prepare_queries(index, queries);
    const auto probes = locate_all(index, prepared, P);
    ModelParams p = params_for(index.config, index.dim, index.count, queries.count);
    p.P = static_cast<double>(P);
    SimOptions so;
    so.sqt = !a.no_sqt;
    so.wram = !a.no_wram;
    so.forwarding = !a.no_forwarding;
    ScheduleOptions sched;
    sched.th3 = a.th3;

    const auto batches = run_batches(probes, a.batch, lay.map, p, lay.hw, sched);
    const SimContext ctx{&index, &prepared, &lay.map, lay.hw, p, so};
    const SimRun run = run_simulation(batches, ctx);
    const double model = model_latency(p, lay.hw);
    json j = run_to_json(run);
    j["model_latency"] = model;
    j["model_ratio"] = compare_model(run.total_latency, model);
    j["options"] = {{"sqt", so.sqt}, {"wram", so.wram}, {"forwarding", so.forwarding}, {"batch", a.batch},
                    {"th3", a.th3}, {"P", P}};
    if (fs::exists(dir / "groundtruth.ivecs")) {
        const NeighborLists truth = load_truth(dir);
        if (truth.count == run.results.count) {
            j["recall"] = recall_at_k(run.results, truth, std::min<std::size_t>(10, truth.k));
        }
    }
    write_json(dir / "sim.json", j);
    std::ofstream csv(dir / "sim_phases.csv");
    write_phase_csv(csv, run);
    std::cout << "simulated " << queries.count << " queries in " << batches.size() << " batches: "
              << fmt(run.total_latency) << " s (" << fmt(run.qps()) << " QPS), imbalance " << fmt(run.imbalance)
              << ", model/sim " << fmt(j["model_ratio"].get<double>()) << "\n";

    if (a.sweeps.empty()) {
        return;
    }
    std::vector<SweepKnob> knobs;
    for (const auto& s : a.sweeps) {
        if (s == "all") {
            knobs = {SweepKnob::sqt, SweepKnob::wram, SweepKnob::layout, SweepKnob::forwarding};
            break;
        }
        knobs.push_back(parse_knob(s));
    }
    const SliceMap naive = round_robin_layout(cluster_sizes(index), lay.map.n_dpus, point_bytes(index.config),
                                              dpu_data_capacity(lay.hw, index));
    SweepInput in{&index, &prepared, &probes, &lay.map, &naive, lay.hw, p, so, sched, a.batch};
    std::ostringstream out;
    out << "knob,off_latency,on_latency,speedup,identical_output,off_imbalance,on_imbalance,off_ts_share,on_ts_share\n";
    for (SweepKnob k : knobs) {
        const SweepResult r = sweep(k, in);
        out << knob_name(k) << ',' << fmt(r.off.total_latency) << ',' << fmt(r.on.total_latency) << ','
            << fmt(r.speedup) << ',' << (r.identical_output ? 1 : 0) << ',' << fmt(r.off.imbalance) << ','
            << fmt(r.on.imbalance) << ',' << fmt(r.off.ts_share()) << ',' << fmt(r.on.ts_share()) << "\n";
        std::cout << "sweep " << knob_name(k) << ": speedup " << fmt(r.speedup)
                  << (r.identical_output ? "" : " (OUTPUT DIFFERS)") << "\n";
    }
    write_text(dir / "sweep.csv", out.str());
}

// ---------------------------------------------------------------- report

void cmd_report(const fs::path& dir) {
    const json sim = read_json(dir / "sim.json", "simulate");
    std::vector<std::pair<std::string, std::string>> rows;
    auto add = [&](const std::string& k, double v) { rows.emplace_back(k, fmt(v)); };
    if (fs::exists(dir / "search.json")) {
        const json s = read_json(dir / "search.json", "search");
        if (s.contains("recall")) {
            add("search_recall@" + std::to_string(s.at("recall_at").get<int>()), s.at("recall").get<double>());
        }
    }
    if (sim.contains("recall")) {
        add("sim_recall@10", sim.at("recall").get<double>());
    }
    add("sim_qps", sim.at("qps").get<double>());
    add("sim_latency_s", sim.at("total_latency").get<double>());
    add("model_latency_s", sim.at("model_latency").get<double>());
    add("model_ratio", sim.at("model_ratio").get<double>());
    add("imbalance", sim.at("imbalance").get<double>());
    add("ts_share", sim.at("ts_share").get<double>());
    for (Phase ph : kPhases) {
        const std::string name(phase_name(ph));
        add("phase_" + name + "_dpu_sum_s", sim.at("phase_time").at(name).get<double>());
    }
    if (fs::exists(dir / "sweep.csv")) {
        std::ifstream in(dir / "sweep.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string knob;
            std::string off;
            std::string on;
            std::string speedup;
            std::string same;
            std::getline(ls, knob, ',');
            std::getline(ls, off, ',');
            std::getline(ls, on, ',');
            std::getline(ls, speedup, ',');
            std::getline(ls, same, ',');
            rows.emplace_back("sweep_" + knob + "_speedup", speedup);
            rows.emplace_back("sweep_" + knob + "_identical", same);
        }
    }
    if (fs::exists(dir / "dse_best.json")) {
        const json d = read_json(dir / "dse_best.json", "dse");
        const auto& pt = d.at("point");
        rows.emplace_back("dse_point", "K" + pt.at("K").dump() + "_P" + pt.at("P").dump() + "_nlist" +
                                           pt.at("nlist").dump() + "_M" + pt.at("M").dump() + "_CB" +
                                           pt.at("CB").dump());
        add("dse_time_est_s", d.at("time_est").get<double>());
        add("dse_recall", d.at("recall").get<double>());
    }
    std::ostringstream csv;
    std::ostringstream txt;
    csv << "metric,value\n";
    for (const auto& [k, v] : rows) {
        csv << k << ',' << v << "\n";
        txt << std::left << std::setw(28) << k << v << "\n";
    }
    write_text(dir / "report.csv", csv.str());
    write_text(dir / "report.txt", txt.str());
    std::cout << txt.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"IVF-PQ search with a processing-in-memory cost model"};
    app.require_subcommand(1);
    std::string out = "run";
    app.add_option("-o,--out", out, "Artifact directory")->capture_default_str();

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic dataset or import vector files");
    g->add_option("--n", gen.spec.n, "Base vectors")->capture_default_str();
    g->add_option("--dim", gen.spec.d, "Dimension")->capture_default_str();
    g->add_option("--queries", gen.spec.n_queries, "Query vectors")->capture_default_str();
    g->add_option("--blobs", gen.spec.n_blobs, "Gaussian blobs")->capture_default_str();
    g->add_option("--skew", gen.spec.skew, "Zipf exponent of query blob choice")->capture_default_str();
    g->add_option("--seed", gen.spec.seed)->capture_default_str();
    g->add_option("--intrinsic-dim", gen.spec.intrinsic_dim)->capture_default_str();
    g->add_option("--blob-sigma", gen.spec.blob_sigma)->capture_default_str();
    g->add_option("--noise-sigma", gen.spec.noise_sigma)->capture_default_str();
    g->add_option("--base-file", gen.base_file, "Import base vectors instead of generating");
    g->add_option("--query-file", gen.query_file, "Import query vectors");
    g->add_option("--format", gen.format, "fvecs, bvecs or raw_u8")->capture_default_str();
    g->add_option("--raw-dim", gen.raw_dim, "Dimension of raw_u8 input");

    std::size_t gt_k = 100;
    auto* gt = app.add_subcommand("groundtruth", "Exact neighbours of the queries");
    gt->add_option("-k", gt_k)->capture_default_str();

    IndexConfig cfg;
    cfg.nlist = 256;
    cfg.M = 16;
    cfg.CB = 256;
    cfg.P = 8;
    std::uint64_t build_seed = 1;
    std::string cfg_file;
    auto* b = app.add_subcommand("build", "Train and encode the IVF-PQ index");
    b->add_option("--nlist", cfg.nlist)->capture_default_str();
    b->add_option("--M", cfg.M)->capture_default_str();
    b->add_option("--CB", cfg.CB)->capture_default_str();
    b->add_option("--P", cfg.P, "Default probe count stored with the index")->capture_default_str();
    b->add_option("--K", cfg.K)->capture_default_str();
    b->add_option("--iters", cfg.kmeans_iters, "k-means iterations")->capture_default_str();
    b->add_option("--seed", build_seed)->capture_default_str();
    b->add_option("--config", cfg_file, "IndexConfig JSON (overrides the flags)");

    LayoutArgs la;
    auto* l = app.add_subcommand("layout", "Partition, duplicate and place clusters on DPUs");
    l->add_option("--profile", la.profile, "Hardware profile name or JSON path")->capture_default_str();
    l->add_option("--dpus", la.dpus, "Override the profile's DPU count");
    l->add_option("--w-access", la.w_access)->capture_default_str();
    l->add_option("--w-size", la.w_size)->capture_default_str();
    l->add_option("--th1", la.th1, "Slice size in bytes (0: tune)")->capture_default_str();
    l->add_option("--budget", la.budget, "Replica bytes per DPU (negative: all free MRAM)")->capture_default_str();
    l->add_option("--profile-queries", la.profile_queries, "Queries used for heat (0: all)");
    l->add_option("--P", la.P, "Probes per query (0: index default)");

    DseArgs da;
    auto* d = app.add_subcommand("dse", "Search the index design space");
    d->add_option("--spec", da.spec_file, "JSON with \"bounds\" and \"budget\"");
    d->add_option("--profile", da.profile)->capture_default_str();
    d->add_option("--budget", da.budget, "Evaluations");
    d->add_option("--init", da.init, "Latin-hypercube samples");
    d->add_option("--floor", da.floor, "Recall@10 floor");
    d->add_option("--sample-queries", da.sample_queries);
    d->add_option("--seed", da.seed)->capture_default_str();

    SearchArgs sa;
    auto* s = app.add_subcommand("search", "Run the queries against the index");
    s->add_option("--K", sa.K, "Neighbours (0: index default)");
    s->add_option("--P", sa.P, "Probes (0: index default)");
    s->add_flag("--layout", sa.use_layout, "Also schedule onto layout.json and dump assignment.csv");
    s->add_option("--batch", sa.batch)->capture_default_str();
    s->add_option("--th3", sa.th3, "Postponement threshold over the mean DPU latency")->capture_default_str();

    SimArgs sm;
    auto* m = app.add_subcommand("simulate", "Execute the scheduled batches on the modelled DPU array");
    m->add_option("--batch", sm.batch)->capture_default_str();
    m->add_option("--th3", sm.th3)->capture_default_str();
    m->add_option("--P", sm.P, "Probes (0: index default)");
    m->add_flag("--no-sqt", sm.no_sqt);
    m->add_flag("--no-wram", sm.no_wram);
    m->add_flag("--no-forwarding", sm.no_forwarding);
    m->add_option("--sweep", sm.sweeps, "Knobs to toggle: sqt, wram, layout, forwarding or all")->delimiter(',');

    auto* r = app.add_subcommand("report", "Summarize the artifacts into report.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    const fs::path dir(out);
    try {
        if (g->parsed()) {
            fs::create_directories(dir);
        } else if (!fs::is_directory(dir)) {
            throw MissingArtifactError("no artifact directory " + dir.string() + "; run `pimann gen` first");
        }
        DirLock lock(dir);
        if (g->parsed()) {
            cmd_gen(dir, gen);
        } else if (gt->parsed()) {
            cmd_groundtruth(dir, gt_k);
        } else if (b->parsed()) {
            cmd_build(dir, cfg, build_seed, cfg_file);
        } else if (l->parsed()) {
            cmd_layout(dir, la);
        } else if (d->parsed()) {
            return cmd_dse(dir, da);
        } else if (s->parsed()) {
            cmd_search(dir, sa);
        } else if (m->parsed()) {
            cmd_simulate(dir, sm);
        } else if (r->parsed()) {
            cmd_report(dir);
        }
    } catch (const MissingArtifactError& e) {
        std::cerr << "pimann: " << e.what() << "\n";
        return kMissing;
    } catch (const InfeasibleError& e) {
        std::cerr << "pimann: " << e.what() << "\n";
        return kInfeasible;
    } catch (const Error& e) {
        std::cerr << "pimann: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "pimann: internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kOk;
}
