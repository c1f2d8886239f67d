// Acceptance gate: one line per criterion, nonzero exit if any fails.
// Usage: pimann_acceptance [criterion numbers...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pimann/dse.hpp"
#include "pimann/simulator.hpp"
#include "pimann/sqt.hpp"

using namespace pimann;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// --- 1: SQT losslessness

Outcome sqt_lossless() {
    const Sqt s8 = build_sqt(8, 256);
    std::size_t bad = 0;
    for (std::int32_t a = 0; a < 256; ++a) {
        for (std::int32_t b = 0; b < 256; ++b) {
            const std::int32_t x[1] = {a};
            const std::int32_t y[1] = {b};
            bad += l2_distance_sqt(x, y, s8) != static_cast<std::uint64_t>((a - b) * (a - b));
        }
    }
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> u(0, 255);
    std::vector<std::int32_t> x(128);
    std::vector<std::int32_t> y(128);
    const Sqt& engine = engine_sqt();
    for (int t = 0; t < 10000; ++t) {
        std::uint64_t ref = 0;
        for (int i = 0; i < 128; ++i) {
            x[i] = u(rng);
            y[i] = u(rng);
            const std::int64_t d = x[i] - y[i];
            ref += static_cast<std::uint64_t>(d * d);
        }
        bad += l2_distance_sqt(x, y, s8) != ref;
        bad += l2_distance_sqt(x, y, engine) != ref;
        bad += l2_distance_mul(x, y) != ref;
    }
    return {bad == 0, fmt("65536 element pairs + 10000 dim-128 pairs, %zu mismatches", bad)};
}

// --- 2: ADC equivalence

Outcome adc_equivalence() {
    SyntheticSpec s;
    s.n = 10000;
    s.d = 16;
    s.n_queries = 16;
    s.n_blobs = 16;
    s.seed = 2;
    const auto data = generate_synthetic(s);
    IndexConfig cfg;
    cfg.nlist = 16;
    cfg.M = 4;
    cfg.CB = 16;
    cfg.bits.address = address_bits_for(16);
    const IvfPqIndex idx = build_index(cfg, data.base, 2);
    const auto queries = prepare_queries(idx, data.queries);
    const std::size_t sub = cfg.sub_dim(idx.dim);
    std::size_t checked = 0;
    std::size_t bad = 0;
    for (std::size_t q = 0; q < queries.rows; ++q) {
        for (std::size_t c = 0; c < idx.lists.size(); ++c) {
            const auto residual = compute_residual(queries.row(q), idx.centroids.row(c));
            const DistanceLut lut = build_lut(residual, idx.codebooks, engine_sqt());
            const auto& list = idx.lists[c];
            for (std::size_t i = 0; i < list.size(); ++i) {
                const auto code = list.code(i, cfg.M);
                std::int64_t direct = 0;
                for (std::size_t m = 0; m < cfg.M; ++m) {
                    const auto w = idx.codebooks.entry(m, code[m]);
                    for (std::size_t j = 0; j < sub; ++j) {
                        const std::int64_t d =
                            static_cast<std::int64_t>(residual[m * sub + j]) - static_cast<std::int64_t>(w[j]);
                        direct += d * d;
                    }
                }
                bad += adc_distance(code, lut) != static_cast<std::uint64_t>(direct);
                ++checked;
            }
        }
    }
    return {bad == 0 && checked == 16 * 10000, fmt("%zu (query, point) pairs, %zu mismatches", checked, bad)};
}

// --- 3: exact corner

Outcome exact_corner() {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> u(0, 255);
    VectorSet base(512, 8, 8);
    VectorSet queries(32, 8, 8);
    for (auto& x : base.data) {
        x = static_cast<float>(u(rng));
    }
    for (auto& x : queries.data) {
        x = static_cast<float>(u(rng));
    }
    IndexConfig cfg;
    cfg.nlist = 8;
    cfg.P = 8;
    cfg.M = 8;
    cfg.CB = 512;
    cfg.pq_train_size = 512;
    cfg.bits.address = address_bits_for(512);
    const IvfPqIndex idx = build_index(cfg, base, 3);
    // Distinct residual values per subspace must fit the codebook.
    std::size_t distinct = 0;
    for (std::size_t m = 0; m < 8; ++m) {
        std::set<std::int32_t> vals;
        for (std::size_t c = 0; c < idx.lists.size(); ++c) {
            for (auto id : idx.lists[c].ids) {
                vals.insert(static_cast<std::int32_t>(base.row(id)[m]) - idx.centroids.at(c, m));
            }
        }
        distinct = std::max(distinct, vals.size());
    }
    const NeighborLists got = search(idx, queries, 10, 8);
    const NeighborLists truth = brute_force_ground_truth(base, queries, 10);
    const bool ok = cfg.CB >= distinct && got.ids == truth.ids && got.distances == truth.distances;
    return {ok, fmt("512 vectors, CB %zu >= %zu distinct residuals, output %s ground truth", cfg.CB, distinct,
                    got == truth ? "equals" : "differs from")};
}

// --- 4: DSE recall constraint

Outcome dse_recall() {
    SyntheticSpec s;
    s.n = 100000;
    s.n_queries = 256;
    const auto data = generate_synthetic(s);
    const NeighborLists truth = brute_force_ground_truth(data.base, data.queries, 10);
    Evaluator ev(data.base, data.queries, truth, builtin_profile("desk-64"));
    const DseBounds bounds;
    DseBudget budget;
    budget.max_evaluations = 40;
    budget.recall_floor = 0.8;
    const DseResult r = explore(ev, bounds, budget);
    const auto rnd = random_search(ev, bounds, 0.8, 40, 400, budget.seed);
    const auto rb = best_feasible(rnd);
    std::size_t feasible = 0;
    for (const auto& e : rnd) {
        feasible += e.feasible;
    }
    if (!rb) {
        return {false, "random baseline found no feasible config"};
    }
    const bool ok = r.best.recall >= 0.8 && r.best.time_est <= rb->time_est;
    return {ok, fmt("best %s recall %.3f time %.4g s; random best of %zu feasible %s time %.4g s",
                    r.best.point.str().c_str(), r.best.recall, r.best.time_est, feasible, rb->point.str().c_str(),
                    rb->time_est)};
}

// --- 5 .. 10: simulated scenarios on the 100K set

struct Scenario {
    IvfPqIndex index;
    Matrix<std::int32_t> queries;
    std::vector<std::vector<ProbedCluster>> probes;
    HwConfig hw;
    ModelParams params;
    SliceMap naive;

    SliceMap layout(double replica_budget = -1) const {
        LayoutOptions lo;
        lo.n_dpus = hw.dpu_count;
        lo.replica_budget = replica_budget;
        return optimize_layout(index, probes, hw, lo).map;
    }
    SimRun simulate(const SliceMap& map) const {
        const auto batches = run_batches(probes, 256, map, params, hw);
        return run_simulation(batches, SimContext{&index, &queries, &map, hw, params, {}});
    }
    SweepResult sweep(SweepKnob knob, const SliceMap& map) const {
        SweepInput in{&index, &queries, &probes, &map, &naive, hw, params, {}, {}, 256};
        return pimann::sweep(knob, in);
    }
};

struct DataKey {
    std::size_t blobs;
    double skew;
    auto operator<=>(const DataKey&) const = default;
};

std::map<DataKey, SyntheticData> g_data;

const SyntheticData& dataset(std::size_t blobs, double skew) {
    auto it = g_data.find({blobs, skew});
    if (it == g_data.end()) {
        SyntheticSpec s;
        s.n = 100000;
        s.n_queries = 512;
        s.n_blobs = blobs;
        s.skew = skew;
        it = g_data.emplace(DataKey{blobs, skew}, generate_synthetic(s)).first;
    }
    return it->second;
}

Scenario scenario(std::size_t blobs, double skew, std::size_t dpus, std::size_t P, std::size_t nlist, std::size_t M,
                  std::size_t CB) {
    const SyntheticData& data = dataset(blobs, skew);
    Scenario s;
    IndexConfig c;
    c.nlist = nlist;
    c.M = M;
    c.CB = CB;
    c.P = P;
    s.index = build_index(c, data.base, 7);
    s.queries = prepare_queries(s.index, data.queries);
    s.probes = locate_all(s.index, s.queries, P);
    s.hw = builtin_profile("desk-64");
    s.hw.dpu_count = dpus;
    s.params = params_for(c, s.index.dim, s.index.count, s.queries.rows);
    s.naive = round_robin_layout(cluster_sizes(s.index), dpus, point_bytes(c), dpu_data_capacity(s.hw, s.index));
    return s;
}

// The Zipf-1 sweep shared by criteria 6, 7, 8 and 10.
std::unique_ptr<Scenario> g_zipf;
std::unique_ptr<SliceMap> g_zipf_map;

const Scenario& zipf() {
    if (!g_zipf) {
        g_zipf = std::make_unique<Scenario>(scenario(16, 1.0, 16, 2, 64, 16, 256));
        g_zipf_map = std::make_unique<SliceMap>(g_zipf->layout());
    }
    return *g_zipf;
}

Outcome model_validity() {
    std::ostringstream d;
    double lo = 1e300;
    double hi = 0;
    int n = 0;
    for (std::size_t M : {8u, 16u}) {
        for (std::size_t nlist : {256u, 512u, 1024u, 2048u}) {
            const Scenario s = scenario(64, 1.0, 64, 8, nlist, M, 256);
            const SimRun run = s.simulate(s.layout());
            // Simulated throughput over predicted throughput.
            const double r = compare_model(run.total_latency, model_latency(s.params, s.hw));
            lo = std::min(lo, r);
            hi = std::max(hi, r);
            ++n;
            d << fmt(" %zu/%zu:%.3f", M, nlist, r);
        }
    }
    return {n >= 8 && lo >= 0.6 && hi <= 1.05, fmt("%d configs, ratio in [%.3f, %.3f];", n, lo, hi) + d.str()};
}

Outcome wram_sweep() {
    const Scenario& z = zipf();
    const SweepResult a = z.sweep(SweepKnob::wram, *g_zipf_map);
    const Scenario heavy = scenario(64, 1.0, 16, 4, 64, 32, 16);
    const SweepResult b = heavy.sweep(SweepKnob::wram, heavy.layout());
    const bool ok = a.speedup > 1.5 && b.speedup > 1.5 && std::max(a.speedup, b.speedup) <= 4.72 &&
                    a.identical_output && b.identical_output;
    return {ok, fmt("speedup %.3f (M16 CB256), %.3f (M32 CB16)", a.speedup, b.speedup)};
}

Outcome load_balance() {
    const Scenario& z = zipf();
    const SweepResult r = z.sweep(SweepKnob::layout, *g_zipf_map);
    const double imb_cut = r.off.imbalance / r.on.imbalance;
    const bool ok = r.speedup >= 2.0 && imb_cut >= 2.0 && r.identical_output;
    return {ok, fmt("latency speedup %.3f, imbalance %.3f -> %.3f (%.2fx)", r.speedup, r.off.imbalance,
                    r.on.imbalance, imb_cut)};
}

Outcome duplication_saturation() {
    const Scenario& z = zipf();
    const SliceMap base = z.layout(0);
    std::uint64_t share = 0;
    for (auto b : base.dpu_bytes) {
        share += b;
    }
    share /= base.n_dpus;
    std::vector<double> lat;
    std::ostringstream d;
    for (double f : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const double budget = f * static_cast<double>(share);
        lat.push_back(z.simulate(z.layout(budget)).total_latency);
        d << fmt(" %.0f:%.5g", budget, lat.back());
    }
    bool non_increasing = true;
    for (std::size_t i = 1; i < lat.size(); ++i) {
        non_increasing = non_increasing && lat[i] <= lat[i - 1];
    }
    const double first = lat[0] - lat[1];
    const double last = lat[3] - lat[4];
    const bool ok = non_increasing && first > 0 && last < 0.2 * first;
    return {ok, fmt("non-increasing %s, last gain / first gain %.3f;", non_increasing ? "yes" : "no",
                    first > 0 ? last / first : 0.0) +
                    d.str()};
}

Outcome bottleneck_crossover() {
    const std::vector<std::size_t> grid{4, 8, 16, 32, 64, 128, 256, 512, 1024};
    std::ptrdiff_t model_at = -1;
    std::ptrdiff_t sim_at = -1;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Scenario s = scenario(64, 0.0, 8, 4, grid[i], 16, 256);
        const auto pt = phase_times(kHostCl, s.params, s.hw);
        const SimRun run = s.simulate(s.layout());
        const auto lc = static_cast<std::size_t>(Phase::LC);
        const auto dc = static_cast<std::size_t>(Phase::DC);
        if (model_at < 0 && pt[lc] > pt[dc]) {
            model_at = static_cast<std::ptrdiff_t>(i);
        }
        if (sim_at < 0 && run.phase_time[lc] > run.phase_time[dc]) {
            sim_at = static_cast<std::ptrdiff_t>(i);
        }
        if (model_at >= 0 && sim_at >= 0) {
            break;
        }
    }
    const bool ok = model_at >= 0 && sim_at >= 0 && std::abs(model_at - sim_at) <= 1;
    auto at = [&](std::ptrdiff_t i) { return i < 0 ? std::string("none") : std::to_string(grid[i]); };
    return {ok, "LC overtakes DC at nlist " + at(model_at) + " (model), " + at(sim_at) + " (simulator)"};
}

Outcome topk_forwarding() {
    const Scenario& z = zipf();
    const SweepResult r = z.sweep(SweepKnob::forwarding, *g_zipf_map);
    const double drop = 1.0 - r.on.ts_share() / r.off.ts_share();
    return {drop >= 0.5 && r.identical_output,
            fmt("TS share %.3f -> %.3f (%.0f%% drop), identical output %s", r.off.ts_share(), r.on.ts_share(),
                100 * drop, r.identical_output ? "yes" : "no")};
}

// --- 11: scheduler conservation

Outcome scheduler_conservation() {
    std::mt19937_64 rng(11);
    const HwConfig hw = builtin_profile("desk-64");
    std::size_t total = 0;
    std::size_t violations = 0;
    int rounds = 0;
    while (total < 100000) {
        ++rounds;
        const std::size_t nlist = 16 + rng() % 112;
        const std::size_t n_dpus = 2 + rng() % 31;
        std::vector<std::size_t> sizes(nlist);
        ClusterHeat h;
        h.heat.resize(nlist);
        for (std::size_t c = 0; c < nlist; ++c) {
            sizes[c] = rng() % 400;
            h.heat[c] = static_cast<double>(1 + rng() % 100);
        }
        h.size = sizes;
        h.access.assign(nlist, 1);
        const auto slices = partition_clusters(sizes, 20 * (10 + rng() % 300), 20);
        std::vector<std::uint32_t> th2(nlist);
        for (auto& t : th2) {
            t = static_cast<std::uint32_t>(rng() % std::min<std::size_t>(n_dpus, 4));
        }
        const SliceMap map = allocate_slices(slices, th2, h, n_dpus, 0, 20);
        ModelParams p;
        p.D = 128;
        p.M = 16;
        p.CB = 256;
        p.K = 10;
        const std::size_t nq = 100 + rng() % 900;
        std::vector<std::vector<ProbedCluster>> probes(nq);
        std::map<TaskKey, int> expected;
        for (std::size_t q = 0; q < nq; ++q) {
            std::set<std::uint32_t> picked;
            const std::size_t P = 1 + rng() % std::min<std::size_t>(8, nlist);
            while (picked.size() < P) {
                picked.insert(static_cast<std::uint32_t>(rng() % nlist));
            }
            for (auto c : picked) {
                probes[q].push_back({c, 0});
                for (std::size_t s = 0; s < map.slice_count(c); ++s) {
                    ++expected[{static_cast<std::uint32_t>(q), c, static_cast<std::uint32_t>(s)}];
                }
            }
        }
        ScheduleOptions opt;
        opt.th3 = rng() % 5 == 0 ? kNoPostpone : static_cast<double>(rng() % 60) / 100.0;
        opt.resort_postponed = rng() % 2 == 0;
        const auto batches = run_batches(probes, 1 + rng() % 256, map, p, hw, opt);
        std::map<TaskKey, int> seen;
        for (const auto& b : batches) {
            for (const auto& t : b.tasks) {
                ++seen[t.key];
                const auto& pl = map.placements[t.placement];
                violations += pl.cluster != t.key.cluster || pl.slice != t.key.slice || pl.dpu != t.dpu;
            }
        }
        for (const auto& [k, n] : expected) {
            const auto it = seen.find(k);
            violations += it == seen.end() || it->second != 1;
        }
        violations += seen.size() != expected.size();
        violations += !batches.empty() && !batches.back().postponed.empty();
        total += expected.size();
    }
    return {violations == 0, fmt("%zu tasks over %d randomized runs, %zu violations", total, rounds, violations)};
}

struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "SQT losslessness", 5, sqt_lossless},
        {2, "ADC equivalence", 10, adc_equivalence},
        {3, "exact-corner recovery", 5, exact_corner},
        {4, "recall-constrained DSE", 15 * 60, dse_recall},
        {5, "model validity", 10 * 60, model_validity},
        {6, "WRAM buffer sweep", 5 * 60, wram_sweep},
        {7, "load-balance sweep", 5 * 60, load_balance},
        {8, "duplication saturation", 5 * 60, duplication_saturation},
        {9, "bottleneck crossover", 5 * 60, bottleneck_crossover},
        {10, "top-k forwarding", 2 * 60, topk_forwarding},
        {11, "scheduler conservation", 2 * 60, scheduler_conservation},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) {
        wanted.insert(std::atoi(argv[i]));
    }
    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.contains(c.id)) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && secs <= c.limit_s;
        failed += !pass;
        std::printf("AC%-2d %s  %s: %s [%.1f s, limit %.0f s]\n", c.id, pass ? "PASS" : "FAIL", c.name,
                    o.detail.c_str(), secs, c.limit_s);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
