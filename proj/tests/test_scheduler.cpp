#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "pimann/scheduler.hpp"
#include "support.hpp"

using namespace pimann;

namespace {

ModelParams shape() {
    ModelParams p;
    p.D = 128;
    p.M = 8;
    p.CB = 16;
    p.K = 10;
    p.P = 1;
    return p;
}

SliceMap manual_map(std::size_t n_dpus, const std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>>& rows,
                    std::size_t nlist) {
    // rows: cluster, points, dpu (one slice; repeated rows are replicas)
    SliceMap m;
    m.n_dpus = n_dpus;
    m.point_bytes = 20;
    m.th2.assign(nlist, 0);
    std::map<std::uint32_t, std::uint32_t> reps;
    for (const auto& [c, pts, d] : rows) {
        const std::uint32_t r = reps[c]++;
        m.th2[c] = r;
        m.placements.push_back({c, 0, r, 0, pts, d, 1.0, pts * 20ULL});
    }
    m.rebuild();
    return m;
}

// Random map: random cluster sizes, slices and replica counts.
SliceMap random_map(std::mt19937_64& rng, std::size_t nlist, std::size_t n_dpus) {
    std::vector<std::size_t> sizes(nlist);
    std::vector<double> heat(nlist);
    for (std::size_t c = 0; c < nlist; ++c) {
        sizes[c] = rng() % 300;
        heat[c] = static_cast<double>(1 + rng() % 100);
    }
    ClusterHeat h;
    h.heat = heat;
    h.size = sizes;
    h.access.assign(nlist, 1);
    const auto slices = partition_clusters(sizes, 20 * (10 + rng() % 200), 20);
    std::vector<std::uint32_t> th2(nlist);
    for (auto& t : th2) {
        t = static_cast<std::uint32_t>(rng() % std::min<std::size_t>(n_dpus, 4));
    }
    return allocate_slices(slices, th2, h, n_dpus, 0, 20);
}

} // namespace

TEST_CASE("a single forced task") {
    const SliceMap m = manual_map(2, {{0, 100, 1}}, 1);
    const HwConfig hw = builtin_profile("desk-64");
    ScheduleOptions opt;
    opt.th3 = kNoPostpone;
    const auto b = run_batches({{{0, 0}}}, 4, m, shape(), hw, opt);
    REQUIRE(b.size() == 1);
    REQUIRE(b[0].tasks.size() == 1);
    CHECK(b[0].tasks[0].dpu == 1);
    CHECK(b[0].postponed.empty());
    CHECK(b[0].new_queries == 1);
    CHECK_THROWS_AS(expand_tasks(0, {{5, 0}}, m), ConfigError);
}

TEST_CASE("an overheated DPU sheds its marginal task") {
    const HwConfig hw = builtin_profile("desk-64");
    const std::vector<TaskKey> pool{{0, 0, 0}, {1, 2, 0}, {2, 3, 0}, {3, 1, 0}};
    SUBCASE("single copy: postponed") {
        const SliceMap m = manual_map(3, {{0, 10000, 0}, {1, 500, 0}, {2, 3000, 1}, {3, 3000, 2}}, 4);
        const BatchAssignment a = schedule_batch(pool, 0, m, shape(), hw);
        CHECK(a.postponed == std::vector<TaskKey>{{3, 1, 0}});
        CHECK(a.tasks.size() == 3);
    }
    SUBCASE("replicated: moved to the colder copy") {
        const SliceMap m = manual_map(3, {{0, 10000, 0}, {1, 500, 0}, {1, 500, 1}, {2, 3000, 1}, {3, 3000, 2}}, 4);
        const BatchAssignment a = schedule_batch(pool, 0, m, shape(), hw);
        CHECK(a.postponed.empty());
        for (const auto& t : a.tasks) {
            if (t.key.cluster == 1) {
                CHECK(t.dpu == 1);
            }
        }
    }
}

TEST_CASE("no postponement: batches partition the queries") {
    std::mt19937_64 rng(4);
    const SliceMap m = random_map(rng, 32, 8);
    std::vector<std::vector<ProbedCluster>> probes(100);
    for (auto& row : probes) {
        row = {{static_cast<std::uint32_t>(rng() % 32), 0}};
    }
    ScheduleOptions opt;
    opt.th3 = kNoPostpone;
    const auto batches = run_batches(probes, 16, m, shape(), builtin_profile("desk-64"), opt);
    CHECK(batches.size() == 7);
    for (const auto& b : batches) {
        CHECK(b.postponed.empty());
        for (const auto& t : b.tasks) {
            CHECK(t.key.query / 16 == b.batch);
        }
    }
}

TEST_CASE("one hot single-copy cluster is spread over batches") {
    const SliceMap m = manual_map(4, {{0, 500, 0}, {1, 10, 1}, {2, 10, 2}, {3, 10, 3}}, 4);
    std::vector<std::vector<ProbedCluster>> probes(8, std::vector<ProbedCluster>{{0, 0}});
    ScheduleOptions opt;
    opt.th3 = 0.1;
    const auto batches = run_batches(probes, 8, m, shape(), builtin_profile("desk-64"), opt);
    std::set<std::size_t> used;
    std::size_t executed = 0;
    for (const auto& b : batches) {
        if (!b.tasks.empty()) {
            used.insert(b.batch);
        }
        executed += b.tasks.size();
    }
    CHECK(used.size() >= 2);
    CHECK(executed == 8);
}

TEST_CASE("every task runs exactly once, on a DPU that holds its slice") {
    std::mt19937_64 rng(2024);
    const HwConfig hw = builtin_profile("desk-64");
    std::size_t total = 0;
    for (int round = 0; round < 10; ++round) {
        const std::size_t nlist = 16 + rng() % 48;
        const std::size_t n_dpus = 2 + rng() % 15;
        const SliceMap m = random_map(rng, nlist, n_dpus);
        const std::size_t nq = 200 + rng() % 300;
        std::vector<std::vector<ProbedCluster>> probes(nq);
        std::map<TaskKey, int> expected;
        for (std::size_t q = 0; q < nq; ++q) {
            std::set<std::uint32_t> picked;
            const std::size_t P = 1 + rng() % 6;
            while (picked.size() < P) {
                picked.insert(static_cast<std::uint32_t>(rng() % nlist));
            }
            for (auto c : picked) {
                probes[q].push_back({c, 0});
                for (std::size_t s = 0; s < m.slice_count(c); ++s) {
                    ++expected[{static_cast<std::uint32_t>(q), c, static_cast<std::uint32_t>(s)}];
                }
            }
        }
        ScheduleOptions opt;
        opt.th3 = static_cast<double>(rng() % 50) / 100.0;
        opt.resort_postponed = rng() % 2 == 0;
        const auto batches = run_batches(probes, 1 + rng() % 64, m, shape(), hw, opt);
        std::map<TaskKey, int> seen;
        for (const auto& b : batches) {
            for (const auto& t : b.tasks) {
                ++seen[t.key];
                const auto& pl = m.placements[t.placement];
                CHECK(pl.cluster == t.key.cluster);
                CHECK(pl.slice == t.key.slice);
                CHECK(pl.dpu == t.dpu);
            }
        }
        CHECK(seen == expected);
        CHECK(batches.back().postponed.empty());
        total += seen.size();
    }
    CHECK(total > 1000);
}

TEST_CASE("greedy placement beats a load-blind hash") {
    std::mt19937_64 rng(77);
    const HwConfig hw = builtin_profile("desk-64");
    for (int round = 0; round < 30; ++round) {
        const std::size_t nlist = 32;
        const SliceMap m = random_map(rng, nlist, 8);
        std::vector<TaskKey> pool;
        for (std::uint32_t q = 0; q < 64; ++q) {
            const auto c = static_cast<std::uint32_t>(rng() % nlist);
            const auto t = expand_tasks(q, {{c, 0}}, m);
            pool.insert(pool.end(), t.begin(), t.end());
        }
        ScheduleOptions opt;
        opt.th3 = kNoPostpone;
        const BatchAssignment greedy = schedule_batch(pool, 0, m, shape(), hw, opt);
        const BatchAssignment hashed = schedule_static(pool, m, shape(), hw, StaticPolicy::hash);
        CHECK(greedy.max_latency() <= hashed.max_latency() + 1e-15);
    }
}

TEST_CASE("duplicated hot clusters cut the busiest DPU") {
    const auto data = test::blobs(20000, 1000, 16, 1.0, 5, 32);
    IndexConfig cfg;
    cfg.nlist = 64;
    cfg.M = 8;
    cfg.CB = 16;
    cfg.bits.address = address_bits_for(16);
    const IvfPqIndex idx = build_index(cfg, data.base, 1);
    const auto probes = locate_all(idx, prepare_queries(idx, data.queries), 2);
    HwConfig hw = builtin_profile("desk-64");
    hw.dpu_count = 16;
    LayoutOptions lo;
    lo.n_dpus = 16;
    const LayoutResult lay = optimize_layout(idx, probes, hw, lo);
    const SliceMap naive =
        round_robin_layout(cluster_sizes(idx), 16, point_bytes(cfg), dpu_data_capacity(hw, idx));
    ModelParams p = params_for(cfg, idx.dim, idx.count, 256);
    p.P = 2;
    double smart = 0;
    double blind = 0;
    for (const auto& b : run_batches(probes, 256, lay.map, p, hw)) {
        smart += b.max_latency();
    }
    for (const auto& b : run_static_batches(probes, 256, naive, p, hw, StaticPolicy::primary)) {
        blind += b.max_latency();
    }
    CHECK(smart <= 0.6 * blind);
}

TEST_CASE("assignment CSV") {
    const SliceMap m = manual_map(2, {{0, 10, 0}, {1, 10, 1}}, 2);
    const auto b = run_batches({{{0, 0}}, {{1, 0}}}, 1, m, shape(), builtin_profile("desk-64"));
    std::ostringstream s;
    write_assignment_csv(s, b);
    CHECK(s.str() == "batch,query,cluster,slice,replica,dpu,status\n0,0,0,0,0,0,run\n1,1,1,0,0,1,run\n");
}
