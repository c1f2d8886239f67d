#include <doctest.h>

#include <random>

#include "pimann/search.hpp"
#include "support.hpp"

using namespace pimann;

namespace {

IvfPqIndex small_index(std::size_t nlist, std::size_t M, std::size_t CB, const VectorSet& base,
                       std::uint64_t seed = 1) {
    IndexConfig cfg;
    cfg.nlist = nlist;
    cfg.M = M;
    cfg.CB = CB;
    cfg.P = 1;
    cfg.bits.address = address_bits_for(CB);
    return build_index(cfg, base, seed);
}

std::vector<std::int32_t> to_i32(std::span<const float> v) {
    return {v.begin(), v.end()};
}

} // namespace

TEST_CASE("cluster location") {
    const VectorSet base = test::random_u8(400, 8, 2);
    const IvfPqIndex idx = small_index(12, 2, 4, base);
    const Sqt& sqt = engine_sqt();
    const auto c3 = idx.centroids.row(3);
    const auto hit = locate_clusters(c3, idx.centroids, 1, sqt);
    REQUIRE(hit.size() == 1);
    CHECK(hit[0] == ProbedCluster{3, 0});

    const auto all = locate_clusters(to_i32(base.row(0)), idx.centroids, 12, sqt);
    CHECK(all.size() == 12);
    for (std::size_t i = 1; i < all.size(); ++i) {
        CHECK((all[i - 1].distance < all[i].distance ||
               (all[i - 1].distance == all[i].distance && all[i - 1].cluster < all[i].cluster)));
    }

    // Oracle: exact ground truth over the centroid set.
    VectorSet cents(12, 8, 16);
    for (std::size_t i = 0; i < cents.data.size(); ++i) {
        cents.data[i] = static_cast<float>(idx.centroids.data[i]);
    }
    const VectorSet qs = test::random_u8(20, 8, 77);
    const NeighborLists gt = brute_force_ground_truth(cents, qs, 5);
    for (std::size_t q = 0; q < 20; ++q) {
        const auto got = locate_clusters(to_i32(qs.row(q)), idx.centroids, 5, sqt);
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(static_cast<std::int32_t>(got[j].cluster) == gt.ids_row(q)[j]);
            CHECK(static_cast<double>(got[j].distance) == gt.dist_row(q)[j]);
        }
    }
}

TEST_CASE("residuals") {
    const std::vector<std::int32_t> a{5, 1};
    const std::vector<std::int32_t> b{2, 9};
    CHECK(compute_residual(a, b) == std::vector<std::int32_t>{3, -8});
    CHECK(compute_residual(a, a) == std::vector<std::int32_t>{0, 0});
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> u(0, 255);
    for (int t = 0; t < 1000; ++t) {
        std::vector<std::int32_t> q(6);
        std::vector<std::int32_t> c(6);
        for (int i = 0; i < 6; ++i) {
            q[i] = u(rng);
            c[i] = u(rng);
        }
        const auto r = compute_residual(q, c);
        for (int i = 0; i < 6; ++i) {
            REQUIRE(r[i] + c[i] == q[i]);
        }
    }
}

TEST_CASE("distance tables") {
    const Sqt& sqt = engine_sqt();
    SUBCASE("zero residual with a zero entry") {
        PqCodebooks books{2, 3, 2, {4, 4, 0, 0, 1, 2, /* m=1 */ 0, 0, 7, 1, 3, 3}};
        const std::vector<std::int32_t> zero(4, 0);
        const DistanceLut lut = build_lut(zero, books, sqt);
        CHECK(lut.at(0, 1) == 0);
        CHECK(lut.at(1, 0) == 0);
        CHECK(*std::min_element(lut.row(0).begin(), lut.row(0).end()) == 0);
    }
    SUBCASE("M = 1 is the full residual distance") {
        PqCodebooks books{1, 2, 3, {1, 2, 3, -4, 0, 9}};
        const std::vector<std::int32_t> r{2, 2, 2};
        const DistanceLut lut = build_lut(r, books, sqt);
        CHECK(lut.at(0, 0) == 1 + 0 + 1);
        CHECK(lut.at(0, 1) == 36 + 4 + 49);
    }
    SUBCASE("random instance agrees with multiplication") {
        const VectorSet base = test::random_u8(600, 16, 9);
        const IvfPqIndex idx = small_index(4, 4, 16, base);
        const VectorSet qs = test::random_u8(10, 16, 10);
        for (std::size_t q = 0; q < qs.count; ++q) {
            const auto r = compute_residual(to_i32(qs.row(q)), idx.centroids.row(q % 4));
            const DistanceLut lut = build_lut(r, idx.codebooks, sqt);
            for (std::size_t m = 0; m < 4; ++m) {
                for (std::size_t j = 0; j < 16; ++j) {
                    const auto slice = std::span<const std::int32_t>(r).subspan(m * 4, 4);
                    REQUIRE(lut.at(m, j) == l2_distance_mul(slice, idx.codebooks.entry(m, j)));
                }
            }
        }
    }
}

TEST_CASE("ADC distance equals the distance to the reconstruction") {
    const VectorSet base = test::random_u8(2000, 16, 12);
    const IvfPqIndex idx = small_index(8, 4, 16, base);
    const VectorSet qs = test::random_u8(4, 16, 13);
    for (std::size_t q = 0; q < qs.count; ++q) {
        const auto qv = to_i32(qs.row(q));
        for (std::size_t c = 0; c < idx.lists.size(); ++c) {
            const auto r = compute_residual(qv, idx.centroids.row(c));
            const DistanceLut lut = build_lut(r, idx.codebooks, engine_sqt());
            for (std::size_t i = 0; i < idx.lists[c].size(); ++i) {
                const auto rec = idx.decode(c, i);
                REQUIRE(adc_distance(idx.lists[c].code(i, 4), lut) == l2_distance_mul(qv, rec));
            }
        }
    }
}

TEST_CASE("top-k heap and cluster scans") {
    TopKState s(3);
    CHECK(s.bound() == kNoBound);
    for (std::uint32_t i = 0; i < 5; ++i) {
        s.offer({10u - i, i});
    }
    const auto best = s.sorted();
    CHECK(best == std::vector<Candidate>{{6, 4}, {7, 3}, {8, 2}});
    CHECK_FALSE(s.offer({8, 9})); // equal distance, larger id
    CHECK(s.offer({8, 1}));
    CHECK_THROWS_AS(TopKState(0), ConfigError);

    const VectorSet base = test::random_u8(500, 8, 3);
    const IvfPqIndex idx = small_index(1, 2, 8, base);
    const auto r = compute_residual(to_i32(base.row(17)), idx.centroids.row(0));
    const DistanceLut lut = build_lut(r, idx.codebooks, engine_sqt());

    SUBCASE("empty list") {
        TopKState st(4);
        scan_cluster(InvertedList{}, lut, st);
        CHECK(st.size() == 0);
    }
    SUBCASE("K = 1, one point") {
        InvertedList one;
        one.ids = {42};
        one.codes = {3, 5};
        TopKState st(1);
        scan_cluster(one, lut, st);
        CHECK(st.sorted() == std::vector<Candidate>{{lut.at(0, 3) + lut.at(1, 5), 42}});
    }
    SUBCASE("500 points against a sort-everything oracle") {
        std::vector<Candidate> all;
        const auto& list = idx.lists[0];
        for (std::size_t i = 0; i < list.size(); ++i) {
            all.push_back({adc_distance(list.code(i, 2), lut), list.ids[i]});
        }
        std::sort(all.begin(), all.end());
        all.resize(10);
        for (bool fw : {true, false}) {
            TopKState st(10);
            scan_cluster(list, lut, st, ScanOptions{fw});
            CHECK(st.sorted() == all);
        }
    }
    SUBCASE("bad code") {
        InvertedList bad;
        bad.ids = {1};
        bad.codes = {0, 8};
        TopKState st(1);
        CHECK_THROWS_AS(scan_cluster(bad, lut, st), ConfigError);
    }
}

TEST_CASE("stale forwarded bounds never change the result") {
    std::mt19937_64 rng(99);
    const VectorSet base = test::random_u8(3000, 8, 5);
    const IvfPqIndex idx = small_index(4, 4, 16, base);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t K = 1 + rng() % 20;
        const std::size_t c = rng() % 4;
        const auto q = test::random_u8(1, 8, rng());
        const auto r = compute_residual(to_i32(q.row(0)), idx.centroids.row(c));
        const DistanceLut lut = build_lut(r, idx.codebooks, engine_sqt());
        const auto& list = idx.lists[c];

        TopKState exact(K);
        scan_cluster(list, lut, exact, ScanOptions{false});

        // Scan in random chunks, and before each chunk forward a bound that
        // lies anywhere between the true running bound and "no bound".
        TopKState fuzz(K);
        std::size_t pos = 0;
        while (pos < list.size()) {
            const std::size_t end = std::min(list.size(), pos + 1 + rng() % 97);
            const std::uint64_t real = fuzz.bound();
            if (real != kNoBound && rng() % 2 == 0) {
                fuzz.forwarded_bound = real + rng() % 1000;
            } else {
                fuzz.forwarded_bound = kNoBound;
            }
            ScanOptions opt;
            opt.refresh_interval = 1 + rng() % 128;
            scan_range(list, pos, end, lut, fuzz, opt);
            pos = end;
        }
        REQUIRE(fuzz.sorted() == exact.sorted());
    }
}

TEST_CASE("forwarding prunes without touching the output") {
    const VectorSet base = test::random_u8(4000, 8, 6);
    const IvfPqIndex idx = small_index(1, 2, 16, base);
    const auto r = compute_residual(to_i32(base.row(0)), idx.centroids.row(0));
    const DistanceLut lut = build_lut(r, idx.codebooks, engine_sqt());
    ScanStats on;
    ScanStats off;
    TopKState a(10);
    TopKState b(10);
    scan_cluster(idx.lists[0], lut, a, ScanOptions{true}, &on);
    scan_cluster(idx.lists[0], lut, b, ScanOptions{false}, &off);
    CHECK(a.sorted() == b.sorted());
    CHECK(on.points == off.points);
    CHECK(off.lock_acquisitions == off.points);
    CHECK(on.lock_acquisitions < off.lock_acquisitions / 4);
    CHECK(on.heap_updates == off.heap_updates);
    CHECK(off.refreshes == 0);
    CHECK(on.refreshes >= (4000 + 63) / 64);
}

TEST_CASE("exact corner returns the ground truth") {
    const VectorSet base = test::random_u8(256, 4, 15);
    const VectorSet qs = test::random_u8(20, 4, 16);
    IndexConfig cfg;
    cfg.nlist = 4;
    cfg.M = 4;
    cfg.CB = 256;
    cfg.P = 4;
    cfg.bits.address = address_bits_for(256);
    const IvfPqIndex idx = build_index(cfg, base, 2);
    const NeighborLists got = search(idx, qs, 10, 4);
    const NeighborLists truth = brute_force_ground_truth(base, qs, 10);
    CHECK(got.ids == truth.ids);
    CHECK(got.distances == truth.distances);

    // K = 1 on an indexed vector.
    const NeighborLists self = search(idx, slice_rows(base, 100, 1), 1, 4);
    CHECK(self.dist_row(0)[0] == 0.0);
    CHECK(base.row(self.ids_row(0)[0])[0] == base.row(100)[0]);
}

TEST_CASE("recall grows with P") {
    const auto data = test::blobs(20000, 200, 64, 1.0, 3, 32);
    IndexConfig cfg;
    cfg.nlist = 64;
    cfg.M = 8;
    cfg.CB = 64;
    cfg.bits.address = address_bits_for(64);
    const IvfPqIndex idx = build_index(cfg, data.base, 1);
    const NeighborLists truth = brute_force_ground_truth(data.base, data.queries, 10);
    double prev = -1;
    int inversions = 0;
    for (std::size_t P : {1u, 2u, 4u, 8u, 16u}) {
        const double r = recall_at_k(search(idx, data.queries, 10, P), truth, 10);
        if (r < prev) {
            ++inversions;
            CHECK(prev - r <= 0.002);
        }
        prev = r;
    }
    CHECK(inversions <= 1);
}

TEST_CASE("short rows are padded") {
    const VectorSet base = test::random_u8(5, 4, 1);
    IndexConfig cfg;
    cfg.nlist = 1;
    const IvfPqIndex idx = build_index(cfg, base, 1);
    const NeighborLists r = search(idx, base, 8, 1);
    CHECK(r.ids_row(0)[5] == -1);
    CHECK(std::isinf(r.dist_row(0)[7]));
    CHECK_THROWS_AS(search(idx, base, 8, 2), ConfigError);
}
