#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "pimann/dse.hpp"
#include "support.hpp"

using namespace pimann;

namespace {

struct Bench {
    SyntheticData data;
    NeighborLists truth;
    HwConfig hw = builtin_profile("desk-64");

    explicit Bench(std::size_t blobs = 16, double skew = 1.0, std::size_t n = 4000) {
        data = test::blobs(n, 128, blobs, skew, 11, 32);
        truth = brute_force_ground_truth(data.base, data.queries, 10);
    }
    Evaluator evaluator() const { return Evaluator(data.base, data.queries, truth, hw); }
};

DseBounds small_bounds() {
    DseBounds b;
    b.P = {1, 2, 4, 8};
    b.nlist = {16, 32};
    b.M = {4, 8};
    b.CB = {16};
    b.normalize(32);
    return b;
}

} // namespace

TEST_CASE("GP interpolates and is surest at its data") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < 12; ++i) {
        x.push_back({u(rng), u(rng), u(rng)});
        y.push_back(0.5 + 0.4 * std::sin(3 * x.back()[0]) * x.back()[1]);
    }
    GaussianProcess gp;
    gp.fit(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto [mu, var] = gp.predict(x[i]);
        CHECK(std::abs(mu - y[i]) <= 1e-3);
        CHECK(var <= gp.predict({5.0, 5.0, 5.0}).second);
    }
    CHECK_THROWS_AS(gp.fit({{0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}}, {0.2, 0.3}), ConfigError);
    CHECK_THROWS_AS(gp.fit({{0.1}}, {0.2}), ConfigError);
}

TEST_CASE("GP on a monotone 1-D slice") {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < 5; ++i) {
        const double t = i / 4.0;
        x.push_back({t});
        y.push_back(1.0 - std::exp(-3.0 * t));
    }
    GaussianProcess gp;
    gp.fit(x, y);
    double prev = gp.predict({0.0}).first;
    for (int i = 1; i <= 100; ++i) {
        const double m = gp.predict({i / 100.0}).first;
        CHECK(m >= prev - 0.05);
        prev = m;
    }
}

TEST_CASE("hypervolume improvement") {
    const std::vector<std::pair<double, double>> front{{1.0, 0.5}};
    // A certain point at (0.5, 0.9) adds the L-shaped strip: 0.5 x 0.5 + 1.5 x 0.4.
    CHECK(ehvi(0.5, 0.9, 1e-9, front, 2.0) == doctest::Approx(0.85).epsilon(1e-6));
    CHECK(ehvi(1.5, 0.3, 1e-9, front, 2.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(ehvi(2.5, 0.9, 0.1, front, 2.0) == 0.0);
    CHECK(ehvi(0.5, 0.9, 1e-9, front, 2.0) > ehvi(0.9, 0.6, 1e-9, front, 2.0));
    // Uncertainty only adds upside for a dominated mean.
    CHECK(ehvi(1.5, 0.3, 0.2, front, 2.0) > 0.0);

    std::vector<Evaluation> h(3);
    h[0] = {{}, 1.0, 0.5, true};
    h[1] = {{}, 2.0, 0.4, true};
    h[2] = {{}, 0.5, 0.2, false};
    CHECK(pareto_front(h) == std::vector<std::pair<double, double>>{{0.5, 0.2}, {1.0, 0.5}});
}

TEST_CASE("acquisition") {
    const Bench bench;
    Evaluator ev = bench.evaluator();
    const DseBounds b = small_bounds();
    const auto all = b.enumerate();
    REQUIRE(all.size() == 16);
    std::vector<Evaluation> history;
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
        history.push_back(ev.evaluate(all[i], 0.0));
    }
    const GaussianProcess gp = fit_surrogate(history, b);
    CHECK(acquire_next(gp, history, b, 0.0, ev, 512, 1) == all.back());

    std::vector<Evaluation> few(history.begin(), history.begin() + 6);
    const GaussianProcess g2 = fit_surrogate(few, b);
    const DesignPoint a = acquire_next(g2, few, b, 0.0, ev, 64, 5);
    CHECK(a == acquire_next(g2, few, b, 0.0, ev, 64, 5));
    for (const auto& e : few) {
        CHECK(e.point != a);
    }

    history.push_back(ev.evaluate(all.back(), 0.0));
    try {
        acquire_next(fit_surrogate(history, b), history, b, 0.0, ev, 512, 1);
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("space exhausted") != std::string::npos);
    }
}

TEST_CASE("exhaustive mode finds the constrained optimum") {
    const Bench bench;
    const DseBounds b = small_bounds();
    Evaluator ev = bench.evaluator();
    DseBudget budget;
    budget.max_evaluations = 40;
    budget.init_samples = 4;
    budget.recall_floor = 0.6;
    const DseResult r = explore(ev, b, budget);
    CHECK(r.exhaustive);
    CHECK(r.history.size() == 16);

    Evaluator fresh = bench.evaluator();
    std::optional<Evaluation> brute;
    for (const auto& p : b.enumerate()) {
        const Evaluation e = fresh.evaluate(p, 0.6);
        if (e.feasible && (!brute || e.time_est < brute->time_est ||
                           (e.time_est == brute->time_est && e.point < brute->point))) {
            brute = e;
        }
    }
    REQUIRE(brute);
    CHECK(r.best.point == brute->point);
    CHECK(r.best.recall == brute->recall);
}

TEST_CASE("search loop invariants") {
    const Bench bench;
    DseBounds b;
    b.P = {1, 2, 4, 8, 16};
    b.nlist = {16, 32, 64};
    b.M = {4, 8, 16};
    b.CB = {16, 64};
    b.normalize(32);
    DseBudget budget;
    budget.max_evaluations = 14;
    budget.init_samples = 4;
    budget.recall_floor = 0.5;
    budget.candidates = 64;
    Evaluator ev = bench.evaluator();
    const DseResult r = explore(ev, b, budget);
    CHECK_FALSE(r.exhaustive);
    CHECK(r.history.size() <= budget.max_evaluations);
    std::set<DesignPoint> seen;
    bool from_history = false;
    for (const auto& e : r.history) {
        CHECK(seen.insert(e.point).second);
        CHECK(b.contains(e.point));
        from_history = from_history || (e.point == r.best.point && e.feasible);
    }
    CHECK(from_history);
    CHECK(r.best.feasible);
    CHECK(r.best.recall >= 0.5);
    for (const auto& e : r.history) {
        if (e.feasible) {
            CHECK(r.best.time_est <= e.time_est);
        }
    }

    Evaluator again = bench.evaluator();
    const DseResult r2 = explore(again, b, budget);
    REQUIRE(r2.history.size() == r.history.size());
    for (std::size_t i = 0; i < r.history.size(); ++i) {
        CHECK(r2.history[i].point == r.history[i].point);
        CHECK(r2.history[i].recall == r.history[i].recall);
    }

    std::ostringstream csv;
    write_history_csv(csv, r.history);
    CHECK(csv.str().rfind("iteration,source,K,P,nlist,M,CB,time_est,recall,feasible\n", 0) == 0);
}

TEST_CASE("corner cases of the search") {
    const Bench bench;
    SUBCASE("a single point") {
        DseBounds b;
        b.P = {2};
        b.nlist = {16};
        b.M = {8};
        b.CB = {16};
        b.normalize(32);
        Evaluator ev = bench.evaluator();
        DseBudget budget;
        budget.init_samples = 0;
        budget.recall_floor = 0.0;
        const DseResult r = explore(ev, b, budget);
        CHECK(r.best.point == DesignPoint{10, 2, 16, 8, 16});
        CHECK(r.best.feasible);
        CHECK(r.history.size() == 1);

        Evaluator ev2 = bench.evaluator();
        budget.recall_floor = 1.0;
        try {
            explore(ev2, b, budget);
            FAIL("expected no feasible point");
        } catch (const NoFeasiblePoint& e) {
            CHECK(e.closest.point == r.best.point);
            CHECK_FALSE(e.closest.feasible);
        }
    }
    SUBCASE("floor zero picks the fastest point seen") {
        DseBounds b = small_bounds();
        Evaluator ev = bench.evaluator();
        DseBudget budget;
        budget.max_evaluations = 10;
        budget.init_samples = 4;
        budget.recall_floor = 0.0;
        const DseResult r = explore(ev, b, budget);
        for (const auto& e : r.history) {
            CHECK(r.best.time_est <= e.time_est);
        }
    }
    SUBCASE("bounds checks") {
        DseBounds b;
        b.M = {5};
        CHECK_THROWS_AS(b.normalize(32), ConfigError);
        DseBounds k;
        k.K = {5};
        CHECK_THROWS_AS(k.normalize(32), ConfigError);
        DseBounds e;
        e.P = {};
        CHECK_THROWS_AS(e.normalize(32), ConfigError);
        DseBudget budget;
        budget.init_samples = 50;
        CHECK_THROWS_AS(budget.validate(), ConfigError);
    }
}

TEST_CASE("one probe is faster and less accurate than eight") {
    const Bench bench(64, 1.0, 8000);
    Evaluator ev = bench.evaluator();
    const Evaluation one = ev.evaluate({10, 1, 64, 8, 16}, 0.0);
    const Evaluation eight = ev.evaluate({10, 8, 64, 8, 16}, 0.0);
    CHECK(one.recall < eight.recall);
    CHECK(one.time_est < eight.time_est);
}

TEST_CASE("repeat evaluations hit the cache") {
    const Bench bench;
    Evaluator ev = bench.evaluator();
    const DesignPoint p{10, 2, 16, 8, 16};
    const Evaluation a = ev.evaluate(p, 0.5);
    const std::size_t builds = ev.index_builds();
    const Evaluation b = ev.evaluate(p, 0.5);
    CHECK(a.recall == b.recall);
    CHECK(a.time_est == b.time_est);
    CHECK(ev.index_builds() == builds);
    CHECK(ev.recall_cache_hits() == 1);
    // Only P changes: the index is reused.
    ev.evaluate({10, 4, 16, 8, 16}, 0.5);
    CHECK(ev.index_builds() == builds);
}

TEST_CASE("design point JSON") {
    const DesignPoint p{10, 4, 512, 16, 256};
    const nlohmann::json j = p;
    CHECK(j.get<DesignPoint>() == p);
    DseBounds b;
    const nlohmann::json jb = b;
    const DseBounds back = jb.get<DseBounds>();
    CHECK(back.P == b.P);
    CHECK(back.nlist == b.nlist);
}
