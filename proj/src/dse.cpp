#include "pimann/dse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "pimann/common.hpp"
#include "pimann/search.hpp"

namespace pimann {

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Integral of P(Y >= u) for u in [a, b], Y ~ N(mu, sigma^2).
double tail_integral(double a, double b, double mu, double sigma) {
    if (b <= a) {
        return 0.0;
    }
    if (sigma <= 1e-12) {
        return std::max(0.0, std::min(b, mu) - a);
    }
    auto F = [&](double u) {
        const double z = (u - mu) / sigma;
        return (u - mu) * (1.0 - normal_cdf(z)) - sigma * normal_pdf(z);
    };
    return std::max(0.0, F(b) - F(a));
}

std::size_t axis_pos(const std::vector<std::size_t>& axis, std::size_t v) {
    auto it = std::lower_bound(axis.begin(), axis.end(), v);
    require(it != axis.end() && *it == v, "value " + std::to_string(v) + " not on the grid");
    return static_cast<std::size_t>(it - axis.begin());
}

double axis_coord(const std::vector<std::size_t>& axis, std::size_t v, bool log_scale) {
    if (axis.size() == 1) {
        return 0.0;
    }
    auto f = [&](std::size_t x) { return log_scale ? std::log2(static_cast<double>(x)) : static_cast<double>(x); };
    return (f(v) - f(axis.front())) / (f(axis.back()) - f(axis.front()));
}

bool valid(const DesignPoint& p) { return p.P <= p.nlist; }

} // namespace

std::string DesignPoint::str() const {
    return "K=" + std::to_string(K) + " P=" + std::to_string(P) + " nlist=" + std::to_string(nlist) +
           " M=" + std::to_string(M) + " CB=" + std::to_string(CB);
}

void to_json(nlohmann::json& j, const DesignPoint& p) {
    j = {{"K", p.K}, {"P", p.P}, {"nlist", p.nlist}, {"M", p.M}, {"CB", p.CB}};
}

void from_json(const nlohmann::json& j, DesignPoint& p) {
    p.K = j.value("K", p.K);
    p.P = j.at("P").get<std::size_t>();
    p.nlist = j.at("nlist").get<std::size_t>();
    p.M = j.at("M").get<std::size_t>();
    p.CB = j.at("CB").get<std::size_t>();
}

void DseBounds::normalize(std::size_t dim) {
    for (auto* axis : {&K, &P, &nlist, &M, &CB}) {
        require(!axis->empty(), "empty DSE axis");
        std::sort(axis->begin(), axis->end());
        axis->erase(std::unique(axis->begin(), axis->end()), axis->end());
        require(axis->front() >= 1, "DSE axis values must be positive");
    }
    require(K.front() >= 10, "K must be at least 10 (recall is reported at 10)");
    for (std::size_t m : M) {
        require(dim % m == 0, "M=" + std::to_string(m) + " does not divide D=" + std::to_string(dim));
    }
    require(P.front() <= nlist.back(), "no grid point has P <= nlist");
}

std::size_t DseBounds::size() const { return enumerate().size(); }

bool DseBounds::contains(const DesignPoint& p) const {
    auto has = [](const std::vector<std::size_t>& a, std::size_t v) { return std::find(a.begin(), a.end(), v) != a.end(); };
    return has(K, p.K) && has(P, p.P) && has(nlist, p.nlist) && has(M, p.M) && has(CB, p.CB) && valid(p);
}

std::vector<DesignPoint> DseBounds::enumerate() const {
    std::vector<DesignPoint> out;
    for (auto k : K)
        for (auto p : P)
            for (auto n : nlist)
                for (auto m : M)
                    for (auto cb : CB) {
                        DesignPoint d{k, p, n, m, cb};
                        if (valid(d)) {
                            out.push_back(d);
                        }
                    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> DseBounds::encode(const DesignPoint& p) const {
    return {axis_coord(K, p.K, false), axis_coord(P, p.P, false), axis_coord(nlist, p.nlist, true),
            axis_coord(M, p.M, false), axis_coord(CB, p.CB, true)};
}

void to_json(nlohmann::json& j, const DseBounds& b) {
    j = {{"K", b.K}, {"P", b.P}, {"nlist", b.nlist}, {"M", b.M}, {"CB", b.CB}};
}

void from_json(const nlohmann::json& j, DseBounds& b) {
    b.K = j.value("K", b.K);
    b.P = j.value("P", b.P);
    b.nlist = j.value("nlist", b.nlist);
    b.M = j.value("M", b.M);
    b.CB = j.value("CB", b.CB);
}

void DseBudget::validate() const {
    require(max_evaluations >= 1, "max_evaluations must be >= 1");
    require(init_samples <= max_evaluations, "init_samples exceeds max_evaluations");
    require(recall_floor >= 0.0 && recall_floor <= 1.0, "recall floor outside [0, 1]");
    require(sample_queries >= 1, "sample_queries must be >= 1");
    require(candidates >= 1, "candidates must be >= 1");
}

void to_json(nlohmann::json& j, const DseBudget& b) {
    j = {{"max_evaluations", b.max_evaluations}, {"init_samples", b.init_samples}, {"recall_floor", b.recall_floor},
         {"sample_queries", b.sample_queries},   {"candidates", b.candidates},     {"seed", b.seed}};
}

void from_json(const nlohmann::json& j, DseBudget& b) {
    b.max_evaluations = j.value("max_evaluations", b.max_evaluations);
    b.init_samples = j.value("init_samples", b.init_samples);
    b.recall_floor = j.value("recall_floor", b.recall_floor);
    b.sample_queries = j.value("sample_queries", b.sample_queries);
    b.candidates = j.value("candidates", b.candidates);
    b.seed = j.value("seed", b.seed);
}

Evaluator::Evaluator(const VectorSet& base, const VectorSet& queries, const NeighborLists& truth, HwConfig hw,
                     EvaluatorOptions options)
    : base_(&base), queries_(queries), truth_(truth), hw_(std::move(hw)), options_(options) {
    require(queries.dim == base.dim, "query dimension does not match the base");
    require(truth.count == queries.count, "ground truth does not cover the queries");
    require(truth.k >= 10, "ground truth must hold at least 10 neighbours");
    hw_.validate();
}

namespace {

IndexConfig config_of(const DesignPoint& p, const EvaluatorOptions& o) {
    IndexConfig c;
    c.nlist = p.nlist;
    c.M = p.M;
    c.CB = p.CB;
    c.P = p.P;
    c.K = p.K;
    c.bits = o.bits;
    c.bits.address = std::max(c.bits.address, ceil_log2(p.CB));
    c.kmeans_iters = o.kmeans_iters;
    c.coarse_train_size = o.coarse_train_size;
    c.pq_train_size = o.pq_train_size;
    return c;
}

} // namespace

double Evaluator::predict_time(const DesignPoint& p) const {
    const IndexConfig c = config_of(p, options_);
    c.validate(base_->dim);
    const ModelParams m = params_for(c, base_->dim, base_->count, queries_.count);
    return pipeline_time(recommend_split(m, hw_), m, hw_);
}

const IvfPqIndex& Evaluator::index_for(const DesignPoint& p) {
    const auto key = std::make_tuple(p.nlist, p.M, p.CB);
    auto it = indices_.find(key);
    if (it != indices_.end()) {
        return it->second;
    }
    const IndexConfig c = config_of(p, options_);
    c.validate(base_->dim);
    require(p.nlist <= base_->count, "nlist exceeds the base count");
    auto cq = coarse_.find(p.nlist);
    IvfPqIndex index;
    if (cq == coarse_.end()) {
        index = build_index(c, *base_, options_.seed);
        coarse_.emplace(p.nlist, index.centroids);
    } else {
        index = build_index_with_centroids(c, *base_, options_.seed, cq->second);
    }
    ++builds_;
    return indices_.emplace(key, std::move(index)).first->second;
}

double Evaluator::measure_recall(const DesignPoint& p) {
    auto it = recall_.find(p);
    if (it != recall_.end()) {
        ++hits_;
        return it->second;
    }
    require(p.K >= 10, "K must be at least 10");
    require(p.P <= p.nlist, "P exceeds nlist");
    const IvfPqIndex& index = index_for(p);
    const NeighborLists res = search(index, queries_, p.K, p.P);
    const double r = recall_at_k(res, truth_, 10);
    recall_.emplace(p, r);
    return r;
}

Evaluation Evaluator::evaluate(const DesignPoint& p, double floor) {
    Evaluation e;
    e.point = p;
    e.time_est = predict_time(p);
    e.recall = measure_recall(p);
    e.feasible = e.recall >= floor;
    return e;
}

double GaussianProcess::kernel(const std::vector<double>& a, const std::vector<double>& b) const {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d2 += (a[i] - b[i]) * (a[i] - b[i]);
    }
    const double r = std::sqrt(5.0 * d2) / length_;
    return (1.0 + r + r * r / 3.0) * std::exp(-r);
}

void GaussianProcess::fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), "surrogate inputs and targets differ in length");
    require(x.size() >= 2, "surrogate needs at least 2 observations");
    bool distinct = false;
    for (std::size_t i = 1; i < x.size() && !distinct; ++i) {
        distinct = x[i] != x[0];
    }
    require(distinct, "degenerate history: all observations share one design point");
    x_ = x;
    const std::size_t n = y.size();
    mean_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : y) {
        var += (v - mean_) * (v - mean_);
    }
    var /= static_cast<double>(n);
    scale_ = var > 1e-12 ? std::sqrt(var) : 1.0;
    Eigen::VectorXd ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        ys[static_cast<Eigen::Index>(i)] = (y[i] - mean_) / scale_;
    }

    double best_ll = -std::numeric_limits<double>::infinity();
    double best_len = 0.5;
    for (double len : {0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0}) {
        length_ = len;
        Eigen::MatrixXd k(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel(x_[i], x_[j]);
            }
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += kNoise;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() != Eigen::Success) {
            continue;
        }
        const Eigen::VectorXd a = llt.solve(ys);
        const Eigen::MatrixXd L = llt.matrixL();
        const double ll = -0.5 * ys.dot(a) - L.diagonal().array().log().sum();
        if (ll > best_ll) {
            best_ll = ll;
            best_len = len;
        }
    }
    length_ = best_len;
    Eigen::MatrixXd k(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel(x_[i], x_[j]);
        }
        k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += kNoise;
    }
    llt_.compute(k);
    if (llt_.info() != Eigen::Success) {
        throw ConfigError("surrogate covariance is not positive definite");
    }
    alpha_ = llt_.solve(ys);
}

std::pair<double, double> GaussianProcess::predict(const std::vector<double>& x) const {
    require(!x_.empty(), "surrogate not fitted");
    const auto n = static_cast<Eigen::Index>(x_.size());
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        ks[i] = kernel(x, x_[static_cast<std::size_t>(i)]);
    }
    const double mu = ks.dot(alpha_);
    const Eigen::VectorXd v = llt_.matrixL().solve(ks);
    const double var = std::max(0.0, 1.0 - v.squaredNorm());
    return {mean_ + scale_ * mu, var * scale_ * scale_};
}

GaussianProcess fit_surrogate(const std::vector<Evaluation>& history, const DseBounds& bounds) {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (const auto& e : history) {
        x.push_back(bounds.encode(e.point));
        y.push_back(e.recall);
    }
    GaussianProcess gp;
    gp.fit(x, y);
    return gp;
}

std::vector<std::pair<double, double>> pareto_front(const std::vector<Evaluation>& history) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& e : history) {
        pts.emplace_back(e.time_est, e.recall);
    }
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : a.second > b.second;
    });
    std::vector<std::pair<double, double>> front;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : pts) {
        if (p.second > best) {
            front.push_back(p);
            best = p.second;
        }
    }
    return front;
}

double ehvi(double time, double mu, double sigma, const std::vector<std::pair<double, double>>& front,
            double ref_time) {
    if (!(time < ref_time)) {
        return 0.0;
    }
    constexpr double kRecallCap = 1.0;
    // Best recall already reached at no more time than the candidate.
    double r_star = 0.0;
    std::vector<std::pair<double, double>> later;
    for (const auto& [t, r] : front) {
        if (t >= ref_time) {
            continue;
        }
        if (t <= time) {
            r_star = std::max(r_star, r);
        } else {
            later.emplace_back(t, r);
        }
    }
    // Width of the newly dominated strip at recall level u is T(u) - time,
    // T(u) the cheapest later front point with recall >= u.
    double total = 0.0;
    double lo = r_star;
    for (const auto& [t, r] : later) {
        if (r <= lo) {
            continue;
        }
        total += (t - time) * tail_integral(lo, std::min(r, kRecallCap), mu, sigma);
        lo = r;
    }
    if (lo < kRecallCap) {
        total += (ref_time - time) * tail_integral(lo, kRecallCap, mu, sigma);
    }
    return total;
}

DesignPoint acquire_next(const GaussianProcess& gp, const std::vector<Evaluation>& history, const DseBounds& bounds,
                         double floor, const Evaluator& evaluator, std::size_t candidates, std::uint64_t seed) {
    std::set<DesignPoint> seen;
    double worst = 0.0;
    for (const auto& e : history) {
        seen.insert(e.point);
        worst = std::max(worst, e.time_est);
    }
    std::vector<DesignPoint> open;
    for (const auto& p : bounds.enumerate()) {
        if (!seen.contains(p)) {
            open.push_back(p);
        }
    }
    if (open.empty()) {
        throw ConfigError("space exhausted");
    }
    std::mt19937_64 rng(seed);
    std::vector<DesignPoint> pool;
    std::sample(open.begin(), open.end(), std::back_inserter(pool), std::min(candidates, open.size()), rng);

    struct Scored {
        DesignPoint p;
        double time;
        double mu;
        double sigma;
    };
    std::vector<Scored> scored;
    for (const auto& p : pool) {
        const auto [mu, var] = gp.predict(bounds.encode(p));
        scored.push_back({p, evaluator.predict_time(p), mu, std::sqrt(var)});
    }
    std::vector<Scored> feasible;
    for (const auto& s : scored) {
        if (s.mu >= floor - s.sigma) {
            feasible.push_back(s);
        }
    }
    const auto& use = feasible.empty() ? scored : feasible;
    const auto front = pareto_front(history);
    const double ref_time = 2.0 * worst;
    const Scored* best = nullptr;
    double best_score = -1.0;
    for (const auto& s : use) {
        const double score = ehvi(s.time, s.mu, s.sigma, front, ref_time);
        const bool better = best == nullptr || score > best_score ||
                            (score == best_score && (s.time < best->time || (s.time == best->time && s.p < best->p)));
        if (better) {
            best = &s;
            best_score = score;
        }
    }
    return best->p;
}

std::optional<Evaluation> best_feasible(const std::vector<Evaluation>& history) {
    std::optional<Evaluation> best;
    for (const auto& e : history) {
        if (!e.feasible) {
            continue;
        }
        if (!best || e.time_est < best->time_est || (e.time_est == best->time_est && e.point < best->point)) {
            best = e;
        }
    }
    return best;
}

namespace {

Evaluation closest_to_feasible(const std::vector<Evaluation>& history) {
    Evaluation c = history.front();
    for (const auto& e : history) {
        if (e.recall > c.recall || (e.recall == c.recall && e.time_est < c.time_est)) {
            c = e;
        }
    }
    return c;
}

class Run {
  public:
    Run(Evaluator& ev, const DseBudget& budget) : ev_(ev), budget_(budget) {}

    bool full() const { return history.size() >= budget_.max_evaluations; }
    bool seen(const DesignPoint& p) const { return seen_.contains(p); }

    const Evaluation& eval(const DesignPoint& p, const std::string& source) {
        Evaluation e = ev_.evaluate(p, budget_.recall_floor);
        e.iteration = history.size();
        e.source = source;
        seen_.insert(p);
        history.push_back(std::move(e));
        return history.back();
    }

    std::vector<Evaluation> history;

  private:
    Evaluator& ev_;
    const DseBudget& budget_;
    std::set<DesignPoint> seen_;
};

// One grid step along each axis; dir > 0 moves toward higher accuracy.
std::vector<DesignPoint> neighbours(const DesignPoint& p, const DseBounds& b, int dir) {
    std::vector<DesignPoint> out;
    auto step = [&](const std::vector<std::size_t>& axis, std::size_t v, int d, auto set) {
        const auto i = static_cast<std::ptrdiff_t>(axis_pos(axis, v)) + d;
        if (i >= 0 && i < static_cast<std::ptrdiff_t>(axis.size())) {
            DesignPoint q = p;
            set(q, axis[static_cast<std::size_t>(i)]);
            if (valid(q)) {
                out.push_back(q);
            }
        }
    };
    step(b.P, p.P, dir, [](DesignPoint& q, std::size_t v) { q.P = v; });
    step(b.M, p.M, dir, [](DesignPoint& q, std::size_t v) { q.M = v; });
    step(b.CB, p.CB, dir, [](DesignPoint& q, std::size_t v) { q.CB = v; });
    step(b.nlist, p.nlist, -dir, [](DesignPoint& q, std::size_t v) { q.nlist = v; });
    step(b.K, p.K, dir, [](DesignPoint& q, std::size_t v) { q.K = v; });
    return out;
}

void greedy_init(Run& run, Evaluator& ev, const DseBounds& b, std::size_t limit) {
    auto mid = [](const std::vector<std::size_t>& a) { return a[a.size() / 2]; };
    DesignPoint cur{b.K.front(), mid(b.P), mid(b.nlist), mid(b.M), mid(b.CB)};
    if (!valid(cur)) {
        cur.P = b.P.front();
    }
    const std::size_t stop = run.history.size() + limit;
    Evaluation at = run.eval(cur, "greedy");
    // Climb toward accuracy until feasible.
    while (!at.feasible && run.history.size() < stop) {
        std::optional<Evaluation> pick;
        for (const auto& n : neighbours(cur, b, +1)) {
            if (run.seen(n) || run.history.size() >= stop) {
                continue;
            }
            const Evaluation e = run.eval(n, "greedy");
            if (!pick || e.recall > pick->recall || (e.recall == pick->recall && e.time_est < pick->time_est)) {
                pick = e;
            }
        }
        if (!pick || pick->recall <= at.recall) {
            break;
        }
        cur = pick->point;
        at = *pick;
    }
    if (!at.feasible) {
        return;
    }
    // Then descend in time while staying feasible, cheapest move first.
    bool moved = true;
    while (moved && run.history.size() < stop) {
        moved = false;
        auto cand = neighbours(cur, b, -1);
        for (const auto& n : neighbours(cur, b, +1)) {
            cand.push_back(n);
        }
        std::vector<std::pair<double, DesignPoint>> cheaper;
        for (const auto& n : cand) {
            const double t = ev.predict_time(n);
            if (t < at.time_est && !run.seen(n)) {
                cheaper.emplace_back(t, n);
            }
        }
        std::sort(cheaper.begin(), cheaper.end());
        for (const auto& [t, n] : cheaper) {
            if (run.history.size() >= stop) {
                break;
            }
            const Evaluation e = run.eval(n, "greedy");
            if (e.feasible) {
                cur = n;
                at = e;
                moved = true;
                break;
            }
        }
    }
}

void latin_hypercube(Run& run, const DseBounds& b, std::size_t n, std::mt19937_64& rng) {
    if (n == 0) {
        return;
    }
    const std::vector<const std::vector<std::size_t>*> axes{&b.K, &b.P, &b.nlist, &b.M, &b.CB};
    std::vector<std::vector<std::size_t>> strata(axes.size());
    for (auto& s : strata) {
        s.resize(n);
        std::iota(s.begin(), s.end(), 0);
        std::shuffle(s.begin(), s.end(), rng);
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&](std::size_t a, double frac) {
        const auto& axis = *axes[a];
        const auto i = std::min(axis.size() - 1, static_cast<std::size_t>(frac * static_cast<double>(axis.size())));
        return axis[i];
    };
    for (std::size_t i = 0; i < n && !run.full(); ++i) {
        DesignPoint p;
        bool ok = false;
        for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
            // First try the stratified draw, then fall back to plain random.
            std::array<double, 5> f{};
            for (std::size_t a = 0; a < axes.size(); ++a) {
                f[a] = attempt == 0 ? (static_cast<double>(strata[a][i]) + u(rng)) / static_cast<double>(n) : u(rng);
            }
            p = {draw(0, f[0]), draw(1, f[1]), draw(2, f[2]), draw(3, f[3]), draw(4, f[4])};
            ok = valid(p) && !run.seen(p);
        }
        if (ok) {
            run.eval(p, "lhs");
        }
    }
}

} // namespace

DseResult explore(Evaluator& evaluator, const DseBounds& bounds_in, const DseBudget& budget) {
    budget.validate();
    DseBounds bounds = bounds_in;
    bounds.normalize(evaluator.dim());
    Run run(evaluator, budget);
    DseResult out;
    const auto grid = bounds.enumerate();
    if (grid.size() <= budget.max_evaluations) {
        out.exhaustive = true;
        for (const auto& p : grid) {
            run.eval(p, "exhaustive");
        }
    } else {
        std::mt19937_64 rng(budget.seed);
        const std::size_t greedy_cap = std::max<std::size_t>(1, (budget.max_evaluations - budget.init_samples) / 3);
        greedy_init(run, evaluator, bounds, greedy_cap);
        latin_hypercube(run, bounds, budget.init_samples, rng);
        std::size_t round = 0;
        while (!run.full()) {
            if (run.history.size() < 2) {
                latin_hypercube(run, bounds, 1, rng);
                continue;
            }
            const GaussianProcess gp = fit_surrogate(run.history, bounds);
            DesignPoint next;
            try {
                next = acquire_next(gp, run.history, bounds, budget.recall_floor, evaluator, budget.candidates,
                                    budget.seed + 1000 + round++);
            } catch (const ConfigError&) {
                break; // space exhausted
            }
            run.eval(next, "bo");
        }
    }
    out.history = std::move(run.history);
    const auto best = best_feasible(out.history);
    if (!best) {
        const Evaluation c = closest_to_feasible(out.history);
        throw NoFeasiblePoint("no design point reached recall " + std::to_string(budget.recall_floor) +
                                  "; closest: " + c.point.str() + " recall " + std::to_string(c.recall),
                              c);
    }
    out.best = *best;
    return out;
}

std::vector<Evaluation> random_search(Evaluator& evaluator, const DseBounds& bounds_in, double floor,
                                      std::size_t feasible_target, std::size_t max_evaluations, std::uint64_t seed) {
    DseBounds bounds = bounds_in;
    bounds.normalize(evaluator.dim());
    auto grid = bounds.enumerate();
    std::mt19937_64 rng(seed);
    std::shuffle(grid.begin(), grid.end(), rng);
    std::vector<Evaluation> out;
    std::size_t found = 0;
    for (const auto& p : grid) {
        if (found >= feasible_target || out.size() >= max_evaluations) {
            break;
        }
        Evaluation e = evaluator.evaluate(p, floor);
        e.iteration = out.size();
        e.source = "random";
        found += e.feasible ? 1 : 0;
        out.push_back(std::move(e));
    }
    return out;
}

void write_history_csv(std::ostream& out, const std::vector<Evaluation>& history) {
    out << "iteration,source,K,P,nlist,M,CB,time_est,recall,feasible\n";
    for (const auto& e : history) {
        out << e.iteration << ',' << e.source << ',' << e.point.K << ',' << e.point.P << ',' << e.point.nlist << ','
            << e.point.M << ',' << e.point.CB << ',' << e.time_est << ',' << e.recall << ',' << (e.feasible ? 1 : 0)
            << "\n";
    }
}

} // namespace pimann
