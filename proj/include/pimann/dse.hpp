#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pimann/dataset.hpp"
#include "pimann/ivfpq.hpp"
#include "pimann/perf_model.hpp"

namespace pimann {

struct DesignPoint {
    std::size_t K = 10;
    std::size_t P = 1;
    std::size_t nlist = 256;
    std::size_t M = 16;
    std::size_t CB = 256;

    auto operator<=>(const DesignPoint&) const = default;
    std::string str() const;
};

void to_json(nlohmann::json& j, const DesignPoint& p);
void from_json(const nlohmann::json& j, DesignPoint& p);

// Discrete grid per coordinate. nlist and CB are meant to be powers of two.
struct DseBounds {
    std::vector<std::size_t> K{10};
    std::vector<std::size_t> P{1, 2, 4, 8, 16, 32};
    std::vector<std::size_t> nlist{256, 512, 1024, 2048};
    std::vector<std::size_t> M{8, 16, 32, 64};
    std::vector<std::size_t> CB{16, 256};

    // Sorts and dedups every axis; throws ConfigError on an empty axis,
    // K < 10 or an M that does not divide dim.
    void normalize(std::size_t dim);
    std::size_t size() const;
    bool contains(const DesignPoint& p) const;
    // Valid points only (P <= nlist), in lexicographic order.
    std::vector<DesignPoint> enumerate() const;
    // Coordinates in [0, 1]: grid position, log2 spaced for nlist and CB.
    std::vector<double> encode(const DesignPoint& p) const;
};

void to_json(nlohmann::json& j, const DseBounds& b);
void from_json(const nlohmann::json& j, DseBounds& b);

struct DseBudget {
    std::size_t max_evaluations = 40;
    std::size_t init_samples = 8;
    double recall_floor = 0.8;
    std::size_t sample_queries = 256;
    std::size_t candidates = 512;
    std::uint64_t seed = 1;

    void validate() const;
};

void to_json(nlohmann::json& j, const DseBudget& b);
void from_json(const nlohmann::json& j, DseBudget& b);

struct Evaluation {
    DesignPoint point;
    double time_est = 0;
    double recall = 0;
    bool feasible = false;
    std::size_t iteration = 0;
    std::string source; // greedy, lhs, bo, exhaustive, random
};

struct EvaluatorOptions {
    std::uint64_t seed = 1;
    int kmeans_iters = 10;
    std::size_t coarse_train_size = 0;
    std::size_t pq_train_size = 0;
    BitWidths bits;
};

// Builds indices on demand and caches them per (nlist, M, CB); the coarse
// quantizer is shared by every index with the same nlist.
class Evaluator {
  public:
    Evaluator(const VectorSet& base, const VectorSet& queries, const NeighborLists& truth, HwConfig hw,
              EvaluatorOptions options = {});

    // Pipeline time at the recommended host/PIM split.
    double predict_time(const DesignPoint& p) const;
    double measure_recall(const DesignPoint& p);
    // time + recall; feasibility judged against `floor`.
    Evaluation evaluate(const DesignPoint& p, double floor);

    std::size_t index_builds() const { return builds_; }
    std::size_t recall_cache_hits() const { return hits_; }
    const IvfPqIndex& index_for(const DesignPoint& p);
    std::size_t dim() const { return base_->dim; }

  private:
    const VectorSet* base_;
    VectorSet queries_;
    NeighborLists truth_;
    HwConfig hw_;
    EvaluatorOptions options_;
    std::map<std::size_t, Matrix<std::int32_t>> coarse_;
    std::map<std::tuple<std::size_t, std::size_t, std::size_t>, IvfPqIndex> indices_;
    std::map<DesignPoint, double> recall_;
    std::size_t builds_ = 0;
    std::size_t hits_ = 0;
};

// Matérn-5/2 GP on recall over the encoded coordinates. Targets are
// standardized; the length scale maximizes the marginal likelihood over a
// fixed ladder.
class GaussianProcess {
  public:
    static constexpr double kNoise = 1e-4;

    void fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y);
    // Posterior mean and variance in the original units.
    std::pair<double, double> predict(const std::vector<double>& x) const;
    double length_scale() const { return length_; }

  private:
    double kernel(const std::vector<double>& a, const std::vector<double>& b) const;

    std::vector<std::vector<double>> x_;
    Eigen::VectorXd alpha_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double mean_ = 0;
    double scale_ = 1;
    double length_ = 0.5;
};

GaussianProcess fit_surrogate(const std::vector<Evaluation>& history, const DseBounds& bounds);

// Expected hypervolume improvement of a candidate with known time and
// Gaussian recall against the front of (time, recall) pairs. Time is
// minimized, recall maximized; reference point (ref_time, 0).
double ehvi(double time, double mu, double sigma, const std::vector<std::pair<double, double>>& front,
            double ref_time);

// Non-dominated (time, recall) pairs sorted by time.
std::vector<std::pair<double, double>> pareto_front(const std::vector<Evaluation>& history);

// Best EHVI among up to `candidates` random unevaluated grid points that
// the surrogate predicts feasible (mean >= floor - std). Throws ConfigError
// "space exhausted" when every point was evaluated.
DesignPoint acquire_next(const GaussianProcess& gp, const std::vector<Evaluation>& history, const DseBounds& bounds,
                         double floor, const Evaluator& evaluator, std::size_t candidates, std::uint64_t seed);

class NoFeasiblePoint : public InfeasibleError {
  public:
    NoFeasiblePoint(const std::string& what, Evaluation closest) : InfeasibleError(what), closest(std::move(closest)) {}
    Evaluation closest;
};

struct DseResult {
    Evaluation best;
    std::vector<Evaluation> history;
    bool exhaustive = false;
};

// Greedy initializer, Latin-hypercube samples, then the BO loop. Grids no
// larger than the budget are swept exhaustively. Throws NoFeasiblePoint.
DseResult explore(Evaluator& evaluator, const DseBounds& bounds, const DseBudget& budget);

// Uniform random distinct points until `feasible_target` feasible ones are
// found or `max_evaluations` is spent.
std::vector<Evaluation> random_search(Evaluator& evaluator, const DseBounds& bounds, double floor,
                                      std::size_t feasible_target, std::size_t max_evaluations, std::uint64_t seed);

// Feasible point with the least time, ties to the smaller point.
std::optional<Evaluation> best_feasible(const std::vector<Evaluation>& history);

// iteration,source,K,P,nlist,M,CB,time_est,recall,feasible
void write_history_csv(std::ostream& out, const std::vector<Evaluation>& history);

} // namespace pimann
