#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "pimann/dataset.hpp"
#include "pimann/ivfpq.hpp"
#include "pimann/sqt.hpp"

namespace pimann {

// M x CB partial squared distances, row m for subspace m.
struct DistanceLut {
    std::size_t M = 0;
    std::size_t CB = 0;
    std::vector<std::uint64_t> entries;

    std::uint64_t at(std::size_t m, std::size_t j) const { return entries[m * CB + j]; }
    std::span<const std::uint64_t> row(std::size_t m) const { return {entries.data() + m * CB, CB}; }
};

struct Candidate {
    std::uint64_t distance = 0;
    std::uint32_t id = 0;

    // Ordered by distance, then id: the heap top is the worst kept entry.
    friend bool operator<(const Candidate& a, const Candidate& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    }
    bool operator==(const Candidate&) const = default;
};

inline constexpr std::uint64_t kNoBound = std::numeric_limits<std::uint64_t>::max();

// Bounded max-heap of the K best candidates. forwarded_bound is the
// snapshot the scanners prune against; it may lag behind the real bound.
class TopKState {
  public:
    explicit TopKState(std::size_t k);

    std::size_t capacity() const { return k_; }
    std::size_t size() const { return heap_.size(); }
    bool full() const { return heap_.size() == k_; }
    // Current k-th distance, kNoBound while the heap is not full.
    std::uint64_t bound() const { return full() ? heap_.front().distance : kNoBound; }

    // Returns true when the candidate entered the heap.
    bool offer(const Candidate& c);
    void refresh() { forwarded_bound = bound(); }
    std::vector<Candidate> sorted() const;
    std::span<const Candidate> raw() const { return heap_; }

    std::uint64_t forwarded_bound = kNoBound;

  private:
    std::size_t k_;
    std::vector<Candidate> heap_;
};

// Points per block between forwarded-bound refreshes.
inline constexpr std::size_t kForwardRefreshInterval = 64;

struct ScanOptions {
    bool forwarding = true;
    std::size_t refresh_interval = kForwardRefreshInterval;
};

struct ScanStats {
    std::uint64_t points = 0;
    std::uint64_t lock_acquisitions = 0; // candidates that reached the shared heap
    std::uint64_t heap_updates = 0;      // candidates that were kept
    std::uint64_t refreshes = 0;

    ScanStats& operator+=(const ScanStats& o);
};

struct ProbedCluster {
    std::uint32_t cluster = 0;
    std::uint64_t distance = 0;
    bool operator==(const ProbedCluster&) const = default;
};

// CL: the P nearest centroids, ascending, ties to the lower cluster id.
std::vector<ProbedCluster> locate_clusters(std::span<const std::int32_t> query, const Matrix<std::int32_t>& centroids,
                                           std::size_t P, const Sqt& sqt);

// RC
std::vector<std::int32_t> compute_residual(std::span<const std::int32_t> query, std::span<const std::int32_t> centroid);

// LC. When profile is set, SQT lookups are tallied into it.
DistanceLut build_lut(std::span<const std::int32_t> residual, const PqCodebooks& codebooks, const Sqt& sqt,
                      SqtProfile* profile = nullptr);

std::uint64_t adc_distance(std::span<const std::uint16_t> code, const DistanceLut& lut);

// DC + TS over points [begin, end) of a list.
void scan_range(const InvertedList& list, std::size_t begin, std::size_t end, const DistanceLut& lut,
                TopKState& state, const ScanOptions& options = {}, ScanStats* stats = nullptr);

inline void scan_cluster(const InvertedList& list, const DistanceLut& lut, TopKState& state,
                         const ScanOptions& options = {}, ScanStats* stats = nullptr) {
    scan_range(list, 0, list.size(), lut, state, options, stats);
}

// Probe lists for every query (rows of already prepared queries).
std::vector<std::vector<ProbedCluster>> locate_all(const IvfPqIndex& index, const Matrix<std::int32_t>& queries,
                                                   std::size_t P);

// Full pipeline for one prepared query.
std::vector<Candidate> search_one(const IvfPqIndex& index, std::span<const std::int32_t> query, std::size_t K,
                                  std::size_t P, const ScanOptions& options = {});

// Full pipeline over a query set. Rows with fewer than K reachable points
// are padded with id -1 and infinite distance.
NeighborLists search(const IvfPqIndex& index, const VectorSet& queries, std::size_t K, std::size_t P,
                     const ScanOptions& options = {});

// Sorted candidates to one NeighborLists row.
void emit_row(std::span<const Candidate> sorted, std::size_t K, std::span<std::int32_t> ids,
              std::span<double> distances);

// Queries in engine coordinates.
Matrix<std::int32_t> prepare_queries(const IvfPqIndex& index, const VectorSet& queries);

} // namespace pimann
