#include "pimann/search.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace pimann {

TopKState::TopKState(std::size_t k) : k_(k) {
    require(k >= 1, "top-k capacity must be >= 1");
    heap_.reserve(k);
}

bool TopKState::offer(const Candidate& c) {
    if (heap_.size() < k_) {
        heap_.push_back(c);
        std::push_heap(heap_.begin(), heap_.end());
        return true;
    }
    if (!(c < heap_.front())) {
        return false;
    }
    std::pop_heap(heap_.begin(), heap_.end());
    heap_.back() = c;
    std::push_heap(heap_.begin(), heap_.end());
    return true;
}

std::vector<Candidate> TopKState::sorted() const {
    std::vector<Candidate> out = heap_;
    std::sort(out.begin(), out.end());
    return out;
}

ScanStats& ScanStats::operator+=(const ScanStats& o) {
    points += o.points;
    lock_acquisitions += o.lock_acquisitions;
    heap_updates += o.heap_updates;
    refreshes += o.refreshes;
    return *this;
}

std::vector<ProbedCluster> locate_clusters(std::span<const std::int32_t> query, const Matrix<std::int32_t>& centroids,
                                           std::size_t P, const Sqt& sqt) {
    require(query.size() == centroids.cols, "query and centroid dimensions differ");
    require(P >= 1 && P <= centroids.rows, "P must be in [1, nlist]");
    std::vector<ProbedCluster> all(centroids.rows);
    for (std::size_t c = 0; c < centroids.rows; ++c) {
        all[c] = {static_cast<std::uint32_t>(c), l2_distance_sqt(query, centroids.row(c), sqt)};
    }
    auto cmp = [](const ProbedCluster& a, const ProbedCluster& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.cluster < b.cluster;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(P), all.end(), cmp);
    all.resize(P);
    return all;
}

std::vector<std::int32_t> compute_residual(std::span<const std::int32_t> query,
                                           std::span<const std::int32_t> centroid) {
    require(query.size() == centroid.size(), "residual operands differ in length");
    std::vector<std::int32_t> r(query.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = query[i] - centroid[i];
    }
    return r;
}

DistanceLut build_lut(std::span<const std::int32_t> residual, const PqCodebooks& codebooks, const Sqt& sqt,
                      SqtProfile* profile) {
    require(codebooks.M * codebooks.sub_dim == residual.size(), "codebooks do not match residual length");
    DistanceLut lut{codebooks.M, codebooks.CB, std::vector<std::uint64_t>(codebooks.M * codebooks.CB)};
    for (std::size_t m = 0; m < codebooks.M; ++m) {
        const auto slice = residual.subspan(m * codebooks.sub_dim, codebooks.sub_dim);
        for (std::size_t j = 0; j < codebooks.CB; ++j) {
            const auto e = codebooks.entry(m, j);
            lut.entries[m * codebooks.CB + j] = l2_distance_sqt(slice, e, sqt);
            if (profile != nullptr) {
                *profile += sqt_access_profile(slice, e, sqt);
            }
        }
    }
    return lut;
}

std::uint64_t adc_distance(std::span<const std::uint16_t> code, const DistanceLut& lut) {
    std::uint64_t d = 0;
    for (std::size_t m = 0; m < lut.M; ++m) {
        d += lut.entries[m * lut.CB + code[m]];
    }
    return d;
}

void scan_range(const InvertedList& list, std::size_t begin, std::size_t end, const DistanceLut& lut,
                TopKState& state, const ScanOptions& options, ScanStats* stats) {
    require(begin <= end && end <= list.size(), "scan range outside the list");
    require(options.refresh_interval >= 1, "refresh interval must be >= 1");
    ScanStats local;
    for (std::size_t i = begin; i < end; ++i) {
        if (options.forwarding && (i - begin) % options.refresh_interval == 0) {
            state.refresh();
            ++local.refreshes;
        }
        const auto code = list.code(i, lut.M);
        for (std::size_t m = 0; m < lut.M; ++m) {
            if (code[m] >= lut.CB) {
                throw ConfigError("PQ code " + std::to_string(code[m]) + " out of range");
            }
        }
        const Candidate c{adc_distance(code, lut), list.ids[i]};
        ++local.points;
        // Strictly worse than the forwarded bound: cannot enter the heap.
        if (options.forwarding && c.distance > state.forwarded_bound) {
            continue;
        }
        ++local.lock_acquisitions;
        if (state.offer(c)) {
            ++local.heap_updates;
            // The insert that fills the heap publishes the first real bound.
            if (options.forwarding && state.full() && state.forwarded_bound == kNoBound) {
                state.refresh();
                ++local.refreshes;
            }
        }
    }
    if (stats != nullptr) {
        *stats += local;
    }
}

Matrix<std::int32_t> prepare_queries(const IvfPqIndex& index, const VectorSet& queries) {
    require(queries.dim == index.dim, "query dimension does not match the index");
    Matrix<std::int32_t> out(queries.count, queries.dim);
    for (std::size_t q = 0; q < queries.count; ++q) {
        const auto v = index.prepare(queries.row(q));
        std::copy(v.begin(), v.end(), out.row(q).begin());
    }
    return out;
}

std::vector<std::vector<ProbedCluster>> locate_all(const IvfPqIndex& index, const Matrix<std::int32_t>& queries,
                                                   std::size_t P) {
    std::vector<std::vector<ProbedCluster>> out(queries.rows);
    for (std::size_t q = 0; q < queries.rows; ++q) {
        out[q] = locate_clusters(queries.row(q), index.centroids, P, engine_sqt());
    }
    return out;
}

std::vector<Candidate> search_one(const IvfPqIndex& index, std::span<const std::int32_t> query, std::size_t K,
                                  std::size_t P, const ScanOptions& options) {
    const Sqt& sqt = engine_sqt();
    TopKState state(K);
    for (const auto& probe : locate_clusters(query, index.centroids, P, sqt)) {
        const auto residual = compute_residual(query, index.centroids.row(probe.cluster));
        const DistanceLut lut = build_lut(residual, index.codebooks, sqt);
        scan_cluster(index.lists[probe.cluster], lut, state, options);
    }
    return state.sorted();
}

void emit_row(std::span<const Candidate> sorted, std::size_t K, std::span<std::int32_t> ids,
              std::span<double> distances) {
    for (std::size_t i = 0; i < K; ++i) {
        if (i < sorted.size()) {
            ids[i] = static_cast<std::int32_t>(sorted[i].id);
            distances[i] = static_cast<double>(sorted[i].distance);
        } else {
            ids[i] = -1;
            distances[i] = std::numeric_limits<double>::infinity();
        }
    }
}

NeighborLists search(const IvfPqIndex& index, const VectorSet& queries, std::size_t K, std::size_t P,
                     const ScanOptions& options) {
    require(K >= 1, "K must be >= 1");
    const Matrix<std::int32_t> prepared = prepare_queries(index, queries);
    NeighborLists out;
    out.count = queries.count;
    out.k = K;
    out.ids.assign(queries.count * K, -1);
    out.distances.assign(queries.count * K, 0.0);
    for (std::size_t q = 0; q < queries.count; ++q) {
        const auto best = search_one(index, prepared.row(q), K, P, options);
        emit_row(best, K, {out.ids.data() + q * K, K}, {out.distances.data() + q * K, K});
    }
    return out;
}

} // namespace pimann
