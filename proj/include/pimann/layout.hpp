#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pimann/ivfpq.hpp"
#include "pimann/perf_model.hpp"
#include "pimann/search.hpp"

namespace pimann {

struct ClusterHeat {
    std::vector<std::uint64_t> access;
    std::vector<std::size_t> size;
    std::vector<double> heat;
    double w_access = 0.5;
    double w_size = 0.5;
};

// heat = w_a * access / max(access) + w_s * size / max(size).
ClusterHeat make_heat(std::vector<std::uint64_t> access, std::vector<std::size_t> size, double w_access = 0.5,
                      double w_size = 0.5);

std::vector<std::size_t> cluster_sizes(const IvfPqIndex& index);

// Counts CL hits per cluster over the profiling probes.
ClusterHeat profile_heat(const IvfPqIndex& index, const std::vector<std::vector<ProbedCluster>>& probes,
                         double w_access = 0.5, double w_size = 0.5);
ClusterHeat profile_heat(const IvfPqIndex& index, const Matrix<std::int32_t>& profile_queries, std::size_t P,
                         double w_access = 0.5, double w_size = 0.5);

// Encoded footprint of one point: M codes of B_a bits plus a 32-bit id.
std::uint64_t point_bytes(const IndexConfig& config);

struct Slice {
    std::uint32_t cluster = 0;
    std::uint32_t ordinal = 0;
    std::uint32_t begin = 0; // point range inside the cluster's list
    std::uint32_t end = 0;

    std::size_t points() const { return end - begin; }
    bool operator==(const Slice&) const = default;
};

// Contiguous slices of at most th1_bytes each. Empty clusters keep one
// empty slice so every cluster stays addressable.
std::vector<Slice> partition_clusters(std::span<const std::size_t> sizes, std::uint64_t th1_bytes,
                                      std::uint64_t point_bytes);

// Heat of a slice: its share of the cluster heat by point count.
std::vector<double> slice_heats(std::span<const Slice> slices, const ClusterHeat& heat);

// Slice descriptors each DPU can keep in its WRAM reservation.
std::size_t metadata_slots_per_dpu(const HwConfig& hw);

struct Th1Search {
    std::uint64_t th1_bytes = 0;
    double objective = 0; // seconds saved per profiled batch
    int iterations = 0;
};

// Learning-rate search over the slice threshold, starting from the
// smallest cluster. p supplies the per-point cost on one DPU.
Th1Search tune_th1(const ClusterHeat& heat, std::size_t n_dpus, std::uint64_t point_bytes, const ModelParams& p,
                   const HwConfig& hw);

// th2[i] = floor(alpha * heat[i] / slice_count[i]), alpha maximal with the
// replica footprint inside budget_bytes. Capped at n_dpus - 1.
std::vector<std::uint32_t> duplicate_clusters(std::span<const Slice> slices, const ClusterHeat& heat,
                                              std::uint64_t budget_bytes, std::size_t n_dpus,
                                              std::uint64_t point_bytes);

struct SlicePlacement {
    std::uint32_t cluster = 0;
    std::uint32_t slice = 0;
    std::uint32_t replica = 0;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::uint32_t dpu = 0;
    double heat = 0;
    std::uint64_t bytes = 0;

    bool operator==(const SlicePlacement&) const = default;
};

struct SliceMap {
    std::size_t n_dpus = 0;
    std::uint64_t th1_bytes = 0;
    std::uint64_t point_bytes = 0;
    std::uint64_t capacity_bytes = 0; // per DPU, after reservations
    std::vector<std::uint32_t> th2;
    std::vector<SlicePlacement> placements;
    std::vector<double> dpu_heat;
    std::vector<std::uint64_t> dpu_bytes;
    int exchange_swaps = 0;

    // hosts[cluster][slice] -> placement indices (one per replica).
    std::vector<std::vector<std::vector<std::uint32_t>>> hosts;

    void rebuild();
    std::size_t slice_count(std::size_t cluster) const { return hosts[cluster].size(); }
    // Throws ConfigError when coverage, anti-affinity or capacity fails.
    void validate(std::span<const std::size_t> sizes) const;
    double max_heat() const;
    double mean_heat() const;

    bool operator==(const SliceMap& o) const {
        return n_dpus == o.n_dpus && th1_bytes == o.th1_bytes && point_bytes == o.point_bytes &&
               capacity_bytes == o.capacity_bytes && th2 == o.th2 && placements == o.placements;
    }
};

void to_json(nlohmann::json& j, const SliceMap& m);
void from_json(const nlohmann::json& j, SliceMap& m);

struct AllocateOptions {
    int exchange_iterations = 10;
    double similarity = 0.10; // fraction of the mean DPU heat
};

// Replicas of every slice (th2[c] extra copies) go in descending heat to the
// coldest DPU with room; equal (cluster, slice) replicas never share a DPU.
// A reuse pass then swaps similar-heat slices to co-locate cluster pieces.
SliceMap allocate_slices(std::span<const Slice> slices, std::span<const std::uint32_t> th2, const ClusterHeat& heat,
                         std::size_t n_dpus, std::uint64_t capacity_bytes, std::uint64_t point_bytes,
                         const AllocateOptions& options = {});

// Whole clusters, one copy, cluster i on DPU i mod n_dpus.
SliceMap round_robin_layout(std::span<const std::size_t> sizes, std::size_t n_dpus, std::uint64_t point_bytes,
                            std::uint64_t capacity_bytes);

// MRAM left for slices after the per-DPU copies of shared index data.
std::uint64_t dpu_data_capacity(const HwConfig& hw, const IvfPqIndex& index);

struct LayoutOptions {
    std::size_t n_dpus = 0;        // 0: hw.dpu_count
    double w_access = 0.5;
    double w_size = 0.5;
    std::uint64_t th1_bytes = 0;   // 0: tune
    double replica_budget = -1;    // bytes per DPU; negative: all free MRAM
    AllocateOptions allocate;
};

struct LayoutResult {
    ClusterHeat heat;
    Th1Search th1;
    SliceMap map;
};

LayoutResult optimize_layout(const IvfPqIndex& index, const std::vector<std::vector<ProbedCluster>>& profile_probes,
                             const HwConfig& hw, const LayoutOptions& options);

// WRAM buffer planning.
struct WramItem {
    std::string name;
    std::uint64_t bytes = 0;
    double access_bits = 0; // bits read or written per batch
    bool mandatory = false;

    double heat_per_bit() const { return bytes == 0 ? 0.0 : access_bits / (8.0 * static_cast<double>(bytes)); }
};

struct WramPlan {
    std::uint64_t capacity = 0;
    std::uint64_t used = 0;
    std::vector<std::string> placed;

    bool contains(const std::string& name) const;
};

// Mandatory items first, then descending heat per bit (ties by name) while
// they fit. Throws CapacityError if mandatory items alone overflow.
WramPlan plan_wram(std::vector<WramItem> items, std::uint64_t capacity);

// Scratchpad left after the tasklet stacks.
std::uint64_t usable_wram(const HwConfig& hw);

// The standard item set for one DPU: per-batch access volumes from the
// IO coefficients of the model at the DPU's real counts.
std::vector<WramItem> wram_items(const ModelParams& p, const WorkCounts& counts, std::size_t nlist,
                                 std::size_t sqt_hot_entries, std::size_t slices_on_dpu, const HwConfig& hw);

} // namespace pimann
