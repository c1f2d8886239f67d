#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "pimann/layout.hpp"
#include "pimann/perf_model.hpp"
#include "pimann/search.hpp"

namespace pimann {

// One unit of DPU work: scan one slice of one probed cluster for one query.
struct TaskKey {
    std::uint32_t query = 0;
    std::uint32_t cluster = 0;
    std::uint32_t slice = 0;

    bool operator==(const TaskKey&) const = default;
    auto operator<=>(const TaskKey&) const = default;
};

struct Task {
    TaskKey key;
    std::uint32_t replica = 0;
    std::uint32_t dpu = 0;
    std::uint32_t placement = 0; // index into SliceMap::placements
    double latency = 0;          // predicted when run alone

    bool operator==(const Task&) const = default;
};

struct BatchAssignment {
    std::size_t batch = 0;
    std::size_t new_queries = 0; // queries whose CL ran for this batch
    std::vector<Task> tasks;
    std::vector<TaskKey> postponed;
    std::vector<double> dpu_latency; // predicted seconds
    std::vector<WorkCounts> dpu_counts;

    double max_latency() const;
    double mean_latency() const;
};

inline constexpr double kNoPostpone = std::numeric_limits<double>::infinity();

struct ScheduleOptions {
    double th3 = 0.25;
    // Carried-over tasks are placed first and are not postponed twice. With
    // resort set they join the latency order instead.
    bool resort_postponed = false;
    bool rebalance = true;
};

// Every slice task of the given probes.
std::vector<TaskKey> expand_tasks(std::uint32_t query, const std::vector<ProbedCluster>& probes, const SliceMap& map);

// Greedy coldest-host assignment, long-tail moves, then postponement of
// tasks that push a DPU past (1 + th3) x the mean predicted latency. The
// first `carried` keys of the pool are leftovers from the previous batch.
BatchAssignment schedule_batch(const std::vector<TaskKey>& pool, std::size_t carried, const SliceMap& map,
                               const ModelParams& p, const HwConfig& hw, const ScheduleOptions& options = {});

// Batches of batch_size queries; postponed tasks lead the next batch and a
// final drain batch runs whatever is left without postponement.
std::vector<BatchAssignment> run_batches(const std::vector<std::vector<ProbedCluster>>& probes, std::size_t batch_size,
                                         const SliceMap& map, const ModelParams& p, const HwConfig& hw,
                                         const ScheduleOptions& options = {});

enum class StaticPolicy { primary, hash };

// Replica chosen without looking at load: always the first copy, or a hash
// of the task key. Nothing is postponed.
BatchAssignment schedule_static(const std::vector<TaskKey>& pool, const SliceMap& map, const ModelParams& p,
                                const HwConfig& hw, StaticPolicy policy);

std::vector<BatchAssignment> run_static_batches(const std::vector<std::vector<ProbedCluster>>& probes,
                                                std::size_t batch_size, const SliceMap& map, const ModelParams& p,
                                                const HwConfig& hw, StaticPolicy policy);

// Predicted latency of each DPU for a set of tasks.
void tally_dpus(BatchAssignment& a, const SliceMap& map, const ModelParams& p, const HwConfig& hw);

// CSV rows: batch,query,cluster,slice,replica,dpu,status
void write_assignment_csv(std::ostream& out, const std::vector<BatchAssignment>& batches, bool header = true);

} // namespace pimann
