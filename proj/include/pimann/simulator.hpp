#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "pimann/dataset.hpp"
#include "pimann/ivfpq.hpp"
#include "pimann/layout.hpp"
#include "pimann/perf_model.hpp"
#include "pimann/scheduler.hpp"
#include "pimann/search.hpp"

namespace pimann {

struct SimOptions {
    bool sqt = true;        // multiplier-less LC
    bool wram = true;       // WRAM buffer placement
    bool forwarding = true; // top-k bound forwarding
    std::size_t sqt_hot_entries = kDefaultSqtHotEntries;
    // Smallest unit any single access moves, in bytes.
    std::uint64_t access_granule = 8;
};

// Cycles charged per operation.
inline constexpr double kTsCompareCycles = 2; // load the forwarded bound, compare

struct PhaseTally {
    double cycles = 0;
    double mram_bytes = 0;
    double wram_bytes = 0;
    double time = 0; // seconds, after the roofline and efficiency factor

    PhaseTally& operator+=(const PhaseTally& o);
};

struct DpuState {
    std::uint32_t id = 0;
    std::uint64_t mram_used = 0;
    WramPlan wram;
    std::size_t tasklets = 0;
    std::size_t tasks = 0;
    double cycles = 0;
    std::array<PhaseTally, kPhaseCount> phases{};
    double latency = 0;
};

struct SimReport {
    std::vector<DpuState> dpus;
    std::size_t tasks = 0;
    std::size_t queries = 0;
    double max_dpu = 0;
    double mean_dpu = 0;
    double imbalance = 0; // max / mean over DPUs
    double host_cl_time = 0;
    double merge_time = 0;
    double transfer_bytes = 0;
    double transfer_time = 0;
    double pipeline_latency = 0; // max(DPUs, host CL): the part the model covers
    double batch_latency = 0;
    // Per-phase seconds summed over DPUs (CL: host time).
    std::array<double, kPhaseCount> phase_time{};
    std::uint64_t lock_acquisitions = 0;
    std::uint64_t candidates = 0;
};

// Per-query top-K accumulated across batches on the host.
class ResultMerger {
  public:
    ResultMerger(std::size_t queries, std::size_t K);
    void merge(std::uint32_t query, std::span<const Candidate> partial);
    NeighborLists finish() const;

  private:
    std::size_t K_;
    std::vector<TopKState> acc_;
};

struct SimContext {
    const IvfPqIndex* index = nullptr;
    const Matrix<std::int32_t>* queries = nullptr; // prepared
    const SliceMap* map = nullptr;
    HwConfig hw;
    ModelParams params; // shape for cost formulas (Q ignored)
    SimOptions options;
};

// Runs one batch on the modelled DPU array. Neighbour output goes to the
// merger (if any); the report carries costs only.
SimReport simulate_batch(const BatchAssignment& assignment, const SimContext& ctx, ResultMerger* merger = nullptr);

struct SimRun {
    std::vector<SimReport> batches;
    NeighborLists results;
    double total_latency = 0;
    double pipeline_latency = 0;
    double imbalance = 0; // sum of batch max / sum of batch mean
    std::array<double, kPhaseCount> phase_time{};
    double qps() const;
    double ts_share() const;
};

SimRun run_simulation(const std::vector<BatchAssignment>& batches, const SimContext& ctx);

// Model latency / simulated latency; the model is the ideal, so values
// near or below 1 are expected.
double compare_model(double simulated_latency, double model_latency);
double model_latency(const ModelParams& p, const HwConfig& hw, const Assignment& split = kHostCl);

enum class SweepKnob { wram, layout, sqt, forwarding };
std::string_view knob_name(SweepKnob k);
SweepKnob parse_knob(std::string_view name);

struct SweepInput {
    const IvfPqIndex* index = nullptr;
    const Matrix<std::int32_t>* queries = nullptr;
    const std::vector<std::vector<ProbedCluster>>* probes = nullptr;
    const SliceMap* optimized = nullptr; // layout used when the layout knob is on (and for other knobs)
    const SliceMap* naive = nullptr;     // round-robin single copy
    HwConfig hw;
    ModelParams params;
    SimOptions options;
    ScheduleOptions schedule;
    std::size_t batch_size = 256;
};

struct SweepResult {
    SweepKnob knob = SweepKnob::wram;
    SimRun off;
    SimRun on;
    double speedup = 0; // off latency / on latency
    bool identical_output = false;
};

SweepResult sweep(SweepKnob knob, const SweepInput& in);

void to_json(nlohmann::json& j, const SimReport& r);
nlohmann::json run_to_json(const SimRun& run);
// dpu,phase,cycles,mram_bytes,wram_bytes,seconds summed over batches.
void write_phase_csv(std::ostream& out, const SimRun& run);

} // namespace pimann
