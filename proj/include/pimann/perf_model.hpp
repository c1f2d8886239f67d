#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pimann/ivfpq.hpp"

namespace pimann {

enum class Phase { CL = 0, RC, LC, DC, TS };
enum class Side { host, pim };

inline constexpr std::array<Phase, 5> kPhases{Phase::CL, Phase::RC, Phase::LC, Phase::DC, Phase::TS};
inline constexpr std::size_t kPhaseCount = kPhases.size();

std::string_view phase_name(Phase p);
Phase parse_phase(std::string_view name);
std::string_view side_name(Side s);

// Symbols of the analytical model. N is the number of points on the
// processing unit, so N / C is its cluster count.
struct ModelParams {
    double N = 0;
    double Q = 0;
    double D = 0;
    double K = 10;
    double P = 1;
    double C = 1;
    double M = 1;
    double CB = 1;
    BitWidths bits;
    // LC priced as CB * M * dist(D / M) instead of CB * dist(M) * D / M.
    bool lc_cost_alt = false;

    void validate() const;
};

// Parameters for Q queries against an index of `count` points.
ModelParams params_for(const IndexConfig& config, std::size_t dim, std::size_t count, std::size_t queries);

struct PhaseCost {
    Phase phase = Phase::CL;
    double compute = 0; // cycles
    double io_bits = 0;

    double io_bytes() const { return io_bits / 8.0; }
};

// Actual work routed to one processing unit; replaces Q*P (probes) and
// Q*P*C (scanned points) in the equations.
struct WorkCounts {
    double probes = 0;
    double points = 0;
};

struct HwConfig {
    std::string name = "desk-64";
    // Host side (CL by default).
    double host_freq_hz = 2.1e9;
    double host_bandwidth = 60e9; // bytes/s
    std::size_t host_threads = 32;
    // PIM side.
    std::size_t dpu_count = 64;
    double dpu_freq_hz = 350e6;
    double mram_bandwidth = 1e9; // bytes/s per DPU
    double wram_mram_ratio = 4.72;
    std::uint64_t mram_bytes = 64ULL << 20;
    std::uint64_t wram_bytes = 64ULL << 10;
    double multiply_cycles = 32;
    double transfer_fraction = 0.0075;
    std::size_t tasklets = 16;
    double pipeline_efficiency = 0.9;
    double lock_penalty_cycles = 20;
    std::uint64_t tasklet_stack_bytes = 1024;
    // Bytes of descriptor per resident slice (offsets, ids, replica info).
    std::uint64_t slice_metadata_bytes = 16;

    void validate() const;

    double frequency(Side s) const { return s == Side::host ? host_freq_hz : dpu_freq_hz; }
    double pe(Side s) const { return s == Side::host ? static_cast<double>(host_threads) : static_cast<double>(dpu_count); }
    // Aggregate bandwidth per side. PIM traffic is priced at the buffered
    // (WRAM) peak: the model describes the ideal layout.
    double bandwidth(Side s) const;
    double dpu_bandwidth() const { return mram_bandwidth * wram_mram_ratio; }
    double transfer_bandwidth() const;
};

void to_json(nlohmann::json& j, const HwConfig& hw);
void from_json(const nlohmann::json& j, HwConfig& hw);

HwConfig builtin_profile(std::string_view name);
// A path to a JSON file, a profile name found in profile_dir, or a
// built-in name (upmem-2543, upmem-nominal, desk-64).
HwConfig load_profile(std::string_view name_or_path, const std::filesystem::path& profile_dir = {});

double dist_cost(double X);

PhaseCost phase_cost(Phase phase, const ModelParams& p);
// Equations with the real-time counts of one unit (RC..TS only need them;
// CL is evaluated for counts.probes / P queries).
PhaseCost phase_cost(Phase phase, const ModelParams& p, const WorkCounts& counts);

// Roofline: max(C / (F * #PE), IO / BW).
double phase_time(const PhaseCost& cost, const HwConfig& hw, Side side);
// Same with an explicit PE count and bandwidth (one DPU, one thread, ...).
double phase_time(const PhaseCost& cost, double freq_hz, double pe, double bandwidth);

// C / IO, IO in bits.
double c2io(const PhaseCost& cost);

using Assignment = std::array<Side, kPhaseCount>;

inline constexpr Assignment kAllPim{Side::pim, Side::pim, Side::pim, Side::pim, Side::pim};
inline constexpr Assignment kHostCl{Side::host, Side::pim, Side::pim, Side::pim, Side::pim};

std::array<double, kPhaseCount> phase_times(const Assignment& a, const ModelParams& p, const HwConfig& hw);
double pipeline_time(const Assignment& a, const ModelParams& p, const HwConfig& hw);

// Greedy: phases in descending C2IO move to the host while the pipeline
// time strictly drops; the first non-improving move ends the search.
Assignment recommend_split(const ModelParams& p, const HwConfig& hw, const Assignment& start = kAllPim);

// Predicted latency of one DPU running the PIM phases of `counts`.
double dpu_latency(const ModelParams& p, const WorkCounts& counts, const HwConfig& hw);

} // namespace pimann
