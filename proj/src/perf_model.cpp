#include "pimann/perf_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "pimann/serialization.hpp"

namespace pimann {

namespace {

constexpr std::array<std::string_view, kPhaseCount> kPhaseNames{"CL", "RC", "LC", "DC", "TS"};

std::size_t idx(Phase p) {
    return static_cast<std::size_t>(p);
}

} // namespace

std::string_view phase_name(Phase p) {
    return kPhaseNames[idx(p)];
}

Phase parse_phase(std::string_view name) {
    for (Phase p : kPhases) {
        if (phase_name(p) == name) {
            return p;
        }
    }
    throw ConfigError("unknown phase: " + std::string(name));
}

std::string_view side_name(Side s) {
    return s == Side::host ? "host" : "pim";
}

void ModelParams::validate() const {
    require(N > 0 && Q > 0 && D > 0 && K > 0 && P > 0 && C > 0 && M > 0 && CB > 0,
            "model parameters must be positive");
    require(C <= N, "C exceeds N");
    require(P <= N / C + 1e-9, "P exceeds the cluster count N / C");
}

ModelParams params_for(const IndexConfig& config, std::size_t dim, std::size_t count, std::size_t queries) {
    ModelParams p;
    p.N = static_cast<double>(count);
    p.Q = static_cast<double>(queries);
    p.D = static_cast<double>(dim);
    p.K = static_cast<double>(config.K);
    p.P = static_cast<double>(config.P);
    p.C = static_cast<double>(count) / static_cast<double>(config.nlist);
    p.M = static_cast<double>(config.M);
    p.CB = static_cast<double>(config.CB);
    p.bits = config.bits;
    return p;
}

void HwConfig::validate() const {
    require(host_freq_hz > 0 && host_bandwidth > 0, "host frequency and bandwidth must be positive");
    require(dpu_count > 0 && dpu_freq_hz > 0 && mram_bandwidth > 0, "PIM parameters must be positive");
    require(wram_mram_ratio > 0 && mram_bytes > 0 && wram_bytes > 0, "memory parameters must be positive");
    require(multiply_cycles > 0 && tasklets > 0, "multiply cost and tasklet count must be positive");
    require(transfer_fraction > 0 && transfer_fraction <= 1, "transfer fraction must be in (0, 1]");
    require(pipeline_efficiency > 0 && pipeline_efficiency <= 1, "pipeline efficiency must be in (0, 1]");
}

double HwConfig::bandwidth(Side s) const {
    if (s == Side::host) {
        return host_bandwidth;
    }
    return static_cast<double>(dpu_count) * dpu_bandwidth();
}

double HwConfig::transfer_bandwidth() const {
    return transfer_fraction * static_cast<double>(dpu_count) * mram_bandwidth;
}

void to_json(nlohmann::json& j, const HwConfig& hw) {
    j = {{"name", hw.name},
         {"host_freq_hz", hw.host_freq_hz},
         {"host_bandwidth", hw.host_bandwidth},
         {"host_threads", hw.host_threads},
         {"dpu_count", hw.dpu_count},
         {"dpu_freq_hz", hw.dpu_freq_hz},
         {"mram_bandwidth", hw.mram_bandwidth},
         {"wram_mram_ratio", hw.wram_mram_ratio},
         {"mram_bytes", hw.mram_bytes},
         {"wram_bytes", hw.wram_bytes},
         {"multiply_cycles", hw.multiply_cycles},
         {"transfer_fraction", hw.transfer_fraction},
         {"tasklets", hw.tasklets},
         {"pipeline_efficiency", hw.pipeline_efficiency},
         {"lock_penalty_cycles", hw.lock_penalty_cycles},
         {"tasklet_stack_bytes", hw.tasklet_stack_bytes},
         {"slice_metadata_bytes", hw.slice_metadata_bytes}};
}

void from_json(const nlohmann::json& j, HwConfig& hw) {
    const HwConfig d;
    hw.name = j.value("name", d.name);
    hw.host_freq_hz = j.value("host_freq_hz", d.host_freq_hz);
    hw.host_bandwidth = j.value("host_bandwidth", d.host_bandwidth);
    hw.host_threads = j.value("host_threads", d.host_threads);
    hw.dpu_count = j.value("dpu_count", d.dpu_count);
    hw.dpu_freq_hz = j.value("dpu_freq_hz", d.dpu_freq_hz);
    hw.mram_bandwidth = j.value("mram_bandwidth", d.mram_bandwidth);
    hw.wram_mram_ratio = j.value("wram_mram_ratio", d.wram_mram_ratio);
    hw.mram_bytes = j.value("mram_bytes", d.mram_bytes);
    hw.wram_bytes = j.value("wram_bytes", d.wram_bytes);
    hw.multiply_cycles = j.value("multiply_cycles", d.multiply_cycles);
    hw.transfer_fraction = j.value("transfer_fraction", d.transfer_fraction);
    hw.tasklets = j.value("tasklets", d.tasklets);
    hw.pipeline_efficiency = j.value("pipeline_efficiency", d.pipeline_efficiency);
    hw.lock_penalty_cycles = j.value("lock_penalty_cycles", d.lock_penalty_cycles);
    hw.tasklet_stack_bytes = j.value("tasklet_stack_bytes", d.tasklet_stack_bytes);
    hw.slice_metadata_bytes = j.value("slice_metadata_bytes", d.slice_metadata_bytes);
}

HwConfig builtin_profile(std::string_view name) {
    HwConfig hw;
    hw.name = std::string(name);
    if (name == "upmem-2543") {
        hw.dpu_count = 2543;
        hw.dpu_freq_hz = 350e6;
    } else if (name == "upmem-nominal") {
        hw.dpu_count = 2560;
        hw.dpu_freq_hz = 450e6;
    } else if (name == "desk-64") {
        hw.dpu_count = 64;
        hw.dpu_freq_hz = 350e6;
    } else {
        throw ConfigError("unknown hardware profile: " + std::string(name));
    }
    return hw;
}

HwConfig load_profile(std::string_view name_or_path, const std::filesystem::path& profile_dir) {
    std::filesystem::path file(name_or_path);
    if (!std::filesystem::is_regular_file(file) && !profile_dir.empty()) {
        file = profile_dir / (std::string(name_or_path) + ".json");
    }
    if (!std::filesystem::is_regular_file(file)) {
        return builtin_profile(name_or_path);
    }
    std::ifstream in(file);
    HwConfig hw;
    try {
        hw = nlohmann::json::parse(in).get<HwConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad hardware profile " + file.string() + ": " + e.what());
    }
    hw.validate();
    return hw;
}

double dist_cost(double X) {
    return X * 3.0 - 1.0;
}

PhaseCost phase_cost(Phase phase, const ModelParams& p) {
    return phase_cost(phase, p, WorkCounts{p.Q * p.P, p.Q * p.P * p.C});
}

PhaseCost phase_cost(Phase phase, const ModelParams& p, const WorkCounts& counts) {
    const auto& b = p.bits;
    const double Bc = b.centroid;
    const double Bq = b.query;
    const double Bcb = b.codebook;
    const double Bl = b.lut;
    const double Ba = b.address;
    PhaseCost out{phase, 0.0, 0.0};
    switch (phase) {
    case Phase::CL: {
        const double queries = counts.probes / p.P;
        const double clusters = p.N / p.C;
        out.compute = queries * clusters * (dist_cost(p.D) + (std::log2(p.P) - 1.0));
        out.io_bits = queries * clusters * ((Bc + Bq) * p.D + (Bl + Ba) * (std::log2(p.P) + 1.0));
        break;
    }
    case Phase::RC:
        out.compute = counts.probes * p.D;
        out.io_bits = (Bc + Bq) * counts.probes * p.D;
        break;
    case Phase::LC:
        out.compute = p.lc_cost_alt ? counts.probes * p.CB * p.M * dist_cost(p.D / p.M)
                                    : counts.probes * p.CB * dist_cost(p.M) * (p.D / p.M);
        out.io_bits = counts.probes * p.CB * ((Bcb + Bq) * p.D + Bl * p.M);
        break;
    case Phase::DC:
        out.compute = counts.points * (p.M - 1.0);
        out.io_bits = counts.points * ((Ba + Bl) * p.M + Bl);
        break;
    case Phase::TS:
        out.compute = counts.points * (std::log2(p.K) - 1.0);
        out.io_bits = (Bl + Ba) * counts.points * (std::log2(p.K) + 1.0);
        break;
    }
    return out;
}

double phase_time(const PhaseCost& cost, double freq_hz, double pe, double bandwidth) {
    if (cost.compute <= 0.0 && cost.io_bits <= 0.0) {
        return 0.0;
    }
    if (pe <= 0.0 || freq_hz <= 0.0 || bandwidth <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return std::max(cost.compute / (freq_hz * pe), cost.io_bytes() / bandwidth);
}

double phase_time(const PhaseCost& cost, const HwConfig& hw, Side side) {
    return phase_time(cost, hw.frequency(side), hw.pe(side), hw.bandwidth(side));
}

double c2io(const PhaseCost& cost) {
    if (cost.io_bits <= 0.0) {
        throw ConfigError("C2IO undefined for a phase without memory traffic");
    }
    return cost.compute / cost.io_bits;
}

std::array<double, kPhaseCount> phase_times(const Assignment& a, const ModelParams& p, const HwConfig& hw) {
    std::array<double, kPhaseCount> t{};
    for (Phase ph : kPhases) {
        t[idx(ph)] = phase_time(phase_cost(ph, p), hw, a[idx(ph)]);
    }
    return t;
}

double pipeline_time(const Assignment& a, const ModelParams& p, const HwConfig& hw) {
    const auto t = phase_times(a, p, hw);
    double host = 0.0;
    double pim = 0.0;
    for (Phase ph : kPhases) {
        (a[idx(ph)] == Side::host ? host : pim) += t[idx(ph)];
    }
    return std::max(host, pim);
}

Assignment recommend_split(const ModelParams& p, const HwConfig& hw, const Assignment& start) {
    std::array<double, kPhaseCount> ratio{};
    for (Phase ph : kPhases) {
        const PhaseCost c = phase_cost(ph, p);
        ratio[idx(ph)] = c.io_bits > 0.0 ? c2io(c) : 0.0;
    }
    std::array<Phase, kPhaseCount> order = kPhases;
    std::stable_sort(order.begin(), order.end(), [&](Phase a, Phase b) { return ratio[idx(a)] > ratio[idx(b)]; });

    Assignment current = start;
    double best = pipeline_time(current, p, hw);
    for (Phase ph : order) {
        if (current[idx(ph)] == Side::host) {
            continue;
        }
        Assignment trial = current;
        trial[idx(ph)] = Side::host;
        const double t = pipeline_time(trial, p, hw);
        if (!(t < best)) {
            break;
        }
        current = trial;
        best = t;
    }
    return current;
}

double dpu_latency(const ModelParams& p, const WorkCounts& counts, const HwConfig& hw) {
    double t = 0.0;
    for (Phase ph : {Phase::RC, Phase::LC, Phase::DC, Phase::TS}) {
        t += phase_time(phase_cost(ph, p, counts), hw.dpu_freq_hz, 1.0, hw.dpu_bandwidth());
    }
    return t;
}

} // namespace pimann
