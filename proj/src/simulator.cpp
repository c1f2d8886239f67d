#include "pimann/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "pimann/common.hpp"

namespace pimann {

namespace {

std::size_t idx(Phase p) { return static_cast<std::size_t>(p); }

// Which buffers of one DPU live in WRAM.
struct Residency {
    bool lut = false;
    bool codebook = false;
    bool residual = false;
    bool sqt_hot = false;
    bool centroids = false;
    bool topk = false;
};

class Charger {
  public:
    Charger(std::uint64_t granule, DpuState& st) : g_(static_cast<double>(granule)), st_(st) {}

    // Bytes moved by one access of `bytes` contiguous bytes.
    double span(double bytes) const { return std::max(1.0, std::ceil(bytes / g_)) * g_; }

    void add(Phase ph, double count, double bytes_each, bool in_wram) {
        const double b = count * span(bytes_each);
        (in_wram ? st_.phases[idx(ph)].wram_bytes : st_.phases[idx(ph)].mram_bytes) += b;
    }
    void cycles(Phase ph, double c) { st_.phases[idx(ph)].cycles += c; }

  private:
    double g_;
    DpuState& st_;
};

double log2_at_least_one(double x) { return x <= 1.0 ? 0.0 : std::log2(x); }

} // namespace

PhaseTally& PhaseTally::operator+=(const PhaseTally& o) {
    cycles += o.cycles;
    mram_bytes += o.mram_bytes;
    wram_bytes += o.wram_bytes;
    time += o.time;
    return *this;
}

ResultMerger::ResultMerger(std::size_t queries, std::size_t K) : K_(K), acc_(queries, TopKState(K)) {}

void ResultMerger::merge(std::uint32_t query, std::span<const Candidate> partial) {
    if (query >= acc_.size()) {
        throw ConfigError("merge for query " + std::to_string(query) + " outside the batch range");
    }
    for (const auto& c : partial) {
        acc_[query].offer(c);
    }
}

NeighborLists ResultMerger::finish() const {
    NeighborLists out(acc_.size(), K_);
    for (std::size_t q = 0; q < acc_.size(); ++q) {
        const auto sorted = acc_[q].sorted();
        emit_row(sorted, K_, out.ids_row(q), out.dist_row(q));
    }
    return out;
}

SimReport simulate_batch(const BatchAssignment& assignment, const SimContext& ctx, ResultMerger* merger) {
    require(ctx.index != nullptr && ctx.queries != nullptr && ctx.map != nullptr, "simulator context incomplete");
    const IvfPqIndex& index = *ctx.index;
    const SliceMap& map = *ctx.map;
    const HwConfig& hw = ctx.hw;
    const ModelParams& p = ctx.params;
    const SimOptions& opt = ctx.options;
    const auto& cfg = index.config;
    const std::size_t D = index.dim;
    const std::size_t M = cfg.M;
    const std::size_t CB = cfg.CB;
    const std::size_t sub = cfg.sub_dim(D);
    const auto& bits = cfg.bits;
    const std::size_t K = static_cast<std::size_t>(p.K);

    SimReport r;
    r.tasks = assignment.tasks.size();
    if (assignment.tasks.empty()) {
        return r;
    }

    std::vector<std::vector<const Task*>> per_dpu(map.n_dpus);
    for (const auto& t : assignment.tasks) {
        if (t.placement >= map.placements.size()) {
            throw ConfigError("task references an absent slice placement");
        }
        const auto& pl = map.placements[t.placement];
        if (pl.cluster != t.key.cluster || pl.slice != t.key.slice || pl.dpu != t.dpu ||
            t.key.cluster >= index.lists.size() || t.key.query >= ctx.queries->rows) {
            throw ConfigError("task (" + std::to_string(t.key.query) + ", " + std::to_string(t.key.cluster) + ", " +
                              std::to_string(t.key.slice) + ") does not match the slice map");
        }
        per_dpu[t.dpu].push_back(&t);
    }
    std::vector<std::size_t> slices_on(map.n_dpus, 0);
    for (const auto& pl : map.placements) {
        ++slices_on[pl.dpu];
    }

    const Sqt sqt = build_sqt(16, opt.sqt_hot_entries);
    const std::uint64_t shared_mram = hw.mram_bytes - dpu_data_capacity(hw, index);
    const double Bq = bits.query / 8.0;
    const double Bc = bits.centroid / 8.0;
    const double Bcb = bits.codebook / 8.0;
    const double Bl = bits.lut / 8.0;
    const double entry_bytes = (bits.lut + bits.address) / 8.0;
    const double logk = log2_at_least_one(static_cast<double>(K));
    const double heap_cycles = 2.0 * std::ceil(logk);
    const double lock_cycles = hw.lock_penalty_cycles * static_cast<double>(hw.tasklets);
    const double cell_cycles = opt.sqt ? 3.0 * static_cast<double>(sub) - 1.0
                                       : (2.0 + hw.multiply_cycles) * static_cast<double>(sub) - 1.0;
    const ScanOptions scan_opt{opt.forwarding, kForwardRefreshInterval};

    std::vector<std::size_t> pairs_per_query(ctx.queries->rows, 0);
    std::size_t pairs = 0;
    double task_count_bytes = 0;
    r.dpus.resize(map.n_dpus);

    for (std::size_t d = 0; d < map.n_dpus; ++d) {
        DpuState& st = r.dpus[d];
        st.id = static_cast<std::uint32_t>(d);
        st.tasklets = hw.tasklets;
        st.mram_used = shared_mram + map.dpu_bytes[d];
        st.tasks = per_dpu[d].size();
        st.wram.capacity = usable_wram(hw);
        if (per_dpu[d].empty()) {
            continue;
        }
        Residency res;
        if (opt.wram) {
            const WorkCounts counts = d < assignment.dpu_counts.size() ? assignment.dpu_counts[d] : WorkCounts{};
            st.wram = plan_wram(wram_items(p, counts, cfg.nlist, opt.sqt ? opt.sqt_hot_entries : 0, slices_on[d], hw),
                                usable_wram(hw));
            res = {st.wram.contains("lut"),      st.wram.contains("codebook"),  st.wram.contains("residual"),
                   st.wram.contains("sqt_hot"), st.wram.contains("centroids"), st.wram.contains("topk")};
        }

        auto tasks = per_dpu[d];
        std::sort(tasks.begin(), tasks.end(), [](const Task* a, const Task* b) { return a->key < b->key; });

        Charger ch(opt.access_granule, st);
        std::map<std::uint32_t, TopKState> heaps;
        DistanceLut lut;
        std::int64_t lut_query = -1;
        std::int64_t lut_cluster = -1;
        for (const Task* t : tasks) {
            const std::uint32_t q = t->key.query;
            const std::uint32_t c = t->key.cluster;
            if (lut_query != q || lut_cluster != c) {
                const auto query = ctx.queries->row(q);
                const auto centroid = index.centroids.row(c);
                // RC: one subtraction per element.
                ch.cycles(Phase::RC, static_cast<double>(D));
                ch.add(Phase::RC, 1, D * Bq, res.residual);
                ch.add(Phase::RC, 1, D * Bc, res.centroids);
                const auto residual = compute_residual(query, centroid);
                // LC
                SqtProfile prof;
                lut = build_lut(residual, index.codebooks, sqt, &prof);
                const double cells = static_cast<double>(M * CB);
                ch.cycles(Phase::LC, cells * cell_cycles);
                ch.add(Phase::LC, cells, sub * Bcb, res.codebook);
                ch.add(Phase::LC, cells, sub * Bq, res.residual);
                if (opt.sqt) {
                    ch.add(Phase::LC, static_cast<double>(prof.hot_hits), 4, res.sqt_hot);
                    ch.add(Phase::LC, static_cast<double>(prof.cold_hits), 4, false);
                }
                ch.add(Phase::LC, cells, Bl, res.lut);
                lut_query = q;
                lut_cluster = c;
            }
            auto [it, inserted] = heaps.try_emplace(q, K);
            ScanStats s;
            const auto& pl = map.placements[t->placement];
            scan_range(index.lists[c], pl.begin, pl.end, lut, it->second, scan_opt, &s);
            const double pts = static_cast<double>(s.points);
            // DC: M - 1 additions per point; codes stream from MRAM.
            ch.cycles(Phase::DC, pts * (static_cast<double>(M) - 1.0));
            ch.add(Phase::DC, pts, M * bits.address / 8.0, false);
            ch.add(Phase::DC, pts * static_cast<double>(M), Bl, res.lut);
            // TS
            ch.cycles(Phase::TS, pts * kTsCompareCycles + static_cast<double>(s.lock_acquisitions) * lock_cycles +
                                     static_cast<double>(s.heap_updates) * heap_cycles);
            ch.add(Phase::TS, static_cast<double>(s.refreshes), entry_bytes, res.topk);
            ch.add(Phase::TS, static_cast<double>(s.heap_updates) * (std::ceil(logk) + 1.0), entry_bytes, res.topk);
            r.lock_acquisitions += s.lock_acquisitions;
            r.candidates += s.points;
            task_count_bytes += 8.0;
        }

        const double bw = hw.mram_bandwidth;
        for (Phase ph : {Phase::RC, Phase::LC, Phase::DC, Phase::TS}) {
            auto& tally = st.phases[idx(ph)];
            const double compute = tally.cycles / hw.dpu_freq_hz;
            const double memory = tally.mram_bytes / bw + tally.wram_bytes / (hw.wram_mram_ratio * bw);
            tally.time = std::max(compute, memory) / hw.pipeline_efficiency;
            st.cycles += tally.cycles;
            st.latency += tally.time;
            r.phase_time[idx(ph)] += tally.time;
        }
        for (auto& [q, heap] : heaps) {
            ++pairs_per_query[q];
            ++pairs;
            if (merger != nullptr) {
                const auto sorted = heap.sorted();
                merger->merge(q, sorted);
            }
        }
    }

    double sum = 0;
    for (const auto& st : r.dpus) {
        r.max_dpu = std::max(r.max_dpu, st.latency);
        sum += st.latency;
    }
    r.mean_dpu = sum / static_cast<double>(map.n_dpus);
    r.imbalance = r.mean_dpu > 0 ? r.max_dpu / r.mean_dpu : 1.0;

    std::size_t new_queries = assignment.new_queries;
    double merge_cycles = 0;
    for (std::size_t n : pairs_per_query) {
        if (n > 0) {
            r.queries += 1;
            merge_cycles += static_cast<double>(n) * p.K * (log2_at_least_one(static_cast<double>(n)) + 1.0);
        }
    }
    if (new_queries == 0 && assignment.postponed.empty()) {
        new_queries = r.queries;
    }
    if (new_queries > 0) {
        ModelParams cl = p;
        cl.Q = static_cast<double>(new_queries);
        r.host_cl_time = phase_time(phase_cost(Phase::CL, cl), hw, Side::host);
    }
    r.phase_time[idx(Phase::CL)] = r.host_cl_time;
    r.merge_time = merge_cycles / (hw.host_freq_hz * static_cast<double>(hw.host_threads));
    // Down: the query once per DPU that sees it plus one descriptor per task.
    // Up: one partial top-K per (query, DPU).
    r.transfer_bytes = static_cast<double>(pairs) * (D * Bq + p.K * entry_bytes) + task_count_bytes;
    r.transfer_time = r.transfer_bytes / hw.transfer_bandwidth();
    r.pipeline_latency = std::max(r.max_dpu, r.host_cl_time);
    r.batch_latency = r.pipeline_latency + r.merge_time + r.transfer_time;
    return r;
}

double SimRun::qps() const {
    return total_latency > 0 ? static_cast<double>(results.count) / total_latency : 0.0;
}

double SimRun::ts_share() const {
    double pim = 0;
    for (Phase ph : {Phase::RC, Phase::LC, Phase::DC, Phase::TS}) {
        pim += phase_time[idx(ph)];
    }
    return pim > 0 ? phase_time[idx(Phase::TS)] / pim : 0.0;
}

SimRun run_simulation(const std::vector<BatchAssignment>& batches, const SimContext& ctx) {
    require(ctx.queries != nullptr, "simulator context incomplete");
    SimRun run;
    ResultMerger merger(ctx.queries->rows, static_cast<std::size_t>(ctx.params.K));
    double sum_max = 0;
    double sum_mean = 0;
    for (const auto& a : batches) {
        SimReport r = simulate_batch(a, ctx, &merger);
        run.total_latency += r.batch_latency;
        run.pipeline_latency += r.pipeline_latency;
        sum_max += r.max_dpu;
        sum_mean += r.mean_dpu;
        for (std::size_t i = 0; i < kPhaseCount; ++i) {
            run.phase_time[i] += r.phase_time[i];
        }
        run.batches.push_back(std::move(r));
    }
    run.imbalance = sum_mean > 0 ? sum_max / sum_mean : 1.0;
    run.results = merger.finish();
    return run;
}

double compare_model(double simulated_latency, double model_latency) {
    require(simulated_latency > 0 && model_latency > 0, "latencies must be positive");
    return model_latency / simulated_latency;
}

double model_latency(const ModelParams& p, const HwConfig& hw, const Assignment& split) {
    return pipeline_time(split, p, hw);
}

std::string_view knob_name(SweepKnob k) {
    switch (k) {
    case SweepKnob::wram: return "wram";
    case SweepKnob::layout: return "layout";
    case SweepKnob::sqt: return "sqt";
    case SweepKnob::forwarding: return "forwarding";
    }
    return "?";
}

SweepKnob parse_knob(std::string_view name) {
    for (SweepKnob k : {SweepKnob::wram, SweepKnob::layout, SweepKnob::sqt, SweepKnob::forwarding}) {
        if (knob_name(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown sweep knob '" + std::string(name) + "'");
}

SweepResult sweep(SweepKnob knob, const SweepInput& in) {
    require(in.index != nullptr && in.queries != nullptr && in.probes != nullptr && in.optimized != nullptr,
            "sweep input incomplete");
    SweepResult out;
    out.knob = knob;
    SimContext ctx{in.index, in.queries, in.optimized, in.hw, in.params, in.options};
    if (knob == SweepKnob::layout) {
        require(in.naive != nullptr, "layout sweep needs the naive map");
        const auto on_batches = run_batches(*in.probes, in.batch_size, *in.optimized, in.params, in.hw, in.schedule);
        out.on = run_simulation(on_batches, ctx);
        SimContext naive = ctx;
        naive.map = in.naive;
        const auto off_batches =
            run_static_batches(*in.probes, in.batch_size, *in.naive, in.params, in.hw, StaticPolicy::primary);
        out.off = run_simulation(off_batches, naive);
    } else {
        const auto batches = run_batches(*in.probes, in.batch_size, *in.optimized, in.params, in.hw, in.schedule);
        SimContext on = ctx;
        SimContext off = ctx;
        bool SimOptions::*flag = knob == SweepKnob::wram  ? &SimOptions::wram
                                 : knob == SweepKnob::sqt ? &SimOptions::sqt
                                                          : &SimOptions::forwarding;
        on.options.*flag = true;
        off.options.*flag = false;
        out.on = run_simulation(batches, on);
        out.off = run_simulation(batches, off);
    }
    out.speedup = out.on.total_latency > 0 ? out.off.total_latency / out.on.total_latency : 0.0;
    out.identical_output =
        out.on.results.ids == out.off.results.ids && out.on.results.distances == out.off.results.distances;
    return out;
}

void to_json(nlohmann::json& j, const SimReport& r) {
    nlohmann::json dpus = nlohmann::json::array();
    for (const auto& st : r.dpus) {
        nlohmann::json phases = nlohmann::json::object();
        for (Phase ph : {Phase::RC, Phase::LC, Phase::DC, Phase::TS}) {
            const auto& t = st.phases[idx(ph)];
            phases[std::string(phase_name(ph))] = {
                {"cycles", t.cycles}, {"mram_bytes", t.mram_bytes}, {"wram_bytes", t.wram_bytes}, {"seconds", t.time}};
        }
        dpus.push_back({{"id", st.id},
                        {"tasks", st.tasks},
                        {"cycles", st.cycles},
                        {"latency", st.latency},
                        {"mram_used", st.mram_used},
                        {"wram_used", st.wram.used},
                        {"wram_items", st.wram.placed},
                        {"phases", phases}});
    }
    nlohmann::json phase_time = nlohmann::json::object();
    for (Phase ph : kPhases) {
        phase_time[std::string(phase_name(ph))] = r.phase_time[idx(ph)];
    }
    j = {{"tasks", r.tasks},
         {"queries", r.queries},
         {"max_dpu", r.max_dpu},
         {"mean_dpu", r.mean_dpu},
         {"imbalance", r.imbalance},
         {"host_cl_time", r.host_cl_time},
         {"merge_time", r.merge_time},
         {"transfer_bytes", r.transfer_bytes},
         {"transfer_time", r.transfer_time},
         {"pipeline_latency", r.pipeline_latency},
         {"batch_latency", r.batch_latency},
         {"phase_time", phase_time},
         {"lock_acquisitions", r.lock_acquisitions},
         {"candidates", r.candidates},
         {"dpus", dpus}};
}

nlohmann::json run_to_json(const SimRun& run) {
    nlohmann::json batches = nlohmann::json::array();
    for (const auto& b : run.batches) {
        batches.push_back(b);
    }
    nlohmann::json phase_time = nlohmann::json::object();
    for (Phase ph : kPhases) {
        phase_time[std::string(phase_name(ph))] = run.phase_time[idx(ph)];
    }
    return {{"total_latency", run.total_latency},
            {"pipeline_latency", run.pipeline_latency},
            {"imbalance", run.imbalance},
            {"qps", run.qps()},
            {"ts_share", run.ts_share()},
            {"phase_time", phase_time},
            {"batches", batches}};
}

void write_phase_csv(std::ostream& out, const SimRun& run) {
    out << "dpu,phase,cycles,mram_bytes,wram_bytes,seconds\n";
    std::size_t n = 0;
    for (const auto& b : run.batches) {
        n = std::max(n, b.dpus.size());
    }
    std::vector<std::array<PhaseTally, kPhaseCount>> sums(n);
    double host_cl = 0;
    for (const auto& b : run.batches) {
        host_cl += b.host_cl_time;
        for (std::size_t d = 0; d < b.dpus.size(); ++d) {
            for (std::size_t i = 0; i < kPhaseCount; ++i) {
                sums[d][i] += b.dpus[d].phases[i];
            }
        }
    }
    out << "host,CL,0,0,0," << host_cl << "\n";
    for (std::size_t d = 0; d < n; ++d) {
        for (Phase ph : {Phase::RC, Phase::LC, Phase::DC, Phase::TS}) {
            const auto& t = sums[d][idx(ph)];
            out << d << ',' << phase_name(ph) << ',' << t.cycles << ',' << t.mram_bytes << ',' << t.wram_bytes << ','
                << t.time << "\n";
        }
    }
}

} // namespace pimann
