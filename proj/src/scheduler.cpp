#include "pimann/scheduler.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <unordered_map>

namespace pimann {

namespace {

std::uint64_t probe_key(std::uint32_t query, std::uint32_t cluster) {
    return (static_cast<std::uint64_t>(query) << 32) | cluster;
}

// Running per-DPU load: RC and LC are paid once per (query, cluster) on a
// DPU, DC and TS per scanned point.
class DpuLoads {
  public:
    DpuLoads(std::size_t n, const ModelParams& p, const HwConfig& hw) : p_(p), hw_(hw), counts_(n), pairs_(n), lat_(n, 0.0) {}

    double latency(std::size_t d) const { return lat_[d]; }
    const std::vector<double>& latencies() const { return lat_; }
    const std::vector<WorkCounts>& counts() const { return counts_; }

    double latency_after_add(std::size_t d, const TaskKey& k, std::size_t points) const {
        WorkCounts c = counts_[d];
        if (pair_count(d, k) == 0) {
            c.probes += 1;
        }
        c.points += static_cast<double>(points);
        return dpu_latency(p_, c, hw_);
    }

    double latency_after_remove(std::size_t d, const TaskKey& k, std::size_t points) const {
        WorkCounts c = counts_[d];
        if (pair_count(d, k) == 1) {
            c.probes -= 1;
        }
        c.points -= static_cast<double>(points);
        return dpu_latency(p_, c, hw_);
    }

    void add(std::size_t d, const TaskKey& k, std::size_t points) {
        if (pairs_[d][probe_key(k.query, k.cluster)]++ == 0) {
            counts_[d].probes += 1;
        }
        counts_[d].points += static_cast<double>(points);
        lat_[d] = dpu_latency(p_, counts_[d], hw_);
    }

    void remove(std::size_t d, const TaskKey& k, std::size_t points) {
        auto it = pairs_[d].find(probe_key(k.query, k.cluster));
        if (--it->second == 0) {
            pairs_[d].erase(it);
            counts_[d].probes -= 1;
        }
        counts_[d].points -= static_cast<double>(points);
        lat_[d] = dpu_latency(p_, counts_[d], hw_);
    }

  private:
    std::uint32_t pair_count(std::size_t d, const TaskKey& k) const {
        auto it = pairs_[d].find(probe_key(k.query, k.cluster));
        return it == pairs_[d].end() ? 0 : it->second;
    }

    const ModelParams& p_;
    const HwConfig& hw_;
    std::vector<WorkCounts> counts_;
    std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> pairs_;
    std::vector<double> lat_;
};

const std::vector<std::uint32_t>& replicas_of(const SliceMap& map, const TaskKey& k) {
    if (k.cluster >= map.hosts.size() || k.slice >= map.hosts[k.cluster].size() ||
        map.hosts[k.cluster][k.slice].empty()) {
        throw ConfigError("cluster " + std::to_string(k.cluster) + " slice " + std::to_string(k.slice) +
                          " is not in the slice map");
    }
    return map.hosts[k.cluster][k.slice];
}

std::size_t points_of(const SliceMap& map, const TaskKey& k) {
    const auto& p = map.placements[replicas_of(map, k).front()];
    return p.end - p.begin;
}

} // namespace

double BatchAssignment::max_latency() const {
    return dpu_latency.empty() ? 0.0 : *std::max_element(dpu_latency.begin(), dpu_latency.end());
}

double BatchAssignment::mean_latency() const {
    return dpu_latency.empty() ? 0.0
                               : std::accumulate(dpu_latency.begin(), dpu_latency.end(), 0.0) /
                                     static_cast<double>(dpu_latency.size());
}

std::vector<TaskKey> expand_tasks(std::uint32_t query, const std::vector<ProbedCluster>& probes, const SliceMap& map) {
    std::vector<TaskKey> out;
    for (const auto& pr : probes) {
        if (pr.cluster >= map.hosts.size() || map.hosts[pr.cluster].empty()) {
            throw ConfigError("probed cluster " + std::to_string(pr.cluster) + " is absent from the slice map");
        }
        for (std::size_t s = 0; s < map.hosts[pr.cluster].size(); ++s) {
            out.push_back({query, pr.cluster, static_cast<std::uint32_t>(s)});
        }
    }
    return out;
}

void tally_dpus(BatchAssignment& a, const SliceMap& map, const ModelParams& p, const HwConfig& hw) {
    DpuLoads loads(map.n_dpus, p, hw);
    for (const auto& t : a.tasks) {
        loads.add(t.dpu, t.key, points_of(map, t.key));
    }
    a.dpu_latency = loads.latencies();
    a.dpu_counts = loads.counts();
}

BatchAssignment schedule_batch(const std::vector<TaskKey>& pool, std::size_t carried, const SliceMap& map,
                               const ModelParams& p, const HwConfig& hw, const ScheduleOptions& options) {
    require(carried <= pool.size(), "carried task count exceeds the pool");
    require(options.th3 >= 0, "th3 must be non-negative");
    const std::size_t n_dpus = map.n_dpus;
    struct Pending {
        TaskKey key;
        std::size_t points;
        double latency;
        bool carried;
    };
    std::vector<Pending> work;
    work.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const std::size_t pts = points_of(map, pool[i]);
        work.push_back({pool[i], pts, dpu_latency(p, WorkCounts{1.0, static_cast<double>(pts)}, hw), i < carried});
    }
    const auto by_latency = [](const Pending& a, const Pending& b) {
        return a.latency != b.latency ? a.latency > b.latency : a.key < b.key;
    };
    if (options.resort_postponed) {
        std::sort(work.begin(), work.end(), by_latency);
    } else {
        std::sort(work.begin() + static_cast<std::ptrdiff_t>(carried), work.end(), by_latency);
    }

    DpuLoads loads(n_dpus, p, hw);
    std::vector<Task> tasks;
    tasks.reserve(work.size());
    std::vector<std::vector<std::size_t>> on_dpu(n_dpus);
    for (const auto& w : work) {
        const auto& reps = replicas_of(map, w.key);
        std::uint32_t best = reps.front();
        for (std::uint32_t r : reps) {
            const auto d = map.placements[r].dpu;
            const auto bd = map.placements[best].dpu;
            if (loads.latency(d) < loads.latency(bd) || (loads.latency(d) == loads.latency(bd) && d < bd)) {
                best = r;
            }
        }
        const auto& pl = map.placements[best];
        loads.add(pl.dpu, w.key, w.points);
        on_dpu[pl.dpu].push_back(tasks.size());
        tasks.push_back({w.key, pl.replica, pl.dpu, best, w.latency});
    }

    // Long tail: move work off the hottest DPU while that lowers the max.
    if (options.rebalance && n_dpus > 1) {
        for (std::size_t guard = 0; guard < tasks.size() + n_dpus; ++guard) {
            const auto& lat = loads.latencies();
            const auto hot = static_cast<std::uint32_t>(std::max_element(lat.begin(), lat.end()) - lat.begin());
            const double current = lat[hot];
            double best_max = current;
            std::size_t best_task = tasks.size();
            std::uint32_t best_rep = 0;
            for (std::size_t ti : on_dpu[hot]) {
                const Task& t = tasks[ti];
                const std::size_t pts = points_of(map, t.key);
                const double after_hot = loads.latency_after_remove(hot, t.key, pts);
                for (std::uint32_t r : replicas_of(map, t.key)) {
                    const auto d = map.placements[r].dpu;
                    if (d == hot) {
                        continue;
                    }
                    const double m = std::max(after_hot, loads.latency_after_add(d, t.key, pts));
                    if (m < best_max) {
                        best_max = m;
                        best_task = ti;
                        best_rep = r;
                    }
                }
            }
            if (best_task == tasks.size()) {
                break;
            }
            Task& t = tasks[best_task];
            const std::size_t pts = points_of(map, t.key);
            loads.remove(hot, t.key, pts);
            auto& v = on_dpu[hot];
            v.erase(std::find(v.begin(), v.end(), best_task));
            const auto& pl = map.placements[best_rep];
            t.replica = pl.replica;
            t.dpu = pl.dpu;
            t.placement = best_rep;
            loads.add(pl.dpu, t.key, pts);
            on_dpu[pl.dpu].push_back(best_task);
        }
    }

    BatchAssignment out;
    std::vector<bool> dropped(tasks.size(), false);
    if (options.th3 != kNoPostpone && n_dpus > 0) {
        const auto& lat = loads.latencies();
        const double mean = std::accumulate(lat.begin(), lat.end(), 0.0) / static_cast<double>(n_dpus);
        const double limit = (1.0 + options.th3) * mean;
        std::vector<std::size_t> remaining(n_dpus);
        for (std::size_t d = 0; d < n_dpus; ++d) {
            remaining[d] = on_dpu[d].size();
        }
        for (std::size_t i = tasks.size(); i-- > 0;) {
            const Task& t = tasks[i];
            if (work[i].carried && !options.resort_postponed) {
                continue;
            }
            if (loads.latency(t.dpu) <= limit || remaining[t.dpu] <= 1) {
                continue;
            }
            loads.remove(t.dpu, t.key, points_of(map, t.key));
            --remaining[t.dpu];
            dropped[i] = true;
        }
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (dropped[i]) {
            out.postponed.push_back(tasks[i].key);
        } else {
            out.tasks.push_back(tasks[i]);
        }
    }
    // Postponed work reaches the next batch in query order.
    std::sort(out.postponed.begin(), out.postponed.end());
    out.dpu_latency = loads.latencies();
    out.dpu_counts = loads.counts();
    return out;
}

std::vector<BatchAssignment> run_batches(const std::vector<std::vector<ProbedCluster>>& probes, std::size_t batch_size,
                                         const SliceMap& map, const ModelParams& p, const HwConfig& hw,
                                         const ScheduleOptions& options) {
    require(batch_size >= 1, "batch size must be >= 1");
    std::vector<BatchAssignment> out;
    std::vector<TaskKey> carried;
    for (std::size_t first = 0; first < probes.size(); first += batch_size) {
        std::vector<TaskKey> pool = carried;
        const std::size_t n_carried = pool.size();
        const std::size_t last = std::min(probes.size(), first + batch_size);
        for (std::size_t q = first; q < last; ++q) {
            const auto t = expand_tasks(static_cast<std::uint32_t>(q), probes[q], map);
            pool.insert(pool.end(), t.begin(), t.end());
        }
        BatchAssignment a = schedule_batch(pool, n_carried, map, p, hw, options);
        a.batch = out.size();
        a.new_queries = last - first;
        carried = a.postponed;
        out.push_back(std::move(a));
    }
    if (!carried.empty()) {
        ScheduleOptions drain = options;
        drain.th3 = kNoPostpone;
        BatchAssignment a = schedule_batch(carried, carried.size(), map, p, hw, drain);
        a.batch = out.size();
        out.push_back(std::move(a));
    }
    return out;
}

BatchAssignment schedule_static(const std::vector<TaskKey>& pool, const SliceMap& map, const ModelParams& p,
                                const HwConfig& hw, StaticPolicy policy) {
    BatchAssignment out;
    for (const auto& k : pool) {
        const auto& reps = replicas_of(map, k);
        std::size_t pick = 0;
        if (policy == StaticPolicy::hash) {
            std::uint64_t h = (static_cast<std::uint64_t>(k.query) * 0x9E3779B97F4A7C15ULL) ^
                              (static_cast<std::uint64_t>(k.cluster) * 0xC2B2AE3D27D4EB4FULL) ^ k.slice;
            h ^= h >> 29;
            pick = static_cast<std::size_t>(h % reps.size());
        }
        const auto& pl = map.placements[reps[pick]];
        const std::size_t pts = pl.end - pl.begin;
        out.tasks.push_back({k, pl.replica, pl.dpu, reps[pick], dpu_latency(p, WorkCounts{1.0, static_cast<double>(pts)}, hw)});
    }
    tally_dpus(out, map, p, hw);
    return out;
}

std::vector<BatchAssignment> run_static_batches(const std::vector<std::vector<ProbedCluster>>& probes,
                                                std::size_t batch_size, const SliceMap& map, const ModelParams& p,
                                                const HwConfig& hw, StaticPolicy policy) {
    require(batch_size >= 1, "batch size must be >= 1");
    std::vector<BatchAssignment> out;
    for (std::size_t first = 0; first < probes.size(); first += batch_size) {
        std::vector<TaskKey> pool;
        const std::size_t last = std::min(probes.size(), first + batch_size);
        for (std::size_t q = first; q < last; ++q) {
            const auto t = expand_tasks(static_cast<std::uint32_t>(q), probes[q], map);
            pool.insert(pool.end(), t.begin(), t.end());
        }
        BatchAssignment a = schedule_static(pool, map, p, hw, policy);
        a.batch = out.size();
        a.new_queries = last - first;
        out.push_back(std::move(a));
    }
    return out;
}

void write_assignment_csv(std::ostream& out, const std::vector<BatchAssignment>& batches, bool header) {
    if (header) {
        out << "batch,query,cluster,slice,replica,dpu,status\n";
    }
    for (const auto& b : batches) {
        for (const auto& t : b.tasks) {
            out << b.batch << ',' << t.key.query << ',' << t.key.cluster << ',' << t.key.slice << ',' << t.replica
                << ',' << t.dpu << ",run\n";
        }
        for (const auto& k : b.postponed) {
            out << b.batch << ',' << k.query << ',' << k.cluster << ',' << k.slice << ",,,postponed\n";
        }
    }
}

} // namespace pimann
