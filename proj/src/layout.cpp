#include "pimann/layout.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>

namespace pimann {

namespace {

// Share of usable WRAM reserved for slice descriptors.
constexpr std::uint64_t kMetadataShareDivisor = 8;
// MRAM kept aside per DPU for buffers and descriptors.
constexpr std::uint64_t kMramReserve = 1ULL << 20;

double lpt_max(std::vector<double> loads, std::size_t bins) {
    std::sort(loads.begin(), loads.end(), std::greater<>());
    std::priority_queue<double, std::vector<double>, std::greater<>> heap;
    for (std::size_t i = 0; i < bins; ++i) {
        heap.push(0.0);
    }
    double worst = 0.0;
    for (double l : loads) {
        const double b = heap.top() + l;
        heap.pop();
        heap.push(b);
        worst = std::max(worst, b);
    }
    return worst;
}

std::size_t slices_for(std::size_t size, std::size_t th_points) {
    return size == 0 ? 1 : (size + th_points - 1) / th_points;
}

} // namespace

ClusterHeat make_heat(std::vector<std::uint64_t> access, std::vector<std::size_t> size, double w_access,
                      double w_size) {
    require(access.size() == size.size(), "access and size tables differ in length");
    require(w_access >= 0 && w_size >= 0 && std::abs(w_access + w_size - 1.0) < 1e-9,
            "heat weights must be non-negative and sum to 1");
    ClusterHeat h;
    h.w_access = w_access;
    h.w_size = w_size;
    const double amax = access.empty() ? 0.0 : static_cast<double>(*std::max_element(access.begin(), access.end()));
    const double smax = size.empty() ? 0.0 : static_cast<double>(*std::max_element(size.begin(), size.end()));
    h.heat.resize(access.size());
    for (std::size_t i = 0; i < access.size(); ++i) {
        const double a = amax > 0 ? static_cast<double>(access[i]) / amax : 0.0;
        const double s = smax > 0 ? static_cast<double>(size[i]) / smax : 0.0;
        h.heat[i] = w_access * a + w_size * s;
    }
    h.access = std::move(access);
    h.size = std::move(size);
    return h;
}

std::vector<std::size_t> cluster_sizes(const IvfPqIndex& index) {
    std::vector<std::size_t> s(index.lists.size());
    for (std::size_t c = 0; c < s.size(); ++c) {
        s[c] = index.lists[c].size();
    }
    return s;
}

ClusterHeat profile_heat(const IvfPqIndex& index, const std::vector<std::vector<ProbedCluster>>& probes,
                         double w_access, double w_size) {
    require(!probes.empty(), "profiling needs at least one query");
    std::vector<std::uint64_t> access(index.config.nlist, 0);
    for (const auto& row : probes) {
        for (const auto& p : row) {
            ++access[p.cluster];
        }
    }
    return make_heat(std::move(access), cluster_sizes(index), w_access, w_size);
}

ClusterHeat profile_heat(const IvfPqIndex& index, const Matrix<std::int32_t>& profile_queries, std::size_t P,
                         double w_access, double w_size) {
    return profile_heat(index, locate_all(index, profile_queries, P), w_access, w_size);
}

std::uint64_t point_bytes(const IndexConfig& config) {
    return (static_cast<std::uint64_t>(config.M) * static_cast<std::uint64_t>(config.bits.address) + 7) / 8 + 4;
}

std::vector<Slice> partition_clusters(std::span<const std::size_t> sizes, std::uint64_t th1_bytes,
                                      std::uint64_t point_bytes) {
    require(point_bytes >= 1, "point footprint must be positive");
    require(th1_bytes >= point_bytes, "th1 is smaller than one point record");
    const std::size_t th = static_cast<std::size_t>(th1_bytes / point_bytes);
    std::vector<Slice> out;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        const std::size_t n = slices_for(sizes[c], th);
        for (std::size_t s = 0; s < n; ++s) {
            const std::size_t b = s * th;
            const std::size_t e = std::min(sizes[c], b + th);
            out.push_back({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(b),
                           static_cast<std::uint32_t>(e)});
        }
    }
    return out;
}

std::vector<double> slice_heats(std::span<const Slice> slices, const ClusterHeat& heat) {
    std::vector<double> out(slices.size());
    for (std::size_t i = 0; i < slices.size(); ++i) {
        const auto& s = slices[i];
        const std::size_t size = heat.size[s.cluster];
        out[i] = size == 0 ? heat.heat[s.cluster]
                           : heat.heat[s.cluster] * static_cast<double>(s.points()) / static_cast<double>(size);
    }
    return out;
}

std::uint64_t usable_wram(const HwConfig& hw) {
    const std::uint64_t stacks = hw.tasklets * hw.tasklet_stack_bytes;
    return hw.wram_bytes > stacks ? hw.wram_bytes - stacks : 0;
}

std::size_t metadata_slots_per_dpu(const HwConfig& hw) {
    return static_cast<std::size_t>(usable_wram(hw) / kMetadataShareDivisor / std::max<std::uint64_t>(1, hw.slice_metadata_bytes));
}

Th1Search tune_th1(const ClusterHeat& heat, std::size_t n_dpus, std::uint64_t point_bytes, const ModelParams& p,
                   const HwConfig& hw) {
    require(n_dpus >= 1, "need at least one DPU");
    const auto& sizes = heat.size;
    require(!sizes.empty(), "empty heat table");
    const std::size_t max_size = std::max<std::size_t>(1, *std::max_element(sizes.begin(), sizes.end()));
    std::size_t min_size = max_size;
    for (std::size_t s : sizes) {
        if (s > 0) {
            min_size = std::min(min_size, s);
        }
    }
    const std::size_t slot_limit = metadata_slots_per_dpu(hw) * n_dpus;
    const double per_point_s = dpu_latency(p, WorkCounts{0.0, 1.0}, hw);
    const double meta_latency_s = static_cast<double>(hw.slice_metadata_bytes) / hw.mram_bandwidth;
    // A probe that touches a second slice on another DPU redoes RC and LC there.
    const double probe_s = dpu_latency(p, WorkCounts{1.0, 0.0}, hw);
    double total_heat = 0.0;
    double total_work_s = 0.0;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        total_heat += heat.heat[c];
        total_work_s += static_cast<double>(heat.access[c]) * static_cast<double>(sizes[c]) * per_point_s;
    }
    const double base_max = lpt_max(heat.heat, n_dpus);

    auto feasible = [&](std::size_t th) {
        std::size_t n = 0;
        for (std::size_t s : sizes) {
            n += slices_for(s, th);
        }
        return n <= slot_limit;
    };
    auto objective = [&](std::size_t th) {
        std::vector<double> loads;
        double overhead = 0.0;
        for (std::size_t c = 0; c < sizes.size(); ++c) {
            const std::size_t n = slices_for(sizes[c], th);
            for (std::size_t s = 0; s < n; ++s) {
                const std::size_t pts = sizes[c] == 0 ? 0 : std::min(th, sizes[c] - s * th);
                loads.push_back(sizes[c] == 0 ? heat.heat[c]
                                              : heat.heat[c] * static_cast<double>(pts) / static_cast<double>(sizes[c]));
            }
            overhead += static_cast<double>(heat.access[c]) *
                        (static_cast<double>(n) * meta_latency_s + static_cast<double>(n - 1) * probe_s);
        }
        const double benefit = total_heat > 0 ? (base_max - lpt_max(std::move(loads), n_dpus)) / total_heat * total_work_s : 0.0;
        return benefit - overhead / static_cast<double>(n_dpus);
    };

    std::size_t th = min_size;
    while (!feasible(th) && th < max_size) {
        th = std::min(max_size, th * 2);
    }
    if (!feasible(th)) {
        throw CapacityError("slice metadata does not fit the WRAM reservation even without splitting");
    }
    Th1Search out;
    double obj = objective(th);
    double rate = static_cast<double>(th) / 2.0;
    int it = 0;
    for (; it < 20 && rate >= 1.0; ++it) {
        const auto step = static_cast<std::size_t>(rate);
        std::size_t best_th = th;
        double best_obj = obj;
        for (std::size_t cand : {th > step ? th - step : std::size_t{1}, std::min(max_size, th + step)}) {
            if (cand == th || !feasible(cand)) {
                continue;
            }
            const double o = objective(cand);
            if (o > best_obj) {
                best_obj = o;
                best_th = cand;
            }
        }
        if (best_th == th) {
            rate /= 2.0;
        } else {
            th = best_th;
            obj = best_obj;
            rate *= 2.0;
        }
    }
    out.th1_bytes = static_cast<std::uint64_t>(th) * point_bytes;
    out.objective = obj;
    out.iterations = it;
    return out;
}

std::vector<std::uint32_t> duplicate_clusters(std::span<const Slice> slices, const ClusterHeat& heat,
                                              std::uint64_t budget_bytes, std::size_t n_dpus,
                                              std::uint64_t point_bytes) {
    const std::size_t nlist = heat.heat.size();
    std::vector<double> n_slices(nlist, 0.0);
    std::vector<double> bytes(nlist, 0.0);
    for (const auto& s : slices) {
        n_slices[s.cluster] += 1.0;
        bytes[s.cluster] += static_cast<double>(s.points() * point_bytes);
    }
    const std::uint32_t cap = n_dpus == 0 ? 0 : static_cast<std::uint32_t>(n_dpus - 1);
    auto plan = [&](double alpha) {
        std::vector<std::uint32_t> th2(nlist, 0);
        for (std::size_t c = 0; c < nlist; ++c) {
            if (n_slices[c] == 0) {
                continue;
            }
            const double want = std::floor(alpha * heat.heat[c] / n_slices[c]);
            th2[c] = static_cast<std::uint32_t>(std::clamp(want, 0.0, static_cast<double>(cap)));
        }
        return th2;
    };
    auto footprint = [&](const std::vector<std::uint32_t>& th2) {
        double f = 0.0;
        for (std::size_t c = 0; c < nlist; ++c) {
            f += th2[c] * bytes[c];
        }
        return f;
    };
    if (budget_bytes == 0 || cap == 0) {
        return std::vector<std::uint32_t>(nlist, 0);
    }
    const double budget = static_cast<double>(budget_bytes);
    double lo = 0.0;
    double hi = 1.0;
    // Grow until the plan overflows or every cluster is capped.
    for (int i = 0; i < 200 && footprint(plan(hi)) <= budget; ++i) {
        const auto th2 = plan(hi);
        bool all_capped = true;
        for (std::size_t c = 0; c < nlist; ++c) {
            if (n_slices[c] > 0 && heat.heat[c] > 0 && th2[c] < cap) {
                all_capped = false;
                break;
            }
        }
        if (all_capped) {
            return th2;
        }
        lo = hi;
        hi *= 2.0;
    }
    for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        (footprint(plan(mid)) <= budget ? lo : hi) = mid;
    }
    return plan(lo);
}

void SliceMap::rebuild() {
    std::size_t nlist = 0;
    for (const auto& p : placements) {
        nlist = std::max<std::size_t>(nlist, p.cluster + 1);
    }
    nlist = std::max(nlist, th2.size());
    hosts.assign(nlist, {});
    dpu_heat.assign(n_dpus, 0.0);
    dpu_bytes.assign(n_dpus, 0);
    for (std::size_t i = 0; i < placements.size(); ++i) {
        const auto& p = placements[i];
        auto& per_cluster = hosts[p.cluster];
        if (per_cluster.size() <= p.slice) {
            per_cluster.resize(p.slice + 1);
        }
        per_cluster[p.slice].push_back(static_cast<std::uint32_t>(i));
        dpu_heat[p.dpu] += p.heat;
        dpu_bytes[p.dpu] += p.bytes;
    }
    for (auto& per_cluster : hosts) {
        for (auto& reps : per_cluster) {
            std::sort(reps.begin(), reps.end(),
                      [&](std::uint32_t a, std::uint32_t b) { return placements[a].replica < placements[b].replica; });
        }
    }
}

void SliceMap::validate(std::span<const std::size_t> sizes) const {
    require(hosts.size() >= sizes.size(), "slice map does not cover every cluster");
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        const auto& per_cluster = hosts[c];
        require(!per_cluster.empty(), "cluster " + std::to_string(c) + " has no slices");
        const std::size_t reps = per_cluster[0].size();
        std::size_t covered = 0;
        for (std::size_t s = 0; s < per_cluster.size(); ++s) {
            const auto& r = per_cluster[s];
            require(r.size() == reps, "replicas of cluster " + std::to_string(c) + " differ in slice decomposition");
            const auto& first = placements[r[0]];
            require(first.begin == covered, "slices of cluster " + std::to_string(c) + " are not contiguous");
            covered = first.end;
            require(th1_bytes == 0 || (first.end - first.begin) * point_bytes <= th1_bytes, "slice exceeds th1");
            for (std::size_t i = 0; i < r.size(); ++i) {
                const auto& p = placements[r[i]];
                require(p.begin == first.begin && p.end == first.end, "replica ranges differ");
                require(p.dpu < n_dpus, "placement on a DPU outside the array");
                for (std::size_t j = 0; j < i; ++j) {
                    require(placements[r[j]].dpu != p.dpu, "two replicas of one slice share a DPU");
                }
            }
        }
        require(covered == sizes[c], "slices of cluster " + std::to_string(c) + " do not cover it");
    }
    for (std::size_t d = 0; d < n_dpus; ++d) {
        require(capacity_bytes == 0 || dpu_bytes[d] <= capacity_bytes, "DPU " + std::to_string(d) + " over capacity");
    }
}

double SliceMap::max_heat() const {
    return dpu_heat.empty() ? 0.0 : *std::max_element(dpu_heat.begin(), dpu_heat.end());
}

double SliceMap::mean_heat() const {
    return dpu_heat.empty() ? 0.0 : std::accumulate(dpu_heat.begin(), dpu_heat.end(), 0.0) / static_cast<double>(dpu_heat.size());
}

void to_json(nlohmann::json& j, const SliceMap& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : m.placements) {
        rows.push_back({p.cluster, p.slice, p.replica, p.begin, p.end, p.dpu, p.heat, p.bytes});
    }
    j = {{"n_dpus", m.n_dpus},
         {"th1_bytes", m.th1_bytes},
         {"point_bytes", m.point_bytes},
         {"capacity_bytes", m.capacity_bytes},
         {"th2", m.th2},
         {"placement_columns", {"cluster", "slice", "replica", "begin", "end", "dpu", "heat", "bytes"}},
         {"placements", rows},
         {"dpu_heat", m.dpu_heat},
         {"dpu_bytes", m.dpu_bytes},
         {"exchange_swaps", m.exchange_swaps}};
}

void from_json(const nlohmann::json& j, SliceMap& m) {
    m.n_dpus = j.at("n_dpus").get<std::size_t>();
    m.th1_bytes = j.at("th1_bytes").get<std::uint64_t>();
    m.point_bytes = j.at("point_bytes").get<std::uint64_t>();
    m.capacity_bytes = j.at("capacity_bytes").get<std::uint64_t>();
    m.th2 = j.at("th2").get<std::vector<std::uint32_t>>();
    m.exchange_swaps = j.value("exchange_swaps", 0);
    m.placements.clear();
    for (const auto& r : j.at("placements")) {
        SlicePlacement p;
        p.cluster = r.at(0).get<std::uint32_t>();
        p.slice = r.at(1).get<std::uint32_t>();
        p.replica = r.at(2).get<std::uint32_t>();
        p.begin = r.at(3).get<std::uint32_t>();
        p.end = r.at(4).get<std::uint32_t>();
        p.dpu = r.at(5).get<std::uint32_t>();
        p.heat = r.at(6).get<double>();
        p.bytes = r.at(7).get<std::uint64_t>();
        require(p.dpu < m.n_dpus, "slice map places a slice outside the DPU array");
        m.placements.push_back(p);
    }
    m.rebuild();
}

namespace {

struct Exchanger {
    SliceMap& map;
    const AllocateOptions& opt;

    bool hosts_same_slice(std::uint32_t dpu, const SlicePlacement& p, std::size_t skip) const {
        for (std::uint32_t i : map.hosts[p.cluster][p.slice]) {
            if (i != skip && map.placements[i].dpu == dpu) {
                return true;
            }
        }
        return false;
    }

    std::size_t group_count(std::uint32_t dpu, std::uint32_t cluster, std::uint32_t replica, std::size_t skip) const {
        std::size_t n = 0;
        for (const auto& slices : map.hosts[cluster]) {
            for (std::uint32_t i : slices) {
                const auto& q = map.placements[i];
                if (i != skip && q.replica == replica && q.dpu == dpu) {
                    ++n;
                }
            }
        }
        return n;
    }

    // Every exchange rule for moving a to b's DPU and b to a's.
    bool can_swap(std::size_t a, std::size_t b) const {
        const auto& pa = map.placements[a];
        const auto& pb = map.placements[b];
        const std::uint32_t da = pa.dpu;
        const std::uint32_t db = pb.dpu;
        if (da == db || (pa.cluster == pb.cluster && pa.replica == pb.replica)) {
            return false;
        }
        if (std::abs(pa.heat - pb.heat) > opt.similarity * map.mean_heat()) {
            return false;
        }
        const double ha = map.dpu_heat[da] - pa.heat + pb.heat;
        const double hb = map.dpu_heat[db] - pb.heat + pa.heat;
        if (std::max(ha, hb) > std::max(map.dpu_heat[da], map.dpu_heat[db])) {
            return false;
        }
        const std::uint64_t ba = map.dpu_bytes[da] - pa.bytes + pb.bytes;
        const std::uint64_t bb = map.dpu_bytes[db] - pb.bytes + pa.bytes;
        if (map.capacity_bytes != 0 && (ba > map.capacity_bytes || bb > map.capacity_bytes)) {
            return false;
        }
        if (hosts_same_slice(db, pa, a) || hosts_same_slice(da, pb, b)) {
            return false;
        }
        // b must not lose more co-location than a gains.
        const auto cnt = [&](std::uint32_t d, const SlicePlacement& p, std::size_t skip) {
            return static_cast<long>(group_count(d, p.cluster, p.replica, skip));
        };
        const long gain_a = cnt(db, pa, a) - cnt(da, pa, a);
        const long gain_b = cnt(da, pb, b) - cnt(db, pb, b);
        return gain_a + gain_b > 0;
    }

    void do_swap(std::size_t a, std::size_t b) {
        auto& pa = map.placements[a];
        auto& pb = map.placements[b];
        map.dpu_heat[pa.dpu] += pb.heat - pa.heat;
        map.dpu_heat[pb.dpu] += pa.heat - pb.heat;
        map.dpu_bytes[pa.dpu] = map.dpu_bytes[pa.dpu] - pa.bytes + pb.bytes;
        map.dpu_bytes[pb.dpu] = map.dpu_bytes[pb.dpu] - pb.bytes + pa.bytes;
        std::swap(pa.dpu, pb.dpu);
    }

    int run() {
        int swaps = 0;
        for (int it = 0; it < opt.exchange_iterations; ++it) {
            bool changed = false;
            for (std::size_t c = 0; c < map.hosts.size(); ++c) {
                const auto& per_cluster = map.hosts[c];
                if (per_cluster.size() < 2) {
                    continue;
                }
                for (std::size_t r = 0; r < per_cluster[0].size(); ++r) {
                    // Home DPU: the one already holding most slices of this copy.
                    std::map<std::uint32_t, std::size_t> count;
                    for (const auto& reps : per_cluster) {
                        ++count[map.placements[reps[r]].dpu];
                    }
                    if (count.size() < 2) {
                        continue;
                    }
                    std::uint32_t home = count.begin()->first;
                    for (const auto& [d, n] : count) {
                        if (n > count[home]) {
                            home = d;
                        }
                    }
                    for (const auto& reps : per_cluster) {
                        const std::uint32_t a = reps[r];
                        if (map.placements[a].dpu == home) {
                            continue;
                        }
                        std::size_t best = map.placements.size();
                        double best_diff = 0.0;
                        for (std::size_t b = 0; b < map.placements.size(); ++b) {
                            if (map.placements[b].dpu != home) {
                                continue;
                            }
                            const double diff = std::abs(map.placements[a].heat - map.placements[b].heat);
                            if ((best == map.placements.size() || diff < best_diff) && can_swap(a, b)) {
                                best = b;
                                best_diff = diff;
                            }
                        }
                        if (best != map.placements.size()) {
                            do_swap(a, best);
                            ++swaps;
                            changed = true;
                        }
                    }
                }
            }
            if (!changed) {
                break;
            }
        }
        return swaps;
    }
};

} // namespace

SliceMap allocate_slices(std::span<const Slice> slices, std::span<const std::uint32_t> th2, const ClusterHeat& heat,
                         std::size_t n_dpus, std::uint64_t capacity_bytes, std::uint64_t point_bytes,
                         const AllocateOptions& options) {
    require(n_dpus >= 1, "need at least one DPU");
    require(th2.size() == heat.heat.size(), "replica plan does not match the heat table");
    const std::vector<double> sheat = slice_heats(slices, heat);
    struct Item {
        std::size_t slice;
        std::uint32_t replica;
        double heat;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        const std::uint32_t copies = th2[slices[i].cluster] + 1;
        if (copies > n_dpus) {
            throw CapacityError("replicas of cluster " + std::to_string(slices[i].cluster) +
                                " cannot be kept on distinct DPUs");
        }
        for (std::uint32_t r = 0; r < copies; ++r) {
            items.push_back({i, r, sheat[i] / copies});
        }
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.heat > b.heat; });

    SliceMap map;
    map.n_dpus = n_dpus;
    map.point_bytes = point_bytes;
    map.capacity_bytes = capacity_bytes;
    map.th2.assign(th2.begin(), th2.end());
    std::uint64_t th1 = 0;
    for (const auto& s : slices) {
        th1 = std::max<std::uint64_t>(th1, s.points() * point_bytes);
    }
    map.th1_bytes = std::max(th1, point_bytes);
    map.dpu_heat.assign(n_dpus, 0.0);
    map.dpu_bytes.assign(n_dpus, 0);
    // DPUs already holding a copy of each slice.
    std::vector<std::vector<std::uint32_t>> taken(slices.size());
    for (const auto& it : items) {
        const Slice& s = slices[it.slice];
        const std::uint64_t bytes = s.points() * point_bytes;
        std::size_t best = n_dpus;
        for (std::size_t d = 0; d < n_dpus; ++d) {
            if (capacity_bytes != 0 && map.dpu_bytes[d] + bytes > capacity_bytes) {
                continue;
            }
            if (std::find(taken[it.slice].begin(), taken[it.slice].end(), d) != taken[it.slice].end()) {
                continue;
            }
            if (best == n_dpus || map.dpu_heat[d] < map.dpu_heat[best]) {
                best = d;
            }
        }
        if (best == n_dpus) {
            throw CapacityError("no DPU has room for slice " + std::to_string(s.ordinal) + " of cluster " +
                                std::to_string(s.cluster));
        }
        taken[it.slice].push_back(static_cast<std::uint32_t>(best));
        map.placements.push_back({s.cluster, s.ordinal, it.replica, s.begin, s.end, static_cast<std::uint32_t>(best),
                                  it.heat, bytes});
        map.dpu_heat[best] += it.heat;
        map.dpu_bytes[best] += bytes;
    }
    map.rebuild();
    Exchanger ex{map, options};
    map.exchange_swaps = ex.run();
    map.rebuild();
    return map;
}

SliceMap round_robin_layout(std::span<const std::size_t> sizes, std::size_t n_dpus, std::uint64_t point_bytes,
                            std::uint64_t capacity_bytes) {
    require(n_dpus >= 1, "need at least one DPU");
    SliceMap map;
    map.n_dpus = n_dpus;
    map.point_bytes = point_bytes;
    map.capacity_bytes = capacity_bytes;
    map.th2.assign(sizes.size(), 0);
    std::uint64_t th1 = point_bytes;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        const std::uint64_t bytes = sizes[c] * point_bytes;
        th1 = std::max(th1, bytes);
        map.placements.push_back({static_cast<std::uint32_t>(c), 0, 0, 0, static_cast<std::uint32_t>(sizes[c]),
                                  static_cast<std::uint32_t>(c % n_dpus), 0.0, bytes});
    }
    map.th1_bytes = th1;
    map.rebuild();
    if (capacity_bytes != 0) {
        for (std::size_t d = 0; d < n_dpus; ++d) {
            if (map.dpu_bytes[d] > capacity_bytes) {
                throw CapacityError("round-robin layout overflows DPU " + std::to_string(d));
            }
        }
    }
    return map;
}

std::uint64_t dpu_data_capacity(const HwConfig& hw, const IvfPqIndex& index) {
    const auto& cfg = index.config;
    const std::uint64_t codebooks = cfg.CB * index.dim * static_cast<std::uint64_t>(cfg.bits.codebook) / 8;
    const std::uint64_t centroids = cfg.nlist * index.dim * static_cast<std::uint64_t>(cfg.bits.centroid) / 8;
    const std::uint64_t sqt = engine_sqt().bytes();
    const std::uint64_t reserved = codebooks + centroids + sqt + kMramReserve;
    if (reserved >= hw.mram_bytes) {
        throw CapacityError("shared index data does not fit in one DPU's MRAM");
    }
    return hw.mram_bytes - reserved;
}

LayoutResult optimize_layout(const IvfPqIndex& index, const std::vector<std::vector<ProbedCluster>>& profile_probes,
                             const HwConfig& hw, const LayoutOptions& options) {
    const std::size_t n_dpus = options.n_dpus != 0 ? options.n_dpus : hw.dpu_count;
    LayoutResult out;
    out.heat = profile_heat(index, profile_probes, options.w_access, options.w_size);
    const std::uint64_t pb = point_bytes(index.config);
    const ModelParams p = params_for(index.config, index.dim, index.count, profile_probes.size());
    if (options.th1_bytes != 0) {
        out.th1.th1_bytes = options.th1_bytes;
    } else {
        out.th1 = tune_th1(out.heat, n_dpus, pb, p, hw);
    }
    const auto slices = partition_clusters(out.heat.size, out.th1.th1_bytes, pb);
    const std::uint64_t capacity = dpu_data_capacity(hw, index);
    std::uint64_t primary = 0;
    for (const auto& s : slices) {
        primary += s.points() * pb;
    }
    const std::uint64_t total = capacity * n_dpus;
    require(primary <= total, "the index does not fit in the DPU array");
    const std::uint64_t budget = options.replica_budget < 0
                                     ? total - primary
                                     : std::min(total - primary,
                                                static_cast<std::uint64_t>(options.replica_budget) * n_dpus);
    const auto th2 = duplicate_clusters(slices, out.heat, budget, n_dpus, pb);
    out.map = allocate_slices(slices, th2, out.heat, n_dpus, capacity, pb, options.allocate);
    out.map.th1_bytes = out.th1.th1_bytes;
    return out;
}

bool WramPlan::contains(const std::string& name) const {
    return std::find(placed.begin(), placed.end(), name) != placed.end();
}

WramPlan plan_wram(std::vector<WramItem> items, std::uint64_t capacity) {
    WramPlan plan;
    plan.capacity = capacity;
    std::sort(items.begin(), items.end(), [](const WramItem& a, const WramItem& b) {
        if (a.mandatory != b.mandatory) {
            return a.mandatory;
        }
        const double ha = a.heat_per_bit();
        const double hb = b.heat_per_bit();
        return ha != hb ? ha > hb : a.name < b.name;
    });
    for (const auto& it : items) {
        if (plan.used + it.bytes > capacity) {
            if (it.mandatory) {
                throw CapacityError("mandatory WRAM item '" + it.name + "' does not fit");
            }
            continue;
        }
        plan.used += it.bytes;
        plan.placed.push_back(it.name);
    }
    return plan;
}

std::vector<WramItem> wram_items(const ModelParams& p, const WorkCounts& counts, std::size_t nlist,
                                 std::size_t sqt_hot_entries, std::size_t slices_on_dpu, const HwConfig& hw) {
    const auto& b = p.bits;
    auto bytes_of = [](double bits) { return static_cast<std::uint64_t>(std::ceil(bits / 8.0)); };
    std::vector<WramItem> items;
    // LC writes every LUT cell once per probe; DC reads M cells per point.
    items.push_back({"lut", bytes_of(p.M * p.CB * b.lut),
                     counts.probes * p.CB * p.M * b.lut + counts.points * p.M * b.lut, false});
    items.push_back({"codebook", bytes_of(p.CB * p.D * b.codebook), counts.probes * p.CB * p.D * b.codebook, false});
    items.push_back({"residual", bytes_of(p.D * b.query), counts.probes * p.CB * p.D * b.query, false});
    items.push_back({"sqt_hot", static_cast<std::uint64_t>(sqt_hot_entries) * sizeof(std::uint32_t),
                     counts.probes * p.CB * p.D * 32.0, false});
    items.push_back({"centroids", bytes_of(static_cast<double>(nlist) * p.D * b.centroid),
                     counts.probes * p.D * b.centroid, false});
    items.push_back({"topk", bytes_of(p.K * (b.lut + b.address)) * hw.tasklets,
                     counts.points * (b.lut + b.address) * (std::log2(p.K) + 1.0), true});
    items.push_back({"slice_meta", slices_on_dpu * hw.slice_metadata_bytes,
                     counts.probes * static_cast<double>(hw.slice_metadata_bytes) * 8.0, true});
    return items;
}

} // namespace pimann
