#include "pimann/sqt.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "pimann/common.hpp"

namespace pimann {

Sqt::Sqt(int elem_bits, std::size_t wram_entries) : elem_bits_(elem_bits), wram_entries_(wram_entries) {
    if (elem_bits != 8 && elem_bits != 16) {
        throw ConfigError("unsupported SQT width: " + std::to_string(elem_bits));
    }
    const std::size_t n = std::size_t{1} << elem_bits;
    if (wram_entries > n) {
        throw ConfigError("SQT hot region larger than the table");
    }
    entries_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        entries_[i] = static_cast<std::uint32_t>(i * i);
    }
}

Sqt build_sqt(int elem_bits, std::size_t wram_entries) {
    return Sqt(elem_bits, wram_entries);
}

const Sqt& engine_sqt() {
    static const Sqt table(16, kDefaultSqtHotEntries);
    return table;
}

std::uint64_t l2_distance_sqt(std::span<const std::int32_t> a, std::span<const std::int32_t> b, const Sqt& sqt) {
    if (a.size() != b.size()) {
        throw ConfigError("l2_distance_sqt: length mismatch");
    }
    const auto table = sqt.entries();
    const auto limit = static_cast<std::uint32_t>(table.size());
    std::uint64_t acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto mag = static_cast<std::uint32_t>(std::abs(a[i] - b[i]));
        if (mag >= limit) {
            throw ConfigError("difference magnitude " + std::to_string(mag) + " outside the SQT range");
        }
        acc += table[mag];
    }
    return acc;
}

std::uint64_t l2_distance_mul(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
    if (a.size() != b.size()) {
        throw ConfigError("l2_distance_mul: length mismatch");
    }
    std::uint64_t acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const std::int64_t d = static_cast<std::int64_t>(a[i]) - b[i];
        acc += static_cast<std::uint64_t>(d * d);
    }
    return acc;
}

SqtProfile sqt_access_profile(std::span<const std::int32_t> a, std::span<const std::int32_t> b, const Sqt& sqt) {
    SqtProfile p;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto mag = static_cast<std::size_t>(std::abs(a[i] - b[i]));
        if (mag < sqt.wram_entries()) {
            ++p.hot_hits;
        } else {
            ++p.cold_hits;
        }
    }
    return p;
}

} // namespace pimann
