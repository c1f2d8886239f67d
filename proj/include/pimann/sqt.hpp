#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pimann {

// Square lookup table: entries[i] == i * i, indexed by the magnitude of an
// element difference, so L2 distances need no multiplier. The first
// wram_entries entries (smallest magnitudes) form the hot region that the
// simulator keeps in scratchpad memory.
class Sqt {
  public:
    Sqt() = default;
    Sqt(int elem_bits, std::size_t wram_entries);

    int elem_bits() const { return elem_bits_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t wram_entries() const { return wram_entries_; }
    std::span<const std::uint32_t> entries() const { return entries_; }
    std::uint32_t operator[](std::size_t magnitude) const { return entries_[magnitude]; }
    std::size_t bytes() const { return entries_.size() * sizeof(std::uint32_t); }

  private:
    int elem_bits_ = 0;
    std::size_t wram_entries_ = 0;
    std::vector<std::uint32_t> entries_;
};

// elem_bits in {8, 16}; wram_entries <= 2^elem_bits.
Sqt build_sqt(int elem_bits, std::size_t wram_entries);

// Default hot-region size for 16-bit tables.
inline constexpr std::size_t kDefaultSqtHotEntries = 64;

// Table used by the search engine. Residual-to-codeword differences of
// 8-bit data span [-510, 510], so the engine always uses the 16-bit table.
const Sqt& engine_sqt();

// Sum of sqt[|a_i - b_i|]; throws ConfigError on length mismatch or a
// magnitude outside the table.
std::uint64_t l2_distance_sqt(std::span<const std::int32_t> a, std::span<const std::int32_t> b, const Sqt& sqt);

// Multiply-based reference.
std::uint64_t l2_distance_mul(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

struct SqtProfile {
    std::uint64_t hot_hits = 0;
    std::uint64_t cold_hits = 0;

    SqtProfile& operator+=(const SqtProfile& o) {
        hot_hits += o.hot_hits;
        cold_hits += o.cold_hits;
        return *this;
    }
};

// Lookups that land inside / outside the hot region.
SqtProfile sqt_access_profile(std::span<const std::int32_t> a, std::span<const std::int32_t> b, const Sqt& sqt);

} // namespace pimann
