#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "pimann/dataset.hpp"

namespace pimann::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("pimann_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

inline VectorSet random_u8(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, 255);
    VectorSet v(n, d, 8);
    for (auto& x : v.data) {
        x = static_cast<float>(u(rng));
    }
    return v;
}

inline SyntheticData blobs(std::size_t n, std::size_t queries, std::size_t n_blobs, double skew,
                           std::uint64_t seed = 1, std::size_t d = 32) {
    SyntheticSpec s;
    s.n = n;
    s.d = d;
    s.n_queries = queries;
    s.n_blobs = n_blobs;
    s.skew = skew;
    s.seed = seed;
    return generate_synthetic(s);
}

// Squared L2 in double; exact for 8-bit data.
inline double sq_l2(std::span<const float> a, std::span<const float> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = static_cast<double>(a[i]) - b[i];
        s += t * t;
    }
    return s;
}

// Sort-everything top-k: (distance, id) ascending.
inline std::vector<std::pair<double, std::int32_t>> full_sort_topk(const VectorSet& base, std::span<const float> q,
                                                                   std::size_t k) {
    std::vector<std::pair<double, std::int32_t>> all;
    for (std::size_t i = 0; i < base.count; ++i) {
        all.emplace_back(sq_l2(base.row(i), q), static_cast<std::int32_t>(i));
    }
    std::sort(all.begin(), all.end());
    all.resize(k);
    return all;
}

} // namespace pimann::test
