#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "pimann/common.hpp"

namespace pimann {

enum class VectorFormat { fvecs, bvecs, raw_u8 };

VectorFormat parse_vector_format(std::string_view name);

// Dense set of base or query vectors. Scalars are kept as float; for
// elem_bits 8 and 16 every value is an integer in [0, 2^elem_bits).
struct VectorSet {
    std::size_t count = 0;
    std::size_t dim = 0;
    int elem_bits = 8;
    std::vector<float> data;

    VectorSet() = default;
    VectorSet(std::size_t n, std::size_t d, int bits) : count(n), dim(d), elem_bits(bits), data(n * d, 0.0F) {}

    std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
    std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }

    // Throws ConfigError when the invariants do not hold.
    void validate() const;
    bool integral() const { return elem_bits == 8 || elem_bits == 16; }

    bool operator==(const VectorSet&) const = default;
};

// Per-query top-k neighbours. Rows are sorted by (distance, id).
struct NeighborLists {
    std::size_t count = 0;
    std::size_t k = 0;
    std::vector<std::int32_t> ids;
    std::vector<double> distances;

    NeighborLists() = default;
    NeighborLists(std::size_t n, std::size_t width) : count(n), k(width), ids(n * width, -1), distances(n * width, 0.0) {}

    std::span<const std::int32_t> ids_row(std::size_t q) const { return {ids.data() + q * k, k}; }
    std::span<std::int32_t> ids_row(std::size_t q) { return {ids.data() + q * k, k}; }
    std::span<const double> dist_row(std::size_t q) const { return {distances.data() + q * k, k}; }
    std::span<double> dist_row(std::size_t q) { return {distances.data() + q * k, k}; }

    void validate() const;
    bool operator==(const NeighborLists&) const = default;
};

// raw_dim is only consulted for raw_u8, which carries no header.
VectorSet load_vectors(const std::filesystem::path& path, VectorFormat format, std::size_t raw_dim = 0);
void write_vectors(const std::filesystem::path& path, const VectorSet& vectors, VectorFormat format);

// ivecs of ids plus a parallel fvecs of distances.
void write_neighbors(const std::filesystem::path& ids_path, const std::filesystem::path& dist_path,
                     const NeighborLists& lists);
NeighborLists load_neighbors(const std::filesystem::path& ids_path, const std::filesystem::path& dist_path);

struct SyntheticSpec {
    std::size_t n = 10000;
    std::size_t d = 128;
    std::size_t n_queries = 1000;
    std::size_t n_blobs = 64;
    double skew = 1.0;          // Zipf exponent for the query blob choice
    std::uint64_t seed = 1;
    std::size_t intrinsic_dim = 8; // rank of each blob's principal subspace
    double blob_sigma = 20.0;      // std-dev along the principal directions
    double noise_sigma = 2.0;      // isotropic noise on top
    double center_lo = 48.0;
    double center_hi = 208.0;
};

struct SyntheticData {
    VectorSet base;
    VectorSet queries;
    Matrix<float> blob_centers;
    std::vector<std::uint32_t> base_blob;
    std::vector<std::uint32_t> query_blob;
};

// 8-bit Gaussian-blob data. Base points pick blobs uniformly, queries pick
// blob rank r with probability proportional to 1 / r^skew.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Exact squared-L2 top-k, ties broken by lower base index.
NeighborLists brute_force_ground_truth(const VectorSet& base, const VectorSet& queries, std::size_t k);

// Mean over queries of |result top-k ∩ truth top-k| / k.
double recall_at_k(const NeighborLists& results, const NeighborLists& truth, std::size_t k);

// Rows [first, first + n) as a new set.
VectorSet slice_rows(const VectorSet& v, std::size_t first, std::size_t n);

// Min-max rescale of float data into 8-bit integers.
VectorSet quantize_to_u8(const VectorSet& v);

} // namespace pimann
