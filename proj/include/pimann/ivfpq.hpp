#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pimann/common.hpp"
#include "pimann/dataset.hpp"

namespace pimann {

// Transport widths in bits. Only the cost model reads them; storage
// precision is fixed (codebooks and centroids are 32-bit integers).
struct BitWidths {
    int centroid = 8;
    int query = 8;
    int point = 8;
    int codebook = 8;
    int lut = 32;
    int address = 8;

    bool operator==(const BitWidths&) const = default;
};

struct IndexConfig {
    std::size_t nlist = 1;
    std::size_t M = 1;
    std::size_t CB = 1;
    std::size_t P = 1;
    std::size_t K = 10;
    BitWidths bits;
    int kmeans_iters = 10;
    // Training sample sizes; 0 picks a default from nlist / CB.
    std::size_t coarse_train_size = 0;
    std::size_t pq_train_size = 0;

    // Throws ConfigError for an invalid configuration.
    void validate(std::size_t dim) const;
    std::size_t sub_dim(std::size_t dim) const { return dim / M; }

    bool operator==(const IndexConfig&) const = default;
};

// B_a wide enough to index CB entries, rounded up to a byte multiple.
int address_bits_for(std::size_t cb);

// M tables of CB entries, each sub_dim integers; entry (m, j) lives at
// ((m * CB) + j) * sub_dim.
struct PqCodebooks {
    std::size_t M = 0;
    std::size_t CB = 0;
    std::size_t sub_dim = 0;
    std::vector<std::int32_t> entries;

    std::span<const std::int32_t> entry(std::size_t m, std::size_t j) const {
        return {entries.data() + (m * CB + j) * sub_dim, sub_dim};
    }
    bool operator==(const PqCodebooks&) const = default;
};

struct InvertedList {
    std::vector<std::uint32_t> ids;
    std::vector<std::uint16_t> codes; // ids.size() x M

    std::size_t size() const { return ids.size(); }
    std::span<const std::uint16_t> code(std::size_t i, std::size_t M) const { return {codes.data() + i * M, M}; }
    bool operator==(const InvertedList&) const = default;
};

struct IvfPqIndex {
    IndexConfig config;
    std::size_t dim = 0;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    Matrix<std::int32_t> centroids;
    PqCodebooks codebooks;
    std::vector<InvertedList> lists;
    std::optional<Matrix<double>> pre_transform;

    // Vector in engine coordinates: transformed (if configured) and rounded.
    std::vector<std::int32_t> prepare(std::span<const float> v) const;
    std::vector<std::int32_t> decode(std::size_t cluster, std::size_t i) const;
    std::size_t max_list_size() const;

    bool operator==(const IvfPqIndex&) const = default;
};

// Lloyd's k-means with k-means++ seeding. Empty clusters are re-seeded from
// the point farthest from its centroid inside the largest cluster.
Matrix<float> train_kmeans(std::span<const float> points, std::size_t dim, std::size_t k, int iters,
                           std::uint64_t seed);

// M independent k-means runs over the column slices of the residuals.
std::vector<Matrix<float>> train_pq(std::span<const float> residuals, std::size_t dim, std::size_t M,
                                    std::size_t CB, int iters, std::uint64_t seed);

Matrix<std::int32_t> round_matrix(const Matrix<float>& m);
PqCodebooks round_codebooks(const std::vector<Matrix<float>>& tables);

// Nearest centroid, then nearest codeword per subspace of the residual.
// Lists are sorted by vector id. Ties go to the lower index.
std::vector<InvertedList> encode_dataset(const Matrix<std::int32_t>& vectors, const Matrix<std::int32_t>& centroids,
                                         const PqCodebooks& codebooks);

// Vectors converted to engine coordinates.
Matrix<std::int32_t> prepare_all(const VectorSet& v, const std::optional<Matrix<double>>& transform);

IvfPqIndex build_index(const IndexConfig& config, const VectorSet& base, std::uint64_t seed,
                       std::optional<Matrix<double>> pre_transform = std::nullopt);

// Same, reusing a trained coarse quantizer (rounded centroids).
IvfPqIndex build_index_with_centroids(const IndexConfig& config, const VectorSet& base, std::uint64_t seed,
                                      const Matrix<std::int32_t>& centroids,
                                      std::optional<Matrix<double>> pre_transform = std::nullopt);

bool is_orthonormal(const Matrix<double>& q, double tol = 1e-5);
Matrix<float> apply_transform(const Matrix<double>& q, const VectorSet& v);

// Directory layout: meta.json plus little-endian flat arrays.
void save_index(const IvfPqIndex& index, const std::filesystem::path& dir);
IvfPqIndex load_index(const std::filesystem::path& dir);

} // namespace pimann
