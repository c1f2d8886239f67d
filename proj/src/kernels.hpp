#pragma once

// Dense distance kernels shared by the oracle, k-means and encoding.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pimann::detail {

// Squared norms of n rows of width dim.
std::vector<double> row_norms(const float* x, std::size_t n, std::size_t dim);

// out[i * ny + j] = ||x_i - y_j||^2 computed as |x|^2 + |y|^2 - 2 x.y in
// double precision. Exact when all inputs are integers (every partial sum
// stays far below 2^53 at the sizes handled here).
void sq_l2_block(const float* x, std::size_t nx, const float* y, std::size_t ny, std::size_t dim,
                 std::span<const double> x_norms, std::span<const double> y_norms, std::vector<double>& out);

// Same in single precision, used where only approximate ranking is needed.
void sq_l2_block_f32(const float* x, std::size_t nx, const float* y, std::size_t ny, std::size_t dim,
                     std::span<const float> y_norms, std::vector<float>& out);

// Index of the nearest row of y for every row of x (lowest index on ties).
// Optional min_dist receives the exact-for-integers squared distance.
std::vector<std::uint32_t> nearest_rows(const float* x, std::size_t nx, const float* y, std::size_t ny,
                                        std::size_t dim, std::vector<double>* min_dist = nullptr);

} // namespace pimann::detail
