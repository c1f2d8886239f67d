#include "kernels.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <limits>

namespace pimann::detail {

namespace {

using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kBlockRows = 256;

} // namespace

std::vector<double> row_norms(const float* x, std::size_t n, std::size_t dim) {
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const float* r = x + i * dim;
        for (std::size_t j = 0; j < dim; ++j) {
            s += static_cast<double>(r[j]) * static_cast<double>(r[j]);
        }
        norms[i] = s;
    }
    return norms;
}

void sq_l2_block(const float* x, std::size_t nx, const float* y, std::size_t ny, std::size_t dim,
                 std::span<const double> x_norms, std::span<const double> y_norms, std::vector<double>& out) {
    out.resize(nx * ny);
    Eigen::Map<const RowMajorF> xm(x, static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(dim));
    Eigen::Map<const RowMajorF> ym(y, static_cast<Eigen::Index>(ny), static_cast<Eigen::Index>(dim));
    Eigen::Map<RowMajorD> om(out.data(), static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny));
    RowMajorD xd = xm.cast<double>();
    // y is usually the larger operand; convert it in slabs to bound memory.
    constexpr std::size_t kSlab = 8192;
    for (std::size_t j0 = 0; j0 < ny; j0 += kSlab) {
        const std::size_t nj = std::min(kSlab, ny - j0);
        RowMajorD yd = ym.middleRows(static_cast<Eigen::Index>(j0), static_cast<Eigen::Index>(nj)).cast<double>();
        om.middleCols(static_cast<Eigen::Index>(j0), static_cast<Eigen::Index>(nj)).noalias() =
            -2.0 * xd * yd.transpose();
    }
    for (std::size_t i = 0; i < nx; ++i) {
        double* r = out.data() + i * ny;
        for (std::size_t j = 0; j < ny; ++j) {
            r[j] += x_norms[i] + y_norms[j];
        }
    }
}

void sq_l2_block_f32(const float* x, std::size_t nx, const float* y, std::size_t ny, std::size_t dim,
                     std::span<const float> y_norms, std::vector<float>& out) {
    out.resize(nx * ny);
    Eigen::Map<const RowMajorF> xm(x, static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(dim));
    Eigen::Map<const RowMajorF> ym(y, static_cast<Eigen::Index>(ny), static_cast<Eigen::Index>(dim));
    Eigen::Map<RowMajorF> om(out.data(), static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny));
    om.noalias() = -2.0F * xm * ym.transpose();
    for (std::size_t i = 0; i < nx; ++i) {
        float* r = out.data() + i * ny;
        for (std::size_t j = 0; j < ny; ++j) {
            r[j] += y_norms[j];
        }
    }
}

std::vector<std::uint32_t> nearest_rows(const float* x, std::size_t nx, const float* y, std::size_t ny,
                                        std::size_t dim, std::vector<double>* min_dist) {
    std::vector<std::uint32_t> best(nx, 0);
    if (min_dist != nullptr) {
        min_dist->assign(nx, 0.0);
    }
    if (nx == 0 || ny == 0) {
        return best;
    }
    const std::vector<double> y_norms = row_norms(y, ny, dim);
    std::vector<double> block;
    for (std::size_t i0 = 0; i0 < nx; i0 += kBlockRows) {
        const std::size_t ni = std::min(kBlockRows, nx - i0);
        const std::vector<double> x_norms = row_norms(x + i0 * dim, ni, dim);
        sq_l2_block(x + i0 * dim, ni, y, ny, dim, x_norms, y_norms, block);
        for (std::size_t i = 0; i < ni; ++i) {
            const double* r = block.data() + i * ny;
            double bd = std::numeric_limits<double>::infinity();
            std::uint32_t bj = 0;
            for (std::size_t j = 0; j < ny; ++j) {
                if (r[j] < bd) {
                    bd = r[j];
                    bj = static_cast<std::uint32_t>(j);
                }
            }
            best[i0 + i] = bj;
            if (min_dist != nullptr) {
                (*min_dist)[i0 + i] = bd;
            }
        }
    }
    return best;
}

} // namespace pimann::detail
