#include "pimann/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <unordered_set>
#include <utility>

#include "kernels.hpp"

namespace pimann {

namespace {

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::int32_t read_i32(const char* p) {
    std::int32_t v = 0;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

void put_i32(std::ofstream& out, std::int32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

// Records of [int32 dim][dim x elem]; returns dim and raw payload pointers.
template <typename Elem>
std::size_t parse_records(const std::vector<char>& bytes, const std::filesystem::path& path,
                          std::vector<const char*>& payloads) {
    if (bytes.size() < 4) {
        if (bytes.empty()) {
            return 0;
        }
        throw FormatError("truncated file " + path.string());
    }
    const std::int32_t dim = read_i32(bytes.data());
    if (dim <= 0) {
        throw FormatError("non-positive dimension in " + path.string());
    }
    const std::size_t record = 4 + static_cast<std::size_t>(dim) * sizeof(Elem);
    std::size_t off = 0;
    while (off < bytes.size()) {
        if (off + record > bytes.size()) {
            throw FormatError("truncated file " + path.string());
        }
        if (read_i32(bytes.data() + off) != dim) {
            throw FormatError("inconsistent dimension in " + path.string());
        }
        payloads.push_back(bytes.data() + off + 4);
        off += record;
    }
    return static_cast<std::size_t>(dim);
}

void check_output(std::ofstream& out, const std::filesystem::path& path) {
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
}

} // namespace

VectorFormat parse_vector_format(std::string_view name) {
    if (name == "fvecs") {
        return VectorFormat::fvecs;
    }
    if (name == "bvecs") {
        return VectorFormat::bvecs;
    }
    if (name == "raw_u8" || name == "u8bin") {
        return VectorFormat::raw_u8;
    }
    throw ConfigError("unknown vector format: " + std::string(name));
}

void VectorSet::validate() const {
    require(dim > 0, "vector set dimension must be positive");
    require(elem_bits == 8 || elem_bits == 16 || elem_bits == 32, "elem_bits must be 8, 16 or 32");
    require(data.size() == count * dim, "vector set data length does not match count x dim");
    if (integral()) {
        const float hi = static_cast<float>((1U << elem_bits) - 1U);
        for (float v : data) {
            require(v >= 0.0F && v <= hi && std::floor(v) == v,
                    "value not representable in " + std::to_string(elem_bits) + " bits");
        }
    }
}

void NeighborLists::validate() const {
    require(k > 0, "neighbour list width must be positive");
    require(ids.size() == count * k && distances.size() == count * k, "neighbour list shape mismatch");
    for (std::size_t q = 0; q < count; ++q) {
        auto d = dist_row(q);
        require(std::is_sorted(d.begin(), d.end()), "neighbour distances not ascending");
        std::unordered_set<std::int32_t> seen;
        for (std::int32_t id : ids_row(q)) {
            require(id < 0 || seen.insert(id).second, "duplicate id in neighbour row");
        }
    }
}

VectorSet load_vectors(const std::filesystem::path& path, VectorFormat format, std::size_t raw_dim) {
    const std::vector<char> bytes = read_file(path);
    VectorSet out;
    switch (format) {
    case VectorFormat::fvecs: {
        std::vector<const char*> payloads;
        out.dim = parse_records<float>(bytes, path, payloads);
        out.elem_bits = 32;
        out.count = payloads.size();
        out.data.resize(out.count * out.dim);
        for (std::size_t i = 0; i < out.count; ++i) {
            std::memcpy(out.data.data() + i * out.dim, payloads[i], out.dim * sizeof(float));
        }
        break;
    }
    case VectorFormat::bvecs: {
        std::vector<const char*> payloads;
        out.dim = parse_records<std::uint8_t>(bytes, path, payloads);
        out.elem_bits = 8;
        out.count = payloads.size();
        out.data.resize(out.count * out.dim);
        for (std::size_t i = 0; i < out.count; ++i) {
            const auto* p = reinterpret_cast<const std::uint8_t*>(payloads[i]);
            std::copy(p, p + out.dim, out.data.begin() + static_cast<std::ptrdiff_t>(i * out.dim));
        }
        break;
    }
    case VectorFormat::raw_u8: {
        if (raw_dim == 0) {
            throw FormatError("raw_u8 requires a positive dimension");
        }
        if (bytes.size() % raw_dim != 0) {
            throw FormatError("truncated file " + path.string());
        }
        out.dim = raw_dim;
        out.elem_bits = 8;
        out.count = bytes.size() / raw_dim;
        out.data.resize(bytes.size());
        for (std::size_t i = 0; i < bytes.size(); ++i) {
            out.data[i] = static_cast<float>(static_cast<std::uint8_t>(bytes[i]));
        }
        break;
    }
    }
    if (out.dim == 0) {
        throw FormatError("empty vector file " + path.string());
    }
    return out;
}

void write_vectors(const std::filesystem::path& path, const VectorSet& vectors, VectorFormat format) {
    vectors.validate();
    if (format != VectorFormat::fvecs) {
        require(vectors.elem_bits == 8, "bvecs/raw_u8 output needs 8-bit data");
    }
    std::ofstream out(path, std::ios::binary);
    check_output(out, path);
    const auto dim = static_cast<std::int32_t>(vectors.dim);
    std::vector<std::uint8_t> buf(vectors.dim);
    for (std::size_t i = 0; i < vectors.count; ++i) {
        auto r = vectors.row(i);
        if (format != VectorFormat::raw_u8) {
            put_i32(out, dim);
        }
        if (format == VectorFormat::fvecs) {
            out.write(reinterpret_cast<const char*>(r.data()), static_cast<std::streamsize>(r.size_bytes()));
        } else {
            std::transform(r.begin(), r.end(), buf.begin(), [](float v) { return static_cast<std::uint8_t>(v); });
            out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        }
    }
    check_output(out, path);
}

void write_neighbors(const std::filesystem::path& ids_path, const std::filesystem::path& dist_path,
                     const NeighborLists& lists) {
    std::ofstream ids(ids_path, std::ios::binary);
    std::ofstream dist(dist_path, std::ios::binary);
    check_output(ids, ids_path);
    check_output(dist, dist_path);
    const auto k = static_cast<std::int32_t>(lists.k);
    std::vector<float> buf(lists.k);
    for (std::size_t q = 0; q < lists.count; ++q) {
        put_i32(ids, k);
        auto r = lists.ids_row(q);
        ids.write(reinterpret_cast<const char*>(r.data()), static_cast<std::streamsize>(r.size_bytes()));
        put_i32(dist, k);
        auto d = lists.dist_row(q);
        std::transform(d.begin(), d.end(), buf.begin(), [](double v) { return static_cast<float>(v); });
        dist.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    }
    check_output(ids, ids_path);
    check_output(dist, dist_path);
}

NeighborLists load_neighbors(const std::filesystem::path& ids_path, const std::filesystem::path& dist_path) {
    const std::vector<char> id_bytes = read_file(ids_path);
    const std::vector<char> dist_bytes = read_file(dist_path);
    std::vector<const char*> id_rows;
    std::vector<const char*> dist_rows;
    const std::size_t k = parse_records<std::int32_t>(id_bytes, ids_path, id_rows);
    const std::size_t k2 = parse_records<float>(dist_bytes, dist_path, dist_rows);
    if (k != k2 || id_rows.size() != dist_rows.size()) {
        throw FormatError("neighbour id and distance files disagree");
    }
    NeighborLists out(id_rows.size(), k);
    for (std::size_t q = 0; q < out.count; ++q) {
        std::memcpy(out.ids_row(q).data(), id_rows[q], k * 4);
        std::vector<float> tmp(k);
        std::memcpy(tmp.data(), dist_rows[q], k * 4);
        std::copy(tmp.begin(), tmp.end(), out.dist_row(q).begin());
    }
    return out;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    require(spec.n > 0 && spec.d > 0, "synthetic set needs n > 0 and d > 0");
    require(spec.n_blobs > 0, "synthetic set needs at least one blob");
    require(spec.skew >= 0.0, "Zipf exponent must be non-negative");
    const std::size_t rank = std::min(spec.intrinsic_dim, spec.d);

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> center_dist(spec.center_lo, spec.center_hi);

    SyntheticData out;
    out.blob_centers = Matrix<float>(spec.n_blobs, spec.d);
    // Orthonormal principal directions per blob, Gram-Schmidt on Gaussian draws.
    std::vector<std::vector<double>> bases(spec.n_blobs, std::vector<double>(rank * spec.d));
    for (std::size_t b = 0; b < spec.n_blobs; ++b) {
        for (std::size_t j = 0; j < spec.d; ++j) {
            out.blob_centers.at(b, j) = static_cast<float>(center_dist(rng));
        }
        auto& basis = bases[b];
        for (std::size_t r = 0; r < rank; ++r) {
            double* u = basis.data() + r * spec.d;
            for (std::size_t j = 0; j < spec.d; ++j) {
                u[j] = gauss(rng);
            }
            for (std::size_t p = 0; p < r; ++p) {
                const double* v = basis.data() + p * spec.d;
                double dot = 0.0;
                for (std::size_t j = 0; j < spec.d; ++j) {
                    dot += u[j] * v[j];
                }
                for (std::size_t j = 0; j < spec.d; ++j) {
                    u[j] -= dot * v[j];
                }
            }
            double norm = 0.0;
            for (std::size_t j = 0; j < spec.d; ++j) {
                norm += u[j] * u[j];
            }
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < spec.d; ++j) {
                u[j] /= norm;
            }
        }
    }

    std::vector<double> coeff(rank);
    auto draw_point = [&](std::size_t blob, std::span<float> dst) {
        for (auto& c : coeff) {
            c = gauss(rng) * spec.blob_sigma;
        }
        const auto& basis = bases[blob];
        for (std::size_t j = 0; j < spec.d; ++j) {
            double v = out.blob_centers.at(blob, j) + gauss(rng) * spec.noise_sigma;
            for (std::size_t r = 0; r < rank; ++r) {
                v += coeff[r] * basis[r * spec.d + j];
            }
            dst[j] = static_cast<float>(std::clamp(std::round(v), 0.0, 255.0));
        }
    };

    out.base = VectorSet(spec.n, spec.d, 8);
    out.base_blob.resize(spec.n);
    std::uniform_int_distribution<std::size_t> uniform_blob(0, spec.n_blobs - 1);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const std::size_t b = uniform_blob(rng);
        out.base_blob[i] = static_cast<std::uint32_t>(b);
        draw_point(b, out.base.row(i));
    }

    std::vector<double> weights(spec.n_blobs);
    for (std::size_t b = 0; b < spec.n_blobs; ++b) {
        weights[b] = 1.0 / std::pow(static_cast<double>(b + 1), spec.skew);
    }
    std::discrete_distribution<std::size_t> zipf(weights.begin(), weights.end());
    out.queries = VectorSet(spec.n_queries, spec.d, 8);
    out.query_blob.resize(spec.n_queries);
    for (std::size_t i = 0; i < spec.n_queries; ++i) {
        const std::size_t b = zipf(rng);
        out.query_blob[i] = static_cast<std::uint32_t>(b);
        draw_point(b, out.queries.row(i));
    }
    return out;
}

NeighborLists brute_force_ground_truth(const VectorSet& base, const VectorSet& queries, std::size_t k) {
    require(base.dim == queries.dim, "dimension mismatch between base and queries");
    require(k >= 1 && k <= base.count, "k must be in [1, base count]");
    NeighborLists out(queries.count, k);
    const std::vector<double> base_norms = detail::row_norms(base.data.data(), base.count, base.dim);
    const bool exact_gemm = base.integral() && queries.integral();
    constexpr std::size_t kBlock = 32;
    std::vector<double> block;
    std::vector<std::pair<double, std::int32_t>> cand(base.count);
    for (std::size_t q0 = 0; q0 < queries.count; q0 += kBlock) {
        const std::size_t nq = std::min(kBlock, queries.count - q0);
        const float* qp = queries.data.data() + q0 * queries.dim;
        if (exact_gemm) {
            const std::vector<double> qn = detail::row_norms(qp, nq, queries.dim);
            detail::sq_l2_block(qp, nq, base.data.data(), base.count, base.dim, qn, base_norms, block);
        } else {
            block.resize(nq * base.count);
            for (std::size_t i = 0; i < nq; ++i) {
                auto qr = queries.row(q0 + i);
                for (std::size_t j = 0; j < base.count; ++j) {
                    auto br = base.row(j);
                    double s = 0.0;
                    for (std::size_t t = 0; t < base.dim; ++t) {
                        const double diff = static_cast<double>(qr[t]) - static_cast<double>(br[t]);
                        s += diff * diff;
                    }
                    block[i * base.count + j] = s;
                }
            }
        }
        for (std::size_t i = 0; i < nq; ++i) {
            const double* r = block.data() + i * base.count;
            for (std::size_t j = 0; j < base.count; ++j) {
                cand[j] = {r[j], static_cast<std::int32_t>(j)};
            }
            std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
            std::sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k));
            auto ids = out.ids_row(q0 + i);
            auto dist = out.dist_row(q0 + i);
            for (std::size_t t = 0; t < k; ++t) {
                ids[t] = cand[t].second;
                dist[t] = cand[t].first;
            }
        }
    }
    return out;
}

double recall_at_k(const NeighborLists& results, const NeighborLists& truth, std::size_t k) {
    require(results.count == truth.count, "result and truth cover different query counts");
    require(k >= 1 && k <= results.k && k <= truth.k, "list width smaller than k");
    if (results.count == 0) {
        return 1.0;
    }
    std::size_t hits = 0;
    std::vector<std::int32_t> t;
    for (std::size_t q = 0; q < results.count; ++q) {
        auto tr = truth.ids_row(q);
        t.assign(tr.begin(), tr.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(t.begin(), t.end());
        auto rr = results.ids_row(q);
        for (std::size_t i = 0; i < k; ++i) {
            if (rr[i] >= 0 && std::binary_search(t.begin(), t.end(), rr[i])) {
                ++hits;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(results.count * k);
}

VectorSet slice_rows(const VectorSet& v, std::size_t first, std::size_t n) {
    require(first + n <= v.count, "row slice out of range");
    VectorSet out(n, v.dim, v.elem_bits);
    std::copy(v.data.begin() + static_cast<std::ptrdiff_t>(first * v.dim),
              v.data.begin() + static_cast<std::ptrdiff_t>((first + n) * v.dim), out.data.begin());
    return out;
}

VectorSet quantize_to_u8(const VectorSet& v) {
    VectorSet out(v.count, v.dim, 8);
    if (v.data.empty()) {
        return out;
    }
    const auto [lo_it, hi_it] = std::minmax_element(v.data.begin(), v.data.end());
    const double lo = *lo_it;
    const double span = std::max(1e-30, static_cast<double>(*hi_it) - lo);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        out.data[i] = static_cast<float>(std::clamp(std::round((v.data[i] - lo) / span * 255.0), 0.0, 255.0));
    }
    return out;
}

} // namespace pimann
