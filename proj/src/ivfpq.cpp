#include "pimann/ivfpq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "kernels.hpp"
#include "pimann/serialization.hpp"

namespace pimann {

namespace {

constexpr std::uint64_t kSeedStride = 0x9E3779B97F4A7C15ULL;

// k-means++ seeding runs on at most this many points per centroid.
constexpr std::size_t kSeedSamplePerCentroid = 8;

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t take, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (take >= n) {
        return idx;
    }
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    return idx;
}

float sq_dist(const float* a, const float* b, std::size_t dim) {
    float s = 0.0F;
    for (std::size_t j = 0; j < dim; ++j) {
        const float d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

Matrix<float> kmeanspp_seed(std::span<const float> points, std::size_t dim, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = points.size() / dim;
    const std::vector<std::size_t> pool = sample_indices(n, std::max(k, kSeedSamplePerCentroid * k), rng);
    Matrix<float> c(k, dim);
    std::vector<double> mind(pool.size(), std::numeric_limits<double>::infinity());
    std::uniform_int_distribution<std::size_t> first(0, pool.size() - 1);
    std::size_t chosen = pool[first(rng)];
    for (std::size_t ci = 0; ci < k; ++ci) {
        std::copy_n(points.data() + chosen * dim, dim, c.row(ci).data());
        double total = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const double d = sq_dist(points.data() + pool[i] * dim, c.row(ci).data(), dim);
            mind[i] = std::min(mind[i], d);
            total += mind[i];
        }
        if (ci + 1 == k) {
            break;
        }
        if (total <= 0.0) {
            // Every pooled point coincides with a chosen centroid.
            chosen = pool[first(rng)];
            continue;
        }
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng);
        std::size_t pick = pool.size() - 1;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            r -= mind[i];
            if (r < 0.0 && mind[i] > 0.0) {
                pick = i;
                break;
            }
        }
        while (mind[pick] <= 0.0 && pick > 0) {
            --pick;
        }
        chosen = pool[pick];
    }
    return c;
}

// Assignment step in single precision; ties to the lower centroid.
void assign_f32(std::span<const float> points, std::size_t dim, const Matrix<float>& c,
                std::vector<std::uint32_t>& assign, std::vector<float>& dist) {
    const std::size_t n = points.size() / dim;
    assign.resize(n);
    dist.resize(n);
    std::vector<float> cn(c.rows);
    for (std::size_t j = 0; j < c.rows; ++j) {
        float s = 0.0F;
        for (float v : c.row(j)) {
            s += v * v;
        }
        cn[j] = s;
    }
    constexpr std::size_t kBlock = 512;
    std::vector<float> block;
    for (std::size_t i0 = 0; i0 < n; i0 += kBlock) {
        const std::size_t ni = std::min(kBlock, n - i0);
        detail::sq_l2_block_f32(points.data() + i0 * dim, ni, c.data.data(), c.rows, dim, cn, block);
        for (std::size_t i = 0; i < ni; ++i) {
            const float* r = block.data() + i * c.rows;
            float bd = std::numeric_limits<float>::infinity();
            std::uint32_t bj = 0;
            for (std::size_t j = 0; j < c.rows; ++j) {
                if (r[j] < bd) {
                    bd = r[j];
                    bj = static_cast<std::uint32_t>(j);
                }
            }
            assign[i0 + i] = bj;
            dist[i0 + i] = sq_dist(points.data() + (i0 + i) * dim, c.row(bj).data(), dim);
        }
    }
}

std::vector<float> to_float(const Matrix<std::int32_t>& m) {
    return {m.data.begin(), m.data.end()};
}

std::vector<InvertedList> encode_assigned(const Matrix<std::int32_t>& vectors, const std::vector<std::uint32_t>& assign,
                                          const Matrix<std::int32_t>& centroids, const PqCodebooks& books) {
    const std::size_t n = vectors.rows;
    const std::size_t dim = vectors.cols;
    require(books.M * books.sub_dim == dim, "codebook shape does not match vector dimension");
    // Residuals split per subspace, then nearest codeword per slice.
    std::vector<std::uint16_t> codes(n * books.M);
    std::vector<float> slice(n * books.sub_dim);
    std::vector<float> words(books.CB * books.sub_dim);
    for (std::size_t m = 0; m < books.M; ++m) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto v = vectors.row(i);
            const auto c = centroids.row(assign[i]);
            for (std::size_t t = 0; t < books.sub_dim; ++t) {
                const std::size_t col = m * books.sub_dim + t;
                slice[i * books.sub_dim + t] = static_cast<float>(v[col] - c[col]);
            }
        }
        for (std::size_t j = 0; j < books.CB; ++j) {
            auto e = books.entry(m, j);
            std::copy(e.begin(), e.end(), words.begin() + static_cast<std::ptrdiff_t>(j * books.sub_dim));
        }
        const auto best = detail::nearest_rows(slice.data(), n, words.data(), books.CB, books.sub_dim);
        for (std::size_t i = 0; i < n; ++i) {
            codes[i * books.M + m] = static_cast<std::uint16_t>(best[i]);
        }
    }
    std::vector<InvertedList> lists(centroids.rows);
    for (std::size_t i = 0; i < n; ++i) {
        auto& l = lists[assign[i]];
        l.ids.push_back(static_cast<std::uint32_t>(i));
        l.codes.insert(l.codes.end(), codes.begin() + static_cast<std::ptrdiff_t>(i * books.M),
                       codes.begin() + static_cast<std::ptrdiff_t>((i + 1) * books.M));
    }
    return lists;
}

std::vector<std::uint32_t> assign_exact(const Matrix<std::int32_t>& vectors, const Matrix<std::int32_t>& centroids) {
    const std::vector<float> v = to_float(vectors);
    const std::vector<float> c = to_float(centroids);
    return detail::nearest_rows(v.data(), vectors.rows, c.data(), centroids.rows, vectors.cols);
}

template <typename T>
void write_array(const std::filesystem::path& path, const std::vector<T>& v) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
}

template <typename T>
std::vector<T> read_array(const std::filesystem::path& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MissingArtifactError("missing index array " + path.string());
    }
    std::vector<T> v(expected);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(expected * sizeof(T)));
    if (static_cast<std::size_t>(in.gcount()) != expected * sizeof(T) || in.peek() != EOF) {
        throw FormatError("index array has unexpected size: " + path.string());
    }
    return v;
}

} // namespace

int address_bits_for(std::size_t cb) {
    const int need = ceil_log2(cb);
    return need <= 8 ? 8 : 16;
}

void IndexConfig::validate(std::size_t dim) const {
    require(nlist >= 1, "nlist must be >= 1");
    require(M >= 1 && dim % M == 0, "M must divide the dimension");
    require(CB >= 1 && CB <= 65536, "CB must be in [1, 65536]");
    require(P >= 1 && P <= nlist, "P must be in [1, nlist]");
    require(K >= 1, "K must be >= 1");
    require(bits.address >= ceil_log2(CB), "B_a too narrow to index CB entries");
    require(kmeans_iters >= 1, "k-means needs at least one iteration");
}

std::vector<std::int32_t> IvfPqIndex::prepare(std::span<const float> v) const {
    std::vector<std::int32_t> out(v.size());
    if (!pre_transform) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            out[i] = static_cast<std::int32_t>(std::lround(v[i]));
        }
        return out;
    }
    const auto& q = *pre_transform;
    for (std::size_t i = 0; i < q.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < q.cols; ++j) {
            s += q.at(i, j) * v[j];
        }
        out[i] = static_cast<std::int32_t>(std::lround(s));
    }
    return out;
}

std::vector<std::int32_t> IvfPqIndex::decode(std::size_t cluster, std::size_t i) const {
    auto c = centroids.row(cluster);
    std::vector<std::int32_t> out(c.begin(), c.end());
    auto code = lists[cluster].code(i, codebooks.M);
    for (std::size_t m = 0; m < codebooks.M; ++m) {
        auto e = codebooks.entry(m, code[m]);
        for (std::size_t t = 0; t < codebooks.sub_dim; ++t) {
            out[m * codebooks.sub_dim + t] += e[t];
        }
    }
    return out;
}

std::size_t IvfPqIndex::max_list_size() const {
    std::size_t m = 0;
    for (const auto& l : lists) {
        m = std::max(m, l.size());
    }
    return m;
}

Matrix<float> train_kmeans(std::span<const float> points, std::size_t dim, std::size_t k, int iters,
                           std::uint64_t seed) {
    require(dim > 0 && points.size() % dim == 0, "k-means input shape mismatch");
    const std::size_t n = points.size() / dim;
    require(k >= 1 && k <= n, "k-means needs 1 <= n_centroids <= point count");
    require(iters >= 1, "k-means needs at least one iteration");
    std::mt19937_64 rng(seed);
    Matrix<float> c = kmeanspp_seed(points, dim, k, rng);

    std::vector<std::uint32_t> assign;
    std::vector<float> dist;
    std::vector<double> sums(k * dim);
    std::vector<std::size_t> counts(k);
    for (int it = 0; it < iters; ++it) {
        assign_f32(points, dim, c, assign, dist);
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t a = assign[i];
            ++counts[a];
            const float* p = points.data() + i * dim;
            double* s = sums.data() + a * dim;
            for (std::size_t j = 0; j < dim; ++j) {
                s[j] += p[j];
            }
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) {
                continue;
            }
            for (std::size_t t = 0; t < dim; ++t) {
                c.at(j, t) = static_cast<float>(sums[j * dim + t] / static_cast<double>(counts[j]));
            }
        }
        // Empty clusters take the farthest member of the largest cluster.
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] != 0) {
                continue;
            }
            const std::size_t largest =
                static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
            std::size_t far = n;
            float far_d = -1.0F;
            for (std::size_t i = 0; i < n; ++i) {
                if (assign[i] == largest && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            if (far == n || counts[largest] <= 1) {
                continue;
            }
            std::copy_n(points.data() + far * dim, dim, c.row(j).data());
            assign[far] = static_cast<std::uint32_t>(j);
            dist[far] = 0.0F;
            --counts[largest];
            counts[j] = 1;
        }
    }
    return c;
}

std::vector<Matrix<float>> train_pq(std::span<const float> residuals, std::size_t dim, std::size_t M, std::size_t CB,
                                    int iters, std::uint64_t seed) {
    require(dim > 0 && residuals.size() % dim == 0, "PQ input shape mismatch");
    require(M >= 1 && dim % M == 0, "M must divide the residual dimension");
    const std::size_t n = residuals.size() / dim;
    require(CB >= 1 && CB <= n, "CB exceeds the residual count");
    const std::size_t sub = dim / M;
    std::vector<Matrix<float>> tables;
    tables.reserve(M);
    std::vector<float> slice(n * sub);
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(residuals.data() + i * dim + m * sub, sub, slice.data() + i * sub);
        }
        tables.push_back(train_kmeans(slice, sub, CB, iters, seed + m * kSeedStride));
    }
    return tables;
}

Matrix<std::int32_t> round_matrix(const Matrix<float>& m) {
    Matrix<std::int32_t> out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        out.data[i] = static_cast<std::int32_t>(std::lround(m.data[i]));
    }
    return out;
}

PqCodebooks round_codebooks(const std::vector<Matrix<float>>& tables) {
    PqCodebooks books;
    books.M = tables.size();
    require(books.M > 0, "no codebook tables");
    books.CB = tables.front().rows;
    books.sub_dim = tables.front().cols;
    books.entries.reserve(books.M * books.CB * books.sub_dim);
    for (const auto& t : tables) {
        for (float v : t.data) {
            books.entries.push_back(static_cast<std::int32_t>(std::lround(v)));
        }
    }
    return books;
}

std::vector<InvertedList> encode_dataset(const Matrix<std::int32_t>& vectors, const Matrix<std::int32_t>& centroids,
                                         const PqCodebooks& codebooks) {
    require(vectors.cols == centroids.cols, "vector and centroid dimensions differ");
    require(centroids.rows > 0, "no centroids");
    return encode_assigned(vectors, assign_exact(vectors, centroids), centroids, codebooks);
}

Matrix<std::int32_t> prepare_all(const VectorSet& v, const std::optional<Matrix<double>>& transform) {
    Matrix<std::int32_t> out(v.count, v.dim);
    if (!transform) {
        require(v.integral(), "the engine needs 8- or 16-bit integer data; quantize float data first");
        for (std::size_t i = 0; i < v.data.size(); ++i) {
            out.data[i] = static_cast<std::int32_t>(std::lround(v.data[i]));
        }
        return out;
    }
    const Matrix<float> t = apply_transform(*transform, v);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        out.data[i] = static_cast<std::int32_t>(std::lround(t.data[i]));
    }
    return out;
}

IvfPqIndex build_index(const IndexConfig& config, const VectorSet& base, std::uint64_t seed,
                       std::optional<Matrix<double>> pre_transform) {
    config.validate(base.dim);
    require(config.nlist <= base.count, "nlist exceeds the base count");
    if (pre_transform) {
        require(pre_transform->rows == base.dim && pre_transform->cols == base.dim, "pre-transform must be D x D");
        require(is_orthonormal(*pre_transform), "pre-transform is not orthonormal");
    }
    const Matrix<std::int32_t> prepared = prepare_all(base, pre_transform);
    std::mt19937_64 rng(seed);
    const std::size_t n_train =
        config.coarse_train_size != 0 ? config.coarse_train_size : std::max<std::size_t>(32 * config.nlist, 4096);
    const auto pick = sample_indices(prepared.rows, std::min(n_train, prepared.rows), rng);
    std::vector<float> train(pick.size() * base.dim);
    for (std::size_t i = 0; i < pick.size(); ++i) {
        auto r = prepared.row(pick[i]);
        std::copy(r.begin(), r.end(), train.begin() + static_cast<std::ptrdiff_t>(i * base.dim));
    }
    const Matrix<std::int32_t> centroids =
        round_matrix(train_kmeans(train, base.dim, config.nlist, config.kmeans_iters, seed));
    return build_index_with_centroids(config, base, seed, centroids, std::move(pre_transform));
}

IvfPqIndex build_index_with_centroids(const IndexConfig& config, const VectorSet& base, std::uint64_t seed,
                                      const Matrix<std::int32_t>& centroids,
                                      std::optional<Matrix<double>> pre_transform) {
    config.validate(base.dim);
    require(centroids.rows == config.nlist && centroids.cols == base.dim, "centroid matrix does not match config");
    const Matrix<std::int32_t> prepared = prepare_all(base, pre_transform);
    const std::vector<std::uint32_t> assign = assign_exact(prepared, centroids);

    std::mt19937_64 rng(seed + 1);
    const std::size_t n_train =
        config.pq_train_size != 0 ? config.pq_train_size : std::max<std::size_t>(64 * config.CB, 10000);
    const auto pick = sample_indices(prepared.rows, std::min(n_train, prepared.rows), rng);
    require(config.CB <= pick.size(), "CB exceeds the training sample");
    std::vector<float> residuals(pick.size() * base.dim);
    for (std::size_t i = 0; i < pick.size(); ++i) {
        auto v = prepared.row(pick[i]);
        auto c = centroids.row(assign[pick[i]]);
        for (std::size_t t = 0; t < base.dim; ++t) {
            residuals[i * base.dim + t] = static_cast<float>(v[t] - c[t]);
        }
    }
    IvfPqIndex index;
    index.config = config;
    index.dim = base.dim;
    index.count = base.count;
    index.seed = seed;
    index.centroids = centroids;
    index.codebooks = round_codebooks(train_pq(residuals, base.dim, config.M, config.CB, config.kmeans_iters, seed + 2));
    index.lists = encode_assigned(prepared, assign, centroids, index.codebooks);
    index.pre_transform = std::move(pre_transform);
    return index;
}

bool is_orthonormal(const Matrix<double>& q, double tol) {
    if (q.rows != q.cols) {
        return false;
    }
    for (std::size_t i = 0; i < q.rows; ++i) {
        for (std::size_t j = 0; j < q.rows; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < q.cols; ++t) {
                s += q.at(i, t) * q.at(j, t);
            }
            if (std::abs(s - (i == j ? 1.0 : 0.0)) > tol) {
                return false;
            }
        }
    }
    return true;
}

Matrix<float> apply_transform(const Matrix<double>& q, const VectorSet& v) {
    require(q.cols == v.dim, "transform width does not match vector dimension");
    Matrix<float> out(v.count, q.rows);
    for (std::size_t n = 0; n < v.count; ++n) {
        auto x = v.row(n);
        for (std::size_t i = 0; i < q.rows; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < q.cols; ++j) {
                s += q.at(i, j) * x[j];
            }
            out.at(n, i) = static_cast<float>(s);
        }
    }
    return out;
}

void save_index(const IvfPqIndex& index, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::uint64_t> offsets(index.lists.size() + 1, 0);
    std::vector<std::uint32_t> ids;
    std::vector<std::uint16_t> codes;
    ids.reserve(index.count);
    codes.reserve(index.count * index.codebooks.M);
    for (std::size_t c = 0; c < index.lists.size(); ++c) {
        const auto& l = index.lists[c];
        ids.insert(ids.end(), l.ids.begin(), l.ids.end());
        codes.insert(codes.end(), l.codes.begin(), l.codes.end());
        offsets[c + 1] = offsets[c] + l.size();
    }
    write_array(dir / "centroids.i32", index.centroids.data);
    write_array(dir / "codebooks.i32", index.codebooks.entries);
    write_array(dir / "list_offsets.u64", offsets);
    write_array(dir / "list_ids.u32", ids);
    write_array(dir / "list_codes.u16", codes);
    if (index.pre_transform) {
        write_array(dir / "transform.f64", index.pre_transform->data);
    }
    nlohmann::json meta = {
        {"format", "pimann-ivfpq"},
        {"version", 1},
        {"byte_order", "little"},
        {"config", index.config},
        {"dim", index.dim},
        {"count", index.count},
        {"seed", index.seed},
        {"sub_dim", index.codebooks.sub_dim},
        {"arrays",
         {
             {"centroids.i32", {{"dtype", "int32"}, {"shape", {index.centroids.rows, index.centroids.cols}}}},
             {"codebooks.i32",
              {{"dtype", "int32"}, {"shape", {index.codebooks.M, index.codebooks.CB, index.codebooks.sub_dim}}}},
             {"list_offsets.u64", {{"dtype", "uint64"}, {"shape", {offsets.size()}}}},
             {"list_ids.u32", {{"dtype", "uint32"}, {"shape", {ids.size()}}}},
             {"list_codes.u16", {{"dtype", "uint16"}, {"shape", {ids.size(), index.codebooks.M}}}},
         }},
        {"has_transform", index.pre_transform.has_value()},
    };
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << '\n';
    if (!out) {
        throw FormatError("cannot write index metadata in " + dir.string());
    }
}

IvfPqIndex load_index(const std::filesystem::path& dir) {
    std::ifstream in(dir / "meta.json");
    if (!in) {
        throw MissingArtifactError("no index at " + dir.string());
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad index metadata: ") + e.what());
    }
    IvfPqIndex index;
    index.config = meta.at("config").get<IndexConfig>();
    index.dim = meta.at("dim").get<std::size_t>();
    index.count = meta.at("count").get<std::size_t>();
    index.seed = meta.at("seed").get<std::uint64_t>();
    const std::size_t nlist = index.config.nlist;
    index.centroids.rows = nlist;
    index.centroids.cols = index.dim;
    index.centroids.data = read_array<std::int32_t>(dir / "centroids.i32", nlist * index.dim);
    index.codebooks.M = index.config.M;
    index.codebooks.CB = index.config.CB;
    index.codebooks.sub_dim = meta.at("sub_dim").get<std::size_t>();
    index.codebooks.entries =
        read_array<std::int32_t>(dir / "codebooks.i32", index.config.M * index.config.CB * index.codebooks.sub_dim);
    const auto offsets = read_array<std::uint64_t>(dir / "list_offsets.u64", nlist + 1);
    if (offsets.back() != index.count) {
        throw FormatError("list offsets do not cover the base count");
    }
    const auto ids = read_array<std::uint32_t>(dir / "list_ids.u32", index.count);
    const auto codes = read_array<std::uint16_t>(dir / "list_codes.u16", index.count * index.config.M);
    index.lists.resize(nlist);
    for (std::size_t c = 0; c < nlist; ++c) {
        auto& l = index.lists[c];
        l.ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(offsets[c]),
                     ids.begin() + static_cast<std::ptrdiff_t>(offsets[c + 1]));
        l.codes.assign(codes.begin() + static_cast<std::ptrdiff_t>(offsets[c] * index.config.M),
                       codes.begin() + static_cast<std::ptrdiff_t>(offsets[c + 1] * index.config.M));
    }
    if (meta.value("has_transform", false)) {
        Matrix<double> q;
        q.rows = q.cols = index.dim;
        q.data = read_array<double>(dir / "transform.f64", index.dim * index.dim);
        index.pre_transform = std::move(q);
    }
    return index;
}

} // namespace pimann
