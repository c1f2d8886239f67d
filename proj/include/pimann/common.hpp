#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pimann {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Malformed or truncated input files.
class FormatError : public Error {
  public:
    using Error::Error;
};

// Parameters that violate a documented precondition.
class ConfigError : public Error {
  public:
    using Error::Error;
};

// A pipeline stage was invoked before the artifact it depends on exists.
class MissingArtifactError : public Error {
  public:
    using Error::Error;
};

// No design point satisfied the accuracy constraint.
class InfeasibleError : public Error {
  public:
    using Error::Error;
};

// Capacity limits (MRAM, WRAM) cannot be honoured.
class CapacityError : public Error {
  public:
    using Error::Error;
};

// Dense row-major matrix.
template <typename T>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

    std::span<T> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const T> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    T& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool operator==(const Matrix&) const = default;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw ConfigError(message);
    }
}

// Smallest b with 2^b >= n (0 for n <= 1).
inline int ceil_log2(std::uint64_t n) {
    int b = 0;
    while ((std::uint64_t{1} << b) < n) {
        ++b;
    }
    return b;
}

} // namespace pimann
