#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace scf {

/// Dense row-major double matrix. The workhorse container for embedding
/// tables, propagation stacks, and feature blocks.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    void fill(double v) { data.assign(data.size(), v); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

/// <A, B>_F = sum_ij A_ij * B_ij. Shapes must match.
double frob_dot(const Matrix& a, const Matrix& b);

/// out += alpha * a (elementwise; shapes must match).
void add_scaled(Matrix& out, const Matrix& a, double alpha);

double row_norm(const Matrix& m, std::size_t i);
double row_dot(const Matrix& m, std::size_t i, std::size_t j);

/// Deterministic RNG used everywhere randomness is needed. Streams for
/// different purposes are derived from one run seed by fixed xor constants
/// so that code paths which skip a consumer leave the others untouched.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

double uniform_real(Rng& rng, double lo, double hi);
double normal(Rng& rng, double mean = 0.0, double stddev = 1.0);
/// Uniform draw from [0, n). n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// In-place Fisher-Yates shuffle driven by the given stream.
template <typename T>
void fisher_yates(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

/// Gaussian init, N(0, scale^2) per entry.
Matrix random_normal_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng);

/// Rows drawn uniformly from the unit sphere.
Matrix random_sphere_rows(std::size_t rows, std::size_t cols, Rng& rng);

/// FNV-1a over the raw bytes of the matrix payload; used by tests to assert
/// a parameter block was untouched.
std::uint64_t byte_hash(const Matrix& m);
std::uint64_t byte_hash(const std::vector<double>& v);

/// Shortest round-trip-exact decimal form of a double ("%.17g"), shared by
/// every text artifact writer.
std::string fmt_g17(double x);

}  // namespace scf
