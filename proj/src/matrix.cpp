#include "scf/matrix.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace scf {

double frob_dot(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("frob_dot: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

void add_scaled(Matrix& out, const Matrix& a, double alpha) {
    if (!out.same_shape(a)) throw std::invalid_argument("add_scaled: shape mismatch");
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += alpha * a.data[i];
}

double row_norm(const Matrix& m, std::size_t i) {
    double s = 0.0;
    const double* r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) s += r[j] * r[j];
    return std::sqrt(s);
}

double row_dot(const Matrix& m, std::size_t i, std::size_t j) {
    double s = 0.0;
    const double* a = m.row(i);
    const double* b = m.row(j);
    for (std::size_t k = 0; k < m.cols; ++k) s += a[k] * b[k];
    return s;
}

double uniform_real(Rng& rng, double lo, double hi) {
    // 53-bit mantissa draw; avoids distribution-object state across calls
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

double normal(Rng& rng, double mean, double stddev) {
    // Box-Muller, one value per call (the spare is discarded to keep the
    // stream position a pure function of the call count)
    double u1 = uniform_real(rng, 0.0, 1.0);
    double u2 = uniform_real(rng, 0.0, 1.0);
    while (u1 <= 1e-300) u1 = uniform_real(rng, 0.0, 1.0);
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + stddev * z;
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    // rejection to kill modulo bias
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % n;
}

Matrix random_normal_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.data) v = normal(rng, 0.0, scale);
    return m;
}

Matrix random_sphere_rows(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m = random_normal_matrix(rows, cols, 1.0, rng);
    for (std::size_t i = 0; i < rows; ++i) {
        double n = row_norm(m, i);
        while (n < 1e-12) {  // astronomically unlikely; redraw the row
            double* r = m.row(i);
            for (std::size_t j = 0; j < cols; ++j) r[j] = normal(rng, 0.0, 1.0);
            n = row_norm(m, i);
        }
        double* r = m.row(i);
        for (std::size_t j = 0; j < cols; ++j) r[j] /= n;
    }
    return m;
}

static std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t byte_hash(const Matrix& m) {
    return fnv1a(reinterpret_cast<const unsigned char*>(m.data.data()),
                 m.data.size() * sizeof(double));
}

std::uint64_t byte_hash(const std::vector<double>& v) {
    return fnv1a(reinterpret_cast<const unsigned char*>(v.data()), v.size() * sizeof(double));
}

std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace scf
