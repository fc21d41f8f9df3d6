#include "scf/adapters.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace scf {

namespace {

// out = A * B
Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            double v = ai[k];
            if (v == 0.0) continue;
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) oi[j] += v * bk[j];
        }
    }
    return out;
}

// out = A^T * B
Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_at: row counts differ");
    Matrix out(a.cols, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        const double* bi = b.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            double v = ai[k];
            if (v == 0.0) continue;
            double* ok = out.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) ok[j] += v * bi[j];
        }
    }
    return out;
}

// out = A * B^T
Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_bt: column counts differ");
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
            oi[j] = acc;
        }
    }
    return out;
}

void put_u64(std::ofstream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::ifstream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw std::runtime_error("whitening checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

WhiteningTransform fit_whitening(const Matrix& features, std::size_t d) {
    std::size_t M = features.rows, F = features.cols;
    if (d == 0) throw std::invalid_argument("fit_whitening: d must be positive");
    if (M <= d)
        throw std::invalid_argument("fit_whitening: need more rows than output dimensions (" +
                                    std::to_string(M) + " rows for d = " + std::to_string(d) + ")");
    if (F < d)
        throw std::invalid_argument("fit_whitening: feature dimension " + std::to_string(F) +
                                    " is below d = " + std::to_string(d));

    WhiteningTransform t;
    t.mean.assign(F, 0.0);
    for (std::size_t i = 0; i < M; ++i) {
        const double* r = features.row(i);
        for (std::size_t j = 0; j < F; ++j) t.mean[j] += r[j];
    }
    for (std::size_t j = 0; j < F; ++j) t.mean[j] /= static_cast<double>(M);

    Eigen::MatrixXd X(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(F));
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < F; ++j)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                features(i, j) - t.mean[j];

    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double smax = sv.size() > 0 ? sv(0) : 0.0;
    double rank_tol = std::max(M, F) * 2.220446049250313e-16 * smax;
    std::size_t rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv(k) > rank_tol) ++rank;
    if (rank < d)
        throw std::runtime_error("fit_whitening: centered features have rank " +
                                 std::to_string(rank) + ", below the requested dimension " +
                                 std::to_string(d));

    double scale_num = std::sqrt(static_cast<double>(M - 1));
    t.projection = Matrix(F, d);
    const auto& V = svd.matrixV();  // F x min(M,F), column k = direction k
    for (std::size_t j = 0; j < F; ++j)
        for (std::size_t k = 0; k < d; ++k)
            t.projection(j, k) = V(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) *
                                 (scale_num / sv(static_cast<Eigen::Index>(k)));
    return t;
}

Matrix apply_whitening(const WhiteningTransform& t, const Matrix& features) {
    if (features.cols != t.mean.size())
        throw std::invalid_argument("apply_whitening: feature dimension mismatch");
    Matrix centered(features.rows, features.cols);
    for (std::size_t i = 0; i < features.rows; ++i)
        for (std::size_t j = 0; j < features.cols; ++j)
            centered(i, j) = features(i, j) - t.mean[j];
    return matmul(centered, t.projection);
}

void save_whitening(const std::string& path, const WhiteningTransform& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write file: " + path);
    os.write("WHT1", 4);
    put_u64(os, t.mean.size());
    put_u64(os, t.projection.cols);
    os.write(reinterpret_cast<const char*>(t.mean.data()),
             static_cast<std::streamsize>(t.mean.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(t.projection.data.data()),
             static_cast<std::streamsize>(t.projection.data.size() * sizeof(double)));
    if (!os) throw std::runtime_error("write failed: " + path);
}

WhiteningTransform load_whitening(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "WHT1")
        throw std::runtime_error(path + ": not a whitening checkpoint");
    std::uint64_t F = get_u64(is), d = get_u64(is);
    WhiteningTransform t;
    t.mean.resize(F);
    t.projection = Matrix(F, d);
    is.read(reinterpret_cast<char*>(t.mean.data()),
            static_cast<std::streamsize>(F * sizeof(double)));
    is.read(reinterpret_cast<char*>(t.projection.data.data()),
            static_cast<std::streamsize>(t.projection.data.size() * sizeof(double)));
    if (!is) throw std::runtime_error(path + ": whitening checkpoint truncated");
    return t;
}

Matrix whitening_init(const Dataset& ds, const WhiteningTransform& t, double fallback_scale,
                      Rng& rng) {
    if (!ds.has_features())
        throw std::invalid_argument("whitening_init: dataset has no item features");
    Matrix white = apply_whitening(t, ds.features);
    std::size_t nu = static_cast<std::size_t>(ds.layout.n_users);
    std::size_t ni = static_cast<std::size_t>(ds.layout.n_items);
    std::size_t d = white.cols;
    Matrix E(nu + ni, d);
    for (std::size_t i = 0; i < ni; ++i)
        std::copy(white.row(i), white.row(i) + d, E.row(nu + i));
    for (std::size_t u = 0; u < nu; ++u) {
        const auto& pos = ds.train_pos[u];
        double* eu = E.row(u);
        if (pos.empty()) {
            for (std::size_t c = 0; c < d; ++c) eu[c] = fallback_scale * normal(rng);
            continue;
        }
        for (std::int64_t item : pos) {
            const double* wi = white.row(static_cast<std::size_t>(item));
            for (std::size_t c = 0; c < d; ++c) eu[c] += wi[c];
        }
        for (std::size_t c = 0; c < d; ++c) eu[c] /= static_cast<double>(pos.size());
    }
    return E;
}

MlpProjector make_mlp(std::size_t in_dim, std::size_t hidden, std::size_t out_dim, double scale,
                      Rng& rng) {
    if (in_dim == 0 || hidden == 0 || out_dim == 0)
        throw std::invalid_argument("make_mlp: dimensions must be positive");
    MlpProjector p;
    p.W1 = random_normal_matrix(in_dim, hidden, scale, rng);
    p.b1 = Matrix(1, hidden);
    p.W2 = random_normal_matrix(hidden, out_dim, scale, rng);
    p.b2 = Matrix(1, out_dim);
    return p;
}

Matrix mlp_forward(const MlpProjector& p, const Matrix& X, MlpTape* tape) {
    if (X.cols != p.in_dim())
        throw std::invalid_argument("mlp_forward: input dimension " + std::to_string(X.cols) +
                                    " does not match projector (" + std::to_string(p.in_dim()) +
                                    ")");
    Matrix Z1 = matmul(X, p.W1);
    for (std::size_t i = 0; i < Z1.rows; ++i)
        for (std::size_t j = 0; j < Z1.cols; ++j) Z1(i, j) += p.b1(0, j);
    Matrix A1 = Z1;
    for (double& v : A1.data) v = std::max(v, 0.0);
    Matrix Y = matmul(A1, p.W2);
    for (std::size_t i = 0; i < Y.rows; ++i)
        for (std::size_t j = 0; j < Y.cols; ++j) Y(i, j) += p.b2(0, j);
    if (tape) {
        tape->Z1 = std::move(Z1);
        tape->A1 = std::move(A1);
        tape->X = X;
        tape->fresh = true;
    }
    return Y;
}

MlpGrads mlp_backward(const MlpProjector& p, MlpTape& tape, const Matrix& dOut, Matrix* dX) {
    if (!tape.fresh) throw std::logic_error("mlp_backward: tape is stale or was never filled");
    tape.fresh = false;
    if (dOut.rows != tape.X.rows || dOut.cols != p.out_dim())
        throw std::invalid_argument("mlp_backward: dOut shape mismatch");

    MlpGrads g;
    g.dW2 = matmul_at(tape.A1, dOut);
    g.db2 = Matrix(1, p.out_dim());
    for (std::size_t i = 0; i < dOut.rows; ++i)
        for (std::size_t j = 0; j < dOut.cols; ++j) g.db2(0, j) += dOut(i, j);

    Matrix dZ1 = matmul_bt(dOut, p.W2);  // dA1, then gated by the rectifier
    for (std::size_t i = 0; i < dZ1.rows; ++i)
        for (std::size_t j = 0; j < dZ1.cols; ++j)
            if (tape.Z1(i, j) <= 0.0) dZ1(i, j) = 0.0;

    g.dW1 = matmul_at(tape.X, dZ1);
    g.db1 = Matrix(1, p.hidden_dim());
    for (std::size_t i = 0; i < dZ1.rows; ++i)
        for (std::size_t j = 0; j < dZ1.cols; ++j) g.db1(0, j) += dZ1(i, j);

    if (dX) *dX = matmul_bt(dZ1, p.W1);
    return g;
}

Matrix pooled_feature_inputs(const Dataset& ds) {
    if (!ds.has_features())
        throw std::invalid_argument("pooled_feature_inputs: dataset has no item features");
    std::size_t nu = static_cast<std::size_t>(ds.layout.n_users);
    std::size_t ni = static_cast<std::size_t>(ds.layout.n_items);
    std::size_t F = ds.features.cols;
    Matrix X(nu + ni, F);
    for (std::size_t u = 0; u < nu; ++u) {
        const auto& pos = ds.train_pos[u];
        if (pos.empty()) continue;  // zero input row
        double* xu = X.row(u);
        for (std::int64_t item : pos) {
            const double* fi = ds.features.row(static_cast<std::size_t>(item));
            for (std::size_t c = 0; c < F; ++c) xu[c] += fi[c];
        }
        for (std::size_t c = 0; c < F; ++c) xu[c] /= static_cast<double>(pos.size());
    }
    for (std::size_t i = 0; i < ni; ++i)
        std::copy(ds.features.row(i), ds.features.row(i) + F, X.row(nu + i));
    return X;
}

}  // namespace scf
