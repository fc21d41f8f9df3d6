#include "scf/spectral.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace scf {

EigenDecomposition dense_eig(const SparseGraph& g) {
    if (g.n_nodes > kDenseEigNodeCap) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "dense_eig: graph has %lld nodes, cap is %lld",
                      static_cast<long long>(g.n_nodes),
                      static_cast<long long>(kDenseEigNodeCap));
        throw std::invalid_argument(buf);
    }
    const auto n = static_cast<Eigen::Index>(g.n_nodes);
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
    for (std::int64_t i = 0; i < g.n_nodes; ++i)
        for (std::int64_t p = g.indptr[i]; p < g.indptr[i + 1]; ++p)
            dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g.indices[p])) =
                g.values[p];

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("dense_eig: eigensolver did not converge");

    EigenDecomposition out;
    out.eigenvalues.resize(static_cast<std::size_t>(n));
    out.eigenvectors = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    // Eigen returns ascending order; flip to descending.
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::Index src = n - 1 - k;
        out.eigenvalues[static_cast<std::size_t>(k)] = solver.eigenvalues()(src);
        for (Eigen::Index i = 0; i < n; ++i)
            out.eigenvectors(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) =
                solver.eigenvectors()(i, src);
    }
    return out;
}

namespace {

double vec_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void apply(const SparseGraph& g, const std::vector<double>& x, std::vector<double>& y) {
    for (std::int64_t i = 0; i < g.n_nodes; ++i) {
        double s = 0.0;
        for (std::int64_t p = g.indptr[i]; p < g.indptr[i + 1]; ++p)
            s += g.values[p] * x[static_cast<std::size_t>(g.indices[p])];
        y[static_cast<std::size_t>(i)] = s;
    }
}

// Power iteration on the shifted operator (A - shift*I). The shift selects which
// end of the spectrum dominates; the returned value is the Rayleigh quotient of
// the *un-shifted* A at the converged vector, so it is a genuine eigenvalue
// estimate of A. Convergence is measured by the eigen-residual ||Av - rho*v||.
double power_pass(const SparseGraph& g, double shift, Rng& rng, int max_iter, double tol) {
    const auto n = static_cast<std::size_t>(g.n_nodes);
    std::vector<double> v(n), w(n);
    for (auto& x : v) x = normal(rng);
    double nv = vec_norm(v);
    for (auto& x : v) x /= nv;

    double rho = 0.0, resid = 0.0, rho_prev = 0.0;
    int stable = 0;
    for (int it = 0; it < max_iter; ++it) {
        apply(g, v, w);
        rho = 0.0;
        for (std::size_t i = 0; i < n; ++i) rho += v[i] * w[i];
        resid = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double r = w[i] - rho * v[i];
            resid += r * r;
        }
        resid = std::sqrt(resid);
        if (resid <= tol) return rho;
        // The quotient error is second order in the residual, and inside a
        // near-degenerate top cluster it is pinned within the cluster width,
        // so accept once the estimate stops moving even while the direction
        // still rotates (tight gaps stall the residual, not the value).
        if (it > 0 && std::fabs(rho - rho_prev) <= 1e-3 * tol * std::max(1.0, std::fabs(rho)))
            ++stable;
        else
            stable = 0;
        if (stable >= 5) return rho;
        rho_prev = rho;
        for (std::size_t i = 0; i < n; ++i) w[i] -= shift * v[i];
        double nw = vec_norm(w);
        if (nw < 1e-300) {
            // Landed in the null space of the shifted operator; restart.
            for (auto& x : w) x = normal(rng);
            nw = vec_norm(w);
        }
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "extreme_eigs: power iteration stalled, residual %.3e after %d iterations",
                  resid, max_iter);
    throw std::runtime_error(buf);
}

}  // namespace

std::pair<double, double> extreme_eigs(const SparseGraph& g, std::uint64_t seed, int max_iter,
                                       double tol) {
    // Absolute row-sum bound on the spectral radius. Also detects the zero operator.
    double radius_bound = 0.0;
    for (std::int64_t i = 0; i < g.n_nodes; ++i) {
        double s = 0.0;
        for (std::int64_t p = g.indptr[i]; p < g.indptr[i + 1]; ++p)
            s += std::fabs(g.values[p]);
        radius_bound = std::max(radius_bound, s);
    }
    if (radius_bound == 0.0) return {0.0, 0.0};

    Rng rng(seed);
    // Pass 1 iterates on (A + R*I): its spectrum is non-negative, so the top of
    // A's spectrum strictly dominates even when A has a symmetric spectrum
    // (where plain power iteration oscillates between the two extremes).
    double hi = power_pass(g, -radius_bound, rng, max_iter, tol);
    // Pass 2 iterates on (A - hi*I): spectrum non-positive, dominated by the
    // bottom of A's spectrum.
    double lo = power_pass(g, hi, rng, max_iter, tol);
    if (lo > hi) std::swap(lo, hi);
    return {hi, lo};
}

}  // namespace scf
