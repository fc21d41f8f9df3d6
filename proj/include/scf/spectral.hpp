#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "scf/graphs.hpp"
#include "scf/matrix.hpp"

namespace scf {

// Full eigendecomposition of a symmetric sparse matrix, densified.
// Eigenvalues sorted descending; eigvecs.row-major with column k = k-th eigenvector
// stored as eigvecs(i, k). Throws std::invalid_argument above the node cap.
struct EigenDecomposition {
    std::vector<double> eigenvalues;  // descending
    Matrix eigenvectors;              // n_nodes x n_nodes, column k matches eigenvalues[k]
};

inline constexpr std::int64_t kDenseEigNodeCap = 4000;

EigenDecomposition dense_eig(const SparseGraph& g);

// Matrix-free estimate of the extreme eigenvalues (lambda_max, lambda_min) of a
// symmetric operator, via power iteration and a spectral-shift second pass.
// Converges on the eigen-residual, or on a stabilized Rayleigh quotient when a
// tight spectral gap keeps the direction rotating (the value estimate is second
// order in the residual, so it settles long before the vector does).
// Deterministic for a fixed seed. A zero operator reports (0, 0). Throws
// std::runtime_error (message includes the last residual) if either pass fails
// to converge within `max_iter` iterations.
std::pair<double, double> extreme_eigs(const SparseGraph& g, std::uint64_t seed = 1,
                                       int max_iter = 5000, double tol = 1e-10);

}  // namespace scf
