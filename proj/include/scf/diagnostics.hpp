#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "scf/filters.hpp"
#include "scf/grad.hpp"
#include "scf/graphs.hpp"
#include "scf/matrix.hpp"
#include "scf/spectral.hpp"

namespace scf {

// Eigenbasis view of a small symmetric operator together with the embeddings
// projected onto it: Etil = U^T E, row k = component k.
struct SpectralDecomposition {
    std::vector<double> lambdas;   // descending
    Matrix U;                      // column k = eigenvector for lambdas[k]
    Matrix Etil;                   // U^T E
    std::vector<double> energies;  // ||Etil_k||^2 per component

    std::size_t n_components() const { return lambdas.size(); }
};

// Dense decomposition plus projection. Verifies U^T U = I and the energy
// identity sum_k ||Etil_k||^2 = ||E||_F^2 (both within 1e-8, scaled).
SpectralDecomposition decompose(const SparseGraph& g, const Matrix& E);

// Exact two-sided check of the mean-positive-score identity
//   Tr(H^T W H) = sum_k lambda_k g_k^2 ||Etil_k||^2,
// where W = A / (2 n_edges), H = U diag(g) U^T E, and `decomp` is the
// decomposition of W. Returns |lhs - rhs|. Throws on a non-symmetric A or a
// g of the wrong length. Deterministic -- no sampling involved.
double trace_identity_check(const SpectralDecomposition& decomp, const std::vector<double>& g,
                            const SparseGraph& A, std::int64_t n_edges);

// One spectral component in a sign-law verification run.
struct ComponentRow {
    double lambda = 0.0;
    double g = 0.0;
    double energy = 0.0;
    double grad = 0.0;       // exact d(loss)/d g_k
    double signal = 0.0;     // lambda * g * energy
    double threshold = 0.0;  // qualification cut for |signal|
    int predicted_sign = 0;  // -sign(signal)
    bool qualifies = false;
    bool agrees = false;     // sign(grad) == predicted_sign
};

struct TheoremReport {
    double rho = 0.0;
    LossKind loss = LossKind::BPR;
    double tau = 1.0;
    std::uint64_t seed = 0;
    std::int64_t n_pairs = 0;    // positive pairs enumerated
    std::int64_t n_samples = 0;  // (pair, negative) combinations enumerated
    std::vector<ComponentRow> components;
    std::int64_t n_qualifying = 0;
    std::int64_t n_agreeing = 0;           // among qualifying
    double sign_agreement_rate = 1.0;      // 1.0 when nothing qualifies
    double trace_identity_error = 0.0;
};

// Numerical check of the low-frequency gradient sign law: on a random
// bipartite graph at edge density rho with unit-sphere embeddings and a
// random pointwise response g_k in [0.5, 1.5], the exact loss gradient
// d(loss)/d g_k must have sign -sign(lambda_k g_k) on every component whose
// signal |lambda_k g_k| ||Etil_k||^2 clears the deviation-scaled threshold
//   5 (1 - rho) * MAD_k / sqrt(n_samples)
// (CE thresholds additionally scaled by M e^2 / (e^2 + M), M = n_items - 1,
// the stricter constant of the CE variant). Gradients are exact enumerations
// over every (positive pair, negative item) combination -- no Monte Carlo.
// Degenerate samples (a user or item with no edges) are redrawn up to 5
// times before giving up.
TheoremReport verify_theorem(std::int64_t n_users, std::int64_t n_items, double rho, int dim,
                             LossKind loss, double tau, std::uint64_t seed);

std::string theorem_report_json(const TheoremReport& r);

// |g(lambda_max)| across training snapshots: the quantity that blows up when
// a filter is learned directly against the training loss.
struct ExplosionReport {
    std::vector<std::int64_t> epochs;
    std::vector<double> g_abs;
    double ratio = 1.0;              // final / max(initial, 1e-12)
    double increase_fraction = 0.0;  // share of consecutive pairs that grow
};

// Requires >= 2 snapshots.
ExplosionReport explosion_trajectory(const std::vector<FilterSnapshot>& snapshots);

// CSV `epoch,g_abs`, one row per snapshot.
void write_trajectory_csv(std::ostream& os, const ExplosionReport& r);

// Pairwise sign-flip-invariant sup distances between final filters from
// differently initialized runs.
struct StabilityReport {
    std::vector<std::string> labels;
    Matrix distances;           // symmetric, zero diagonal
    double max_distance = 0.0;  // largest off-diagonal entry
    double max_response = 0.0;  // largest |g| over all runs on the grid
};

// Requires >= 2 runs.
StabilityReport stability_report(const std::vector<std::pair<std::string, FilterSpec>>& runs);

std::string stability_report_json(const StabilityReport& r);

}  // namespace scf
