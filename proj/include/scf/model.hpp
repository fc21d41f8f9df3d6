#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scf/filters.hpp"
#include "scf/graphs.hpp"
#include "scf/matrix.hpp"

namespace scf {

enum class Scenario : std::uint8_t { Homogeneous = 0, Heterogeneous = 1, DualBranch = 2 };
enum class Fusion { Identity, AveragePool };

// One propagation branch. The interaction branch propagates the full node set;
// a side branch (items_only) propagates only the item block through an
// item-item graph while user rows pass through untouched.
struct Branch {
    const SparseGraph* graph = nullptr;
    FilterSpec filter;
    bool items_only = false;
};

struct ScenarioConfig {
    Scenario scenario = Scenario::Homogeneous;
    Fusion fusion = Fusion::Identity;
    std::vector<Branch> branches;
    BipartiteLayout layout;

    // Throws std::invalid_argument unless the branch/fusion shape matches the
    // scenario: DualBranch = two branches + AveragePool, otherwise one branch
    // + Identity.
    void validate() const;
};

// Everything the reverse pass needs, captured during forward.
struct ForwardTape {
    Matrix Ebar;                              // row-normalized input
    std::vector<double> norms;                // recorded row norms (1 for guarded rows)
    std::vector<std::vector<Matrix>> stacks;  // per branch: X_0..X_L
    std::vector<Matrix> branch_H;             // per-branch combined output
    Matrix H;                                 // fused output
};

// Row-wise L2 normalization with a zero-row guard: rows with norm <= 1e-12
// pass through unchanged and record norm 1, which keeps the backward formula
// exact on the pass-through path.
inline constexpr double kNormEps = 1e-12;
void prefilter_normalize(const Matrix& E, Matrix& Ebar, std::vector<double>& norms);

// X_0 = Ebar, X_l = A~ * X_{l-1}; returns all L+1 matrices.
std::vector<Matrix> propagate(const SparseGraph& g, const Matrix& Ebar, int L);

// H_branch = sum_l theta_l X_l, where theta is the spec compiled to monomial
// coefficients. Stack length must equal the coefficient count.
Matrix combine(const std::vector<Matrix>& stack, const FilterSpec& spec);

// Per-branch normalize -> propagate -> combine, then fusion. A side branch
// produces item rows from its stack and passes user rows through as Ebar.
ForwardTape forward(const ScenarioConfig& cfg, const Matrix& E);

// Dot-product preference score; item id is the item index, not the node index.
double score(const Matrix& H, const BipartiteLayout& layout, std::int64_t user,
             std::int64_t item);

// Binary model state: embedding table + per-branch filter coefficients +
// scenario tag. Little-endian, magic "SCF1".
struct Checkpoint {
    Matrix E;
    std::vector<std::vector<double>> thetas;
    Scenario scenario = Scenario::Homogeneous;
};

void save_checkpoint(const std::string& path, const Matrix& E,
                     const std::vector<std::vector<double>>& thetas, Scenario scenario);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace scf
