#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace scf {

// Families of spectral response functions g(lambda). All of them are
// polynomials of degree at most L, so every family can be compiled to a
// monomial coefficient vector for the propagation engine; only Monomial is
// trainable.
enum class FilterKind {
    LayerZero,         // g = 1 (identity transform)
    LayerN,            // g = lambda^n (single n-hop propagation)
    AvgPool,           // g = (1/(L+1)) sum_l lambda^l (uniform layer average)
    JacobiBasis,       // g = sum_l beta_l * J_l^{(a,b)}(lambda)
    LinearCorrection,  // g = (1/(L+1)) sum_l (slope*lambda + intercept)^l
    Monomial,          // g = sum_l theta_l lambda^l, trainable coefficients
};

struct FilterSpec {
    FilterKind kind = FilterKind::Monomial;
    int L = 3;    // polynomial order of the compiled filter
    int n = 1;    // LayerN hop count
    double a = 1.0, b = 1.0;     // Jacobi family parameters, each > -1
    std::vector<double> betas;   // Jacobi mixing weights, length L+1
    double slope = 1.0, intercept = 0.0;  // LinearCorrection affine map
    std::vector<double> thetas;  // Monomial coefficients, length L+1
    bool trainable = false;      // true only for Monomial
};

FilterSpec layer_zero();
FilterSpec layer_n(int n);
FilterSpec avg_pool(int L);
FilterSpec jacobi_basis(int L, double a, double b, std::vector<double> betas);
// Convenience: betas follow a geometric decay beta^l.
FilterSpec jacobi_decay(int L, double a, double b, double beta);
FilterSpec linear_correction(int L, double slope, double intercept);
FilterSpec monomial(std::vector<double> thetas);

// Classic Jacobi polynomial J_l^{(a,b)}(x) by the three-term recurrence.
double jacobi_poly(int l, double a, double b, double x);

// Power-basis coefficients of J_l^{(a,b)}, length l+1, same recurrence applied
// to coefficient vectors (keeps pointwise eval and compiled form consistent).
std::vector<double> jacobi_coeffs(int l, double a, double b);

// Pointwise response g(lambda); evaluates each family by its defining formula.
double eval_filter(const FilterSpec& spec, double lambda);

// Compile any family to monomial coefficients. Length is L+1 except LayerZero
// (length 1) and LayerN (length n+1).
std::vector<double> to_monomial(const FilterSpec& spec);

// Named starting points for the trainable filter.
enum class InitPreset { FullPass, ZeroCrossing, LowPass, MidPass, HighPass };

// Monomial spec of order L for the preset. MidPass/HighPass need a quadratic
// term, so they reject L < 2.
FilterSpec init_preset(InitPreset name, int L);

const char* preset_name(InitPreset p);
bool parse_preset(const std::string& s, InitPreset& out);

// Fixed evaluation grid: 201 uniform points on [-1, 1] with exact endpoints.
const std::vector<double>& curve_grid();

struct FilterSnapshot {
    std::int64_t epoch = 0;
    std::vector<double> thetas;
    std::vector<double> grid;
    std::vector<double> responses;
    double g_at_lambda_max = 0.0;
};

// Curve capture for a trainable filter; rejects non-Monomial specs (static
// baselines do not evolve, so there is nothing to track).
FilterSnapshot snapshot(const FilterSpec& spec, std::int64_t epoch, double lambda_max);

// Sign-flip-invariant sup distance on the fixed grid:
//   min over s in {+1,-1} of max_lambda |g1(lambda) - s*g2(lambda)|.
// g and -g rank identically, so filters are compared up to a global sign.
double filter_distance(const FilterSpec& s1, const FilterSpec& s2);

// Snapshot serialization used by the training loop's curve artifacts.
std::string snapshot_csv_header();  // "epoch,lambda,g"
void append_snapshot_csv(std::ostream& os, const FilterSnapshot& snap);
std::string snapshot_json_line(const FilterSnapshot& snap);

}  // namespace scf
