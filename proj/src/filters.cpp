#include "scf/filters.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "scf/matrix.hpp"

namespace scf {

FilterSpec layer_zero() {
    FilterSpec s;
    s.kind = FilterKind::LayerZero;
    s.L = 0;
    return s;
}

FilterSpec layer_n(int n) {
    if (n < 0) throw std::invalid_argument("layer_n: negative hop count");
    FilterSpec s;
    s.kind = FilterKind::LayerN;
    s.n = n;
    s.L = n;
    return s;
}

FilterSpec avg_pool(int L) {
    if (L < 0) throw std::invalid_argument("avg_pool: negative order");
    FilterSpec s;
    s.kind = FilterKind::AvgPool;
    s.L = L;
    return s;
}

FilterSpec jacobi_basis(int L, double a, double b, std::vector<double> betas) {
    if (L < 0) throw std::invalid_argument("jacobi_basis: negative order");
    if (a <= -1.0 || b <= -1.0) throw std::invalid_argument("jacobi_basis: need a, b > -1");
    if (betas.size() != static_cast<std::size_t>(L) + 1)
        throw std::invalid_argument("jacobi_basis: betas must have length L+1");
    FilterSpec s;
    s.kind = FilterKind::JacobiBasis;
    s.L = L;
    s.a = a;
    s.b = b;
    s.betas = std::move(betas);
    return s;
}

FilterSpec jacobi_decay(int L, double a, double b, double beta) {
    std::vector<double> betas(static_cast<std::size_t>(L) + 1);
    double w = 1.0;
    for (auto& v : betas) {
        v = w;
        w *= beta;
    }
    return jacobi_basis(L, a, b, std::move(betas));
}

FilterSpec linear_correction(int L, double slope, double intercept) {
    if (L < 0) throw std::invalid_argument("linear_correction: negative order");
    FilterSpec s;
    s.kind = FilterKind::LinearCorrection;
    s.L = L;
    s.slope = slope;
    s.intercept = intercept;
    return s;
}

FilterSpec monomial(std::vector<double> thetas) {
    if (thetas.empty()) throw std::invalid_argument("monomial: empty coefficients");
    for (double t : thetas)
        if (!std::isfinite(t)) throw std::invalid_argument("monomial: non-finite coefficient");
    FilterSpec s;
    s.kind = FilterKind::Monomial;
    s.L = static_cast<int>(thetas.size()) - 1;
    s.thetas = std::move(thetas);
    s.trainable = true;
    return s;
}

namespace {
// Three-term recurrence weights for J_l from J_{l-1}, J_{l-2} (l >= 2):
// J_l = (c1*x + c2) * J_{l-1} - c3 * J_{l-2}.
void jacobi_step(int l, double a, double b, double& c1, double& c2, double& c3) {
    const double q = 2.0 * l + a + b;
    const double denom = 2.0 * l * (l + a + b) * (q - 2.0);
    c1 = (q - 1.0) * q * (q - 2.0) / denom;
    c2 = (q - 1.0) * (a * a - b * b) / denom;
    c3 = 2.0 * (l + a - 1.0) * (l + b - 1.0) * q / denom;
}
}  // namespace

double jacobi_poly(int l, double a, double b, double x) {
    if (l < 0) throw std::invalid_argument("jacobi_poly: negative degree");
    if (a <= -1.0 || b <= -1.0) throw std::invalid_argument("jacobi_poly: need a, b > -1");
    if (l == 0) return 1.0;
    double pm2 = 1.0;
    double pm1 = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x;
    if (l == 1) return pm1;
    double p = 0.0;
    for (int k = 2; k <= l; ++k) {
        double c1, c2, c3;
        jacobi_step(k, a, b, c1, c2, c3);
        p = (c1 * x + c2) * pm1 - c3 * pm2;
        pm2 = pm1;
        pm1 = p;
    }
    return p;
}

std::vector<double> jacobi_coeffs(int l, double a, double b) {
    if (l < 0) throw std::invalid_argument("jacobi_coeffs: negative degree");
    if (a <= -1.0 || b <= -1.0) throw std::invalid_argument("jacobi_coeffs: need a, b > -1");
    std::vector<double> pm2 = {1.0};
    if (l == 0) return pm2;
    std::vector<double> pm1 = {0.5 * (a - b), 0.5 * (a + b + 2.0)};
    if (l == 1) return pm1;
    std::vector<double> p;
    for (int k = 2; k <= l; ++k) {
        double c1, c2, c3;
        jacobi_step(k, a, b, c1, c2, c3);
        p.assign(static_cast<std::size_t>(k) + 1, 0.0);
        for (std::size_t j = 0; j < pm1.size(); ++j) {
            p[j + 1] += c1 * pm1[j];
            p[j] += c2 * pm1[j];
        }
        for (std::size_t j = 0; j < pm2.size(); ++j) p[j] -= c3 * pm2[j];
        pm2 = std::move(pm1);
        pm1 = std::move(p);
    }
    return pm1;
}

double eval_filter(const FilterSpec& spec, double lambda) {
    switch (spec.kind) {
        case FilterKind::LayerZero:
            return 1.0;
        case FilterKind::LayerN: {
            double r = 1.0;
            for (int i = 0; i < spec.n; ++i) r *= lambda;
            return r;
        }
        case FilterKind::AvgPool: {
            double term = 1.0, sum = 1.0;
            for (int l = 1; l <= spec.L; ++l) {
                term *= lambda;
                sum += term;
            }
            return sum / static_cast<double>(spec.L + 1);
        }
        case FilterKind::JacobiBasis: {
            double pm2 = 1.0;
            double sum = spec.betas[0] * pm2;
            if (spec.L == 0) return sum;
            double pm1 = 0.5 * (spec.a - spec.b) + 0.5 * (spec.a + spec.b + 2.0) * lambda;
            sum += spec.betas[1] * pm1;
            for (int k = 2; k <= spec.L; ++k) {
                double c1, c2, c3;
                jacobi_step(k, spec.a, spec.b, c1, c2, c3);
                double p = (c1 * lambda + c2) * pm1 - c3 * pm2;
                sum += spec.betas[static_cast<std::size_t>(k)] * p;
                pm2 = pm1;
                pm1 = p;
            }
            return sum;
        }
        case FilterKind::LinearCorrection: {
            double t = spec.slope * lambda + spec.intercept;
            double term = 1.0, sum = 1.0;
            for (int l = 1; l <= spec.L; ++l) {
                term *= t;
                sum += term;
            }
            return sum / static_cast<double>(spec.L + 1);
        }
        case FilterKind::Monomial: {
            double r = 0.0;
            for (std::size_t i = spec.thetas.size(); i-- > 0;) r = r * lambda + spec.thetas[i];
            return r;
        }
    }
    return 0.0;  // unreachable
}

std::vector<double> to_monomial(const FilterSpec& spec) {
    switch (spec.kind) {
        case FilterKind::LayerZero:
            return {1.0};
        case FilterKind::LayerN: {
            std::vector<double> c(static_cast<std::size_t>(spec.n) + 1, 0.0);
            c.back() = 1.0;
            return c;
        }
        case FilterKind::AvgPool:
            return std::vector<double>(static_cast<std::size_t>(spec.L) + 1,
                                       1.0 / static_cast<double>(spec.L + 1));
        case FilterKind::JacobiBasis: {
            std::vector<double> c(static_cast<std::size_t>(spec.L) + 1, 0.0);
            for (int l = 0; l <= spec.L; ++l) {
                std::vector<double> jl = jacobi_coeffs(l, spec.a, spec.b);
                for (std::size_t j = 0; j < jl.size(); ++j)
                    c[j] += spec.betas[static_cast<std::size_t>(l)] * jl[j];
            }
            return c;
        }
        case FilterKind::LinearCorrection: {
            std::vector<double> acc(static_cast<std::size_t>(spec.L) + 1, 0.0);
            std::vector<double> pw = {1.0};  // (slope*x + intercept)^l, power basis
            acc[0] += pw[0];
            for (int l = 1; l <= spec.L; ++l) {
                std::vector<double> next(pw.size() + 1, 0.0);
                for (std::size_t j = 0; j < pw.size(); ++j) {
                    next[j] += pw[j] * spec.intercept;
                    next[j + 1] += pw[j] * spec.slope;
                }
                pw = std::move(next);
                for (std::size_t j = 0; j < pw.size(); ++j) acc[j] += pw[j];
            }
            for (auto& v : acc) v = v / static_cast<double>(spec.L + 1);
            return acc;
        }
        case FilterKind::Monomial:
            return spec.thetas;
    }
    return {};  // unreachable
}

FilterSpec init_preset(InitPreset name, int L) {
    auto need = [&](int min_order, const char* what) {
        if (L < min_order) {
            std::string msg = "init_preset: ";
            msg += what;
            msg += " needs order >= ";
            msg += std::to_string(min_order);
            throw std::invalid_argument(msg);
        }
    };
    std::vector<double> th(static_cast<std::size_t>(L) + 1, 0.0);
    switch (name) {
        case InitPreset::FullPass:
            need(0, "FullPass");
            th[0] = 1.0;
            break;
        case InitPreset::ZeroCrossing:
            need(1, "ZeroCrossing");
            th[1] = 1.0;
            break;
        case InitPreset::LowPass:
            need(0, "LowPass");
            for (auto& v : th) v = 1.0 / static_cast<double>(L + 1);
            break;
        case InitPreset::MidPass:
            need(2, "MidPass");
            th[0] = 1.0;
            th[2] = -1.0;
            break;
        case InitPreset::HighPass:
            need(2, "HighPass");
            th[0] = 1.0;
            th[1] = -2.0;
            th[2] = 1.0;
            break;
    }
    return monomial(std::move(th));
}

const char* preset_name(InitPreset p) {
    switch (p) {
        case InitPreset::FullPass: return "full";
        case InitPreset::ZeroCrossing: return "zero";
        case InitPreset::LowPass: return "low";
        case InitPreset::MidPass: return "mid";
        case InitPreset::HighPass: return "high";
    }
    return "?";
}

bool parse_preset(const std::string& s, InitPreset& out) {
    if (s == "full") out = InitPreset::FullPass;
    else if (s == "zero") out = InitPreset::ZeroCrossing;
    else if (s == "low") out = InitPreset::LowPass;
    else if (s == "mid") out = InitPreset::MidPass;
    else if (s == "high") out = InitPreset::HighPass;
    else return false;
    return true;
}

const std::vector<double>& curve_grid() {
    static const std::vector<double> grid = [] {
        std::vector<double> g(201);
        for (int j = 0; j <= 200; ++j) g[static_cast<std::size_t>(j)] = (j - 100) / 100.0;
        return g;
    }();
    return grid;
}

FilterSnapshot snapshot(const FilterSpec& spec, std::int64_t epoch, double lambda_max) {
    if (spec.kind != FilterKind::Monomial)
        throw std::invalid_argument("snapshot: only trainable filters evolve; static "
                                    "responses have nothing to track");
    FilterSnapshot snap;
    snap.epoch = epoch;
    snap.thetas = spec.thetas;
    snap.grid = curve_grid();
    snap.responses.resize(snap.grid.size());
    for (std::size_t j = 0; j < snap.grid.size(); ++j)
        snap.responses[j] = eval_filter(spec, snap.grid[j]);
    snap.g_at_lambda_max = std::fabs(eval_filter(spec, lambda_max));
    return snap;
}

double filter_distance(const FilterSpec& s1, const FilterSpec& s2) {
    const auto& grid = curve_grid();
    double d_plus = 0.0, d_minus = 0.0;
    for (double x : grid) {
        double g1 = eval_filter(s1, x);
        double g2 = eval_filter(s2, x);
        d_plus = std::max(d_plus, std::fabs(g1 - g2));
        d_minus = std::max(d_minus, std::fabs(g1 + g2));
    }
    return std::min(d_plus, d_minus);
}

std::string snapshot_csv_header() { return "epoch,lambda,g"; }

void append_snapshot_csv(std::ostream& os, const FilterSnapshot& snap) {
    for (std::size_t j = 0; j < snap.grid.size(); ++j) {
        os << snap.epoch << ',' << fmt_g17(snap.grid[j]) << ',' << fmt_g17(snap.responses[j])
           << '\n';
    }
}

std::string snapshot_json_line(const FilterSnapshot& snap) {
    std::string s = "{\"epoch\":" + std::to_string(snap.epoch) + ",\"theta\":[";
    for (std::size_t i = 0; i < snap.thetas.size(); ++i) {
        if (i) s += ',';
        s += fmt_g17(snap.thetas[i]);
    }
    s += "],\"g_at_lambda_max\":" + fmt_g17(snap.g_at_lambda_max) + "}";
    return s;
}

}  // namespace scf
