#include "scf/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace scf {

namespace {

int sign_of(double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); }

// A copy of `g` with every stored value multiplied by `s`.
SparseGraph scaled(const SparseGraph& g, double s) {
    SparseGraph out = g;
    for (double& v : out.values) v *= s;
    return out;
}

void check_symmetric(const SparseGraph& a) {
    // Diagnostics instances are small, so a dense mirror check is fine.
    std::size_t n = static_cast<std::size_t>(a.n_nodes);
    Matrix d(n, n);
    for (std::int64_t i = 0; i < a.n_nodes; ++i)
        for (std::int64_t p = a.indptr[i]; p < a.indptr[i + 1]; ++p)
            d(static_cast<std::size_t>(i), static_cast<std::size_t>(a.indices[p])) = a.values[p];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::fabs(d(i, j) - d(j, i)) > 1e-12)
                throw std::invalid_argument("trace_identity_check: adjacency is not symmetric");
}

// H = U diag(g) Etil  (rows of Etil are the components).
Matrix pointwise_filtered(const SpectralDecomposition& de, const std::vector<double>& g) {
    std::size_t n = de.U.rows, d = de.Etil.cols;
    Matrix H(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double* hi = H.row(i);
        for (std::size_t k = 0; k < n; ++k) {
            double w = de.U(i, k) * g[k];
            if (w == 0.0) continue;
            const double* ek = de.Etil.row(k);
            for (std::size_t c = 0; c < d; ++c) hi[c] += w * ek[c];
        }
    }
    return H;
}

}  // namespace

SpectralDecomposition decompose(const SparseGraph& g, const Matrix& E) {
    if (static_cast<std::int64_t>(E.rows) != g.n_nodes)
        throw std::invalid_argument("decompose: embedding rows must match node count");
    EigenDecomposition eig = dense_eig(g);
    SpectralDecomposition de;
    de.lambdas = std::move(eig.eigenvalues);
    de.U = std::move(eig.eigenvectors);

    std::size_t n = de.U.rows, d = E.cols;
    de.Etil = Matrix(n, d);
    for (std::size_t k = 0; k < n; ++k) {
        double* ek = de.Etil.row(k);
        for (std::size_t i = 0; i < n; ++i) {
            double u = de.U(i, k);
            if (u == 0.0) continue;
            const double* ei = E.row(i);
            for (std::size_t c = 0; c < d; ++c) ek[c] += u * ei[c];
        }
    }

    de.energies.resize(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        const double* ek = de.Etil.row(k);
        for (std::size_t c = 0; c < d; ++c) s += ek[c] * ek[c];
        de.energies[k] = s;
        total += s;
    }

    // Orthonormality of the eigenbasis.
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j; k < n; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += de.U(i, j) * de.U(i, k);
            worst = std::max(worst, std::fabs(dot - (j == k ? 1.0 : 0.0)));
        }
    if (worst > 1e-8)
        throw std::runtime_error("decompose: eigenbasis not orthonormal, max deviation " +
                                 fmt_g17(worst));

    // Energy is preserved by the orthonormal projection.
    double frob2 = frob_dot(E, E);
    if (std::fabs(total - frob2) > 1e-8 * std::max(1.0, frob2))
        throw std::runtime_error("decompose: projected energy " + fmt_g17(total) +
                                 " does not match ||E||_F^2 = " + fmt_g17(frob2));
    return de;
}

double trace_identity_check(const SpectralDecomposition& decomp, const std::vector<double>& g,
                            const SparseGraph& A, std::int64_t n_edges) {
    if (g.size() != decomp.n_components())
        throw std::invalid_argument("trace_identity_check: g length must match component count");
    if (n_edges <= 0) throw std::invalid_argument("trace_identity_check: edge count must be positive");
    check_symmetric(A);

    SparseGraph W = scaled(A, 1.0 / (2.0 * static_cast<double>(n_edges)));
    Matrix H = pointwise_filtered(decomp, g);
    Matrix WH(H.rows, H.cols);
    spmm(W, H, WH);
    double lhs = frob_dot(H, WH);

    double rhs = 0.0;
    for (std::size_t k = 0; k < decomp.n_components(); ++k)
        rhs += decomp.lambdas[k] * g[k] * g[k] * decomp.energies[k];

    return std::fabs(lhs - rhs);
}

TheoremReport verify_theorem(std::int64_t n_users, std::int64_t n_items, double rho, int dim,
                             LossKind loss, double tau, std::uint64_t seed) {
    if (n_users <= 0 || n_items <= 0)
        throw std::invalid_argument("verify_theorem: node counts must be positive");
    if (n_users * n_items > 1000000)
        throw std::invalid_argument("verify_theorem: instance too large for dense decomposition");
    if (!(rho > 0.0 && rho < 1.0))
        throw std::invalid_argument("verify_theorem: density must lie in (0,1)");
    if (dim < 8) throw std::invalid_argument("verify_theorem: dim must be at least 8");
    if (tau <= 0.0) throw std::invalid_argument("verify_theorem: tau must be positive");

    std::size_t nu = static_cast<std::size_t>(n_users);
    std::size_t ni = static_cast<std::size_t>(n_items);
    std::size_t n = nu + ni;

    Rng rng = make_rng(seed);

    // Bernoulli interaction grid, redrawn while any user or item is isolated.
    std::vector<std::uint8_t> R(nu * ni);
    bool ok = false;
    for (int attempt = 0; attempt < 5 && !ok; ++attempt) {
        for (std::size_t u = 0; u < nu; ++u)
            for (std::size_t i = 0; i < ni; ++i)
                R[u * ni + i] = uniform_real(rng, 0.0, 1.0) < rho ? 1 : 0;
        ok = true;
        for (std::size_t u = 0; u < nu && ok; ++u) {
            bool any = false;
            for (std::size_t i = 0; i < ni; ++i) any = any || R[u * ni + i];
            ok = any;
        }
        for (std::size_t i = 0; i < ni && ok; ++i) {
            bool any = false;
            for (std::size_t u = 0; u < nu; ++u) any = any || R[u * ni + i];
            ok = any;
        }
    }
    if (!ok)
        throw std::runtime_error(
            "verify_theorem: degenerate bipartite sample (isolated node) after 5 attempts");

    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
    for (std::size_t u = 0; u < nu; ++u)
        for (std::size_t i = 0; i < ni; ++i)
            if (R[u * ni + i])
                pairs.emplace_back(static_cast<std::int64_t>(u), static_cast<std::int64_t>(i));
    std::int64_t n_edges = static_cast<std::int64_t>(pairs.size());

    BipartiteLayout layout{n_users, n_items};
    SparseGraph A = build_bipartite(pairs, layout);
    SparseGraph W = scaled(A, 1.0 / (2.0 * static_cast<double>(n_edges)));

    // Perfect-Uniformity proxy: embeddings uniform on the unit sphere.
    Matrix E = random_sphere_rows(n, static_cast<std::size_t>(dim), rng);
    std::vector<double> g(n);
    for (std::size_t k = 0; k < n; ++k) g[k] = uniform_real(rng, 0.5, 1.5);

    SpectralDecomposition de = decompose(W, E);
    Matrix H = pointwise_filtered(de, g);

    // C[a][k] = h_a . Etil_k ; S[a][b] = h_a . h_b. Small instances only, so
    // dense n x n buffers are fine.
    std::size_t d = H.cols;
    Matrix C(n, n), S(n, n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t k = 0; k < n; ++k) {
            double acc = 0.0;
            const double* ha = H.row(a);
            const double* ek = de.Etil.row(k);
            for (std::size_t c = 0; c < d; ++c) acc += ha[c] * ek[c];
            C(a, k) = acc;
        }
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a; b < n; ++b) {
            double acc = 0.0;
            const double* ha = H.row(a);
            const double* hb = H.row(b);
            for (std::size_t c = 0; c < d; ++c) acc += ha[c] * hb[c];
            S(a, b) = acc;
            S(b, a) = acc;
        }

    // Per-user negative item lists (node ids).
    std::vector<std::vector<std::size_t>> negs_of(nu);
    for (std::size_t u = 0; u < nu; ++u)
        for (std::size_t i = 0; i < ni; ++i)
            if (!R[u * ni + i]) negs_of[u].push_back(nu + i);

    std::size_t n_pairs = pairs.size();
    std::int64_t n_samples = 0;
    for (const auto& p : pairs)
        n_samples += static_cast<std::int64_t>(negs_of[static_cast<std::size_t>(p.first)].size());

    // nab_k(u, p, j) = d/dg_k (s_up - s_uj)
    //               = U_uk (C[p,k] - C[j,k]) + (U_pk - U_jk) C[u,k].
    auto score_diff_grad = [&](std::size_t u, std::size_t p, std::size_t j,
                               std::vector<double>& nab) {
        for (std::size_t k = 0; k < n; ++k)
            nab[k] = de.U(u, k) * (C(p, k) - C(j, k)) + (de.U(p, k) - de.U(j, k)) * C(u, k);
    };

    // Pass 1: mean of the raw score-difference gradients over every
    // (pair, negative) combination, pairs weighted equally.
    std::vector<double> mean_nab(n, 0.0), nab(n);
    for (const auto& pr : pairs) {
        std::size_t u = static_cast<std::size_t>(pr.first);
        std::size_t p = nu + static_cast<std::size_t>(pr.second);
        const auto& negs = negs_of[u];
        if (negs.empty()) continue;
        double w = 1.0 / (static_cast<double>(n_pairs) * static_cast<double>(negs.size()));
        for (std::size_t j : negs) {
            score_diff_grad(u, p, j, nab);
            for (std::size_t k = 0; k < n; ++k) mean_nab[k] += w * nab[k];
        }
    }

    // Pass 2: exact loss gradient plus the mean absolute deviation of the raw
    // per-sample gradients (the deviation scale feeding the threshold; it is
    // loss-independent by construction).
    std::vector<double> grad(n, 0.0), mad(n, 0.0);
    std::vector<double> prob(ni), nab_all(n), gc(n), nab_pos(n);
    for (const auto& pr : pairs) {
        std::size_t u = static_cast<std::size_t>(pr.first);
        std::size_t p = nu + static_cast<std::size_t>(pr.second);
        const auto& negs = negs_of[u];
        if (negs.empty()) continue;
        double w = 1.0 / (static_cast<double>(n_pairs) * static_cast<double>(negs.size()));
        for (std::size_t j : negs) {
            score_diff_grad(u, p, j, nab);
            for (std::size_t k = 0; k < n; ++k) mad[k] += w * std::fabs(nab[k] - mean_nab[k]);
            if (loss == LossKind::BPR) {
                // d/dg_k softplus(-(s_up - s_uj)) = -(1 - sigmoid(diff)) nab_k
                double diff = S(u, p) - S(u, j);
                double t = 1.0 / (1.0 + std::exp(diff));
                for (std::size_t k = 0; k < n; ++k) grad[k] += -w * t * nab[k];
            }
        }
        if (loss == LossKind::CE) {
            // Full softmax over the item block at temperature tau.
            double mx = -1e300;
            for (std::size_t i = 0; i < ni; ++i) mx = std::max(mx, S(u, nu + i) / tau);
            double z = 0.0;
            for (std::size_t i = 0; i < ni; ++i) {
                prob[i] = std::exp(S(u, nu + i) / tau - mx);
                z += prob[i];
            }
            for (std::size_t i = 0; i < ni; ++i) prob[i] /= z;
            std::fill(gc.begin(), gc.end(), 0.0);
            for (std::size_t i = 0; i < ni; ++i) {
                std::size_t jn = nu + i;
                for (std::size_t k = 0; k < n; ++k)
                    gc[k] += prob[i] * (de.U(u, k) * C(jn, k) + de.U(jn, k) * C(u, k));
            }
            for (std::size_t k = 0; k < n; ++k)
                nab_pos[k] = de.U(u, k) * C(p, k) + de.U(p, k) * C(u, k);
            double wp = 1.0 / (static_cast<double>(n_pairs) * tau);
            for (std::size_t k = 0; k < n; ++k) grad[k] += wp * (gc[k] - nab_pos[k]);
        }
    }

    double se_scale = 1.0 / std::sqrt(static_cast<double>(n_samples));
    double ce_factor = 1.0;
    if (loss == LossKind::CE) {
        double M = static_cast<double>(n_items - 1);
        double e2 = std::exp(2.0);
        ce_factor = M * e2 / (e2 + M);
    }

    TheoremReport rep;
    rep.rho = rho;
    rep.loss = loss;
    rep.tau = tau;
    rep.seed = seed;
    rep.n_pairs = static_cast<std::int64_t>(n_pairs);
    rep.n_samples = n_samples;
    rep.components.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        ComponentRow& row = rep.components[k];
        row.lambda = de.lambdas[k];
        row.g = g[k];
        row.energy = de.energies[k];
        row.grad = grad[k];
        row.signal = de.lambdas[k] * g[k] * de.energies[k];
        row.threshold = 5.0 * (1.0 - rho) * mad[k] * se_scale * ce_factor;
        row.predicted_sign = -sign_of(row.signal);
        row.qualifies = std::fabs(row.signal) > row.threshold;
        row.agrees = sign_of(row.grad) == row.predicted_sign;
        if (row.qualifies) {
            ++rep.n_qualifying;
            if (row.agrees) ++rep.n_agreeing;
        }
    }
    rep.sign_agreement_rate =
        rep.n_qualifying == 0
            ? 1.0
            : static_cast<double>(rep.n_agreeing) / static_cast<double>(rep.n_qualifying);
    rep.trace_identity_error = trace_identity_check(de, g, A, n_edges);
    return rep;
}

std::string theorem_report_json(const TheoremReport& r) {
    std::string s = "{";
    s += "\"rho\":" + fmt_g17(r.rho);
    s += ",\"loss\":\"" + std::string(r.loss == LossKind::BPR ? "bpr" : "ce") + "\"";
    s += ",\"tau\":" + fmt_g17(r.tau);
    s += ",\"seed\":" + std::to_string(r.seed);
    s += ",\"n_pairs\":" + std::to_string(r.n_pairs);
    s += ",\"n_samples\":" + std::to_string(r.n_samples);
    s += ",\"n_components\":" + std::to_string(r.components.size());
    s += ",\"n_qualifying\":" + std::to_string(r.n_qualifying);
    s += ",\"n_agreeing\":" + std::to_string(r.n_agreeing);
    s += ",\"sign_agreement_rate\":" + fmt_g17(r.sign_agreement_rate);
    s += ",\"trace_identity_error\":" + fmt_g17(r.trace_identity_error);
    s += ",\"components\":[";
    for (std::size_t k = 0; k < r.components.size(); ++k) {
        const ComponentRow& c = r.components[k];
        if (k) s += ",";
        s += "{\"lambda\":" + fmt_g17(c.lambda);
        s += ",\"g\":" + fmt_g17(c.g);
        s += ",\"energy\":" + fmt_g17(c.energy);
        s += ",\"grad\":" + fmt_g17(c.grad);
        s += ",\"signal\":" + fmt_g17(c.signal);
        s += ",\"threshold\":" + fmt_g17(c.threshold);
        s += ",\"predicted_sign\":" + std::to_string(c.predicted_sign);
        s += ",\"qualifies\":" + std::string(c.qualifies ? "true" : "false");
        s += ",\"agrees\":" + std::string(c.agrees ? "true" : "false");
        s += "}";
    }
    s += "]}";
    return s;
}

ExplosionReport explosion_trajectory(const std::vector<FilterSnapshot>& snapshots) {
    if (snapshots.size() < 2)
        throw std::invalid_argument("explosion_trajectory: need at least 2 snapshots");
    ExplosionReport rep;
    for (const FilterSnapshot& s : snapshots) {
        rep.epochs.push_back(s.epoch);
        rep.g_abs.push_back(s.g_at_lambda_max);
    }
    rep.ratio = rep.g_abs.back() / std::max(rep.g_abs.front(), 1e-12);
    std::size_t inc = 0, pairs = rep.g_abs.size() - 1;
    for (std::size_t i = 0; i + 1 < rep.g_abs.size(); ++i)
        if (rep.g_abs[i + 1] > rep.g_abs[i]) ++inc;
    rep.increase_fraction = static_cast<double>(inc) / static_cast<double>(pairs);
    return rep;
}

void write_trajectory_csv(std::ostream& os, const ExplosionReport& r) {
    os << "epoch,g_abs\n";
    for (std::size_t i = 0; i < r.epochs.size(); ++i)
        os << r.epochs[i] << "," << fmt_g17(r.g_abs[i]) << "\n";
}

StabilityReport stability_report(const std::vector<std::pair<std::string, FilterSpec>>& runs) {
    if (runs.size() < 2)
        throw std::invalid_argument("stability_report: need at least 2 runs");
    StabilityReport rep;
    rep.distances = Matrix(runs.size(), runs.size());
    for (const auto& [label, spec] : runs) {
        rep.labels.push_back(label);
        for (double x : curve_grid())
            rep.max_response = std::max(rep.max_response, std::fabs(eval_filter(spec, x)));
    }
    for (std::size_t i = 0; i < runs.size(); ++i)
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            double dist = filter_distance(runs[i].second, runs[j].second);
            rep.distances(i, j) = dist;
            rep.distances(j, i) = dist;
            rep.max_distance = std::max(rep.max_distance, dist);
        }
    return rep;
}

std::string stability_report_json(const StabilityReport& r) {
    std::string s = "{\"labels\":[";
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        if (i) s += ",";
        s += "\"" + r.labels[i] + "\"";
    }
    s += "],\"max_distance\":" + fmt_g17(r.max_distance);
    s += ",\"max_response\":" + fmt_g17(r.max_response);
    s += ",\"distances\":[";
    for (std::size_t i = 0; i < r.distances.rows; ++i) {
        if (i) s += ",";
        s += "[";
        for (std::size_t j = 0; j < r.distances.cols; ++j) {
            if (j) s += ",";
            s += fmt_g17(r.distances(i, j));
        }
        s += "]";
    }
    s += "]}";
    return s;
}

}  // namespace scf
