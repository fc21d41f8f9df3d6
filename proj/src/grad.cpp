#include "scf/grad.hpp"

#include <cmath>
#include <stdexcept>

namespace scf {

namespace {

double softplus(double x) {
    // log(1 + e^x) without overflow on either side
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

double bpr_loss(const std::vector<double>& s_pos, const std::vector<double>& s_neg) {
    if (s_pos.empty()) throw std::invalid_argument("bpr_loss: empty batch");
    if (s_pos.size() != s_neg.size())
        throw std::invalid_argument("bpr_loss: positive/negative length mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < s_pos.size(); ++k) {
        // -log sigmoid(d) = softplus(-d)
        sum += softplus(-(s_pos[k] - s_neg[k]));
    }
    return sum / static_cast<double>(s_pos.size());
}

double ce_loss(const std::vector<double>& user_scores, std::int64_t pos, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("ce_loss: temperature must be positive");
    if (pos < 0 || pos >= static_cast<std::int64_t>(user_scores.size()))
        throw std::invalid_argument("ce_loss: positive index out of range");
    double zmax = -1e300;
    for (double s : user_scores) zmax = std::max(zmax, s / tau);
    double sum = 0.0;
    for (double s : user_scores) sum += std::exp(s / tau - zmax);
    double lse = zmax + std::log(sum);
    return lse - user_scores[static_cast<std::size_t>(pos)] / tau;
}

double batch_loss_from_h(const Matrix& H, const BipartiteLayout& layout, const LossBatch& batch) {
    if (batch.size() == 0) return 0.0;
    const auto n_items = static_cast<std::size_t>(layout.n_items);
    if (batch.kind == LossKind::BPR) {
        if (batch.neg_items.size() != batch.size())
            throw std::invalid_argument("batch_loss: missing negatives for pairwise loss");
        std::vector<double> sp(batch.size()), sn(batch.size());
        for (std::size_t k = 0; k < batch.size(); ++k) {
            sp[k] = score(H, layout, batch.users[k], batch.pos_items[k]);
            sn[k] = score(H, layout, batch.users[k], batch.neg_items[k]);
        }
        return bpr_loss(sp, sn);
    }
    double sum = 0.0;
    std::vector<double> scores(n_items);
    for (std::size_t k = 0; k < batch.size(); ++k) {
        const double* hu = H.row(static_cast<std::size_t>(batch.users[k]));
        for (std::size_t j = 0; j < n_items; ++j) {
            const double* hj = H.row(static_cast<std::size_t>(layout.n_users) + j);
            double s = 0.0;
            for (std::size_t c = 0; c < H.cols; ++c) s += hu[c] * hj[c];
            scores[j] = s;
        }
        sum += ce_loss(scores, batch.pos_items[k], batch.tau);
    }
    return sum / static_cast<double>(batch.size());
}

double batch_loss(const ScenarioConfig& cfg, const Matrix& E, const LossBatch& batch) {
    ForwardTape tape = forward(cfg, E);
    return batch_loss_from_h(tape.H, cfg.layout, batch);
}

namespace {

// Seeds G = dLoss/dH for the whole batch and returns the loss value.
double seed_output_grad(const Matrix& H, const BipartiteLayout& layout, const LossBatch& batch,
                        Matrix& G) {
    G = Matrix(H.rows, H.cols);
    const std::size_t B = batch.size();
    if (B == 0) return 0.0;
    const double invB = 1.0 / static_cast<double>(B);
    const auto n_users = static_cast<std::size_t>(layout.n_users);
    const auto n_items = static_cast<std::size_t>(layout.n_items);
    const std::size_t d = H.cols;
    double loss = 0.0;

    if (batch.kind == LossKind::BPR) {
        if (batch.neg_items.size() != B)
            throw std::invalid_argument("backward: missing negatives for pairwise loss");
        for (std::size_t k = 0; k < B; ++k) {
            const auto u = static_cast<std::size_t>(batch.users[k]);
            const auto ip = n_users + static_cast<std::size_t>(batch.pos_items[k]);
            const auto in = n_users + static_cast<std::size_t>(batch.neg_items[k]);
            const double* hu = H.row(u);
            const double* hp = H.row(ip);
            const double* hn = H.row(in);
            double diff = 0.0;
            for (std::size_t c = 0; c < d; ++c) diff += hu[c] * (hp[c] - hn[c]);
            loss += softplus(-diff);
            const double coef = -(1.0 - sigmoid(diff)) * invB;
            double* gu = G.row(u);
            double* gp = G.row(ip);
            double* gn = G.row(in);
            for (std::size_t c = 0; c < d; ++c) {
                gu[c] += coef * (hp[c] - hn[c]);
                gp[c] += coef * hu[c];
                gn[c] -= coef * hu[c];
            }
        }
        return loss * invB;
    }

    if (batch.tau <= 0.0) throw std::invalid_argument("backward: temperature must be positive");
    const double inv_tau = 1.0 / batch.tau;
    std::vector<double> z(n_items);
    for (std::size_t k = 0; k < B; ++k) {
        const auto u = static_cast<std::size_t>(batch.users[k]);
        const auto pos = static_cast<std::size_t>(batch.pos_items[k]);
        const double* hu = H.row(u);
        double zmax = -1e300;
        for (std::size_t j = 0; j < n_items; ++j) {
            const double* hj = H.row(n_users + j);
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += hu[c] * hj[c];
            z[j] = s * inv_tau;
            zmax = std::max(zmax, z[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n_items; ++j) {
            z[j] = std::exp(z[j] - zmax);
            sum += z[j];
        }
        loss += -std::log(z[pos] / sum);
        double* gu = G.row(u);
        for (std::size_t j = 0; j < n_items; ++j) {
            double p = z[j] / sum;
            double coef = (p - (j == pos ? 1.0 : 0.0)) * inv_tau * invB;
            const double* hj = H.row(n_users + j);
            double* gj = G.row(n_users + j);
            for (std::size_t c = 0; c < d; ++c) {
                gu[c] += coef * hj[c];
                gj[c] += coef * hu[c];
            }
        }
    }
    return loss * invB;
}

// W <- A*W + theta_l * Gb, evaluated from the top coefficient down; ends with
// W = sum_l theta_l A^l Gb.
void pullback_polynomial(const SparseGraph& g, const std::vector<double>& thetas,
                         const Matrix& Gb, Matrix& W) {
    const std::size_t L = thetas.size() - 1;
    W = Matrix(Gb.rows, Gb.cols);
    add_scaled(W, Gb, thetas[L]);
    if (L == 0) return;
    Matrix tmp(Gb.rows, Gb.cols);
    for (std::size_t l = L; l-- > 0;) {
        spmm(g, W, tmp);
        for (std::size_t i = 0; i < W.data.size(); ++i)
            W.data[i] = tmp.data[i] + thetas[l] * Gb.data[i];
    }
}

}  // namespace

GradBundle backward(const ScenarioConfig& cfg, const ForwardTape& tape, const LossBatch& batch) {
    if (tape.H.rows != static_cast<std::size_t>(cfg.layout.n_nodes()))
        throw std::invalid_argument("backward: tape does not match layout");

    GradBundle out;
    Matrix G;
    out.loss = seed_output_grad(tape.H, cfg.layout, batch, G);

    const double branch_w = cfg.fusion == Fusion::AveragePool ? 0.5 : 1.0;
    const auto n_users = static_cast<std::size_t>(cfg.layout.n_users);
    const auto n_items = static_cast<std::size_t>(cfg.layout.n_items);
    const std::size_t d = G.cols;

    Matrix dEbar(G.rows, G.cols);
    for (std::size_t b = 0; b < cfg.branches.size(); ++b) {
        const Branch& br = cfg.branches[b];
        const std::vector<double> thetas = to_monomial(br.filter);
        const auto& stack = tape.stacks[b];
        if (stack.size() != thetas.size())
            throw std::invalid_argument("backward: stale tape (stack/coefficient mismatch)");
        std::vector<double> dth(thetas.size(), 0.0);

        if (br.items_only) {
            Matrix Gi(n_items, d);
            for (std::size_t i = 0; i < n_items; ++i) {
                const double* src = G.row(n_users + i);
                double* dst = Gi.row(i);
                for (std::size_t c = 0; c < d; ++c) dst[c] = branch_w * src[c];
            }
            for (std::size_t l = 0; l < thetas.size(); ++l) dth[l] = frob_dot(Gi, stack[l]);
            Matrix W;
            pullback_polynomial(*br.graph, thetas, Gi, W);
            for (std::size_t i = 0; i < n_items; ++i) {
                const double* src = W.row(i);
                double* dst = dEbar.row(n_users + i);
                for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
            }
            // user rows pass through this branch untouched
            for (std::size_t u = 0; u < n_users; ++u) {
                const double* src = G.row(u);
                double* dst = dEbar.row(u);
                for (std::size_t c = 0; c < d; ++c) dst[c] += branch_w * src[c];
            }
        } else {
            Matrix Gb(G.rows, G.cols);
            for (std::size_t i = 0; i < G.data.size(); ++i) Gb.data[i] = branch_w * G.data[i];
            for (std::size_t l = 0; l < thetas.size(); ++l) dth[l] = frob_dot(Gb, stack[l]);
            Matrix W;
            pullback_polynomial(*br.graph, thetas, Gb, W);
            add_scaled(dEbar, W, 1.0);
        }
        out.dtheta.push_back(std::move(dth));
    }

    // Through the row normalization: the gradient keeps only the component
    // orthogonal to the row direction, scaled by 1/norm. Pass-through rows
    // recorded norm 1 and a (near-)zero direction, so they reduce to identity.
    out.dE = Matrix(G.rows, G.cols);
    for (std::size_t i = 0; i < G.rows; ++i) {
        const double* db = dEbar.row(i);
        const double* eb = tape.Ebar.row(i);
        double* de = out.dE.row(i);
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += db[c] * eb[c];
        const double inv_n = 1.0 / tape.norms[i];
        for (std::size_t c = 0; c < d; ++c) de[c] = (db[c] - dot * eb[c]) * inv_n;
    }
    return out;
}

GradCheckReport grad_check(const ScenarioConfig& cfg, const Matrix& E, const LossBatch& batch,
                           double h, double tol, int n_e_samples, std::uint64_t seed) {
    // Work on compiled coefficients so every branch is perturbable.
    ScenarioConfig local = cfg;
    for (auto& br : local.branches) br.filter = monomial(to_monomial(br.filter));

    ForwardTape tape = forward(local, E);
    GradBundle g = backward(local, tape, batch);

    auto rel_err = [](double a, double n) {
        return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), 1e-3});
    };

    GradCheckReport rep;
    for (std::size_t b = 0; b < local.branches.size(); ++b) {
        auto& th = local.branches[b].filter.thetas;
        for (std::size_t l = 0; l < th.size(); ++l) {
            const double keep = th[l];
            th[l] = keep + h;
            double lp = batch_loss(local, E, batch);
            th[l] = keep - h;
            double lm = batch_loss(local, E, batch);
            th[l] = keep;
            double num = (lp - lm) / (2.0 * h);
            rep.max_rel_err_theta = std::max(rep.max_rel_err_theta, rel_err(g.dtheta[b][l], num));
        }
    }

    Rng rng(seed);
    Matrix Ework = E;
    const std::size_t total = E.data.size();
    for (int s = 0; s < n_e_samples; ++s) {
        std::size_t idx = static_cast<std::size_t>(uniform_index(rng, total));
        const double keep = Ework.data[idx];
        Ework.data[idx] = keep + h;
        double lp = batch_loss(local, Ework, batch);
        Ework.data[idx] = keep - h;
        double lm = batch_loss(local, Ework, batch);
        Ework.data[idx] = keep;
        double num = (lp - lm) / (2.0 * h);
        rep.max_rel_err_E = std::max(rep.max_rel_err_E, rel_err(g.dE.data[idx], num));
    }

    rep.pass = rep.max_rel_err_theta < tol && rep.max_rel_err_E < tol;
    return rep;
}

std::string grad_check_json(const GradCheckReport& r) {
    return "{\"max_rel_err_theta\":" + fmt_g17(r.max_rel_err_theta) +
           ",\"max_rel_err_E\":" + fmt_g17(r.max_rel_err_E) +
           ",\"pass\":" + (r.pass ? "true" : "false") + "}";
}

}  // namespace scf
