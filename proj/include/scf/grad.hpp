#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scf/matrix.hpp"
#include "scf/model.hpp"

namespace scf {

enum class LossKind { BPR, CE };

// One training batch. BPR pairs each positive with one sampled negative; CE
// ranks the positive against every item (full softmax), so neg_items stays
// empty.
struct LossBatch {
    LossKind kind = LossKind::BPR;
    std::vector<std::int64_t> users;
    std::vector<std::int64_t> pos_items;
    std::vector<std::int64_t> neg_items;  // BPR: aligned with pos_items
    double tau = 1.0;                     // CE temperature, > 0

    std::size_t size() const { return users.size(); }
};

struct GradBundle {
    double loss = 0.0;
    Matrix dE;
    std::vector<std::vector<double>> dtheta;  // per branch
};

// Mean over pairs of -log sigmoid(s_pos - s_neg), via the stable softplus.
double bpr_loss(const std::vector<double>& s_pos, const std::vector<double>& s_neg);

// -log softmax(scores/tau)[pos] with max-subtraction; scores cover all items.
double ce_loss(const std::vector<double>& user_scores, std::int64_t pos, double tau);

// Loss of a batch under the current model output (forward already run).
double batch_loss_from_h(const Matrix& H, const BipartiteLayout& layout, const LossBatch& batch);

// Convenience: forward + batch loss.
double batch_loss(const ScenarioConfig& cfg, const Matrix& E, const LossBatch& batch);

// Exact reverse pass. Seeds G = dLoss/dH from the batch, un-fuses the branch
// average (half of G per branch), takes dtheta_l = <G_b, X_l>_F against the
// taped stacks, pulls G back through the propagation polynomial (the graph is
// symmetric, so the transpose is the graph itself), and finally through the
// row normalization: dE_i = (dEbar_i - (dEbar_i . ebar_i) ebar_i) / norm_i.
GradBundle backward(const ScenarioConfig& cfg, const ForwardTape& tape, const LossBatch& batch);

struct GradCheckReport {
    double max_rel_err_theta = 0.0;
    double max_rel_err_E = 0.0;
    bool pass = false;
};

// Central finite differences (step h) over every filter coefficient and
// n_e_samples randomly chosen embedding entries. Relative error uses a small
// absolute floor so near-zero gradients are compared by absolute error
// instead of amplified rounding noise.
GradCheckReport grad_check(const ScenarioConfig& cfg, const Matrix& E, const LossBatch& batch,
                           double h = 1e-5, double tol = 1e-5, int n_e_samples = 50,
                           std::uint64_t seed = 1);

std::string grad_check_json(const GradCheckReport& r);

}  // namespace scf
