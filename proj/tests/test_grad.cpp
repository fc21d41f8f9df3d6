#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "scf/grad.hpp"
#include "scf/optim.hpp"

using namespace scf;

namespace {

ScenarioConfig homogeneous_cfg(const SparseGraph& g, const BipartiteLayout& layout,
                               FilterSpec spec) {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::Homogeneous;
    cfg.layout = layout;
    cfg.branches.push_back(Branch{&g, std::move(spec), false});
    return cfg;
}

// Connected 4x3 instance.
const std::vector<std::pair<std::int64_t, std::int64_t>> kPairs = {
    {0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 0}, {2, 2}, {3, 1}};

LossBatch bpr_batch() {
    LossBatch b;
    b.kind = LossKind::BPR;
    b.users = {0, 1, 2};
    b.pos_items = {0, 2, 0};
    b.neg_items = {2, 0, 1};
    return b;
}

LossBatch ce_batch(double tau) {
    LossBatch b;
    b.kind = LossKind::CE;
    b.users = {0, 1, 3};
    b.pos_items = {1, 2, 1};
    b.tau = tau;
    return b;
}

}  // namespace

TEST_SUITE("grad") {

TEST_CASE("pairwise loss oracles") {
    CHECK(bpr_loss({0.0}, {0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(bpr_loss({1.0}, {0.0}) ==
          doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-14));  // 0.313262...
    CHECK(bpr_loss({1.0}, {0.0}) == doctest::Approx(0.3132616875182229).epsilon(1e-12));
    // mean over the batch
    CHECK(bpr_loss({0.0, 1.0}, {0.0, 0.0}) ==
          doctest::Approx(0.5 * (std::log(2.0) + 0.3132616875182229)).epsilon(1e-12));
    // stable at extreme margins
    CHECK(bpr_loss({1000.0}, {0.0}) == doctest::Approx(0.0));
    CHECK(bpr_loss({0.0}, {1000.0}) == doctest::Approx(1000.0).epsilon(1e-12));
    CHECK_THROWS_AS(bpr_loss({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(bpr_loss({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("softmax loss oracles") {
    CHECK(ce_loss({1.0, 1.0}, 0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(ce_loss({2.0, 0.0}, 0, 1.0) ==
          doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-14));  // 0.126928...
    CHECK(ce_loss({2.0, 0.0}, 0, 1.0) == doctest::Approx(0.1269280110429726).epsilon(1e-12));
    // temperature rescales the margin: (1 - 0)/0.5 = 2
    CHECK(ce_loss({1.0, 0.0}, 0, 0.5) == doctest::Approx(0.1269280110429726).epsilon(1e-12));
    // shift invariance via max-subtraction, extreme values included
    CHECK(ce_loss({1e4, 1e4 - 2.0}, 0, 1.0) ==
          doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-10));
    CHECK_THROWS_AS(ce_loss({1.0}, 0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(ce_loss({1.0}, 1, 1.0), std::invalid_argument);
}

TEST_CASE("backward returns the same loss as the forward evaluation") {
    BipartiteLayout layout{4, 3};
    SparseGraph g = normalize_sym(build_bipartite(kPairs, layout));
    ScenarioConfig cfg = homogeneous_cfg(g, layout, monomial({0.4, -0.3, 0.9}));
    Rng rng = make_rng(21);
    Matrix e = random_normal_matrix(7, 6, 0.5, rng);
    ForwardTape tape = forward(cfg, e);
    for (LossBatch batch : {bpr_batch(), ce_batch(0.7)}) {
        GradBundle gb = backward(cfg, tape, batch);
        CHECK(gb.loss == doctest::Approx(batch_loss_from_h(tape.H, layout, batch)).epsilon(1e-13));
        REQUIRE(gb.dtheta.size() == 1);
        CHECK(gb.dtheta[0].size() == 3);
        CHECK(gb.dE.same_shape(e));
    }
}

TEST_CASE("embedding gradients are orthogonal to the normalized rows") {
    // The loss sees only the direction of each row, so the pulled-back
    // gradient must have no radial component.
    BipartiteLayout layout{4, 3};
    SparseGraph g = normalize_sym(build_bipartite(kPairs, layout));
    ScenarioConfig cfg = homogeneous_cfg(g, layout, monomial({0.4, -0.3, 0.9}));
    Rng rng = make_rng(22);
    Matrix e = random_normal_matrix(7, 6, 0.5, rng);
    ForwardTape tape = forward(cfg, e);
    for (LossBatch batch : {bpr_batch(), ce_batch(1.0)}) {
        GradBundle gb = backward(cfg, tape, batch);
        for (std::size_t i = 0; i < 7; ++i) {
            double dot = 0.0, mag = 0.0;
            for (std::size_t c = 0; c < 6; ++c) {
                dot += gb.dE(i, c) * tape.Ebar(i, c);
                mag = std::max(mag, std::fabs(gb.dE(i, c)));
            }
            CHECK(std::fabs(dot) <= 1e-12 * std::max(1.0, mag));
        }
    }
}

TEST_CASE("scaling a row leaves the loss unchanged") {
    // Direct consequence of the pre-filter normalization; pins the invariant
    // the orthogonality test relies on.
    BipartiteLayout layout{4, 3};
    SparseGraph g = normalize_sym(build_bipartite(kPairs, layout));
    ScenarioConfig cfg = homogeneous_cfg(g, layout, monomial({0.4, -0.3, 0.9}));
    Rng rng = make_rng(23);
    Matrix e = random_normal_matrix(7, 6, 0.5, rng);
    double base = batch_loss(cfg, e, bpr_batch());
    for (std::size_t c = 0; c < 6; ++c) e(2, c) *= 3.5;
    CHECK(batch_loss(cfg, e, bpr_batch()) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("finite differences confirm both gradient blocks (pairwise loss)") {
    BipartiteLayout layout{4, 3};
    SparseGraph g = normalize_sym(build_bipartite(kPairs, layout));
    ScenarioConfig cfg = homogeneous_cfg(g, layout, monomial({0.8, -0.2, 0.4, 0.1}));
    Rng rng = make_rng(24);
    Matrix e = random_normal_matrix(7, 5, 0.6, rng);
    GradCheckReport rep = grad_check(cfg, e, bpr_batch());
    CHECK(rep.pass);
    CHECK(rep.max_rel_err_theta <= 1e-5);
    CHECK(rep.max_rel_err_E <= 1e-5);
}

TEST_CASE("finite differences confirm both gradient blocks (softmax loss)") {
    BipartiteLayout layout{4, 3};
    SparseGraph g = normalize_sym(build_bipartite(kPairs, layout));
    ScenarioConfig cfg = homogeneous_cfg(g, layout, monomial({0.8, -0.2, 0.4, 0.1}));
    Rng rng = make_rng(25);
    Matrix e = random_normal_matrix(7, 5, 0.6, rng);
    GradCheckReport rep = grad_check(cfg, e, ce_batch(0.5));
    CHECK(rep.pass);
}

TEST_CASE("finite differences confirm the dual-branch side path") {
    BipartiteLayout layout{4, 3};
    SparseGraph inter = normalize_sym(build_bipartite(kPairs, layout));
    SparseGraph ii =
        from_triplets(3, GraphKind::Knn, {0, 1, 1, 2}, {1, 0, 2, 1}, {1.0, 1.0, 1.0, 1.0});
    ScenarioConfig cfg;
    cfg.scenario = Scenario::DualBranch;
    cfg.fusion = Fusion::AveragePool;
    cfg.layout = layout;
    cfg.branches.push_back(Branch{&inter, monomial({0.6, 0.2, -0.4}), false});
    cfg.branches.push_back(Branch{&ii, monomial({0.9, -0.1, 0.3}), true});
    Rng rng = make_rng(26);
    Matrix e = random_normal_matrix(7, 5, 0.6, rng);
    GradCheckReport rep = grad_check(cfg, e, bpr_batch());
    CHECK(rep.pass);
}

TEST_CASE("gradients of zero coefficients vanish only where they should") {
    BipartiteLayout layout{4, 3};
    SparseGraph g = normalize_sym(build_bipartite(kPairs, layout));
    Rng rng = make_rng(27);
    Matrix e = random_normal_matrix(7, 5, 0.6, rng);

    // All-zero coefficients: H == 0, and the bilinear score makes dLoss/dH
    // itself zero, so every gradient collapses exactly.
    ScenarioConfig dead = homogeneous_cfg(g, layout, monomial({0.0, 0.0, 0.0}));
    ForwardTape tape = forward(dead, e);
    GradBundle gb = backward(dead, tape, bpr_batch());
    double emax = 0.0, tmax = 0.0;
    for (double v : gb.dE.data) emax = std::max(emax, std::fabs(v));
    for (double v : gb.dtheta[0]) tmax = std::max(tmax, std::fabs(v));
    CHECK(emax == 0.0);
    CHECK(tmax == 0.0);

    // A single zero entry among live ones still receives a gradient:
    // dtheta_l = <G, X_l> does not depend on theta_l's own value.
    ScenarioConfig live = homogeneous_cfg(g, layout, monomial({0.8, 0.0, 0.5}));
    ForwardTape tape2 = forward(live, e);
    GradBundle gb2 = backward(live, tape2, bpr_batch());
    CHECK(std::fabs(gb2.dtheta[0][1]) > 0.0);
}

TEST_CASE("grad_check_json carries the verdict") {
    GradCheckReport rep;
    rep.max_rel_err_theta = 0.25;
    rep.max_rel_err_E = 0.5;
    rep.pass = false;
    std::string s = grad_check_json(rep);
    CHECK(s.find("\"pass\":false") != std::string::npos);
    CHECK(s.find("theta") != std::string::npos);
}

}  // TEST_SUITE
