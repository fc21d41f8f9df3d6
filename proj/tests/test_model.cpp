#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "scf/model.hpp"
#include "scf/spectral.hpp"

using namespace scf;

namespace {

// 3 users x 2 items, connected.
std::vector<std::pair<std::int64_t, std::int64_t>> tiny_pairs() {
    return {{0, 0}, {1, 0}, {1, 1}, {2, 1}};
}

ScenarioConfig tiny_config(const SparseGraph& g, FilterSpec spec) {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::Homogeneous;
    cfg.layout = BipartiteLayout{3, 2};
    cfg.branches.push_back(Branch{&g, std::move(spec), false});
    return cfg;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("prefilter_normalize scales rows to unit length") {
    Matrix e(2, 2);
    e(0, 0) = 3.0;
    e(0, 1) = 4.0;  // row 1 stays zero
    Matrix ebar;
    std::vector<double> norms;
    prefilter_normalize(e, ebar, norms);
    CHECK(norms[0] == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(ebar(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(ebar(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
    // zero-row guard: passes through untouched with a recorded norm of 1
    CHECK(norms[1] == 1.0);
    CHECK(ebar(1, 0) == 0.0);
    CHECK(ebar(1, 1) == 0.0);
}

TEST_CASE("propagate returns the full power stack") {
    SparseGraph g = normalize_sym(build_bipartite(tiny_pairs(), BipartiteLayout{3, 2}));
    Rng rng = make_rng(3);
    Matrix ebar = random_sphere_rows(5, 4, rng);
    std::vector<Matrix> stack = propagate(g, ebar, 2);
    REQUIRE(stack.size() == 3);
    CHECK(byte_hash(stack[0]) == byte_hash(ebar));
    Matrix ax(5, 4);
    spmm(g, ebar, ax);
    CHECK(byte_hash(stack[1]) == byte_hash(ax));
    Matrix aax(5, 4);
    spmm(g, ax, aax);
    CHECK(byte_hash(stack[2]) == byte_hash(aax));
}

TEST_CASE("combine applies the compiled coefficients") {
    SparseGraph g = normalize_sym(build_bipartite(tiny_pairs(), BipartiteLayout{3, 2}));
    Rng rng = make_rng(4);
    Matrix ebar = random_sphere_rows(5, 3, rng);
    std::vector<Matrix> stack = propagate(g, ebar, 2);
    FilterSpec spec = monomial({0.5, -1.0, 2.0});
    Matrix h = combine(stack, spec);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            double want = 0.5 * stack[0](i, c) - 1.0 * stack[1](i, c) + 2.0 * stack[2](i, c);
            CHECK(h(i, c) == doctest::Approx(want).epsilon(1e-14));
        }
}

TEST_CASE("polynomial forward equals the spectral-domain product") {
    // H = sum_l theta_l A^l Ebar must match U g(Lambda) U^T Ebar.
    SparseGraph g = normalize_sym(build_bipartite(tiny_pairs(), BipartiteLayout{3, 2}));
    FilterSpec spec = monomial({0.3, -0.7, 1.1, 0.2});
    ScenarioConfig cfg = tiny_config(g, spec);
    Rng rng = make_rng(5);
    Matrix e = random_normal_matrix(5, 4, 1.0, rng);
    ForwardTape tape = forward(cfg, e);

    EigenDecomposition eig = dense_eig(g);
    std::size_t n = 5, d = 4;
    Matrix want(n, d);
    for (std::size_t k = 0; k < n; ++k) {
        double lam = eig.eigenvalues[k];
        double gk = 0.2;
        gk = gk * lam + 1.1;
        gk = gk * lam - 0.7;
        gk = gk * lam + 0.3;
        // project Ebar on u_k, scale, accumulate
        for (std::size_t c = 0; c < d; ++c) {
            double proj = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                proj += eig.eigenvectors(i, k) * tape.Ebar(i, c);
            for (std::size_t i = 0; i < n; ++i)
                want(i, c) += eig.eigenvectors(i, k) * gk * proj;
        }
    }
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) err = std::max(err, std::fabs(tape.H(i, c) - want(i, c)));
    CHECK(err <= 1e-8);
}

TEST_CASE("score reads the item block") {
    SparseGraph g = normalize_sym(build_bipartite(tiny_pairs(), BipartiteLayout{3, 2}));
    ScenarioConfig cfg = tiny_config(g, layer_zero());
    Matrix e(5, 2);
    for (std::size_t i = 0; i < 5; ++i) e(i, 0) = static_cast<double>(i) + 1.0;
    ForwardTape tape = forward(cfg, e);
    // identity filter on normalized rows: H = Ebar, all rows (1, 0)
    CHECK(score(tape.H, cfg.layout, 0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("side branch transforms items and passes users through") {
    // Legal shape for an item-side branch is the two-branch config; the side
    // branch's own output is visible pre-fusion in branch_H.
    SparseGraph inter = normalize_sym(build_bipartite(tiny_pairs(), BipartiteLayout{3, 2}));
    SparseGraph ii = from_triplets(2, GraphKind::Knn, {0, 1}, {1, 0}, {1.0, 1.0});
    ScenarioConfig cfg;
    cfg.scenario = Scenario::DualBranch;
    cfg.fusion = Fusion::AveragePool;
    cfg.layout = BipartiteLayout{3, 2};
    cfg.branches.push_back(Branch{&inter, layer_zero(), false});
    cfg.branches.push_back(Branch{&ii, monomial({0.0, 1.0}), true});
    Rng rng = make_rng(6);
    Matrix e = random_sphere_rows(5, 3, rng);
    ForwardTape tape = forward(cfg, e);
    REQUIRE(tape.branch_H.size() == 2);
    const Matrix& side = tape.branch_H[1];
    // user rows: unchanged normalized input
    for (std::size_t u = 0; u < 3; ++u)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(side(u, c) == doctest::Approx(tape.Ebar(u, c)).epsilon(1e-15));
    // item rows: swapped by the permutation graph under g(lambda) = lambda
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(side(3, c) == doctest::Approx(tape.Ebar(4, c)).epsilon(1e-14));
        CHECK(side(4, c) == doctest::Approx(tape.Ebar(3, c)).epsilon(1e-14));
    }
}

TEST_CASE("dual branches fuse by averaging") {
    SparseGraph inter = normalize_sym(build_bipartite(tiny_pairs(), BipartiteLayout{3, 2}));
    SparseGraph ii = from_triplets(2, GraphKind::Knn, {0, 1}, {1, 0}, {1.0, 1.0});
    ScenarioConfig both;
    both.scenario = Scenario::DualBranch;
    both.fusion = Fusion::AveragePool;
    both.layout = BipartiteLayout{3, 2};
    both.branches.push_back(Branch{&inter, monomial({0.5, 0.5}), false});
    both.branches.push_back(Branch{&ii, monomial({1.0, -0.5}), true});
    Rng rng = make_rng(7);
    Matrix e = random_sphere_rows(5, 3, rng);
    ForwardTape tape = forward(both, e);
    REQUIRE(tape.branch_H.size() == 2);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(tape.H(i, c) ==
                  doctest::Approx(0.5 * (tape.branch_H[0](i, c) + tape.branch_H[1](i, c)))
                      .epsilon(1e-15));
}

TEST_CASE("validate rejects mismatched scenario shapes") {
    SparseGraph g = normalize_sym(build_bipartite(tiny_pairs(), BipartiteLayout{3, 2}));
    ScenarioConfig cfg = tiny_config(g, layer_zero());
    CHECK_NOTHROW(cfg.validate());
    cfg.scenario = Scenario::DualBranch;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // dual needs 2 branches + pooling
    cfg.scenario = Scenario::Homogeneous;
    cfg.fusion = Fusion::AveragePool;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("checkpoint round-trips bitwise") {
    Rng rng = make_rng(8);
    Matrix e = random_normal_matrix(7, 5, 0.3, rng);
    std::vector<std::vector<double>> thetas = {{1.0, -0.25, 1e-300}, {0.0, 2.0, 0.125}};
    std::string path = (std::filesystem::temp_directory_path() / "scf_ckpt_test.bin").string();
    save_checkpoint(path, e, thetas, Scenario::DualBranch);
    Checkpoint back = load_checkpoint(path);
    std::remove(path.c_str());
    CHECK(back.scenario == Scenario::DualBranch);
    CHECK(byte_hash(back.E) == byte_hash(e));
    REQUIRE(back.thetas.size() == 2);
    CHECK(back.thetas[0] == thetas[0]);
    CHECK(back.thetas[1] == thetas[1]);
}

TEST_CASE("load_checkpoint rejects foreign files") {
    std::string path = (std::filesystem::temp_directory_path() / "scf_ckpt_junk.bin").string();
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        REQUIRE(f);
        std::fputs("NOPE not a checkpoint", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::remove(path.c_str());
}

}  // TEST_SUITE
