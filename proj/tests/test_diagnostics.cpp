#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "scf/diagnostics.hpp"

using namespace scf;

namespace {

// Connected 4x3 bipartite instance plus its edge-scaled propagation operator.
struct Instance {
    BipartiteLayout layout{4, 3};
    SparseGraph A;  // raw adjacency
    SparseGraph W;  // A / (2m)
    std::int64_t m = 0;

    Instance() {
        std::vector<std::pair<std::int64_t, std::int64_t>> pairs = {
            {0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 0}, {2, 2}, {3, 1}};
        m = static_cast<std::int64_t>(pairs.size());
        A = build_bipartite(pairs, layout);
        std::vector<std::int64_t> rows, cols;
        std::vector<double> vals;
        for (std::int64_t i = 0; i < A.n_nodes; ++i)
            for (std::int64_t p = A.indptr[i]; p < A.indptr[i + 1]; ++p) {
                rows.push_back(i);
                cols.push_back(A.indices[p]);
                vals.push_back(A.values[p] / (2.0 * static_cast<double>(m)));
            }
        W = from_triplets(A.n_nodes, GraphKind::Bipartite, std::move(rows), std::move(cols),
                          std::move(vals));
    }
};

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("decompose produces an orthonormal basis with Parseval energies") {
    Instance inst;
    Rng rng = make_rng(51);
    Matrix e = random_normal_matrix(7, 6, 0.7, rng);
    SpectralDecomposition de = decompose(inst.W, e);
    REQUIRE(de.n_components() == 7);
    // descending eigenvalues
    for (std::size_t k = 1; k < 7; ++k) CHECK(de.lambdas[k - 1] >= de.lambdas[k]);
    // energies add up to the squared Frobenius norm
    double total = 0.0;
    for (double v : de.energies) total += v;
    CHECK(total == doctest::Approx(frob_dot(e, e)).epsilon(1e-10));
    // Etil rows are the basis projections
    for (std::size_t k = 0; k < 7; ++k)
        for (std::size_t c = 0; c < 6; ++c) {
            double want = 0.0;
            for (std::size_t i = 0; i < 7; ++i) want += de.U(i, k) * e(i, c);
            CHECK(de.Etil(k, c) == doctest::Approx(want).epsilon(1e-10));
        }
}

TEST_CASE("decompose rejects mismatched shapes") {
    Instance inst;
    Matrix e(3, 2);
    CHECK_THROWS_AS(decompose(inst.W, e), std::invalid_argument);
}

TEST_CASE("the energy-weighted trace identity holds on the edge-scaled operator") {
    Instance inst;
    Rng rng = make_rng(52);
    Matrix e = random_normal_matrix(7, 5, 0.9, rng);
    SpectralDecomposition de = decompose(inst.W, e);

    std::vector<double> g(7);
    for (std::size_t k = 0; k < 7; ++k) g[k] = uniform_real(rng, 0.5, 1.5);
    CHECK(trace_identity_check(de, g, inst.A, inst.m) <= 1e-8);

    std::vector<double> ones(7, 1.0);
    CHECK(trace_identity_check(de, ones, inst.A, inst.m) <= 1e-8);

    std::vector<double> zeros(7, 0.0);
    CHECK(trace_identity_check(de, zeros, inst.A, inst.m) == 0.0);

    std::vector<double> short_g(6, 1.0);
    CHECK_THROWS_AS(trace_identity_check(de, short_g, inst.A, inst.m), std::invalid_argument);
    CHECK_THROWS_AS(trace_identity_check(de, g, inst.A, 0), std::invalid_argument);
}

TEST_CASE("sign law holds on the pairwise loss at the reference size") {
    TheoremReport rep = verify_theorem(60, 60, 0.1, 32, LossKind::BPR, 1.0, 1);
    CHECK(rep.n_pairs > 0);
    CHECK(rep.n_samples > rep.n_pairs);  // every pair carries many negatives
    CHECK(rep.n_qualifying > 0);
    CHECK(rep.sign_agreement_rate == 1.0);
    CHECK(rep.trace_identity_error <= 1e-8);
    CHECK(rep.components.size() == 120);
    // qualifying components carry the predicted descent direction
    for (const ComponentRow& c : rep.components)
        if (c.qualifies) {
            CHECK(c.predicted_sign == -((c.signal > 0) - (c.signal < 0)));
            CHECK(c.agrees);
        }
}

TEST_CASE("sign law holds on the softmax loss at the reference size") {
    TheoremReport rep = verify_theorem(60, 60, 0.1, 32, LossKind::CE, 1.0, 1);
    CHECK(rep.sign_agreement_rate == 1.0);
    // the softmax threshold is strictly tighter, so fewer components clear it
    TheoremReport bpr = verify_theorem(60, 60, 0.1, 32, LossKind::BPR, 1.0, 1);
    CHECK(rep.n_qualifying <= bpr.n_qualifying);
}

TEST_CASE("verify_theorem rejects degenerate parameters") {
    CHECK_THROWS_AS(verify_theorem(0, 10, 0.1, 16, LossKind::BPR, 1.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(verify_theorem(10, 10, 0.0, 16, LossKind::BPR, 1.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(verify_theorem(10, 10, 1.0, 16, LossKind::BPR, 1.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(verify_theorem(10, 10, 0.1, 4, LossKind::BPR, 1.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(verify_theorem(10, 10, 0.1, 16, LossKind::CE, 0.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(verify_theorem(2000, 2000, 0.1, 16, LossKind::BPR, 1.0, 1),
                    std::invalid_argument);
}

TEST_CASE("theorem report serializes the verdict fields") {
    TheoremReport rep = verify_theorem(20, 20, 0.3, 8, LossKind::BPR, 1.0, 2);
    std::string s = theorem_report_json(rep);
    CHECK(s.find("\"sign_agreement_rate\":") != std::string::npos);
    CHECK(s.find("\"components\":[") != std::string::npos);
    CHECK(s.find("\"loss\":\"bpr\"") != std::string::npos);
}

TEST_CASE("explosion trajectory summarizes growth") {
    auto snap = [](std::int64_t epoch, double theta0) {
        return snapshot(monomial({theta0}), epoch, 1.0);
    };
    ExplosionReport rep = explosion_trajectory({snap(0, 1.0), snap(5, 2.0), snap(10, 4.0)});
    CHECK(rep.epochs == std::vector<std::int64_t>{0, 5, 10});
    CHECK(rep.ratio == doctest::Approx(4.0));
    CHECK(rep.increase_fraction == doctest::Approx(1.0));

    ExplosionReport flat = explosion_trajectory({snap(0, 1.0), snap(5, 1.0)});
    CHECK(flat.ratio == doctest::Approx(1.0));
    CHECK(flat.increase_fraction == 0.0);

    CHECK_THROWS_AS(explosion_trajectory({snap(0, 1.0)}), std::invalid_argument);
}

TEST_CASE("trajectory csv lists one row per snapshot") {
    ExplosionReport rep = explosion_trajectory(
        {snapshot(monomial({1.0}), 0, 1.0), snapshot(monomial({2.5}), 5, 1.0)});
    std::ostringstream os;
    write_trajectory_csv(os, rep);
    CHECK(os.str() == "epoch,g_abs\n0,1\n5,2.5\n");
}

TEST_CASE("stability report compares final filters up to a sign") {
    std::vector<std::pair<std::string, FilterSpec>> runs = {
        {"full", monomial({1.0, 0.0})},
        {"flipped", monomial({-1.0, 0.0})},
        {"tilted", monomial({1.0, 0.5})},
    };
    StabilityReport rep = stability_report(runs);
    CHECK(rep.labels == std::vector<std::string>{"full", "flipped", "tilted"});
    CHECK(rep.distances(0, 1) == 0.0);  // sign flip is not a difference
    CHECK(rep.distances(0, 2) == doctest::Approx(0.5));
    CHECK(rep.distances(2, 0) == doctest::Approx(0.5));
    CHECK(rep.max_distance == doctest::Approx(0.5));
    CHECK(rep.max_response == doctest::Approx(1.5));
    CHECK_THROWS_AS(stability_report({runs[0]}), std::invalid_argument);
    std::string s = stability_report_json(rep);
    CHECK(s.find("\"max_distance\":0.5") != std::string::npos);
}

}  // TEST_SUITE
