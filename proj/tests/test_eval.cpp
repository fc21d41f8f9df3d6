#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "scf/eval.hpp"

using namespace scf;

namespace {

// Hand-built score table: 2 users x 5 items, embedding dimension 1 so the
// score of (u, i) is H(u, 0) * H(n_users + i, 0).
struct Fixture {
    BipartiteLayout layout{2, 5};
    Matrix H;
    RankingTask task;

    Fixture() : H(7, 1) {
        H(0, 0) = 1.0;   // user 0
        H(1, 0) = -1.0;  // user 1
        // item scores for user 0: 5, 4, 3, 2, 1 (descending by item id)
        for (std::size_t j = 0; j < 5; ++j) H(2 + j, 0) = 5.0 - static_cast<double>(j);
        task.held_out.resize(2);
        task.masked.resize(2);
    }
};

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("topn orders by score with ties broken toward lower item ids") {
    Fixture f;
    std::vector<std::int64_t> top = topn(f.H, f.layout, f.task, 0, 3);
    CHECK(top == std::vector<std::int64_t>{0, 1, 2});
    // user 1 flips all scores, so the order reverses
    top = topn(f.H, f.layout, f.task, 1, 3);
    CHECK(top == std::vector<std::int64_t>{4, 3, 2});
    // exact ties: equal scores rank by ascending id
    Matrix flat(7, 1);
    flat(0, 0) = 1.0;
    for (std::size_t j = 0; j < 5; ++j) flat(2 + j, 0) = 7.0;
    top = topn(flat, f.layout, f.task, 0, 4);
    CHECK(top == std::vector<std::int64_t>{0, 1, 2, 3});
}

TEST_CASE("topn hides masked items and rejects over-long requests") {
    Fixture f;
    f.task.masked[0] = {0, 2};
    std::vector<std::int64_t> top = topn(f.H, f.layout, f.task, 0, 3);
    CHECK(top == std::vector<std::int64_t>{1, 3, 4});
    CHECK_THROWS_AS(topn(f.H, f.layout, f.task, 0, 4), std::invalid_argument);
}

TEST_CASE("recall oracle") {
    std::vector<std::int64_t> ranked = {3, 1, 4, 0, 2};
    CHECK(recall_at(ranked, {1, 2}, 2) == doctest::Approx(0.5));
    CHECK(recall_at(ranked, {1, 2}, 5) == doctest::Approx(1.0));
    CHECK(recall_at(ranked, {7}, 5) == doctest::Approx(0.0));
}

TEST_CASE("ndcg oracle: single hit at rank 2 scores 1/log2(3)") {
    std::vector<std::int64_t> ranked = {3, 1, 4};
    double want = 1.0 / std::log2(3.0);  // 0.63093...
    CHECK(ndcg_at(ranked, {1}, 3) == doctest::Approx(want).epsilon(1e-12));
    CHECK(ndcg_at(ranked, {1}, 3) == doctest::Approx(0.6309297535714574).epsilon(1e-12));
    // hit at rank 1 is ideal
    CHECK(ndcg_at(ranked, {3}, 3) == doctest::Approx(1.0));
    // two holds, hits at ranks 1 and 3; ideal is ranks 1 and 2
    double dcg = 1.0 + 1.0 / std::log2(4.0);
    double idcg = 1.0 + 1.0 / std::log2(3.0);
    CHECK(ndcg_at(ranked, {3, 4}, 3) == doctest::Approx(dcg / idcg).epsilon(1e-12));
    // the ideal truncates at the cutoff
    std::vector<std::int64_t> held = {0, 1, 2, 3, 4};
    CHECK(ndcg_at({0, 1}, held, 2) == doctest::Approx(1.0));
}

TEST_CASE("evaluate averages eligible users only") {
    Fixture f;
    f.task.held_out[0] = {0};        // user 0: hit at rank 1
    f.task.held_out[1] = {};         // user 1 ineligible
    MetricsRecord m = evaluate(f.H, f.layout, f.task);
    CHECK(m.eligible_users == 1);
    CHECK(m.ndcg10 == doctest::Approx(1.0));
    CHECK(m.recall10 == doctest::Approx(1.0));

    f.task.held_out[1] = {0};        // user 1 ranks item 0 last (score -5)
    m = evaluate(f.H, f.layout, f.task);
    CHECK(m.eligible_users == 2);
    // user 0 contributes 1, user 1 contributes 1/log2(6) at rank 5
    double want = 0.5 * (1.0 + 1.0 / std::log2(6.0));
    CHECK(m.ndcg10 == doctest::Approx(want).epsilon(1e-12));
    CHECK(m.recall20 == doctest::Approx(1.0));
}

TEST_CASE("evaluate masks training positives before ranking") {
    Fixture f;
    f.task.held_out[0] = {2};
    f.task.masked[0] = {0, 1};  // the two higher-scoring items are hidden
    f.task.held_out[1] = {4};
    MetricsRecord m = evaluate(f.H, f.layout, f.task);
    // with items 0 and 1 gone, item 2 ranks first for user 0
    CHECK(m.ndcg10 == doctest::Approx(0.5 * (1.0 + 1.0)).epsilon(1e-12));
}

TEST_CASE("evaluate needs at least one eligible user") {
    Fixture f;
    CHECK_THROWS_AS(evaluate(f.H, f.layout, f.task), std::runtime_error);
}

}  // TEST_SUITE
