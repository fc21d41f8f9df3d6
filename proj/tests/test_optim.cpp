#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "scf/optim.hpp"

using namespace scf;

namespace {

const std::vector<std::pair<std::int64_t, std::int64_t>> kPairs = {
    {0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 0}, {2, 2}, {3, 1}};

LossBatch small_batch() {
    LossBatch b;
    b.kind = LossKind::BPR;
    b.users = {0, 1, 2};
    b.pos_items = {0, 2, 0};
    b.neg_items = {2, 0, 1};
    return b;
}

struct TickFixture {
    BipartiteLayout layout{4, 3};
    SparseGraph g;
    ScenarioConfig cfg;
    BiLevelState st;

    explicit TickFixture(bool trainable = true) {
        g = normalize_sym(build_bipartite(kPairs, layout));
        cfg.scenario = Scenario::Homogeneous;
        cfg.layout = layout;
        FilterSpec spec = trainable ? monomial({1.0, 0.0, 0.0}) : avg_pool(2);
        cfg.branches.push_back(Branch{&g, spec, false});
        Rng rng = make_rng(31);
        st.E = random_normal_matrix(7, 5, 0.3, rng);
        st.thetas.push_back(to_monomial(cfg.branches[0].filter));
    }
};

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("first adam update moves by about lr in the gradient direction") {
    AdamState st;
    Matrix e(1, 3), d(1, 3);
    e(0, 0) = 1.0;
    e(0, 1) = -2.0;
    e(0, 2) = 0.5;
    d(0, 0) = 0.37;    // any magnitude: the first step is sign-normalized
    d(0, 1) = -120.0;
    d(0, 2) = 1e-4;
    adam_step(st, e, d, 0.01);
    CHECK(e(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(e(0, 1) == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(e(0, 2) == doctest::Approx(0.5 - 0.01).epsilon(1e-3));  // eps visible at tiny grads
    CHECK(st.t == 1);
}

TEST_CASE("adam weight decay is decoupled from the moment update") {
    AdamState s1, s2;
    Matrix e1(1, 1), e2(1, 1), d(1, 1);
    e1(0, 0) = e2(0, 0) = 2.0;
    d(0, 0) = 1.0;
    adam_step(s1, e1, d, 0.1, 0.0);
    adam_step(s2, e2, d, 0.1, 0.5);
    // decayed variant subtracts an extra lr * decay * w
    CHECK(e2(0, 0) == doctest::Approx(e1(0, 0) - 0.1 * 0.5 * 2.0).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients and names the entry") {
    AdamState st;
    Matrix e(1, 2), d(1, 2);
    d(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(adam_step(st, e, d, 0.1),
                         "adam_step: non-finite gradient at entry 1", std::runtime_error);
}

TEST_CASE("sgd oracle: 1.0 with gradient 0.5 at lr 0.1 gives 0.95") {
    std::vector<double> th = {1.0};
    sgd_step(th, {0.5}, 0.1);
    CHECK(th[0] == doctest::Approx(0.95).epsilon(1e-15));
    sgd_step(th, {0.0}, 0.1, 1.0);  // pure decay: 0.95 * (1 - 0.1)
    CHECK(th[0] == doctest::Approx(0.855).epsilon(1e-15));
}

TEST_CASE("negative sampling avoids the user's positives") {
    Rng rng = make_rng(41);
    std::vector<std::int64_t> pos = {0, 2, 4};
    for (int rep = 0; rep < 200; ++rep) {
        auto neg = sample_negatives(pos, 6, rng, 3);
        for (std::int64_t j : neg) {
            CHECK(j >= 0);
            CHECK(j < 6);
            CHECK(!std::binary_search(pos.begin(), pos.end(), j));
        }
    }
    std::vector<std::int64_t> all = {0, 1, 2};
    CHECK_THROWS_AS(sample_negatives(all, 3, rng, 1), std::runtime_error);
}

TEST_CASE("a fixed filter never changes its coefficients") {
    TickFixture f(false);
    TickConfig tc;
    tc.mode = TrainMode::Fixed;
    std::vector<double> before = f.st.thetas[0];
    std::uint64_t e_before = byte_hash(f.st.E);
    double loss = bilevel_tick(f.st, f.cfg, tc, small_batch(), small_batch());
    CHECK(loss > 0.0);
    CHECK(f.st.thetas[0] == before);
    CHECK(byte_hash(f.st.E) != e_before);  // embeddings still train
    CHECK(f.st.upper_steps == 0);
}

TEST_CASE("joint mode updates coefficients from the training batch every tick") {
    TickFixture f;
    TickConfig tc;
    tc.mode = TrainMode::Naive;
    std::vector<double> before = f.st.thetas[0];
    bilevel_tick(f.st, f.cfg, tc, small_batch(), small_batch());
    CHECK(f.st.thetas[0] != before);
    CHECK(f.st.lower_steps == 1);
    CHECK(f.st.upper_steps == 0);
}

TEST_CASE("interleaved mode touches coefficients only on schedule boundaries") {
    TickFixture f;
    TickConfig tc;
    tc.mode = TrainMode::BiLevel;
    tc.T = 3;
    for (int tick = 1; tick <= 6; ++tick) {
        std::vector<double> before = f.st.thetas[0];
        bilevel_tick(f.st, f.cfg, tc, small_batch(), small_batch());
        if (tick % 3 == 0) {
            CHECK(f.st.thetas[0] != before);
        } else {
            CHECK(f.st.thetas[0] == before);
        }
    }
    CHECK(f.st.lower_steps == 6);
    CHECK(f.st.upper_steps == 2);
}

TEST_CASE("upper step at zero rate reduces to the schedule-free baseline") {
    TickFixture a, b;
    TickConfig fixed_tc, bi_tc;
    fixed_tc.mode = TrainMode::Fixed;
    bi_tc.mode = TrainMode::BiLevel;
    bi_tc.T = 2;
    bi_tc.upper_lr = 0.0;
    for (int tick = 0; tick < 4; ++tick) {
        bilevel_tick(a.st, a.cfg, fixed_tc, small_batch(), small_batch());
        bilevel_tick(b.st, b.cfg, bi_tc, small_batch(), small_batch());
    }
    CHECK(byte_hash(a.st.E) == byte_hash(b.st.E));
    CHECK(byte_hash(a.st.thetas[0]) == byte_hash(b.st.thetas[0]));
    CHECK(b.st.upper_steps == 2);
}

TEST_CASE("config parser applies keys, comments, and blank lines") {
    std::istringstream in(
        "# run shape\n"
        "dim = 32\n"
        "\n"
        "  lower_lr =  5e-4 \n"
        "filter = jacobi\n"
        "seed = 9\n");
    TrainConfig c = parse_config(in);
    CHECK(c.dim == 32);
    CHECK(c.lower_lr == doctest::Approx(5e-4));
    CHECK(c.filter == "jacobi");
    CHECK(c.seed == 9);
    CHECK(c.L == 3);  // untouched default
}

TEST_CASE("config parser reports the offending line") {
    std::istringstream bad_key("dim = 8\nwavelength = 3\n");
    CHECK_THROWS_WITH_AS(parse_config(bad_key), "config line 2: unknown key 'wavelength'",
                         std::runtime_error);
    std::istringstream bad_value("dim = eight\n");
    CHECK_THROWS_AS(parse_config(bad_value), std::runtime_error);
    std::istringstream no_eq("dim 8\n");
    CHECK_THROWS_AS(parse_config(no_eq), std::runtime_error);
}

TEST_CASE("set_config_key rejects unknown keys without modifying the config") {
    TrainConfig c;
    CHECK(!set_config_key(c, "bogus", "1"));
    CHECK(set_config_key(c, "tau", "0.25"));
    CHECK(c.tau == 0.25);
    CHECK_THROWS_AS(set_config_key(c, "dim", "3.5x"), std::runtime_error);
}

TEST_CASE("validate_config rejects out-of-range values") {
    TrainConfig c;
    CHECK_NOTHROW(validate_config(c));
    TrainConfig bad = c;
    bad.dim = 0;
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
    bad = c;
    bad.tau = 0.0;
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
    bad = c;
    bad.scenario = "sideways";
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
    bad = c;
    bad.filter = "butterworth";
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
    bad = c;
    bad.T = 0;
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
}

TEST_CASE("filter names map to their training modes") {
    CHECK(mode_of_filter("l0") == TrainMode::Fixed);
    CHECK(mode_of_filter("ln") == TrainMode::Fixed);
    CHECK(mode_of_filter("avgp") == TrainMode::Fixed);
    CHECK(mode_of_filter("jacobi") == TrainMode::Fixed);
    CHECK(mode_of_filter("linc") == TrainMode::Fixed);
    CHECK(mode_of_filter("naive") == TrainMode::Naive);
    CHECK(mode_of_filter("aspire") == TrainMode::BiLevel);
}

TEST_CASE("filter_spec_from_config builds the right family") {
    TrainConfig c;
    c.L = 2;
    c.filter = "avgp";
    CHECK(filter_spec_from_config(c).kind == FilterKind::AvgPool);
    c.filter = "l0";
    CHECK(filter_spec_from_config(c).kind == FilterKind::LayerZero);
    c.filter = "ln";
    c.layer_n = 2;
    FilterSpec ln = filter_spec_from_config(c);
    CHECK(ln.kind == FilterKind::LayerN);
    CHECK(ln.n == 2);
    c.filter = "jacobi";
    CHECK(filter_spec_from_config(c).kind == FilterKind::JacobiBasis);
    c.filter = "linc";
    CHECK(filter_spec_from_config(c).kind == FilterKind::LinearCorrection);
    c.filter = "aspire";
    c.init = "high";
    FilterSpec tr = filter_spec_from_config(c);
    CHECK(tr.kind == FilterKind::Monomial);
    CHECK(tr.trainable);
    CHECK(tr.thetas == std::vector<double>{1.0, -2.0, 1.0});
}

TEST_CASE("config echo is stable json") {
    TrainConfig c;
    std::string s = config_json(c);
    CHECK(s.front() == '{');
    CHECK(s.back() == '}');
    CHECK(s.find("\"dim\":64") != std::string::npos);
    CHECK(s.find("\"filter\":\"aspire\"") != std::string::npos);
}

}  // TEST_SUITE
