#include <catch2/catch_amalgamated.hpp>

#include <boost/math/distributions/students_t.hpp>

#include "methylhub/rng.hpp"
#include "methylhub/stats.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace methylhub;

namespace {

Vector vec(std::initializer_list<double> values) {
    Vector v(static_cast<Index>(values.size()));
    Index i = 0;
    for (double x : values) v(i++) = x;
    return v;
}

}  // namespace

TEST_CASE("student t tail probability matches boost", "[stats][oracle]") {
    for (double df : {1.0, 2.0, 4.0, 10.0, 30.0, 100.0, 204.0}) {
        boost::math::students_t dist(df);
        for (double t : {0.1, 0.5, 1.0, 2.0, 3.5, 6.0, 12.0}) {
            const double expected = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
            REQUIRE(student_t_two_sided_p(t, df) == Catch::Approx(expected).epsilon(1e-12));
            REQUIRE(student_t_two_sided_p(-t, df) == Catch::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("welch test on hand fixtures", "[stats]") {
    SECTION("identical groups") {
        const Vector x = vec({1, 2, 3, 4});
        const WelchResult r = welch_test(x, x);
        REQUIRE(r.delta == 0.0);
        REQUIRE(r.p_value == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("shifted group") {
        const WelchResult r = welch_test(vec({11, 12, 13}), vec({1, 2, 3}));
        REQUIRE(r.delta == Catch::Approx(10.0));
        REQUIRE(r.t_stat == Catch::Approx(12.24744871391589).epsilon(1e-12));
        REQUIRE(r.df == Catch::Approx(4.0).epsilon(1e-12));
        REQUIRE(r.p_value == Catch::Approx(0.00025521674944192687).epsilon(1e-9));
        REQUIRE(r.p_value < 0.01);
        REQUIRE(r.direction() == Direction::HYPER);

        // the observed split is the most extreme the permutation oracle can see
        const double perm = oracle::permutation_mean_diff_p({11, 12, 13}, {1, 2, 3}, 2000, 99);
        REQUIRE(perm < 0.15);
    }
    SECTION("equal constants") {
        const WelchResult r = welch_test(vec({2, 2, 2}), vec({2, 2}));
        REQUIRE(r.p_value == 1.0);
        REQUIRE(r.t_stat == 0.0);
    }
    SECTION("too few samples") {
        REQUIRE_ERROR_CODE(welch_test(vec({1.0}), vec({1, 2})), ErrorCode::TOO_FEW_SAMPLES);
    }
    SECTION("swap flips t and keeps p") {
        Rng rng(3);
        Vector x(6), y(8);
        for (Index i = 0; i < 6; ++i) x(i) = rng.normal();
        for (Index i = 0; i < 8; ++i) y(i) = rng.normal(0.5, 2.0);
        const WelchResult a = welch_test(x, y);
        const WelchResult b = welch_test(y, x);
        REQUIRE(a.t_stat == Catch::Approx(-b.t_stat).epsilon(1e-12));
        REQUIRE(a.p_value == Catch::Approx(b.p_value).epsilon(1e-12));
    }
}

TEST_CASE("welch p-values are uniform under the null", "[stats][oracle]") {
    Rng rng(2024);
    std::vector<double> p_values;
    for (int probe = 0; probe < 1000; ++probe) {
        Vector x(30), y(30);
        for (Index i = 0; i < 30; ++i) x(i) = rng.normal();
        for (Index i = 0; i < 30; ++i) y(i) = rng.normal();
        p_values.push_back(welch_test(x, y).p_value);
    }
    REQUIRE(testutil::ks_uniform_distance(p_values) < 0.06);
}

TEST_CASE("permutation test mode", "[stats]") {
    SECTION("separated fixture reaches the smallest attainable p") {
        // 3 vs 3: the observed split is the unique most extreme assignment
        // up to group swap, so p converges to about 2/C(6,3) = 0.1
        const double p = permutation_test(vec({11, 12, 13}), vec({1, 2, 3}), 4000, 99);
        REQUIRE(p < 0.15);
        REQUIRE(p > 0.05);
    }
    SECTION("null data gives a large p") {
        const double p = permutation_test(vec({1, 2, 3, 4}), vec({2, 3, 1, 4}), 2000, 7);
        REQUIRE(p > 0.3);
    }
    SECTION("fixed seed reproduces the value") {
        const double a = permutation_test(vec({1, 5, 3, 4}), vec({2, 2, 6, 1}), 500, 11);
        const double b = permutation_test(vec({1, 5, 3, 4}), vec({2, 2, 6, 1}), 500, 11);
        REQUIRE(a == b);
    }
    SECTION("agrees in order of magnitude with Welch on a moderate fixture") {
        Rng rng(55);
        Vector x(12), y(12);
        for (Index i = 0; i < 12; ++i) {
            x(i) = rng.normal(1.0, 1.0);
            y(i) = rng.normal(0.0, 1.0);
        }
        const double welch_p = welch_test(x, y).p_value;
        const double perm_p = permutation_test(x, y, 20000, 3);
        REQUIRE(perm_p == Catch::Approx(welch_p).margin(0.05));
    }
}

TEST_CASE("BH adjustment", "[stats]") {
    SECTION("single p") {
        REQUIRE(bh_fdr({0.04}) == std::vector<double>{0.04});
    }
    SECTION("step-up on the hand fixture") {
        const auto q = bh_fdr({0.01, 0.02, 0.03});
        REQUIRE(q[0] == Catch::Approx(0.03));
        REQUIRE(q[1] == Catch::Approx(0.03));
        REQUIRE(q[2] == Catch::Approx(0.03));
    }
    SECTION("all ones stay one") {
        const auto q = bh_fdr({1.0, 1.0, 1.0});
        for (double v : q) REQUIRE(v == 1.0);
    }
    SECTION("rejects out-of-range p") {
        REQUIRE_ERROR_CODE(bh_fdr({0.0}), ErrorCode::VALUE_OUT_OF_RANGE);
        REQUIRE_ERROR_CODE(bh_fdr({1.5}), ErrorCode::VALUE_OUT_OF_RANGE);
    }
    SECTION("q preserves the p ranking and dominates p") {
        Rng rng(5);
        std::vector<double> p;
        for (int i = 0; i < 50; ++i) p.push_back(std::max(1e-12, rng.uniform()));
        const auto q = bh_fdr(p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            REQUIRE(q[i] >= p[i]);
            for (std::size_t j = 0; j < p.size(); ++j)
                if (p[i] < p[j]) REQUIRE(q[i] <= q[j] + 1e-15);
        }
    }
}

TEST_CASE("pearson correlation", "[stats]") {
    SECTION("perfect correlation") {
        const Vector x = vec({1, 2, 3, 4});
        const CorrelationResult r = pearson(x, 2.0 * x);
        REQUIRE(r.r == 1.0);
        REQUIRE(r.ci_high == 1.0);
    }
    SECTION("hand fixture r = 0.8") {
        const CorrelationResult r = pearson(vec({1, 2, 3, 4}), vec({1, 3, 2, 4}));
        REQUIRE(r.r == Catch::Approx(0.8).epsilon(1e-12));
        REQUIRE(r.p_value == Catch::Approx(0.2).epsilon(1e-9));
        REQUIRE(r.ci_low <= r.r);
        REQUIRE(r.ci_high >= r.r);
    }
    SECTION("Fisher interval for r = -0.45, n = 111") {
        const CorrelationResult r = detail::correlation_from_r(-0.45, 111, 0);
        REQUIRE(r.ci_low == Catch::Approx(-0.5871473232458927).margin(5e-4));
        REQUIRE(r.ci_high == Catch::Approx(-0.2877387946435636).margin(5e-4));
    }
    SECTION("errors") {
        REQUIRE_ERROR_CODE(pearson(vec({1, 2, 3}), vec({1, 2, 3})), ErrorCode::TOO_FEW_SAMPLES);
        REQUIRE_ERROR_CODE(pearson(vec({1, 1, 1, 1}), vec({1, 2, 3, 4})),
                           ErrorCode::DEGENERATE_VECTOR);
    }
}

TEST_CASE("pearson is affine-invariant", "[stats][property]") {
    Rng rng(17);
    Vector x(25), y(25);
    for (Index i = 0; i < 25; ++i) {
        x(i) = rng.normal();
        y(i) = 0.4 * x(i) + rng.normal();
    }
    const double base = pearson(x, y).r;
    const Vector scaled = (3.5 * x.array() + 11.0).matrix();
    REQUIRE(std::fabs(pearson(scaled, y).r - base) <= 1e-12);
    const Vector flipped = (-2.0 * x.array() + 1.0).matrix();
    REQUIRE(pearson(flipped, y).r == Catch::Approx(-base).epsilon(1e-12));
}

TEST_CASE("partial correlation", "[stats]") {
    Rng rng(7);
    SECTION("empty covariates reduce to pearson") {
        Vector x(20), y(20);
        for (Index i = 0; i < 20; ++i) {
            x(i) = rng.normal();
            y(i) = 0.3 * x(i) + rng.normal();
        }
        const Matrix z(20, 0);
        REQUIRE(partial_correlation(x, y, z).r == Catch::Approx(pearson(x, y).r).epsilon(1e-12));
    }
    SECTION("y inside the covariate span gives zero") {
        const Index n = 20;
        Matrix z(n, 2);
        Vector x(n);
        for (Index i = 0; i < n; ++i) {
            z(i, 0) = rng.normal();
            z(i, 1) = rng.normal();
            x(i) = rng.normal();
        }
        const Vector y = 2.0 * z.col(0) - 0.5 * z.col(1);
        const CorrelationResult r = partial_correlation(x, y, z);
        REQUIRE(std::fabs(r.r) <= 1e-8);
    }
    SECTION("matches the inverse-correlation-matrix oracle") {
        const Index n = 50;
        for (int fixture = 0; fixture < 50; ++fixture) {
            Matrix z(n, 2);
            Vector x(n), y(n);
            for (Index i = 0; i < n; ++i) {
                z(i, 0) = rng.normal();
                z(i, 1) = rng.normal();
                x(i) = 0.5 * z(i, 0) + rng.normal();
                y(i) = -0.4 * z(i, 1) + 0.2 * x(i) + rng.normal();
            }
            const double expected = oracle::partial_corr_inverse_formula(x, y, z);
            REQUIRE(partial_correlation(x, y, z).r == Catch::Approx(expected).margin(1e-10));
        }
    }
    SECTION("orthogonal covariates leave pearson unchanged") {
        // Z columns built orthogonal to x and y by construction
        const Index n = 8;
        Vector x = vec({1, -1, 1, -1, 1, -1, 1, -1});
        Vector y = vec({1, 1, -1, -1, 1, 1, -1, -1});
        Matrix z(n, 1);
        z.col(0) = vec({1, -1, -1, 1, 1, -1, -1, 1});
        REQUIRE(std::fabs(x.dot(z.col(0))) < 1e-12);
        REQUIRE(std::fabs(y.dot(z.col(0))) < 1e-12);
        const double rp = partial_correlation(x, y, z).r;
        REQUIRE(rp == Catch::Approx(pearson(x, y).r).margin(1e-10));
    }
    SECTION("rank-deficient covariates error") {
        const Index n = 12;
        Matrix z(n, 2);
        Vector x(n), y(n);
        for (Index i = 0; i < n; ++i) {
            z(i, 0) = rng.normal();
            z(i, 1) = 2.0 * z(i, 0);
            x(i) = rng.normal();
            y(i) = rng.normal();
        }
        REQUIRE_ERROR_CODE(partial_correlation(x, y, z), ErrorCode::RANK_DEFICIENT_DESIGN);
    }
}

TEST_CASE("diff_meth_all orders by p and fills q", "[stats]") {
    MValueMatrix m;
    m.probe_ids = {"pA", "pB"};
    m.sample_ids = {"s0", "s1", "s2", "s3", "s4", "s5"};
    m.values.resize(2, 6);
    m.missing = BoolMask::Constant(2, 6, false);
    // pA separates the groups strongly; pB barely moves
    m.values.row(0) << 1.0, 1.1, 0.9, 5.0, 5.1, 4.9;
    m.values.row(1) << 1.0, 1.2, 0.8, 1.1, 0.9, 1.05;
    SampleTable samples;
    for (int i = 0; i < 6; ++i) {
        Sample s;
        s.sample_id = "s" + std::to_string(i);
        s.label = i < 3 ? Phenotype::CASE : Phenotype::CONTROL;
        s.age = 40;
        s.sex = Sex::M;
        s.batch = "B1";
        samples.add(std::move(s));
    }
    const auto rows = diff_meth_all(m, samples);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].feature_id == "pA");
    REQUIRE(rows[0].direction == Direction::HYPO);  // case mean below control mean
    REQUIRE(rows[0].q_value >= rows[0].p_value);
    REQUIRE(rows[1].q_value >= rows[1].p_value);
}
