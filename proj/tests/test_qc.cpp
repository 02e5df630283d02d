#include <catch2/catch_amalgamated.hpp>

#include "methylhub/qc.hpp"
#include "methylhub/rng.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace methylhub;

namespace {

BetaMatrix make_beta(const std::vector<std::string>& probes,
                     const std::vector<std::string>& samples,
                     const std::vector<std::vector<double>>& rows) {
    BetaMatrix m;
    m.probe_ids = probes;
    m.sample_ids = samples;
    m.values.resize(static_cast<Index>(probes.size()), static_cast<Index>(samples.size()));
    m.missing = BoolMask::Constant(m.values.rows(), m.values.cols(), false);
    for (Index i = 0; i < m.values.rows(); ++i)
        for (Index j = 0; j < m.values.cols(); ++j)
            m.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

MValueMatrix make_m(const std::vector<std::vector<double>>& rows) {
    std::vector<std::string> probes, samples;
    for (std::size_t i = 0; i < rows.size(); ++i) probes.push_back("p" + std::to_string(i));
    for (std::size_t j = 0; j < rows[0].size(); ++j) samples.push_back("s" + std::to_string(j));
    MValueMatrix m;
    m.probe_ids = probes;
    m.sample_ids = samples;
    m.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
    m.missing = BoolMask::Constant(m.values.rows(), m.values.cols(), false);
    for (Index i = 0; i < m.values.rows(); ++i)
        for (Index j = 0; j < m.values.cols(); ++j)
            m.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

SampleTable four_samples_two_batches() {
    SampleTable t;
    const char* batches[] = {"A", "A", "B", "B"};
    for (int i = 0; i < 4; ++i) {
        Sample s;
        s.sample_id = "s" + std::to_string(i);
        s.label = i < 2 ? Phenotype::CASE : Phenotype::CONTROL;
        s.age = 30.0 + i;
        s.sex = i % 2 == 0 ? Sex::M : Sex::F;
        s.batch = batches[i];
        t.add(std::move(s));
    }
    return t;
}

}  // namespace

TEST_CASE("filter drops flagged and missing-heavy probes", "[qc]") {
    BetaMatrix m = make_beta({"p1", "p2", "p3", "p4", "p5"}, {"s1", "s2"},
                             {{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}, {0.2, 0.2}, {0.3, 0.3}});
    AnnotationTable ann;
    ann.add({"p1", "G1", "chr1", 0});
    ann.add({"p2", "G2", "chr1", static_cast<unsigned>(ProbeFlag::SNP)});
    ann.add({"p3", "G3", "chr1", static_cast<unsigned>(ProbeFlag::CROSS_REACTIVE)});
    ann.add({"p4", "G4", "chr1", 0});
    ann.add({"p5", "G5", "chr1", 0});

    QcPolicy policy;
    auto [kept, report] = filter_probes(m, ann, policy);
    REQUIRE(kept.probe_ids == std::vector<std::string>{"p1", "p4", "p5"});
    REQUIRE(report.dropped.at("SNP") == 1);
    REQUIRE(report.dropped.at("CROSS_REACTIVE") == 1);
    REQUIRE(report.dropped.at("LOW_QUALITY") == 0);
    REQUIRE(report.kept_probes == 3);
}

TEST_CASE("filter applies the missingness cap", "[qc]") {
    BetaMatrix m = make_beta({"p1", "p2"}, std::vector<std::string>(10, ""),
                             {std::vector<double>(10, 0.5), std::vector<double>(10, 0.5)});
    for (int j = 0; j < 10; ++j) m.sample_ids[static_cast<std::size_t>(j)] = "s" + std::to_string(j);
    m.missing(0, 0) = true;  // 10% missing
    AnnotationTable ann;
    ann.add({"p1", "G1", "chr1", 0});
    ann.add({"p2", "G2", "chr1", 0});

    QcPolicy policy;  // cap 0.05
    auto [kept, report] = filter_probes(m, ann, policy);
    REQUIRE(kept.probe_ids == std::vector<std::string>{"p2"});
    REQUIRE(report.dropped.at("MISSINGNESS") == 1);

    SECTION("identity policy keeps everything") {
        QcPolicy open;
        open.drop_flags = 0;
        open.max_missing_fraction = 1.0;
        auto [all, rep] = filter_probes(m, ann, open);
        REQUIRE(all.probe_ids == m.probe_ids);
    }
}

TEST_CASE("filter rejects unannotated probes", "[qc]") {
    BetaMatrix m = make_beta({"p1"}, {"s1"}, {{0.5}});
    AnnotationTable ann;
    REQUIRE_ERROR_CODE(filter_probes(m, ann, QcPolicy{}), ErrorCode::UNANNOTATED_PROBE);
}

TEST_CASE("filter matches the set-algebra oracle", "[qc][property]") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const int n_probes = 30;
        const int n_samples = 8;
        std::vector<std::string> probes, samples;
        std::vector<unsigned> flags;
        std::vector<double> missing_fraction;
        for (int j = 0; j < n_samples; ++j) samples.push_back("s" + std::to_string(j));
        BetaMatrix m;
        m.sample_ids = samples;
        m.values = Matrix::Constant(n_probes, n_samples, 0.5);
        m.missing = BoolMask::Constant(n_probes, n_samples, false);
        AnnotationTable ann;
        for (int i = 0; i < n_probes; ++i) {
            const std::string id = "p" + std::to_string(i);
            m.probe_ids.push_back(id);
            const unsigned f = static_cast<unsigned>(rng.below(8));
            ann.add({id, "G", "chr1", f});
            flags.push_back(f);
            const int holes = static_cast<int>(rng.below(4));
            for (int h = 0; h < holes; ++h)
                m.missing(i, static_cast<Index>(rng.below(n_samples))) = true;
            missing_fraction.push_back(static_cast<double>(m.missing.row(i).count()) / n_samples);
        }
        QcPolicy policy;
        policy.drop_flags = static_cast<unsigned>(rng.below(8));
        policy.max_missing_fraction = rng.uniform() * 0.5;

        const auto predicted = oracle::filter_prediction(m.probe_ids, flags, missing_fraction,
                                                         policy.drop_flags,
                                                         policy.max_missing_fraction);
        auto [kept, report] = filter_probes(m, ann, policy);
        std::set<std::string> got(kept.probe_ids.begin(), kept.probe_ids.end());
        REQUIRE(got == predicted);
    }
}

TEST_CASE("beta to M transform", "[qc]") {
    BetaMatrix m = make_beta({"p1", "p2", "p3"}, {"s"}, {{0.5}, {0.8}, {0.0}});
    const MValueMatrix out = beta_to_m(m, 1e-6);
    REQUIRE(out.values(0, 0) == Catch::Approx(0.0).margin(1e-14));
    REQUIRE(out.values(1, 0) == Catch::Approx(2.0).epsilon(1e-12));
    REQUIRE(out.values(2, 0) == Catch::Approx(-19.931567126628412).epsilon(1e-12));

    SECTION("invalid epsilon") {
        REQUIRE_ERROR_CODE(beta_to_m(m, 0.0), ErrorCode::CONFIG_INVALID);
        REQUIRE_ERROR_CODE(beta_to_m(m, 0.5), ErrorCode::CONFIG_INVALID);
    }
    SECTION("masked cells stay masked and zero") {
        m.missing(0, 0) = true;
        const MValueMatrix masked = beta_to_m(m, 1e-6);
        REQUIRE(masked.missing(0, 0));
        REQUIRE(masked.values(0, 0) == 0.0);
    }
}

TEST_CASE("beta to M is strictly increasing, antisymmetric, and bounded", "[qc][property]") {
    const double eps = 1e-6;
    const double bound = std::log2((1.0 - eps) / eps);
    Rng rng(7);
    double prev_b = -1.0, prev_m = 0.0;
    std::vector<double> grid = {0.0, 1.0};
    for (int i = 0; i < 200; ++i) grid.push_back(rng.uniform());
    std::sort(grid.begin(), grid.end());
    for (double b : grid) {
        BetaMatrix m = make_beta({"p"}, {"s"}, {{b}});
        const double value = beta_to_m(m, eps).values(0, 0);
        REQUIRE(std::fabs(value) <= bound);
        if (prev_b >= eps && b <= 1 - eps && b > prev_b) REQUIRE(value > prev_m);
        prev_b = b;
        prev_m = value;

        BetaMatrix mirrored = make_beta({"p"}, {"s"}, {{1.0 - b}});
        REQUIRE(beta_to_m(mirrored, eps).values(0, 0) == Catch::Approx(-value).margin(1e-10));
    }
}

TEST_CASE("imputation fills masked cells with the probe mean", "[qc]") {
    MValueMatrix m = make_m({{1.0, 2.0, 3.0}});
    m.missing(0, 1) = true;
    m.values(0, 1) = 0.0;
    const Index imputed = impute_missing(m);
    REQUIRE(imputed == 1);
    REQUIRE_FALSE(m.has_missing());
    REQUIRE(m.values(0, 1) == Catch::Approx(2.0));  // mean of {1, 3}
}

TEST_CASE("normalization modes", "[qc]") {
    SECTION("NONE is the identity") {
        const MValueMatrix m = make_m({{1.0, 4.0}, {2.0, 5.0}, {3.0, 6.0}});
        const MValueMatrix out = normalize(m, NormalizeMode::NONE);
        REQUIRE(out.values == m.values);
    }
    SECTION("QUANTILE maps both columns to the per-rank mean") {
        const MValueMatrix m = make_m({{1.0, 4.0}, {2.0, 5.0}, {3.0, 6.0}});
        const MValueMatrix out = normalize(m, NormalizeMode::QUANTILE);
        for (Index j = 0; j < 2; ++j) {
            REQUIRE(out.values(0, j) == Catch::Approx(2.5));
            REQUIRE(out.values(1, j) == Catch::Approx(3.5));
            REQUIRE(out.values(2, j) == Catch::Approx(4.5));
        }
    }
    SECTION("ZSCORE gives mean 0 variance 1 per column") {
        const MValueMatrix m = make_m({{1.0, 10.0}, {2.0, 20.0}, {6.0, 60.0}});
        const MValueMatrix out = normalize(m, NormalizeMode::ZSCORE);
        for (Index j = 0; j < 2; ++j) {
            const double mean = out.values.col(j).mean();
            const double var = (out.values.col(j).array() - mean).square().sum() / 2.0;
            REQUIRE(mean == Catch::Approx(0.0).margin(1e-12));
            REQUIRE(var == Catch::Approx(1.0).epsilon(1e-12));
        }
    }
    SECTION("constant column under ZSCORE is degenerate") {
        const MValueMatrix m = make_m({{1.0, 5.0}, {1.0, 6.0}});
        REQUIRE_ERROR_CODE(normalize(m, NormalizeMode::ZSCORE), ErrorCode::DEGENERATE_COLUMN);
    }
    SECTION("quantile requires a complete matrix") {
        MValueMatrix m = make_m({{1.0, 4.0}, {2.0, 5.0}});
        m.missing(0, 0) = true;
        REQUIRE_ERROR_CODE(normalize(m, NormalizeMode::QUANTILE), ErrorCode::MISSING_VALUES);
    }
}

TEST_CASE("quantile normalization is idempotent", "[qc][property]") {
    Rng rng(11);
    std::vector<std::vector<double>> rows(20, std::vector<double>(6));
    for (auto& row : rows)
        for (auto& v : row) v = rng.normal();
    const MValueMatrix m = make_m(rows);
    const MValueMatrix once = normalize(m, NormalizeMode::QUANTILE);
    const MValueMatrix twice = normalize(once, NormalizeMode::QUANTILE);
    REQUIRE((twice.values - once.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("residualization fixtures", "[qc]") {
    const SampleTable samples = four_samples_two_batches();

    SECTION("no covariates mean-centers each row") {
        const MValueMatrix m = make_m({{1.0, 2.0, 3.0, 4.0}});
        const MValueMatrix out = residualize(m, samples, {});
        REQUIRE(out.values(0, 0) == Catch::Approx(-1.5));
        REQUIRE(out.values(0, 3) == Catch::Approx(1.5));
    }
    SECTION("row equal to the age column residualizes to zero") {
        const MValueMatrix m = make_m({{30.0, 31.0, 32.0, 33.0}});
        const MValueMatrix out = residualize(m, samples, {Covariate::AGE});
        REQUIRE(out.values.row(0).norm() <= 1e-8 * m.values.row(0).norm());
    }
    SECTION("batch design on the hand fixture") {
        const MValueMatrix m = make_m({{1.0, 1.0, 3.0, 3.0}, {1.0, 2.0, 3.0, 4.0}});
        const MValueMatrix out = residualize(m, samples, {Covariate::BATCH});
        REQUIRE(out.values.row(0).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE(out.values(1, 0) == Catch::Approx(-0.5));
        REQUIRE(out.values(1, 1) == Catch::Approx(0.5));
        REQUIRE(out.values(1, 2) == Catch::Approx(-0.5));
        REQUIRE(out.values(1, 3) == Catch::Approx(0.5));
    }
    SECTION("rank-deficient design errors") {
        SampleTable constant_age;
        for (int i = 0; i < 4; ++i) {
            Sample s;
            s.sample_id = "s" + std::to_string(i);
            s.label = i < 2 ? Phenotype::CASE : Phenotype::CONTROL;
            s.age = 40.0;
            s.sex = Sex::M;
            s.batch = "B1";
            constant_age.add(std::move(s));
        }
        const MValueMatrix m = make_m({{1.0, 2.0, 3.0, 4.0}});
        REQUIRE_ERROR_CODE(residualize(m, constant_age, {Covariate::AGE}),
                           ErrorCode::RANK_DEFICIENT_DESIGN);
    }
}

TEST_CASE("residualization is idempotent and orthogonal to the design", "[qc][property]") {
    const SampleTable samples = four_samples_two_batches();
    Rng rng(13);
    std::vector<std::vector<double>> rows(10, std::vector<double>(4));
    for (auto& row : rows)
        for (auto& v : row) v = rng.normal();
    const MValueMatrix m = make_m(rows);
    const std::set<Covariate> covs = {Covariate::AGE, Covariate::BATCH};
    const MValueMatrix once = residualize(m, samples, covs);
    const MValueMatrix twice = residualize(once, samples, covs);
    REQUIRE((twice.values - once.values).cwiseAbs().maxCoeff() < 1e-10);

    const Matrix design = build_design(samples, m.sample_ids, covs);
    for (Index i = 0; i < once.values.rows(); ++i) {
        const double row_norm = m.values.row(i).norm();
        for (Index c = 0; c < design.cols(); ++c)
            REQUIRE(std::fabs(once.values.row(i).dot(design.col(c).transpose())) <=
                    1e-8 * std::max(row_norm, 1.0));
    }
}

TEST_CASE("run_qc wires the full preprocessing chain", "[qc]") {
    BetaMatrix m = make_beta({"p1", "p2", "p3", "p4"}, {"s0", "s1", "s2", "s3"},
                             {{0.1, 0.2, 0.3, 0.4},
                              {0.5, 0.6, 0.7, 0.8},
                              {0.2, 0.3, 0.2, 0.3},
                              {0.9, 0.8, 0.7, 0.6}});
    m.missing(0, 1) = true;
    AnnotationTable ann;
    ann.add({"p1", "G1", "chr1", 0});
    ann.add({"p2", "G2", "chr1", static_cast<unsigned>(ProbeFlag::LOW_QUALITY)});
    ann.add({"p3", "G3", "chr1", 0});
    ann.add({"p4", "G4", "chr1", 0});

    QcPolicy policy;
    policy.max_missing_fraction = 0.5;
    const QcOutput out = run_qc(m, ann, four_samples_two_batches(), policy);
    REQUIRE(out.report.kept_probes == 3);
    REQUIRE(out.report.dropped.at("LOW_QUALITY") == 1);
    REQUIRE(out.report.imputed_cells == 1);
    REQUIRE(out.m_values.n_probes() == 3);
    REQUIRE_FALSE(out.m_values.has_missing());
}
