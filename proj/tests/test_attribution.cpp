#include <catch2/catch_amalgamated.hpp>

#include "methylhub/attribution.hpp"
#include "methylhub/rng.hpp"
#include "support/test_util.hpp"

using namespace methylhub;

namespace {

// Pure linear model over d inputs with weights w, pre-logistic output w . x.
MlpModel linear_model(const std::vector<double>& w) {
    MlpModel m;
    const Index d = static_cast<Index>(w.size());
    m.layer_sizes = {static_cast<int>(d), 1};
    Matrix weight(1, d);
    for (Index i = 0; i < d; ++i) weight(0, i) = w[static_cast<std::size_t>(i)];
    m.weights = {weight};
    m.biases = {Vector::Zero(1)};
    m.feature_subset.resize(static_cast<std::size_t>(d));
    std::iota(m.feature_subset.begin(), m.feature_subset.end(), Index{0});
    m.trained = true;
    return m;
}

FoldAttribution fold_with(const std::vector<double>& scores, std::vector<Index> subset = {}) {
    FoldAttribution f;
    f.scores = Eigen::Map<const Vector>(scores.data(), static_cast<Index>(scores.size()));
    if (subset.empty()) {
        subset.resize(scores.size());
        std::iota(subset.begin(), subset.end(), Index{0});
    }
    f.feature_subset = std::move(subset);
    return f;
}

}  // namespace

TEST_CASE("attribution on a linear model", "[attribution]") {
    const MlpModel m = linear_model({2.0, -3.0, 0.0});
    Matrix x(2, 3);
    x << 1.0, 0.5, 4.0,
        -2.0, 1.0, 1.0;

    SECTION("saliency is |w| for every input") {
        const FoldAttribution fold = attribute_fold(m, x, AttributionMode::SALIENCY);
        REQUIRE(fold.scores(0) == Catch::Approx(2.0));
        REQUIRE(fold.scores(1) == Catch::Approx(3.0));
        REQUIRE(fold.scores(2) == 0.0);  // dead input
    }
    SECTION("grad-x-input averages |w_i x_i| over samples") {
        const FoldAttribution fold = attribute_fold(m, x, AttributionMode::GRAD_X_INPUT);
        REQUIRE(fold.scores(0) == Catch::Approx((2.0 * 1.0 + 2.0 * 2.0) / 2.0));
        REQUIRE(fold.scores(1) == Catch::Approx((3.0 * 0.5 + 3.0 * 1.0) / 2.0));
        REQUIRE(fold.scores(2) == 0.0);
    }
    SECTION("integrated gradients are exact for linear models at any step count") {
        const FoldAttribution few = attribute_fold(m, x, AttributionMode::INTEGRATED, 1);
        const FoldAttribution many = attribute_fold(m, x, AttributionMode::INTEGRATED, 32);
        REQUIRE((few.scores - many.scores).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE(few.scores(0) == Catch::Approx((2.0 * 1.0 + 2.0 * 2.0) / 2.0));
    }
    SECTION("completeness: signed attributions sum to f(x) - f(0)") {
        Vector sample(3);
        sample << 1.0, 0.5, 4.0;
        const Vector signed_ig = integrated_gradient_sample(m, sample, 16);
        REQUIRE(signed_ig.sum() == Catch::Approx(logit_forward(m, sample)).margin(1e-10));
    }
    SECTION("errors") {
        MlpModel untrained = m;
        untrained.trained = false;
        REQUIRE_ERROR_CODE(attribute_fold(untrained, x, AttributionMode::SALIENCY),
                           ErrorCode::UNTRAINED_MODEL);
        const Matrix empty(0, 3);
        REQUIRE_ERROR_CODE(attribute_fold(m, empty, AttributionMode::SALIENCY),
                           ErrorCode::EMPTY_INPUT);
    }
}

TEST_CASE("probes outside the fold subset score zero", "[attribution]") {
    MlpModel m = linear_model({2.0, -3.0});
    m.feature_subset = {1, 3};  // model sees full-space probes 1 and 3
    Matrix x(1, 5);
    x << 9.0, 1.0, 9.0, 0.5, 9.0;
    const FoldAttribution fold = attribute_fold(m, x, AttributionMode::GRAD_X_INPUT);
    REQUIRE(fold.scores.size() == 5);
    REQUIRE(fold.scores(0) == 0.0);
    REQUIRE(fold.scores(2) == 0.0);
    REQUIRE(fold.scores(4) == 0.0);
    REQUIRE(fold.scores(1) == Catch::Approx(2.0));
    REQUIRE(fold.scores(3) == Catch::Approx(1.5));
}

TEST_CASE("rank normalization and consensus", "[attribution]") {
    SECTION("single fold equals its own rank normalization") {
        const auto fold = fold_with({0.1, 0.9, 0.5});
        const Vector consensus = aggregate_across_folds({fold}, 3);
        REQUIRE(consensus(1) == 1.0);
        REQUIRE(consensus(2) == 0.5);
        REQUIRE(consensus(0) == 0.0);
    }
    SECTION("identical folds keep the ranking") {
        const auto fold = fold_with({0.1, 0.9, 0.5});
        const Vector one = aggregate_across_folds({fold}, 3);
        const Vector two = aggregate_across_folds({fold, fold}, 3);
        REQUIRE(one == two);
    }
    SECTION("opposite rankings average to one half") {
        const auto up = fold_with({0.9, 0.5, 0.1});
        const auto down = fold_with({0.1, 0.5, 0.9});
        const Vector consensus = aggregate_across_folds({up, down}, 3);
        for (Index i = 0; i < 3; ++i) REQUIRE(consensus(i) == Catch::Approx(0.5));
    }
    SECTION("ties share the average of their rank values") {
        const auto fold = fold_with({0.7, 0.7, 0.1});
        const Vector consensus = aggregate_across_folds({fold}, 3);
        REQUIRE(consensus(0) == Catch::Approx(0.75));
        REQUIRE(consensus(1) == Catch::Approx(0.75));
        REQUIRE(consensus(2) == 0.0);
    }
    SECTION("probes absent from a fold get that fold's minimum value") {
        FoldAttribution fold = fold_with({0.0, 0.9, 0.0, 0.5}, {1, 3});
        const Vector consensus = aggregate_across_folds({fold}, 4);
        REQUIRE(consensus(1) == 1.0);
        REQUIRE(consensus(3) == 0.0);
        REQUIRE(consensus(0) == 0.0);
        REQUIRE(consensus(2) == 0.0);
    }
    SECTION("empty fold list errors") {
        REQUIRE_ERROR_CODE(aggregate_across_folds({}, 3), ErrorCode::EMPTY_INPUT);
    }
}

TEST_CASE("consensus keeps unanimous orderings", "[attribution][property]") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        // fold scores drawn so probe 0 beats probe 1 in every fold
        std::vector<FoldAttribution> folds;
        for (int f = 0; f < 4; ++f) {
            std::vector<double> scores(6);
            for (auto& s : scores) s = rng.uniform();
            scores[0] = scores[1] + 0.25 + rng.uniform();
            folds.push_back(fold_with(scores));
        }
        const Vector consensus = aggregate_across_folds(folds, 6);
        REQUIRE(consensus(0) > consensus(1));
    }
}

TEST_CASE("permuting probes permutes attributions identically", "[attribution][property]") {
    const MlpModel m = linear_model({2.0, -3.0, 0.5, 1.0});
    Matrix x(3, 4);
    Rng rng(29);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const FoldAttribution base = attribute_fold(m, x, AttributionMode::GRAD_X_INPUT);

    const std::vector<Index> perm = {2, 0, 3, 1};  // new position of each original column
    std::vector<double> permuted_w(4);
    Matrix permuted_x(3, 4);
    for (Index c = 0; c < 4; ++c) {
        permuted_w[static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])] =
            m.weights[0](0, c);
        permuted_x.col(perm[static_cast<std::size_t>(c)]) = x.col(c);
    }
    const FoldAttribution shuffled =
        attribute_fold(linear_model(permuted_w), permuted_x, AttributionMode::GRAD_X_INPUT);
    for (Index c = 0; c < 4; ++c)
        REQUIRE(shuffled.scores(perm[static_cast<std::size_t>(c)]) ==
                Catch::Approx(base.scores(c)).epsilon(1e-14));
}

TEST_CASE("grad-x-input ranking matches the analytic linear ranking", "[attribution]") {
    // all-positive inputs so mean |w_i x_i| = |w_i mean(x_i)|
    const std::vector<double> w = {0.2, -1.5, 0.7, 3.0};
    const MlpModel m = linear_model(w);
    Rng rng(37);
    Matrix x(10, 4);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = 0.5 + rng.uniform();
    const FoldAttribution fold = attribute_fold(m, x, AttributionMode::GRAD_X_INPUT);

    std::vector<Index> got(4), expected(4);
    std::iota(got.begin(), got.end(), Index{0});
    expected = got;
    std::stable_sort(got.begin(), got.end(),
                     [&](Index a, Index b) { return fold.scores(a) > fold.scores(b); });
    std::stable_sort(expected.begin(), expected.end(), [&](Index a, Index b) {
        return std::fabs(w[static_cast<std::size_t>(a)] * x.col(a).mean()) >
               std::fabs(w[static_cast<std::size_t>(b)] * x.col(b).mean());
    });
    REQUIRE(got == expected);
}

TEST_CASE("probe and gene ranking tables", "[attribution]") {
    AnnotationTable ann;
    ann.add({"p0", "GA", "chr1", 0});
    ann.add({"p1", "GA", "chr1", 0});
    ann.add({"p2", "GB", "chr1", 0});
    ann.add({"p3", "", "chr1", 0});  // intergenic
    const std::vector<std::string> probes = {"p0", "p1", "p2", "p3"};
    Vector consensus(4);
    consensus << 0.9, 0.1, 0.5, 0.8;

    SECTION("top_probes clamps k and breaks ties lexicographically") {
        const auto all = top_probes(consensus, probes, ann, 99);
        REQUIRE(all.size() == 4);
        REQUIRE(all[0].probe_id == "p0");
        REQUIRE(all[0].rank == 1);
        REQUIRE(all[1].probe_id == "p3");
        REQUIRE(all[1].gene.empty());

        Vector tied(4);
        tied << 0.5, 0.5, 0.5, 0.5;
        const auto rows = top_probes(tied, probes, ann, 2);
        REQUIRE(rows.size() == 2);
        REQUIRE(rows[0].probe_id == "p0");
        REQUIRE(rows[1].probe_id == "p1");
    }
    SECTION("gene aggregation modes on {0.9, 0.1}") {
        const auto sum = gene_scores(consensus, probes, ann, GeneAgg::SUM);
        REQUIRE(sum.at("GA").score == Catch::Approx(1.0));
        REQUIRE(sum.at("GA").probe_count == 2);
        const auto mean = gene_scores(consensus, probes, ann, GeneAgg::MEAN);
        REQUIRE(mean.at("GA").score == Catch::Approx(0.5));
        const auto max = gene_scores(consensus, probes, ann, GeneAgg::MAX);
        REQUIRE(max.at("GA").score == Catch::Approx(0.9));
        REQUIRE(sum.count("") == 0);  // intergenic probes excluded
    }
    SECTION("gene table ranks and counts") {
        const auto rows = aggregate_genes(consensus, probes, ann, GeneAgg::SUM, 20);
        REQUIRE(rows.size() == 2);
        REQUIRE(rows[0].gene == "GA");
        REQUIRE(rows[0].probe_count == 2);
        REQUIRE(rows[1].gene == "GB");
        int total = 0;
        for (const auto& r : rows) total += r.probe_count;
        REQUIRE(total == 3);  // gene-annotated probes only
    }
}

TEST_CASE("SUM aggregation is additive under gene splits", "[attribution][property]") {
    Rng rng(41);
    AnnotationTable whole, split;
    std::vector<std::string> probes;
    std::vector<double> values;
    for (int i = 0; i < 12; ++i) {
        const std::string id = "p" + std::to_string(i);
        probes.push_back(id);
        values.push_back(rng.uniform());
        whole.add({id, "G", "chr1", 0});
        split.add({id, i % 2 == 0 ? "G_left" : "G_right", "chr1", 0});
    }
    const Vector consensus = Eigen::Map<const Vector>(values.data(), 12);
    const auto one = gene_scores(consensus, probes, whole, GeneAgg::SUM);
    const auto two = gene_scores(consensus, probes, split, GeneAgg::SUM);
    REQUIRE(one.at("G").score ==
            Catch::Approx(two.at("G_left").score + two.at("G_right").score).epsilon(1e-12));
}
