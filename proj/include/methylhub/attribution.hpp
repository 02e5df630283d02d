#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "methylhub/error.hpp"
#include "methylhub/model.hpp"
#include "methylhub/types.hpp"

namespace methylhub {

enum class AttributionMode { SALIENCY, GRAD_X_INPUT, INTEGRATED };
enum class GeneAgg { SUM, MEAN, MAX };

inline std::string attribution_mode_name(AttributionMode m) {
    switch (m) {
        case AttributionMode::SALIENCY: return "SALIENCY";
        case AttributionMode::GRAD_X_INPUT: return "GRAD_X_INPUT";
        case AttributionMode::INTEGRATED: return "INTEGRATED";
    }
    return "GRAD_X_INPUT";
}

inline AttributionMode attribution_mode_from_name(const std::string& name) {
    if (name == "SALIENCY") return AttributionMode::SALIENCY;
    if (name == "GRAD_X_INPUT") return AttributionMode::GRAD_X_INPUT;
    if (name == "INTEGRATED") return AttributionMode::INTEGRATED;
    throw Error(ErrorCode::CONFIG_INVALID, "unknown attribution mode: " + name);
}

inline std::string gene_agg_name(GeneAgg a) {
    switch (a) {
        case GeneAgg::SUM: return "SUM";
        case GeneAgg::MEAN: return "MEAN";
        case GeneAgg::MAX: return "MAX";
    }
    return "SUM";
}

inline GeneAgg gene_agg_from_name(const std::string& name) {
    if (name == "SUM") return GeneAgg::SUM;
    if (name == "MEAN") return GeneAgg::MEAN;
    if (name == "MAX") return GeneAgg::MAX;
    throw Error(ErrorCode::CONFIG_INVALID, "unknown gene aggregation: " + name);
}

// Signed integrated gradients of the pre-logistic output along the straight
// path from the zero baseline, right-endpoint rule with `steps` points.
inline Vector integrated_gradient_sample(const MlpModel& model, const Vector& x, int steps) {
    Vector mean_grad = Vector::Zero(x.size());
    for (int t = 1; t <= steps; ++t) {
        const double alpha = static_cast<double>(t) / static_cast<double>(steps);
        mean_grad += input_gradient(model, (alpha * x.array()).matrix());
    }
    mean_grad /= static_cast<double>(steps);
    return mean_grad.cwiseProduct(x);
}

struct FoldAttribution {
    Vector scores;                      // full probe space; zero outside the subset
    std::vector<Index> feature_subset;  // probes the fold's model saw
};

// Per-probe attribution for one fold's model, averaged over the evaluation
// samples. `x_eval` lives in the full probe space; columns outside the
// model's feature subset score zero.
inline FoldAttribution attribute_fold(const MlpModel& model, const Matrix& x_eval,
                                      AttributionMode mode, int ig_steps = 32) {
    if (!model.trained) throw Error(ErrorCode::UNTRAINED_MODEL, "model has not been trained");
    if (x_eval.rows() == 0) throw Error(ErrorCode::EMPTY_INPUT, "no evaluation samples");

    const std::vector<Index>& subset = model.feature_subset;
    Vector subset_scores = Vector::Zero(static_cast<Index>(subset.size()));
    Vector x(static_cast<Index>(subset.size()));
    for (Index s = 0; s < x_eval.rows(); ++s) {
        for (std::size_t j = 0; j < subset.size(); ++j)
            x(static_cast<Index>(j)) = x_eval(s, subset[j]);
        switch (mode) {
            case AttributionMode::SALIENCY:
                subset_scores += input_gradient(model, x).cwiseAbs();
                break;
            case AttributionMode::GRAD_X_INPUT:
                subset_scores += input_gradient(model, x).cwiseProduct(x).cwiseAbs();
                break;
            case AttributionMode::INTEGRATED:
                subset_scores += integrated_gradient_sample(model, x, ig_steps).cwiseAbs();
                break;
        }
    }
    subset_scores /= static_cast<double>(x_eval.rows());

    FoldAttribution out;
    out.feature_subset = subset;
    out.scores = Vector::Zero(x_eval.cols());
    for (std::size_t j = 0; j < subset.size(); ++j)
        out.scores(subset[j]) = subset_scores(static_cast<Index>(j));
    return out;
}

// Maps scores of the fold's subset to rank-normalized values in [0, 1]
// (1 = top, 0 = bottom, ties averaged). Probes outside the subset get the
// fold's minimum value, 0.
inline Vector rank_normalize_fold(const FoldAttribution& fold, Index n_probes) {
    Vector out = Vector::Zero(n_probes);
    const std::size_t ns = fold.feature_subset.size();
    if (ns == 0) return out;
    if (ns == 1) {
        out(fold.feature_subset[0]) = 1.0;
        return out;
    }
    std::vector<Index> order(fold.feature_subset);
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return fold.scores(a) > fold.scores(b); });
    const double denom = static_cast<double>(ns - 1);
    std::size_t i = 0;
    while (i < ns) {
        std::size_t j = i + 1;
        while (j < ns && fold.scores(order[j]) == fold.scores(order[i])) ++j;
        // positions i..j-1 (0-based); value for position p is (ns-1-p)/(ns-1)
        double mean_value = 0.0;
        for (std::size_t p = i; p < j; ++p)
            mean_value += static_cast<double>(ns - 1 - p) / denom;
        mean_value /= static_cast<double>(j - i);
        for (std::size_t p = i; p < j; ++p) out(order[p]) = mean_value;
        i = j;
    }
    return out;
}

// Consensus = mean of within-fold rank-normalized scores.
inline Vector aggregate_across_folds(const std::vector<FoldAttribution>& folds, Index n_probes) {
    if (folds.empty()) throw Error(ErrorCode::EMPTY_INPUT, "no folds to aggregate");
    Vector consensus = Vector::Zero(n_probes);
    for (const auto& fold : folds) consensus += rank_normalize_fold(fold, n_probes);
    consensus /= static_cast<double>(folds.size());
    return consensus;
}

struct ProbeRankRow {
    int rank = 0;
    std::string probe_id;
    std::string gene;
    double score = 0.0;
};

inline std::vector<ProbeRankRow> top_probes(const Vector& consensus,
                                            const std::vector<std::string>& probe_ids,
                                            const AnnotationTable& ann, int k = 50) {
    std::vector<Index> order(static_cast<std::size_t>(consensus.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (consensus(a) != consensus(b)) return consensus(a) > consensus(b);
        return probe_ids[static_cast<std::size_t>(a)] < probe_ids[static_cast<std::size_t>(b)];
    });
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    std::vector<ProbeRankRow> rows;
    rows.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const Index p = order[i];
        ProbeRankRow row;
        row.rank = static_cast<int>(i + 1);
        row.probe_id = probe_ids[static_cast<std::size_t>(p)];
        const ProbeAnnotation* a = ann.find(row.probe_id);
        row.gene = a != nullptr ? a->gene : "";
        row.score = consensus(p);
        rows.push_back(std::move(row));
    }
    return rows;
}

struct GeneScore {
    double score = 0.0;
    int probe_count = 0;
};

// Aggregates probe consensus scores per gene. Unannotated / intergenic
// probes are excluded.
inline std::map<std::string, GeneScore> gene_scores(const Vector& consensus,
                                                    const std::vector<std::string>& probe_ids,
                                                    const AnnotationTable& ann, GeneAgg agg) {
    std::map<std::string, GeneScore> scores;
    for (Index i = 0; i < consensus.size(); ++i) {
        const ProbeAnnotation* a = ann.find(probe_ids[static_cast<std::size_t>(i)]);
        if (a == nullptr || a->gene.empty()) continue;
        GeneScore& g = scores[a->gene];
        const double v = consensus(i);
        switch (agg) {
            case GeneAgg::SUM:
            case GeneAgg::MEAN:
                g.score += v;
                break;
            case GeneAgg::MAX:
                g.score = g.probe_count == 0 ? v : std::max(g.score, v);
                break;
        }
        ++g.probe_count;
    }
    if (agg == GeneAgg::MEAN)
        for (auto& [gene, g] : scores) g.score /= static_cast<double>(g.probe_count);
    return scores;
}

struct GeneRankRow {
    int rank = 0;
    std::string gene;
    int probe_count = 0;
    double score = 0.0;
};

inline std::vector<GeneRankRow> rank_genes(const std::map<std::string, GeneScore>& scores,
                                           int k = 20) {
    std::vector<GeneRankRow> rows;
    rows.reserve(scores.size());
    for (const auto& [gene, g] : scores)
        rows.push_back(GeneRankRow{0, gene, g.probe_count, g.score});
    std::stable_sort(rows.begin(), rows.end(), [](const GeneRankRow& a, const GeneRankRow& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.gene < b.gene;
    });
    if (rows.size() > static_cast<std::size_t>(k)) rows.resize(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = static_cast<int>(i + 1);
    return rows;
}

inline std::vector<GeneRankRow> aggregate_genes(const Vector& consensus,
                                                const std::vector<std::string>& probe_ids,
                                                const AnnotationTable& ann, GeneAgg agg,
                                                int k = 20) {
    return rank_genes(gene_scores(consensus, probe_ids, ann, agg), k);
}

}  // namespace methylhub
