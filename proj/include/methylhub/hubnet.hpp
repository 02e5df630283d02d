#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "methylhub/error.hpp"
#include "methylhub/stats.hpp"
#include "methylhub/types.hpp"

namespace methylhub {

struct ModuleActivity {
    std::vector<std::string> module_ids;
    Matrix activity;  // modules x samples, z-scored per module
    std::vector<bool> degenerate;
};

namespace detail {

inline std::map<std::string, std::vector<Index>> probes_by_gene(const MValueMatrix& m,
                                                                const AnnotationTable& ann) {
    std::map<std::string, std::vector<Index>> out;
    for (Index i = 0; i < m.n_probes(); ++i) {
        const ProbeAnnotation* a = ann.find(m.probe_ids[static_cast<std::size_t>(i)]);
        if (a == nullptr || a->gene.empty()) continue;
        out[a->gene].push_back(i);
    }
    return out;
}

inline Vector mean_of_rows(const MValueMatrix& m, const std::vector<Index>& rows) {
    Vector profile = Vector::Zero(m.n_samples());
    for (Index r : rows) profile += m.values.row(r).transpose();
    return profile / static_cast<double>(rows.size());
}

// Z-scores in place; returns false (and zeroes the vector) when degenerate.
inline bool zscore_row(Vector& v) {
    const double mean = v.mean();
    const double var = (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
    if (!(var > 0.0)) {
        v.setZero();
        return false;
    }
    v = (v.array() - mean) / std::sqrt(var);
    return true;
}

// Activity of one module: mean M over member genes' probes per sample,
// z-scored across samples. Returns nullopt when z-scoring is degenerate.
inline std::optional<Vector> single_module_activity(
    const MValueMatrix& m, const std::map<std::string, std::vector<Index>>& gene_probes,
    const GeneModule& module, const std::optional<std::string>& exclude_gene) {
    std::vector<Index> rows;
    for (const auto& gene : module.genes) {
        if (exclude_gene && gene == *exclude_gene) continue;
        auto it = gene_probes.find(gene);
        if (it == gene_probes.end()) continue;
        rows.insert(rows.end(), it->second.begin(), it->second.end());
    }
    if (rows.empty())
        throw Error(ErrorCode::EMPTY_MODULE_AFTER_EXCLUSION,
                    "module '" + module.module_id + "' has no surviving probes" +
                        (exclude_gene ? " after excluding " + *exclude_gene : ""));
    Vector activity = mean_of_rows(m, rows);
    if (!zscore_row(activity)) return std::nullopt;
    return activity;
}

// Pearson r, or nullopt for degenerate vectors.
inline std::optional<double> correlation_or_none(const Vector& x, const Vector& y) {
    if (x.size() < 4) throw Error(ErrorCode::TOO_FEW_SAMPLES, "correlation needs n >= 4");
    const Vector xc = x.array() - x.mean();
    const Vector yc = y.array() - y.mean();
    const double sx = xc.squaredNorm();
    const double sy = yc.squaredNorm();
    if (sx <= 0.0 || sy <= 0.0) return std::nullopt;
    return std::clamp(xc.dot(yc) / std::sqrt(sx * sy), -1.0, 1.0);
}

}  // namespace detail

inline ModuleActivity module_activity(const MValueMatrix& m, const AnnotationTable& ann,
                                      const ModuleSet& mods,
                                      const std::optional<std::string>& exclude_gene = {}) {
    const auto gene_probes = detail::probes_by_gene(m, ann);
    ModuleActivity out;
    out.activity.resize(static_cast<Index>(mods.modules.size()), m.n_samples());
    for (std::size_t mi = 0; mi < mods.modules.size(); ++mi) {
        const auto row =
            detail::single_module_activity(m, gene_probes, mods.modules[mi], exclude_gene);
        out.module_ids.push_back(mods.modules[mi].module_id);
        out.degenerate.push_back(!row.has_value());
        if (row)
            out.activity.row(static_cast<Index>(mi)) = row->transpose();
        else
            out.activity.row(static_cast<Index>(mi)).setZero();
    }
    return out;
}

struct GraphEdge {
    std::string gene;
    std::string module_id;
    double weight = 0.0;
    double rho = 0.0;
    bool member = false;
};

struct GeneModuleGraph {
    std::vector<std::string> genes;
    std::vector<std::string> modules;
    std::vector<GraphEdge> edges;
    std::map<std::string, double> hub_score;  // sum of incident edge weights
    double tau = 0.3;
};

// Bipartite gene-module graph. For each pair, rho is the correlation between
// the gene's mean-M profile and the module's leave-that-gene-out activity.
// An edge exists for members and for non-members passing the |rho| >= tau
// gate; its weight is the gene's max-rescaled attribution times |rho|.
inline GeneModuleGraph build_graph(const std::map<std::string, double>& gene_attr_scores,
                                   const MValueMatrix& m, const AnnotationTable& ann,
                                   const ModuleSet& mods, double tau = 0.3) {
    if (gene_attr_scores.empty())
        throw Error(ErrorCode::EMPTY_INPUT, "no gene attribution scores");
    if (!(tau >= 0.0 && tau < 1.0))
        throw Error(ErrorCode::CONFIG_INVALID, "tau must lie in [0, 1)");

    double max_score = 0.0;
    for (const auto& [gene, score] : gene_attr_scores) max_score = std::max(max_score, score);

    const auto gene_probes = detail::probes_by_gene(m, ann);
    std::map<std::string, Vector> base_activity;
    for (const auto& module : mods.modules) {
        const auto row = detail::single_module_activity(m, gene_probes, module, std::nullopt);
        base_activity[module.module_id] = row ? *row : Vector::Zero(m.n_samples());
    }

    GeneModuleGraph graph;
    graph.tau = tau;
    for (const auto& module : mods.modules) graph.modules.push_back(module.module_id);

    for (const auto& [gene, raw_score] : gene_attr_scores) {
        graph.genes.push_back(gene);
        double& hub = graph.hub_score[gene];
        hub = 0.0;
        auto probes_it = gene_probes.find(gene);
        if (probes_it == gene_probes.end()) continue;
        const Vector profile = detail::mean_of_rows(m, probes_it->second);
        const double attr = max_score > 0.0 ? raw_score / max_score : 0.0;

        for (const auto& module : mods.modules) {
            const bool member =
                std::find(module.genes.begin(), module.genes.end(), gene) != module.genes.end();
            double rho = 0.0;
            std::optional<Vector> activity;
            if (member) {
                // leave-one-gene-out; a module emptied or degenerate by the
                // exclusion contributes rho = 0
                try {
                    const auto row = detail::single_module_activity(m, gene_probes, module,
                                                                    std::optional<std::string>(gene));
                    if (row) activity = *row;
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::EMPTY_MODULE_AFTER_EXCLUSION) throw;
                }
            } else {
                activity = base_activity.at(module.module_id);
            }
            if (activity) {
                const auto r = detail::correlation_or_none(profile, *activity);
                rho = r.value_or(0.0);
            }
            if (member || std::fabs(rho) >= tau) {
                GraphEdge edge;
                edge.gene = gene;
                edge.module_id = module.module_id;
                edge.rho = rho;
                edge.member = member;
                edge.weight = attr * std::fabs(rho);
                hub += edge.weight;
                graph.edges.push_back(std::move(edge));
            }
        }
    }
    return graph;
}

// Descending hub ranking, ties broken by gene symbol.
inline std::vector<std::pair<std::string, double>> hub_ranking(const GeneModuleGraph& graph) {
    std::vector<std::pair<std::string, double>> ranking(graph.hub_score.begin(),
                                                        graph.hub_score.end());
    std::stable_sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return ranking;
}

struct StabilityReport {
    int k = 0;
    std::vector<std::vector<std::string>> fold_top_sets;
    Matrix pairwise;  // folds x folds, diagonal 1
    double mean_jaccard = 0.0;
};

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t intersection = 0;
    for (const auto& v : a) intersection += b.count(v);
    const std::size_t union_size = a.size() + b.size() - intersection;
    return union_size == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(union_size);
}

// Mean pairwise Jaccard similarity of the per-fold top-k hub sets.
inline StabilityReport jaccard_stability(
    const std::vector<std::vector<std::string>>& per_fold_rankings, int k = 20) {
    const std::size_t f = per_fold_rankings.size();
    if (f < 2) throw Error(ErrorCode::TOO_FEW_FOLDS, "stability needs at least 2 folds");
    for (const auto& ranking : per_fold_rankings)
        if (ranking.size() < static_cast<std::size_t>(k))
            throw Error(ErrorCode::K_TOO_LARGE,
                        "fold ranking holds " + std::to_string(ranking.size()) +
                            " genes, need k = " + std::to_string(k));

    StabilityReport report;
    report.k = k;
    std::vector<std::set<std::string>> sets;
    for (const auto& ranking : per_fold_rankings) {
        report.fold_top_sets.emplace_back(ranking.begin(), ranking.begin() + k);
        sets.emplace_back(ranking.begin(), ranking.begin() + k);
    }
    report.pairwise = Matrix::Identity(static_cast<Index>(f), static_cast<Index>(f));
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < f; ++i)
        for (std::size_t j = i + 1; j < f; ++j) {
            const double value = jaccard(sets[i], sets[j]);
            report.pairwise(static_cast<Index>(i), static_cast<Index>(j)) = value;
            report.pairwise(static_cast<Index>(j), static_cast<Index>(i)) = value;
            total += value;
            ++pairs;
        }
    report.mean_jaccard = total / static_cast<double>(pairs);
    return report;
}

}  // namespace methylhub
