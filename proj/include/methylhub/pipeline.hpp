#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "methylhub/attribution.hpp"
#include "methylhub/error.hpp"
#include "methylhub/hubnet.hpp"
#include "methylhub/ingest.hpp"
#include "methylhub/model.hpp"
#include "methylhub/qc.hpp"
#include "methylhub/stats.hpp"
#include "methylhub/synth.hpp"
#include "methylhub/types.hpp"

namespace methylhub {

struct AttributionConfig {
    AttributionMode mode = AttributionMode::GRAD_X_INPUT;
    GeneAgg agg = GeneAgg::SUM;
    int k_probes = 50;
    int k_genes = 20;
    int ig_steps = 32;

    nlohmann::json to_json() const {
        return {{"mode", attribution_mode_name(mode)},
                {"agg", gene_agg_name(agg)},
                {"k_probes", k_probes},
                {"k_genes", k_genes},
                {"ig_steps", ig_steps}};
    }

    static AttributionConfig from_json(const nlohmann::json& j) {
        AttributionConfig c;
        if (j.contains("mode")) c.mode = attribution_mode_from_name(j.at("mode").get<std::string>());
        if (j.contains("agg")) c.agg = gene_agg_from_name(j.at("agg").get<std::string>());
        if (j.contains("k_probes")) c.k_probes = j.at("k_probes");
        if (j.contains("k_genes")) c.k_genes = j.at("k_genes");
        if (j.contains("ig_steps")) c.ig_steps = j.at("ig_steps");
        if (c.k_probes < 1 || c.k_genes < 1 || c.ig_steps < 1)
            throw Error(ErrorCode::CONFIG_INVALID, "attribution sizes must be >= 1");
        return c;
    }
};

struct HubnetConfig {
    double tau = 0.3;
    int k_hubs = 20;

    nlohmann::json to_json() const { return {{"tau", tau}, {"k_hubs", k_hubs}}; }

    static HubnetConfig from_json(const nlohmann::json& j) {
        HubnetConfig c;
        if (j.contains("tau")) c.tau = j.at("tau");
        if (j.contains("k_hubs")) c.k_hubs = j.at("k_hubs");
        if (!(c.tau >= 0.0 && c.tau < 1.0) || c.k_hubs < 1)
            throw Error(ErrorCode::CONFIG_INVALID, "invalid hubnet parameters");
        return c;
    }
};

struct InputPaths {
    std::filesystem::path matrix;
    std::filesystem::path annotation;
    std::filesystem::path samples;
    std::filesystem::path modules;
};

struct PipelineConfig {
    std::optional<InputPaths> inputs;
    std::optional<SynthConfig> synth;
    QcPolicy qc;
    TrainConfig train;
    AttributionConfig attribution;
    HubnetConfig hubnet;
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 1;

    void validate() const {
        if (inputs.has_value() == synth.has_value())
            throw Error(ErrorCode::CONFIG_INVALID,
                        "config needs exactly one of 'inputs' and 'synth'");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        if (inputs) {
            j["inputs"] = {{"matrix", inputs->matrix.string()},
                           {"annotation", inputs->annotation.string()},
                           {"samples", inputs->samples.string()},
                           {"modules", inputs->modules.string()}};
        }
        if (synth) j["synth"] = synth->to_json();
        j["qc"] = qc.to_json();
        j["train"] = train.to_json();
        j["attribution"] = attribution.to_json();
        j["hubnet"] = hubnet.to_json();
        j["out_dir"] = out_dir.string();
        j["seed"] = seed;
        return j;
    }

    static PipelineConfig from_json(const nlohmann::json& j) {
        PipelineConfig c;
        if (j.contains("inputs")) {
            const auto& in = j.at("inputs");
            c.inputs = InputPaths{in.at("matrix").get<std::string>(),
                                  in.at("annotation").get<std::string>(),
                                  in.at("samples").get<std::string>(),
                                  in.at("modules").get<std::string>()};
        }
        if (j.contains("synth")) c.synth = SynthConfig::from_json(j.at("synth"));
        if (j.contains("qc")) c.qc = QcPolicy::from_json(j.at("qc"));
        if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
        if (j.contains("attribution")) c.attribution = AttributionConfig::from_json(j.at("attribution"));
        if (j.contains("hubnet")) c.hubnet = HubnetConfig::from_json(j.at("hubnet"));
        if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("seed")) c.seed = j.at("seed");
        c.validate();
        return c;
    }
};

// Worker cap from METHYLHUB_THREADS; results never depend on it.
inline int resolve_thread_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    const char* env = std::getenv("METHYLHUB_THREADS");
    if (env == nullptr) return hw;
    const int requested = std::atoi(env);
    if (requested < 1) return hw;
    return std::min(requested, hw);
}

struct AxisReport {
    std::string effector_gene;
    std::string hub_gene;
    bool self_axis = false;
    CorrelationResult correlation;
    CorrelationResult partial;
    WelchResult effector_test;
    WelchResult hub_test;

    nlohmann::json to_json() const {
        const auto corr_json = [](const CorrelationResult& c) {
            return nlohmann::json{{"r", c.r},
                                  {"n", c.n},
                                  {"ci", {c.ci_low, c.ci_high}},
                                  {"p_value", c.p_value},
                                  {"n_covariates", c.n_covariates}};
        };
        const auto welch_json = [](const WelchResult& w) {
            return nlohmann::json{{"delta", w.delta},
                                  {"t", w.t_stat},
                                  {"p_value", w.p_value},
                                  {"direction", direction_name(w.direction())}};
        };
        nlohmann::json j;
        j["effector_gene"] = effector_gene;
        j["hub_gene"] = hub_gene;
        j["self_axis"] = self_axis;
        j["pearson"] = corr_json(correlation);
        if (!self_axis) j["partial"] = corr_json(partial);
        j["effector_diff"] = welch_json(effector_test);
        j["hub_diff"] = welch_json(hub_test);
        return j;
    }
};

namespace detail {

inline Vector gene_profile(const MValueMatrix& m, const AnnotationTable& ann,
                           const std::string& gene) {
    const auto gene_probes = probes_by_gene(m, ann);
    auto it = gene_probes.find(gene);
    if (it == gene_probes.end())
        throw Error(ErrorCode::GENE_NOT_FOUND, "gene has no probes after QC: " + gene);
    return mean_of_rows(m, it->second);
}

inline WelchResult gene_welch(const Vector& profile, const std::vector<int>& labels) {
    std::vector<double> cases, controls;
    for (Index i = 0; i < profile.size(); ++i)
        (labels[static_cast<std::size_t>(i)] != 0 ? cases : controls).push_back(profile(i));
    const Vector x = Eigen::Map<const Vector>(cases.data(), static_cast<Index>(cases.size()));
    const Vector y = Eigen::Map<const Vector>(controls.data(), static_cast<Index>(controls.size()));
    return welch_test(x, y);
}

inline std::string format_stat(double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.6g", v);
    return buffer;
}

}  // namespace detail

// Correlation block between the top effector gene's methylation profile and
// the top hub gene's pathway activity, plus per-gene group tests. Partial
// correlation controls age and sex.
inline AxisReport report_axis(const std::string& effector_gene, const std::string& hub_gene,
                              const MValueMatrix& m, const AnnotationTable& ann,
                              const SampleTable& aligned_samples) {
    std::vector<int> labels;
    labels.reserve(aligned_samples.rows.size());
    for (const auto& s : aligned_samples.rows)
        labels.push_back(s.label == Phenotype::CASE ? 1 : 0);

    AxisReport axis;
    axis.effector_gene = effector_gene;
    axis.hub_gene = hub_gene;

    const Vector x = detail::gene_profile(m, ann, effector_gene);
    axis.effector_test = detail::gene_welch(x, labels);

    if (effector_gene == hub_gene) {
        axis.self_axis = true;
        axis.hub_test = axis.effector_test;
        axis.correlation.r = 1.0;
        axis.correlation.n = x.size();
        axis.correlation.ci_low = axis.correlation.ci_high = 1.0;
        axis.correlation.p_value = std::numeric_limits<double>::min();
        return axis;
    }

    Vector y = detail::gene_profile(m, ann, hub_gene);
    axis.hub_test = detail::gene_welch(y, labels);
    detail::zscore_row(y);  // pathway activity convention; correlation-invariant

    axis.correlation = pearson(x, y);
    Matrix z(x.size(), 2);
    for (Index i = 0; i < x.size(); ++i) {
        z(i, 0) = aligned_samples.rows[static_cast<std::size_t>(i)].age;
        z(i, 1) = aligned_samples.rows[static_cast<std::size_t>(i)].sex == Sex::M ? 1.0 : 0.0;
    }
    axis.partial = partial_correlation(x, y, z);
    return axis;
}

struct PipelineResult {
    QcReport qc;
    CvResult cv;
    Vector consensus;
    std::vector<ProbeRankRow> top_probe_rows;
    std::vector<GeneRankRow> top_gene_rows;
    GeneModuleGraph graph;
    std::vector<std::pair<std::string, double>> hubs;
    StabilityReport stability;
    AxisReport axis;
    std::vector<DiffMethResult> diffmeth;
    std::optional<SyntheticTruth> truth;
    MValueMatrix m_final;
    nlohmann::json report_json;
};

namespace detail {

template <class F>
auto run_stage(const char* name, F&& body) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e);
    }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

inline void write_probes_top(const std::filesystem::path& path,
                             const std::vector<ProbeRankRow>& rows) {
    auto out = open_output(path);
    out << "rank\tprobe_id\tgene\tconsensus\n";
    for (const auto& r : rows)
        out << r.rank << '\t' << r.probe_id << '\t' << r.gene << '\t' << format_fixed(r.score)
            << '\n';
}

inline void write_genes_top(const std::filesystem::path& path,
                            const std::vector<GeneRankRow>& rows, GeneAgg agg) {
    auto out = open_output(path);
    out << "rank\tgene\tprobe_count\tscore\tagg_mode\n";
    for (const auto& r : rows)
        out << r.rank << '\t' << r.gene << '\t' << r.probe_count << '\t' << format_fixed(r.score)
            << '\t' << gene_agg_name(agg) << '\n';
}

inline void write_hubs_tsv(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, double>>& ranking,
                           const GeneModuleGraph& graph, int k) {
    std::map<std::string, int> module_count;
    for (const auto& e : graph.edges) ++module_count[e.gene];
    auto out = open_output(path);
    out << "rank\tgene\thub_score\tmodule_count\n";
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), ranking.size());
    for (std::size_t i = 0; i < take; ++i)
        out << i + 1 << '\t' << ranking[i].first << '\t' << format_fixed(ranking[i].second)
            << '\t' << module_count[ranking[i].first] << '\n';
}

inline void write_modules_tsv(const std::filesystem::path& path, const GeneModuleGraph& graph,
                              const std::vector<std::pair<std::string, double>>& ranking, int k) {
    std::set<std::string> hub_set;
    for (std::size_t i = 0; i < std::min<std::size_t>(static_cast<std::size_t>(k), ranking.size());
         ++i)
        hub_set.insert(ranking[i].first);
    auto out = open_output(path);
    out << "module\tmember_hubs\tmean_edge_weight\n";
    for (const auto& module_id : graph.modules) {
        std::vector<std::string> member_hubs;
        double weight_sum = 0.0;
        int n_edges = 0;
        for (const auto& e : graph.edges) {
            if (e.module_id != module_id) continue;
            weight_sum += e.weight;
            ++n_edges;
            if (e.member && hub_set.count(e.gene)) member_hubs.push_back(e.gene);
        }
        std::sort(member_hubs.begin(), member_hubs.end());
        out << module_id << '\t';
        for (std::size_t i = 0; i < member_hubs.size(); ++i) {
            if (i) out << ',';
            out << member_hubs[i];
        }
        out << '\t' << format_fixed(n_edges > 0 ? weight_sum / n_edges : 0.0) << '\n';
    }
}

inline nlohmann::json stability_json(const StabilityReport& report) {
    nlohmann::json j;
    j["k"] = report.k;
    j["fold_top_sets"] = report.fold_top_sets;
    std::vector<std::vector<double>> pairwise;
    for (Index i = 0; i < report.pairwise.rows(); ++i) {
        std::vector<double> row;
        for (Index jx = 0; jx < report.pairwise.cols(); ++jx)
            row.push_back(report.pairwise(i, jx));
        pairwise.push_back(std::move(row));
    }
    j["pairwise"] = pairwise;
    j["mean_jaccard"] = report.mean_jaccard;
    return j;
}

inline void write_diffmeth_tsv(const std::filesystem::path& path,
                               const std::vector<DiffMethResult>& rows) {
    auto out = open_output(path);
    out << "feature_id\tdelta\tt\tp\tq\tdirection\n";
    for (const auto& r : rows)
        out << r.feature_id << '\t' << format_stat(r.delta) << '\t' << format_stat(r.t_stat)
            << '\t' << format_stat(r.p_value) << '\t' << format_stat(r.q_value) << '\t'
            << direction_name(r.direction) << '\n';
}

inline void write_roc_points(const std::filesystem::path& path, const std::vector<double>& scores,
                             const std::vector<int>& labels) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double n_pos = 0.0, n_neg = 0.0;
    for (int v : labels) (v != 0 ? n_pos : n_neg) += 1.0;
    auto out = open_output(path);
    out << "threshold\tfpr\ttpr\n";
    double tp = 0.0, fp = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] != 0 ? tp : fp) += 1.0;
            ++j;
        }
        out << format_stat(scores[order[i]]) << '\t' << format_fixed(fp / n_neg) << '\t'
            << format_fixed(tp / n_pos) << '\n';
        i = j;
    }
}

inline nlohmann::json cv_result_json(const CvResult& cv, const TrainConfig& cfg) {
    nlohmann::json j;
    j["config"] = cfg.to_json();
    j["mean_auroc"] = cv.mean_auroc;
    j["sd_auroc"] = cv.sd_auroc;
    j["pooled_auroc"] = cv.pooled_auroc;
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : cv.folds) {
        nlohmann::json fold;
        fold["fold"] = f.fold_index;
        fold["auroc"] = f.auroc_value;
        fold["hyperparameters"] = {{"hidden_sizes", f.chosen.hidden_sizes},
                                   {"learning_rate", f.chosen.learning_rate}};
        fold["test_samples"] = f.test_sample_ids;
        fold["feature_subset"] = f.feature_subset;
        fold["model_file"] = "model_fold" + std::to_string(f.fold_index) + ".json";
        folds.push_back(std::move(fold));
    }
    j["folds"] = std::move(folds);
    return j;
}

inline void write_cv_outputs(const std::filesystem::path& dir, const CvResult& cv,
                             const TrainConfig& cfg) {
    write_json_file(dir / "cv_result.json", cv_result_json(cv, cfg));
    for (const auto& f : cv.folds)
        write_json_file(dir / ("model_fold" + std::to_string(f.fold_index) + ".json"),
                        f.model.to_json());
}

inline SampleTable align_samples(const SampleTable& table,
                                 const std::vector<std::string>& sample_ids) {
    SampleTable aligned;
    for (const auto& id : sample_ids) {
        const Sample* s = table.find(id);
        if (s == nullptr)
            throw Error(ErrorCode::ID_MISMATCH, "matrix sample missing from sample table: " + id);
        aligned.add(*s);
    }
    return aligned;
}

}  // namespace detail

// Reference statistics reported by the study this pipeline models; rendered
// in the report for context, never asserted against computed values.
inline nlohmann::json axis_reference_block() {
    return {{"pearson_r", -0.45},
            {"pearson_ci", {-0.58, -0.31}},
            {"partial_r", -0.42},
            {"partial_p_below", 0.001},
            {"effector_p", 1.2e-8},
            {"effector_direction", "HYPER"},
            {"hub_p", 8.9e-4},
            {"hub_direction", "HYPO"},
            {"mean_auroc", 0.87},
            {"mean_jaccard", 0.72}};
}

inline PipelineResult run_pipeline(const PipelineConfig& config, int n_threads = 1) {
    config.validate();
    std::filesystem::create_directories(config.out_dir);

    PipelineResult result;

    // ingest
    BetaMatrix beta;
    AnnotationTable annotation;
    SampleTable sample_file;
    ModuleSet modules;
    detail::run_stage("ingest", [&] {
        if (config.synth) {
            SynthConfig synth_cfg = *config.synth;
            synth_cfg.seed = config.seed;
            SyntheticDataset ds = generate(synth_cfg);
            write_dataset(ds, config.out_dir);
            beta = std::move(ds.beta);
            annotation = std::move(ds.annotation);
            sample_file = std::move(ds.samples);
            modules = std::move(ds.modules);
            result.truth = std::move(ds.truth);
        } else {
            beta = load_beta_matrix(config.inputs->matrix);
            annotation = load_annotation(config.inputs->annotation);
            sample_file = load_samples(config.inputs->samples);
            modules = load_modules(config.inputs->modules);
        }
        return 0;
    });
    const SampleTable samples = detail::run_stage(
        "ingest", [&] { return detail::align_samples(sample_file, beta.sample_ids); });

    // qc
    detail::run_stage("qc", [&] {
        QcOutput qc = run_qc(beta, annotation, samples, config.qc);
        result.qc = std::move(qc.report);
        result.m_final = std::move(qc.m_values);
        detail::write_json_file(config.out_dir / "qc_report.json", result.qc.to_json());
        write_m_matrix(config.out_dir / "m_matrix.tsv", result.m_final);
        return 0;
    });

    // model
    TrainConfig train_cfg = config.train;
    train_cfg.seed = derive_seed(config.seed, {7});
    detail::run_stage("model", [&] {
        const Matrix x = result.m_final.values.transpose();
        result.cv = nested_cv(x, samples, train_cfg, n_threads);
        detail::write_cv_outputs(config.out_dir, result.cv, train_cfg);
        std::vector<double> pooled_scores;
        std::vector<int> pooled_labels;
        for (const auto& f : result.cv.folds)
            for (Index i = 0; i < f.test_scores.size(); ++i) {
                pooled_scores.push_back(f.test_scores(i));
                pooled_labels.push_back(
                    samples.rows[static_cast<std::size_t>(
                                     f.test_indices[static_cast<std::size_t>(i)])]
                            .label == Phenotype::CASE
                        ? 1
                        : 0);
            }
        detail::write_roc_points(config.out_dir / "roc_points.tsv", pooled_scores, pooled_labels);
        return 0;
    });

    // attribution
    std::vector<FoldAttribution> fold_attr;
    detail::run_stage("attribution", [&] {
        const Matrix x = result.m_final.values.transpose();
        for (const auto& f : result.cv.folds) {
            Matrix x_eval(static_cast<Index>(f.test_indices.size()), x.cols());
            for (Index i = 0; i < x_eval.rows(); ++i)
                x_eval.row(i) = x.row(f.test_indices[static_cast<std::size_t>(i)]);
            fold_attr.push_back(attribute_fold(f.model, x_eval, config.attribution.mode,
                                               config.attribution.ig_steps));
        }
        result.consensus = aggregate_across_folds(fold_attr, x.cols());
        result.top_probe_rows = top_probes(result.consensus, result.m_final.probe_ids, annotation,
                                           config.attribution.k_probes);
        result.top_gene_rows = aggregate_genes(result.consensus, result.m_final.probe_ids,
                                               annotation, config.attribution.agg,
                                               config.attribution.k_genes);
        detail::write_probes_top(config.out_dir / "probes_top.tsv", result.top_probe_rows);
        detail::write_genes_top(config.out_dir / "genes_top.tsv", result.top_gene_rows,
                                config.attribution.agg);
        return 0;
    });

    // hubnet
    detail::run_stage("hubnet", [&] {
        const auto consensus_genes = gene_scores(result.consensus, result.m_final.probe_ids,
                                                 annotation, config.attribution.agg);
        std::map<std::string, double> scores;
        for (const auto& [gene, g] : consensus_genes) scores[gene] = g.score;
        result.graph = build_graph(scores, result.m_final, annotation, modules,
                                   config.hubnet.tau);
        result.hubs = hub_ranking(result.graph);
        detail::write_hubs_tsv(config.out_dir / "hubs.tsv", result.hubs, result.graph,
                               config.hubnet.k_hubs);
        detail::write_modules_tsv(config.out_dir / "modules.tsv", result.graph, result.hubs,
                                  config.hubnet.k_hubs);

        std::vector<std::vector<std::string>> fold_rankings;
        for (const auto& fold : fold_attr) {
            const Vector fold_consensus =
                aggregate_across_folds({fold}, result.consensus.size());
            const auto fold_genes = gene_scores(fold_consensus, result.m_final.probe_ids,
                                                annotation, config.attribution.agg);
            std::map<std::string, double> fold_scores;
            for (const auto& [gene, g] : fold_genes) fold_scores[gene] = g.score;
            const auto fold_graph =
                build_graph(fold_scores, result.m_final, annotation, modules, config.hubnet.tau);
            std::vector<std::string> ranking;
            for (const auto& [gene, score] : hub_ranking(fold_graph)) ranking.push_back(gene);
            fold_rankings.push_back(std::move(ranking));
        }
        std::size_t min_size = fold_rankings.front().size();
        for (const auto& r : fold_rankings) min_size = std::min(min_size, r.size());
        const int k = std::min<int>(config.hubnet.k_hubs, static_cast<int>(min_size));
        result.stability = jaccard_stability(fold_rankings, k);
        detail::write_json_file(config.out_dir / "stability.json",
                                detail::stability_json(result.stability));
        return 0;
    });

    // dmstats
    detail::run_stage("dmstats", [&] {
        result.diffmeth = diff_meth_all(result.m_final, samples);
        detail::write_diffmeth_tsv(config.out_dir / "diffmeth.tsv", result.diffmeth);
        if (result.top_gene_rows.empty() || result.hubs.empty())
            throw Error(ErrorCode::EMPTY_INPUT, "no ranked genes for the axis report");
        result.axis = report_axis(result.top_gene_rows.front().gene, result.hubs.front().first,
                                  result.m_final, annotation, samples);
        return 0;
    });

    // report
    detail::run_stage("report", [&] {
        nlohmann::json report;
        PipelineConfig echoed = config;
        echoed.train = train_cfg;
        if (echoed.synth) echoed.synth->seed = config.seed;
        nlohmann::json config_echo = echoed.to_json();
        config_echo.erase("out_dir");  // environment, not analysis configuration
        report["config"] = config_echo;
        report["qc"] = result.qc.to_json();
        report["cv"] = detail::cv_result_json(result.cv, train_cfg);
        nlohmann::json probes = nlohmann::json::array();
        for (const auto& r : result.top_probe_rows)
            probes.push_back({{"rank", r.rank},
                              {"probe_id", r.probe_id},
                              {"gene", r.gene},
                              {"consensus", r.score}});
        report["top_probes"] = std::move(probes);
        nlohmann::json genes = nlohmann::json::array();
        for (const auto& r : result.top_gene_rows)
            genes.push_back({{"rank", r.rank},
                             {"gene", r.gene},
                             {"probe_count", r.probe_count},
                             {"score", r.score}});
        report["top_genes"] = std::move(genes);
        report["attribution"] = {
            {"mode", attribution_mode_name(config.attribution.mode)},
            {"values", "absolute"},
            {"agg", gene_agg_name(config.attribution.agg)},
            {"note", config.attribution.agg == GeneAgg::SUM
                         ? "SUM gene aggregation favors genes with many probes; "
                           "MEAN and MAX are available for sensitivity analysis"
                         : ""}};
        nlohmann::json hubs = nlohmann::json::array();
        for (std::size_t i = 0;
             i < std::min<std::size_t>(result.hubs.size(),
                                       static_cast<std::size_t>(config.hubnet.k_hubs));
             ++i)
            hubs.push_back({{"rank", i + 1},
                            {"gene", result.hubs[i].first},
                            {"hub_score", result.hubs[i].second}});
        report["hubs"] = std::move(hubs);
        report["stability"] = detail::stability_json(result.stability);
        report["axis"] = result.axis.to_json();
        report["axis_reference"] = axis_reference_block();
        detail::write_json_file(config.out_dir / "report.json", report);
        result.report_json = std::move(report);
        return 0;
    });

    return result;
}

}  // namespace methylhub
