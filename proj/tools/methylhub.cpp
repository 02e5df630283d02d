// methylhub command line: runs the two-tier methylome analysis end to end or
// one stage at a time on the previous stage's files.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "methylhub/methylhub.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw methylhub::Error(methylhub::ErrorCode::IO_ERROR,
                               "cannot open config: " + path.string());
    json j;
    in >> j;
    return j;
}

methylhub::SampleTable aligned_samples(const methylhub::SampleTable& table,
                                       const std::vector<std::string>& ids) {
    return methylhub::detail::align_samples(table, ids);
}

struct StageIo {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    bool seed_given = false;
};

void add_common(CLI::App* cmd, StageIo& io) {
    cmd->add_option("--config", io.config_path, "JSON config file");
    cmd->add_option("--out", io.out_dir, "output directory");
    cmd->add_option("--seed", io.seed, "master seed")->each([&](const std::string&) {
        io.seed_given = true;
    });
}

int run_synth(const StageIo& io) {
    methylhub::SynthConfig cfg;
    if (!io.config_path.empty()) cfg = methylhub::SynthConfig::from_json(load_json_file(io.config_path));
    if (io.seed_given) cfg.seed = io.seed;
    const auto dataset = methylhub::generate(cfg);
    methylhub::write_dataset(dataset, io.out_dir);
    std::cout << "wrote synthetic dataset (" << dataset.beta.n_probes() << " probes x "
              << dataset.beta.n_samples() << " samples) to " << io.out_dir << "\n";
    return 0;
}

int run_qc_stage(const StageIo& io, const std::string& matrix, const std::string& annotation,
                 const std::string& samples) {
    methylhub::QcPolicy policy;
    if (!io.config_path.empty()) policy = methylhub::QcPolicy::from_json(load_json_file(io.config_path));
    const auto beta = methylhub::load_beta_matrix(matrix);
    const auto ann = methylhub::load_annotation(annotation);
    const auto table = aligned_samples(methylhub::load_samples(samples), beta.sample_ids);
    const auto qc = methylhub::run_qc(beta, ann, table, policy);
    fs::create_directories(io.out_dir);
    methylhub::write_m_matrix(fs::path(io.out_dir) / "m_matrix.tsv", qc.m_values);
    methylhub::detail::write_json_file(fs::path(io.out_dir) / "qc_report.json",
                                       qc.report.to_json());
    std::cout << "kept " << qc.report.kept_probes << " of " << qc.report.input_probes
              << " probes\n";
    return 0;
}

int run_stats_stage(const StageIo& io, const std::string& matrix, const std::string& samples) {
    const auto m = methylhub::load_m_matrix(matrix);
    const auto table = aligned_samples(methylhub::load_samples(samples), m.sample_ids);
    const auto results = methylhub::diff_meth_all(m, table);
    fs::create_directories(io.out_dir);
    methylhub::detail::write_diffmeth_tsv(fs::path(io.out_dir) / "diffmeth.tsv", results);
    std::cout << "tested " << results.size() << " features\n";
    return 0;
}

int run_train_stage(const StageIo& io, const std::string& matrix, const std::string& samples) {
    methylhub::TrainConfig cfg;
    if (!io.config_path.empty()) cfg = methylhub::TrainConfig::from_json(load_json_file(io.config_path));
    if (io.seed_given) cfg.seed = io.seed;
    const auto m = methylhub::load_m_matrix(matrix);
    const auto table = aligned_samples(methylhub::load_samples(samples), m.sample_ids);
    const methylhub::Matrix x = m.values.transpose();
    const auto cv = methylhub::nested_cv(x, table, cfg, methylhub::resolve_thread_count());
    fs::create_directories(io.out_dir);
    methylhub::detail::write_cv_outputs(io.out_dir, cv, cfg);
    std::vector<double> pooled_scores;
    std::vector<int> pooled_labels;
    for (const auto& f : cv.folds)
        for (Eigen::Index i = 0; i < f.test_scores.size(); ++i) {
            pooled_scores.push_back(f.test_scores(i));
            pooled_labels.push_back(
                table.rows[static_cast<std::size_t>(f.test_indices[static_cast<std::size_t>(i)])]
                        .label == methylhub::Phenotype::CASE
                    ? 1
                    : 0);
        }
    methylhub::detail::write_roc_points(fs::path(io.out_dir) / "roc_points.tsv", pooled_scores,
                                        pooled_labels);
    std::cout << "mean AUROC " << cv.mean_auroc << " +/- " << cv.sd_auroc << " (pooled "
              << cv.pooled_auroc << ")\n";
    return 0;
}

json attribution_json(const std::vector<methylhub::FoldAttribution>& folds,
                      const methylhub::Vector& consensus,
                      const std::vector<std::string>& probe_ids,
                      const methylhub::AttributionConfig& cfg) {
    json j;
    j["mode"] = methylhub::attribution_mode_name(cfg.mode);
    j["agg"] = methylhub::gene_agg_name(cfg.agg);
    j["probe_ids"] = probe_ids;
    j["consensus"] = std::vector<double>(consensus.data(), consensus.data() + consensus.size());
    json fold_list = json::array();
    for (std::size_t f = 0; f < folds.size(); ++f) {
        json entry;
        entry["fold"] = f;
        entry["feature_subset"] = folds[f].feature_subset;
        entry["scores"] = std::vector<double>(folds[f].scores.data(),
                                              folds[f].scores.data() + folds[f].scores.size());
        fold_list.push_back(std::move(entry));
    }
    j["folds"] = std::move(fold_list);
    return j;
}

std::vector<methylhub::FoldAttribution> folds_from_json(const json& j) {
    std::vector<methylhub::FoldAttribution> folds;
    for (const auto& entry : j.at("folds")) {
        methylhub::FoldAttribution fold;
        fold.feature_subset = entry.at("feature_subset").get<std::vector<Eigen::Index>>();
        const auto scores = entry.at("scores").get<std::vector<double>>();
        fold.scores = Eigen::Map<const methylhub::Vector>(scores.data(),
                                                          static_cast<Eigen::Index>(scores.size()));
        folds.push_back(std::move(fold));
    }
    return folds;
}

int run_attribute_stage(const StageIo& io, const std::string& matrix,
                        const std::string& annotation, const std::string& cv_dir) {
    methylhub::AttributionConfig cfg;
    if (!io.config_path.empty())
        cfg = methylhub::AttributionConfig::from_json(load_json_file(io.config_path));
    const auto m = methylhub::load_m_matrix(matrix);
    const auto ann = methylhub::load_annotation(annotation);
    const json cv = load_json_file(fs::path(cv_dir) / "cv_result.json");

    const methylhub::Matrix x = m.values.transpose();
    std::vector<methylhub::FoldAttribution> folds;
    for (const auto& fold : cv.at("folds")) {
        const auto model = methylhub::MlpModel::from_json(
            load_json_file(fs::path(cv_dir) / fold.at("model_file").get<std::string>()));
        const auto test_ids = fold.at("test_samples").get<std::vector<std::string>>();
        methylhub::Matrix x_eval(static_cast<Eigen::Index>(test_ids.size()), x.cols());
        for (std::size_t i = 0; i < test_ids.size(); ++i) {
            auto it = std::find(m.sample_ids.begin(), m.sample_ids.end(), test_ids[i]);
            if (it == m.sample_ids.end())
                throw methylhub::Error(methylhub::ErrorCode::ID_MISMATCH,
                                       "test sample not in matrix: " + test_ids[i]);
            x_eval.row(static_cast<Eigen::Index>(i)) =
                x.row(std::distance(m.sample_ids.begin(), it));
        }
        folds.push_back(methylhub::attribute_fold(model, x_eval, cfg.mode, cfg.ig_steps));
    }
    const methylhub::Vector consensus = methylhub::aggregate_across_folds(folds, x.cols());
    fs::create_directories(io.out_dir);
    methylhub::detail::write_probes_top(
        fs::path(io.out_dir) / "probes_top.tsv",
        methylhub::top_probes(consensus, m.probe_ids, ann, cfg.k_probes));
    methylhub::detail::write_genes_top(
        fs::path(io.out_dir) / "genes_top.tsv",
        methylhub::aggregate_genes(consensus, m.probe_ids, ann, cfg.agg, cfg.k_genes), cfg.agg);
    methylhub::detail::write_json_file(fs::path(io.out_dir) / "attribution.json",
                                       attribution_json(folds, consensus, m.probe_ids, cfg));
    std::cout << "attributed " << folds.size() << " folds over " << x.cols() << " probes\n";
    return 0;
}

int run_hubs_stage(const StageIo& io, const std::string& matrix, const std::string& annotation,
                   const std::string& modules_path, const std::string& attribution_path) {
    methylhub::HubnetConfig cfg;
    if (!io.config_path.empty())
        cfg = methylhub::HubnetConfig::from_json(load_json_file(io.config_path));
    const auto m = methylhub::load_m_matrix(matrix);
    const auto ann = methylhub::load_annotation(annotation);
    const auto mods = methylhub::load_modules(modules_path);
    const json attr = load_json_file(attribution_path);

    const auto agg = methylhub::gene_agg_from_name(attr.at("agg").get<std::string>());
    const auto consensus_vec = attr.at("consensus").get<std::vector<double>>();
    const methylhub::Vector consensus = Eigen::Map<const methylhub::Vector>(
        consensus_vec.data(), static_cast<Eigen::Index>(consensus_vec.size()));

    const auto consensus_genes = methylhub::gene_scores(consensus, m.probe_ids, ann, agg);
    std::map<std::string, double> scores;
    for (const auto& [gene, g] : consensus_genes) scores[gene] = g.score;
    const auto graph = methylhub::build_graph(scores, m, ann, mods, cfg.tau);
    const auto ranking = methylhub::hub_ranking(graph);

    fs::create_directories(io.out_dir);
    methylhub::detail::write_hubs_tsv(fs::path(io.out_dir) / "hubs.tsv", ranking, graph,
                                      cfg.k_hubs);
    methylhub::detail::write_modules_tsv(fs::path(io.out_dir) / "modules.tsv", graph, ranking,
                                         cfg.k_hubs);

    std::vector<std::vector<std::string>> fold_rankings;
    for (const auto& fold : folds_from_json(attr)) {
        const methylhub::Vector fold_consensus =
            methylhub::aggregate_across_folds({fold}, consensus.size());
        const auto fold_genes = methylhub::gene_scores(fold_consensus, m.probe_ids, ann, agg);
        std::map<std::string, double> fold_scores;
        for (const auto& [gene, g] : fold_genes) fold_scores[gene] = g.score;
        const auto fold_graph = methylhub::build_graph(fold_scores, m, ann, mods, cfg.tau);
        std::vector<std::string> names;
        for (const auto& [gene, score] : methylhub::hub_ranking(fold_graph)) names.push_back(gene);
        fold_rankings.push_back(std::move(names));
    }
    std::size_t min_size = fold_rankings.front().size();
    for (const auto& r : fold_rankings) min_size = std::min(min_size, r.size());
    const auto stability = methylhub::jaccard_stability(
        fold_rankings, std::min<int>(cfg.k_hubs, static_cast<int>(min_size)));
    methylhub::detail::write_json_file(fs::path(io.out_dir) / "stability.json",
                                       methylhub::detail::stability_json(stability));
    std::cout << "mean top-" << stability.k << " hub Jaccard " << stability.mean_jaccard << "\n";
    return 0;
}

int run_pipeline_stage(const StageIo& io, bool synth_defaults) {
    methylhub::PipelineConfig cfg;
    if (!io.config_path.empty()) {
        cfg = methylhub::PipelineConfig::from_json(load_json_file(io.config_path));
    } else if (synth_defaults) {
        cfg.synth = methylhub::SynthConfig{};
    } else {
        throw methylhub::Error(methylhub::ErrorCode::CONFIG_INVALID,
                               "pipeline needs --config or --synth-defaults");
    }
    if (io.seed_given) cfg.seed = io.seed;
    if (io.out_dir != "out" || cfg.out_dir.empty()) cfg.out_dir = io.out_dir;
    const auto result = methylhub::run_pipeline(cfg, methylhub::resolve_thread_count());
    std::cout << "mean AUROC " << result.cv.mean_auroc << ", top gene "
              << (result.top_gene_rows.empty() ? "-" : result.top_gene_rows.front().gene)
              << ", top hub " << (result.hubs.empty() ? "-" : result.hubs.front().first)
              << ", stability " << result.stability.mean_jaccard << "\n"
              << "report: " << (cfg.out_dir / "report.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-tier methylome analysis: effector loci and regulatory hubs"};
    app.require_subcommand(1);

    StageIo synth_io, qc_io, stats_io, train_io, attr_io, hubs_io, pipe_io;
    std::string matrix, annotation, samples, modules_path, cv_dir, attribution_path;
    bool synth_defaults = false;

    auto* synth_cmd = app.add_subcommand("synth", "generate a planted-truth synthetic dataset");
    add_common(synth_cmd, synth_io);

    auto* qc_cmd = app.add_subcommand("qc", "filter probes and produce the analysis M matrix");
    add_common(qc_cmd, qc_io);
    qc_cmd->add_option("--matrix", matrix, "beta matrix TSV")->required();
    qc_cmd->add_option("--annotation", annotation, "probe annotation TSV")->required();
    qc_cmd->add_option("--samples", samples, "sample table TSV")->required();

    auto* stats_cmd = app.add_subcommand("stats", "per-probe differential methylation tests");
    add_common(stats_cmd, stats_io);
    stats_cmd->add_option("--matrix", matrix, "M-value matrix TSV")->required();
    stats_cmd->add_option("--samples", samples, "sample table TSV")->required();

    auto* train_cmd = app.add_subcommand("train", "nested cross-validated classifier");
    add_common(train_cmd, train_io);
    train_cmd->add_option("--matrix", matrix, "M-value matrix TSV")->required();
    train_cmd->add_option("--samples", samples, "sample table TSV")->required();

    auto* attr_cmd = app.add_subcommand("attribute", "gradient attributions and rankings");
    add_common(attr_cmd, attr_io);
    attr_cmd->add_option("--matrix", matrix, "M-value matrix TSV")->required();
    attr_cmd->add_option("--annotation", annotation, "probe annotation TSV")->required();
    attr_cmd->add_option("--cv", cv_dir, "directory with cv_result.json and model files")
        ->required();

    auto* hubs_cmd = app.add_subcommand("hubs", "gene-module graph and hub stability");
    add_common(hubs_cmd, hubs_io);
    hubs_cmd->add_option("--matrix", matrix, "M-value matrix TSV")->required();
    hubs_cmd->add_option("--annotation", annotation, "probe annotation TSV")->required();
    hubs_cmd->add_option("--modules", modules_path, "modules GMT")->required();
    hubs_cmd->add_option("--attribution", attribution_path, "attribution.json from attribute")
        ->required();

    auto* pipe_cmd = app.add_subcommand("pipeline", "run every stage end to end");
    add_common(pipe_cmd, pipe_io);
    pipe_cmd->add_flag("--synth-defaults", synth_defaults,
                       "use the default synthetic dataset as input");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) return run_synth(synth_io);
        if (qc_cmd->parsed()) return run_qc_stage(qc_io, matrix, annotation, samples);
        if (stats_cmd->parsed()) return run_stats_stage(stats_io, matrix, samples);
        if (train_cmd->parsed()) return run_train_stage(train_io, matrix, samples);
        if (attr_cmd->parsed()) return run_attribute_stage(attr_io, matrix, annotation, cv_dir);
        if (hubs_cmd->parsed())
            return run_hubs_stage(hubs_io, matrix, annotation, modules_path, attribution_path);
        if (pipe_cmd->parsed()) return run_pipeline_stage(pipe_io, synth_defaults);
    } catch (const methylhub::StageError& e) {
        std::cerr << "error " << e.what() << "\n";
        return 1;
    } catch (const methylhub::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
