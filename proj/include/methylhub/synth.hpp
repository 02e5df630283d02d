#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "methylhub/error.hpp"
#include "methylhub/ingest.hpp"
#include "methylhub/rng.hpp"
#include "methylhub/types.hpp"

namespace methylhub {

struct SynthConfig {
    std::uint64_t seed = 1;
    int n_probes = 2000;
    int n_cases = 111;
    int n_controls = 95;
    int probes_per_gene_min = 1;
    int probes_per_gene_max = 8;
    int n_modules = 5;
    int genes_per_module = 12;
    int n_effector_probes = 20;
    double effector_delta = 0.10;
    int n_hub_genes = 3;
    int hub_module_memberships = 3;
    double hub_delta = 0.02;
    double hub_loading = 0.6;
    double baseline_low = 0.15;
    double baseline_high = 0.85;
    double high_mode_weight = 0.5;
    double noise_sd = 0.03;
    double batch_offset = 0.0;
    int n_batches = 2;

    void validate() const {
        if (n_probes < 1 || n_cases < 2 || n_controls < 2)
            throw Error(ErrorCode::CONFIG_INVALID, "need n_probes >= 1 and >= 2 samples per class");
        if (probes_per_gene_min < 1 || probes_per_gene_max < probes_per_gene_min)
            throw Error(ErrorCode::CONFIG_INVALID, "invalid probes_per_gene range");
        if (n_modules < hub_module_memberships)
            throw Error(ErrorCode::CONFIG_INVALID,
                        "hub genes need at least hub_module_memberships modules");
        if (genes_per_module < 2)
            throw Error(ErrorCode::CONFIG_INVALID, "modules need at least 2 genes");
        if (!(hub_loading >= 0.0 && hub_loading < 1.0))
            throw Error(ErrorCode::CONFIG_INVALID, "hub_loading must lie in [0, 1)");
        if (noise_sd < 0.0 || effector_delta < 0.0 || hub_delta < 0.0)
            throw Error(ErrorCode::CONFIG_INVALID, "negative effect parameters");
        if (!(baseline_low > 0.0 && baseline_low < 1.0 && baseline_high > 0.0 &&
              baseline_high < 1.0))
            throw Error(ErrorCode::CONFIG_INVALID, "baseline modes must lie in (0, 1)");
        if (n_batches < 1)
            throw Error(ErrorCode::CONFIG_INVALID, "n_batches must be >= 1");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["seed"] = seed;
        j["n_probes"] = n_probes;
        j["n_cases"] = n_cases;
        j["n_controls"] = n_controls;
        j["probes_per_gene_min"] = probes_per_gene_min;
        j["probes_per_gene_max"] = probes_per_gene_max;
        j["n_modules"] = n_modules;
        j["genes_per_module"] = genes_per_module;
        j["n_effector_probes"] = n_effector_probes;
        j["effector_delta"] = effector_delta;
        j["n_hub_genes"] = n_hub_genes;
        j["hub_module_memberships"] = hub_module_memberships;
        j["hub_delta"] = hub_delta;
        j["hub_loading"] = hub_loading;
        j["baseline_low"] = baseline_low;
        j["baseline_high"] = baseline_high;
        j["high_mode_weight"] = high_mode_weight;
        j["noise_sd"] = noise_sd;
        j["batch_offset"] = batch_offset;
        j["n_batches"] = n_batches;
        return j;
    }

    static SynthConfig from_json(const nlohmann::json& j) {
        SynthConfig c;
        if (j.contains("seed")) c.seed = j.at("seed");
        if (j.contains("n_probes")) c.n_probes = j.at("n_probes");
        if (j.contains("n_cases")) c.n_cases = j.at("n_cases");
        if (j.contains("n_controls")) c.n_controls = j.at("n_controls");
        if (j.contains("probes_per_gene_min")) c.probes_per_gene_min = j.at("probes_per_gene_min");
        if (j.contains("probes_per_gene_max")) c.probes_per_gene_max = j.at("probes_per_gene_max");
        if (j.contains("n_modules")) c.n_modules = j.at("n_modules");
        if (j.contains("genes_per_module")) c.genes_per_module = j.at("genes_per_module");
        if (j.contains("n_effector_probes")) c.n_effector_probes = j.at("n_effector_probes");
        if (j.contains("effector_delta")) c.effector_delta = j.at("effector_delta");
        if (j.contains("n_hub_genes")) c.n_hub_genes = j.at("n_hub_genes");
        if (j.contains("hub_module_memberships"))
            c.hub_module_memberships = j.at("hub_module_memberships");
        if (j.contains("hub_delta")) c.hub_delta = j.at("hub_delta");
        if (j.contains("hub_loading")) c.hub_loading = j.at("hub_loading");
        if (j.contains("baseline_low")) c.baseline_low = j.at("baseline_low");
        if (j.contains("baseline_high")) c.baseline_high = j.at("baseline_high");
        if (j.contains("high_mode_weight")) c.high_mode_weight = j.at("high_mode_weight");
        if (j.contains("noise_sd")) c.noise_sd = j.at("noise_sd");
        if (j.contains("batch_offset")) c.batch_offset = j.at("batch_offset");
        if (j.contains("n_batches")) c.n_batches = j.at("n_batches");
        c.validate();
        return c;
    }
};

struct SyntheticTruth {
    std::vector<std::string> effector_probes;
    std::vector<std::string> hub_genes;
    std::map<std::string, std::vector<std::string>> module_genes;
    SynthConfig params;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["effector_probes"] = effector_probes;
        j["hub_genes"] = hub_genes;
        j["module_genes"] = module_genes;
        j["params"] = params.to_json();
        return j;
    }
};

struct SyntheticDataset {
    BetaMatrix beta;
    AnnotationTable annotation;
    SampleTable samples;
    ModuleSet modules;
    SyntheticTruth truth;
};

namespace detail {

inline std::string zero_padded(const char* prefix, int number, int width) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%s%0*d", prefix, width, number);
    return buffer;
}

inline double round_decimals(double v, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(v * scale) / scale;
}

}  // namespace detail

// Case-control methylome with planted signal at two levels: effector probes
// carry a large marginal case shift, hub genes carry a tiny marginal shift
// plus case-only latent module factors that make them network-central.
// Deterministic given the seed; emitted values are pre-rounded to the file
// precision so files and memory agree exactly.
inline SyntheticDataset generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    // genes and their probes
    std::vector<std::vector<int>> gene_probe_rows;  // gene -> probe indices
    std::vector<int> probe_gene(static_cast<std::size_t>(cfg.n_probes));
    {
        int assigned = 0;
        while (assigned < cfg.n_probes) {
            int size = rng.uniform_int(cfg.probes_per_gene_min, cfg.probes_per_gene_max);
            size = std::min(size, cfg.n_probes - assigned);
            std::vector<int> rows(static_cast<std::size_t>(size));
            std::iota(rows.begin(), rows.end(), assigned);
            for (int r : rows) probe_gene[static_cast<std::size_t>(r)] =
                static_cast<int>(gene_probe_rows.size());
            gene_probe_rows.push_back(std::move(rows));
            assigned += size;
        }
    }
    const int n_genes = static_cast<int>(gene_probe_rows.size());
    const auto gene_name = [](int g) { return detail::zero_padded("G", g + 1, 4); };
    const auto probe_name = [](int p) { return detail::zero_padded("cg", p + 1, 6); };

    // hub genes: picked from mid-sized genes, large enough that their
    // aggregate attribution cannot vanish under size-sensitive gene scoring
    // yet small enough that probe count alone cannot rank them
    const int mid = (cfg.probes_per_gene_min + cfg.probes_per_gene_max) / 2;
    std::vector<int> hub_candidates;
    for (int width = 0; width <= cfg.probes_per_gene_max; ++width) {
        hub_candidates.clear();
        for (int g = 0; g < n_genes; ++g) {
            const int size = static_cast<int>(gene_probe_rows[static_cast<std::size_t>(g)].size());
            if (size >= mid - width && size <= mid + 1)
                hub_candidates.push_back(g);
        }
        if (static_cast<int>(hub_candidates.size()) >= cfg.n_hub_genes) break;
    }
    if (static_cast<int>(hub_candidates.size()) < cfg.n_hub_genes)
        throw Error(ErrorCode::CONFIG_INVALID, "too few genes to act as hubs");
    rng.shuffle(hub_candidates);
    std::vector<int> hub_genes(hub_candidates.begin(), hub_candidates.begin() + cfg.n_hub_genes);
    std::sort(hub_genes.begin(), hub_genes.end());
    std::set<int> hub_set(hub_genes.begin(), hub_genes.end());

    // modules: every hub joins hub_module_memberships modules; remaining
    // slots are filled with distinct non-hub genes
    std::vector<std::vector<int>> module_members(static_cast<std::size_t>(cfg.n_modules));
    for (int h : hub_genes) {
        std::vector<int> module_order(static_cast<std::size_t>(cfg.n_modules));
        std::iota(module_order.begin(), module_order.end(), 0);
        rng.shuffle(module_order);
        for (int k = 0; k < cfg.hub_module_memberships; ++k)
            module_members[static_cast<std::size_t>(module_order[static_cast<std::size_t>(k)])]
                .push_back(h);
    }
    {
        std::vector<int> pool;
        for (int g = 0; g < n_genes; ++g)
            if (hub_set.count(g) == 0) pool.push_back(g);
        rng.shuffle(pool);
        std::size_t next = 0;
        for (auto& members : module_members) {
            while (static_cast<int>(members.size()) < cfg.genes_per_module) {
                if (next >= pool.size())
                    throw Error(ErrorCode::CONFIG_INVALID, "not enough genes to fill modules");
                members.push_back(pool[next++]);
            }
        }
    }
    std::set<int> module_gene_set;
    for (const auto& members : module_members)
        for (int g : members) module_gene_set.insert(g);

    // effector probes live on decoy genes (outside every module)
    std::vector<int> effector_pool;
    for (int p = 0; p < cfg.n_probes; ++p)
        if (module_gene_set.count(probe_gene[static_cast<std::size_t>(p)]) == 0)
            effector_pool.push_back(p);
    if (static_cast<int>(effector_pool.size()) < cfg.n_effector_probes)
        throw Error(ErrorCode::CONFIG_INVALID, "too few decoy probes for effectors");
    rng.shuffle(effector_pool);
    std::vector<int> effector_probes(effector_pool.begin(),
                                     effector_pool.begin() + cfg.n_effector_probes);
    std::sort(effector_probes.begin(), effector_probes.end());
    std::set<int> effector_set(effector_probes.begin(), effector_probes.end());

    // probe -> modules whose latent factor it loads
    std::vector<std::vector<int>> probe_modules(static_cast<std::size_t>(cfg.n_probes));
    for (int m = 0; m < cfg.n_modules; ++m)
        for (int g : module_members[static_cast<std::size_t>(m)])
            for (int p : gene_probe_rows[static_cast<std::size_t>(g)])
                probe_modules[static_cast<std::size_t>(p)].push_back(m);

    // baselines
    std::vector<double> baseline(static_cast<std::size_t>(cfg.n_probes));
    for (auto& b : baseline)
        b = rng.uniform() < cfg.high_mode_weight ? cfg.baseline_high : cfg.baseline_low;

    // flags and missingness are sprinkled on decoy probes only
    const int n_samples = cfg.n_cases + cfg.n_controls;
    std::vector<unsigned> probe_flags(static_cast<std::size_t>(cfg.n_probes), 0);
    std::vector<std::vector<int>> missing_cols(static_cast<std::size_t>(cfg.n_probes));
    for (int p = 0; p < cfg.n_probes; ++p) {
        const bool decoy = module_gene_set.count(probe_gene[static_cast<std::size_t>(p)]) == 0 &&
                           effector_set.count(p) == 0;
        if (!decoy) continue;
        const double u = rng.uniform();
        if (u < 0.01)
            probe_flags[static_cast<std::size_t>(p)] =
                static_cast<unsigned>(ProbeFlag::LOW_QUALITY);
        else if (u < 0.02)
            probe_flags[static_cast<std::size_t>(p)] =
                static_cast<unsigned>(ProbeFlag::CROSS_REACTIVE);
        else if (u < 0.03)
            probe_flags[static_cast<std::size_t>(p)] = static_cast<unsigned>(ProbeFlag::SNP);
        const double v = rng.uniform();
        if (v < 0.005) {
            // heavy missingness, meant to trip the QC cap
            const int holes = static_cast<int>(0.08 * n_samples) + 1;
            for (int h = 0; h < holes; ++h)
                missing_cols[static_cast<std::size_t>(p)].push_back(
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(n_samples))));
        } else if (v < 0.025) {
            const int holes = rng.uniform_int(1, 2);
            for (int h = 0; h < holes; ++h)
                missing_cols[static_cast<std::size_t>(p)].push_back(
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(n_samples))));
        }
    }

    // samples
    std::vector<Phenotype> labels(static_cast<std::size_t>(n_samples), Phenotype::CONTROL);
    for (int i = 0; i < cfg.n_cases; ++i) labels[static_cast<std::size_t>(i)] = Phenotype::CASE;
    rng.shuffle(labels);
    SampleTable samples;
    for (int s = 0; s < n_samples; ++s) {
        Sample row;
        row.sample_id = detail::zero_padded("S", s + 1, 4);
        row.label = labels[static_cast<std::size_t>(s)];
        row.age = detail::round_decimals(std::clamp(rng.normal(42.0, 11.0), 18.0, 75.0), 1);
        row.sex = rng.uniform() < 0.5 ? Sex::M : Sex::F;
        row.batch = cfg.batch_offset != 0.0
                        ? detail::zero_padded("B", (s % cfg.n_batches) + 1, 1)
                        : "B1";
        samples.add(std::move(row));
    }

    // case-only latent factor per module
    Matrix factors = Matrix::Zero(cfg.n_modules, n_samples);
    for (int m = 0; m < cfg.n_modules; ++m)
        for (int s = 0; s < n_samples; ++s)
            if (labels[static_cast<std::size_t>(s)] == Phenotype::CASE)
                factors(m, s) = rng.normal();
    // loading such that two probes sharing one factor correlate near hub_loading
    const double factor_scale =
        cfg.hub_loading > 0.0
            ? cfg.noise_sd * std::sqrt(cfg.hub_loading / (1.0 - cfg.hub_loading))
            : 0.0;

    // beta values. Factor-loaded probes get matched independent variance in
    // controls, so the coupling is case-only while per-probe marginal
    // distributions stay class-blind up to hub_delta.
    BetaMatrix beta;
    beta.values.resize(cfg.n_probes, n_samples);
    beta.missing = BoolMask::Constant(cfg.n_probes, n_samples, false);
    for (int p = 0; p < cfg.n_probes; ++p) {
        beta.probe_ids.push_back(probe_name(p));
        const bool hub_probe = hub_set.count(probe_gene[static_cast<std::size_t>(p)]) > 0;
        const auto& loaded = probe_modules[static_cast<std::size_t>(p)];
        const double matched_sd = factor_scale * std::sqrt(static_cast<double>(loaded.size()));
        for (int s = 0; s < n_samples; ++s) {
            double v = baseline[static_cast<std::size_t>(p)];
            if (labels[static_cast<std::size_t>(s)] == Phenotype::CASE) {
                if (effector_set.count(p)) v += cfg.effector_delta;
                if (hub_probe) v += cfg.hub_delta;
                for (int m : loaded) v += factor_scale * factors(m, s);
            } else if (!loaded.empty() && matched_sd > 0.0) {
                v += matched_sd * rng.normal();
            }
            if (cfg.batch_offset != 0.0 &&
                samples.rows[static_cast<std::size_t>(s)].batch != "B1")
                v += cfg.batch_offset;
            v += cfg.noise_sd * rng.normal();
            beta.values(p, s) = detail::round_decimals(std::clamp(v, 0.0, 1.0), 6);
        }
        for (int col : missing_cols[static_cast<std::size_t>(p)]) {
            beta.values(p, col) = 0.0;
            beta.missing(p, col) = true;
        }
    }
    for (int s = 0; s < n_samples; ++s)
        beta.sample_ids.push_back(samples.rows[static_cast<std::size_t>(s)].sample_id);

    // annotation
    AnnotationTable annotation;
    for (int p = 0; p < cfg.n_probes; ++p) {
        ProbeAnnotation row;
        row.probe_id = probe_name(p);
        row.gene = gene_name(probe_gene[static_cast<std::size_t>(p)]);
        row.chromosome =
            "chr" + std::to_string(1 + probe_gene[static_cast<std::size_t>(p)] % 22);
        row.flags = probe_flags[static_cast<std::size_t>(p)];
        annotation.add(std::move(row));
    }

    // modules
    ModuleSet modules;
    SyntheticTruth truth;
    truth.params = cfg;
    for (int m = 0; m < cfg.n_modules; ++m) {
        GeneModule module;
        module.module_id = detail::zero_padded("M", m + 1, 2);
        module.description = "synthetic module";
        std::vector<int> members = module_members[static_cast<std::size_t>(m)];
        std::sort(members.begin(), members.end());
        for (int g : members) module.genes.push_back(gene_name(g));
        truth.module_genes[module.module_id] = module.genes;
        modules.add(std::move(module));
    }
    for (int p : effector_probes) truth.effector_probes.push_back(probe_name(p));
    for (int g : hub_genes) truth.hub_genes.push_back(gene_name(g));

    SyntheticDataset ds;
    ds.beta = std::move(beta);
    ds.annotation = std::move(annotation);
    ds.samples = std::move(samples);
    ds.modules = std::move(modules);
    ds.truth = std::move(truth);
    return ds;
}

inline void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_beta_matrix(dir / "beta.tsv", ds.beta);
    write_annotation(dir / "annotation.tsv", ds.annotation);
    write_samples(dir / "samples.tsv", ds.samples);
    write_modules(dir / "modules.gmt", ds.modules);
    auto out = detail::open_output(dir / "truth.json");
    out << ds.truth.to_json().dump(2) << '\n';
}

}  // namespace methylhub
