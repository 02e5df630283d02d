#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "methylhub/error.hpp"
#include "methylhub/types.hpp"

namespace methylhub {

enum class NormalizeMode { NONE, ZSCORE, QUANTILE };
enum class Covariate { AGE, SEX, BATCH };

inline std::string normalize_mode_name(NormalizeMode m) {
    switch (m) {
        case NormalizeMode::NONE: return "NONE";
        case NormalizeMode::ZSCORE: return "ZSCORE";
        case NormalizeMode::QUANTILE: return "QUANTILE";
    }
    return "NONE";
}

inline NormalizeMode normalize_mode_from_name(const std::string& name) {
    if (name == "NONE") return NormalizeMode::NONE;
    if (name == "ZSCORE") return NormalizeMode::ZSCORE;
    if (name == "QUANTILE") return NormalizeMode::QUANTILE;
    throw Error(ErrorCode::CONFIG_INVALID, "unknown normalize mode: " + name);
}

inline std::string covariate_name(Covariate c) {
    switch (c) {
        case Covariate::AGE: return "age";
        case Covariate::SEX: return "sex";
        case Covariate::BATCH: return "batch";
    }
    return "";
}

inline Covariate covariate_from_name(const std::string& name) {
    if (name == "age") return Covariate::AGE;
    if (name == "sex") return Covariate::SEX;
    if (name == "batch") return Covariate::BATCH;
    throw Error(ErrorCode::CONFIG_INVALID, "unknown covariate: " + name);
}

struct QcPolicy {
    unsigned drop_flags = kAllProbeFlags;
    double max_missing_fraction = 0.05;
    double clamp_epsilon = 1e-6;
    NormalizeMode normalize = NormalizeMode::QUANTILE;
    std::set<Covariate> residualize_covariates = {Covariate::BATCH};

    void validate() const {
        if (!(clamp_epsilon > 0.0 && clamp_epsilon < 0.5))
            throw Error(ErrorCode::CONFIG_INVALID, "clamp_epsilon must be in (0, 0.5)");
        if (!(max_missing_fraction >= 0.0 && max_missing_fraction <= 1.0))
            throw Error(ErrorCode::CONFIG_INVALID, "max_missing_fraction must be in [0, 1]");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["drop_flags"] = probe_flag_names(drop_flags);
        j["max_missing_fraction"] = max_missing_fraction;
        j["clamp_epsilon"] = clamp_epsilon;
        j["normalize"] = normalize_mode_name(normalize);
        std::vector<std::string> covs;
        for (Covariate c : residualize_covariates) covs.push_back(covariate_name(c));
        j["residualize_covariates"] = covs;
        return j;
    }

    static QcPolicy from_json(const nlohmann::json& j) {
        QcPolicy p;
        if (j.contains("drop_flags")) {
            p.drop_flags = 0;
            for (const auto& name : j.at("drop_flags"))
                p.drop_flags |= probe_flag_from_name(name.get<std::string>());
        }
        if (j.contains("max_missing_fraction")) p.max_missing_fraction = j.at("max_missing_fraction");
        if (j.contains("clamp_epsilon")) p.clamp_epsilon = j.at("clamp_epsilon");
        if (j.contains("normalize"))
            p.normalize = normalize_mode_from_name(j.at("normalize").get<std::string>());
        if (j.contains("residualize_covariates")) {
            p.residualize_covariates.clear();
            for (const auto& name : j.at("residualize_covariates"))
                p.residualize_covariates.insert(covariate_from_name(name.get<std::string>()));
        }
        p.validate();
        return p;
    }
};

struct QcReport {
    Index input_probes = 0;
    Index kept_probes = 0;
    std::map<std::string, Index> dropped;  // reason -> count
    Index imputed_cells = 0;
    QcPolicy policy;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["input_probes"] = input_probes;
        j["kept_probes"] = kept_probes;
        j["dropped"] = dropped;
        j["imputed_cells"] = imputed_cells;
        j["policy"] = policy.to_json();
        return j;
    }
};

// Drops probes whose flags intersect the policy or whose missing fraction
// exceeds the cap. A probe dropped for several reasons is counted once,
// in the order LOW_QUALITY, CROSS_REACTIVE, SNP, MISSINGNESS.
inline std::pair<BetaMatrix, QcReport> filter_probes(const BetaMatrix& m,
                                                     const AnnotationTable& ann,
                                                     const QcPolicy& policy) {
    policy.validate();
    QcReport report;
    report.policy = policy;
    report.input_probes = m.n_probes();
    report.dropped = {{"LOW_QUALITY", 0}, {"CROSS_REACTIVE", 0}, {"SNP", 0}, {"MISSINGNESS", 0}};

    std::vector<Index> keep;
    for (Index i = 0; i < m.n_probes(); ++i) {
        const std::string& probe = m.probe_ids[static_cast<std::size_t>(i)];
        const ProbeAnnotation* row = ann.find(probe);
        if (row == nullptr)
            throw Error(ErrorCode::UNANNOTATED_PROBE, "probe missing from annotation: " + probe);
        const unsigned hit = row->flags & policy.drop_flags;
        if (hit != 0) {
            ++report.dropped[probe_flag_names(hit).front()];
            continue;
        }
        const double missing_fraction =
            m.n_samples() == 0
                ? 0.0
                : static_cast<double>(m.missing.row(i).count()) / static_cast<double>(m.n_samples());
        if (missing_fraction > policy.max_missing_fraction) {
            ++report.dropped["MISSINGNESS"];
            continue;
        }
        keep.push_back(i);
    }
    BetaMatrix kept = select_probe_rows(m, keep);
    report.kept_probes = kept.n_probes();
    return {std::move(kept), std::move(report)};
}

// M = log2(b' / (1 - b')) with b' clamped to [eps, 1 - eps]. Masked cells
// stay masked with value 0.
inline MValueMatrix beta_to_m(const BetaMatrix& m, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 0.5))
        throw Error(ErrorCode::CONFIG_INVALID, "epsilon must be in (0, 0.5)");
    MValueMatrix out;
    out.probe_ids = m.probe_ids;
    out.sample_ids = m.sample_ids;
    out.missing = m.missing;
    out.values.resize(m.n_probes(), m.n_samples());
    for (Index i = 0; i < m.n_probes(); ++i)
        for (Index j = 0; j < m.n_samples(); ++j) {
            if (m.missing(i, j)) {
                out.values(i, j) = 0.0;
                continue;
            }
            const double b = std::clamp(m.values(i, j), epsilon, 1.0 - epsilon);
            out.values(i, j) = std::log2(b / (1.0 - b));
        }
    return out;
}

// Fills masked cells with the probe's unmasked mean and clears the mask.
// Returns the number of cells imputed.
inline Index impute_missing(MValueMatrix& m) {
    Index imputed = 0;
    for (Index i = 0; i < m.n_probes(); ++i) {
        double sum = 0.0;
        Index n = 0;
        for (Index j = 0; j < m.n_samples(); ++j)
            if (!m.missing(i, j)) {
                sum += m.values(i, j);
                ++n;
            }
        const double mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
        for (Index j = 0; j < m.n_samples(); ++j)
            if (m.missing(i, j)) {
                m.values(i, j) = mean;
                m.missing(i, j) = false;
                ++imputed;
            }
    }
    return imputed;
}

inline MValueMatrix normalize(const MValueMatrix& m, NormalizeMode mode) {
    if (mode == NormalizeMode::NONE) return m;
    if (m.n_probes() < 2)
        throw Error(ErrorCode::DEGENERATE_COLUMN,
                    "normalization needs at least 2 probes per sample");

    MValueMatrix out = m;
    if (mode == NormalizeMode::ZSCORE) {
        for (Index j = 0; j < m.n_samples(); ++j) {
            double sum = 0.0;
            Index n = 0;
            for (Index i = 0; i < m.n_probes(); ++i)
                if (!m.missing(i, j)) {
                    sum += m.values(i, j);
                    ++n;
                }
            if (n < 2)
                throw Error(ErrorCode::DEGENERATE_COLUMN,
                            "sample " + m.sample_ids[static_cast<std::size_t>(j)] +
                                " has fewer than 2 observed cells");
            const double mean = sum / static_cast<double>(n);
            double ss = 0.0;
            for (Index i = 0; i < m.n_probes(); ++i)
                if (!m.missing(i, j)) ss += (m.values(i, j) - mean) * (m.values(i, j) - mean);
            const double var = ss / static_cast<double>(n - 1);
            if (var <= 0.0)
                throw Error(ErrorCode::DEGENERATE_COLUMN,
                            "sample " + m.sample_ids[static_cast<std::size_t>(j)] +
                                " has zero variance");
            const double sd = std::sqrt(var);
            for (Index i = 0; i < m.n_probes(); ++i)
                if (!m.missing(i, j)) out.values(i, j) = (m.values(i, j) - mean) / sd;
        }
        return out;
    }

    // QUANTILE: every column receives the per-rank mean of the sorted
    // columns; ties within a column get the mean of their rank range.
    if (m.has_missing())
        throw Error(ErrorCode::MISSING_VALUES,
                    "quantile normalization requires a fully observed matrix; impute first");
    const Index rows = m.n_probes();
    const Index cols = m.n_samples();
    Vector reference = Vector::Zero(rows);
    std::vector<std::vector<Index>> order(static_cast<std::size_t>(cols));
    for (Index j = 0; j < cols; ++j) {
        auto& idx = order[static_cast<std::size_t>(j)];
        idx.resize(static_cast<std::size_t>(rows));
        std::iota(idx.begin(), idx.end(), Index{0});
        std::stable_sort(idx.begin(), idx.end(),
                         [&](Index a, Index b) { return m.values(a, j) < m.values(b, j); });
        for (Index r = 0; r < rows; ++r)
            reference(r) += m.values(idx[static_cast<std::size_t>(r)], j);
    }
    reference /= static_cast<double>(cols);

    for (Index j = 0; j < cols; ++j) {
        const auto& idx = order[static_cast<std::size_t>(j)];
        Index r = 0;
        while (r < rows) {
            Index end = r + 1;
            while (end < rows &&
                   m.values(idx[static_cast<std::size_t>(end)], j) ==
                       m.values(idx[static_cast<std::size_t>(r)], j))
                ++end;
            double mean = 0.0;
            for (Index t = r; t < end; ++t) mean += reference(t);
            mean /= static_cast<double>(end - r);
            for (Index t = r; t < end; ++t)
                out.values(idx[static_cast<std::size_t>(t)], j) = mean;
            r = end;
        }
    }
    return out;
}

// Design matrix: intercept, then standardized age, then one-hot sex and
// batch with the first level dropped. Columns follow the sample order of
// `sample_ids`.
inline Matrix build_design(const SampleTable& samples, const std::vector<std::string>& sample_ids,
                           const std::set<Covariate>& covariates) {
    const Index n = static_cast<Index>(sample_ids.size());
    std::vector<const Sample*> rows;
    rows.reserve(sample_ids.size());
    for (const auto& id : sample_ids) {
        const Sample* s = samples.find(id);
        if (s == nullptr)
            throw Error(ErrorCode::ID_MISMATCH, "sample missing from sample table: " + id);
        rows.push_back(s);
    }

    std::vector<Vector> columns;
    columns.push_back(Vector::Ones(n));
    if (covariates.count(Covariate::AGE)) {
        Vector age(n);
        for (Index i = 0; i < n; ++i) age(i) = rows[static_cast<std::size_t>(i)]->age;
        const double mean = age.mean();
        const double sd = n > 1 ? std::sqrt((age.array() - mean).square().sum() /
                                            static_cast<double>(n - 1))
                                : 0.0;
        age.array() -= mean;
        if (sd > 0.0) age /= sd;
        columns.push_back(age);
    }
    if (covariates.count(Covariate::SEX)) {
        Vector male(n);
        for (Index i = 0; i < n; ++i)
            male(i) = rows[static_cast<std::size_t>(i)]->sex == Sex::M ? 1.0 : 0.0;
        columns.push_back(male);
    }
    if (covariates.count(Covariate::BATCH)) {
        std::set<std::string> levels;
        for (const Sample* s : rows) levels.insert(s->batch);
        bool first = true;
        for (const auto& level : levels) {
            if (first) {
                first = false;
                continue;
            }
            Vector indicator(n);
            for (Index i = 0; i < n; ++i)
                indicator(i) = rows[static_cast<std::size_t>(i)]->batch == level ? 1.0 : 0.0;
            columns.push_back(indicator);
        }
    }

    Matrix design(n, static_cast<Index>(columns.size()));
    for (Index c = 0; c < design.cols(); ++c)
        design.col(c) = columns[static_cast<std::size_t>(c)];
    return design;
}

// Replaces every probe row with its least-squares residual against the
// design. Residual rows are orthogonal to every design column.
inline MValueMatrix residualize(const MValueMatrix& m, const SampleTable& samples,
                                const std::set<Covariate>& covariates) {
    if (m.has_missing())
        throw Error(ErrorCode::MISSING_VALUES,
                    "residualization requires a fully observed matrix; impute first");
    const Matrix design = build_design(samples, m.sample_ids, covariates);
    Eigen::ColPivHouseholderQR<Matrix> rank_check(design);
    if (rank_check.rank() < design.cols())
        throw Error(ErrorCode::RANK_DEFICIENT_DESIGN,
                    "design matrix is rank deficient (" + std::to_string(rank_check.rank()) +
                        " < " + std::to_string(design.cols()) + ")");

    Eigen::HouseholderQR<Matrix> qr(design);
    const Matrix thin_q =
        qr.householderQ() * Matrix::Identity(design.rows(), design.cols());
    MValueMatrix out = m;
    // rows are probes, columns samples: project each row off the design span
    out.values = m.values - (m.values * thin_q) * thin_q.transpose();
    return out;
}

struct QcOutput {
    BetaMatrix filtered;
    MValueMatrix m_values;  // transformed, imputed, normalized, residualized
    QcReport report;
};

inline QcOutput run_qc(const BetaMatrix& beta, const AnnotationTable& ann,
                       const SampleTable& samples, const QcPolicy& policy) {
    QcOutput out;
    auto [filtered, report] = filter_probes(beta, ann, policy);
    out.filtered = std::move(filtered);
    out.report = std::move(report);
    out.m_values = beta_to_m(out.filtered, policy.clamp_epsilon);
    out.report.imputed_cells = impute_missing(out.m_values);
    out.m_values = normalize(out.m_values, policy.normalize);
    out.m_values = residualize(out.m_values, samples, policy.residualize_covariates);
    return out;
}

}  // namespace methylhub
