#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "methylhub/error.hpp"

namespace methylhub {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

// Dense probes-by-samples matrix with an explicit missing-value mask.
// `missing(i, j)` true means the cell was absent in the source; its value
// slot holds 0 and must not enter statistics.
struct LabeledMatrix {
    std::vector<std::string> probe_ids;
    std::vector<std::string> sample_ids;
    Matrix values;
    BoolMask missing;

    Index n_probes() const { return values.rows(); }
    Index n_samples() const { return values.cols(); }
    bool has_missing() const { return missing.size() > 0 && missing.any(); }

    Index probe_index(const std::string& id) const {
        for (Index i = 0; i < static_cast<Index>(probe_ids.size()); ++i)
            if (probe_ids[static_cast<std::size_t>(i)] == id) return i;
        throw Error(ErrorCode::ID_MISMATCH, "probe not present: " + id);
    }
};

struct BetaMatrix : LabeledMatrix {};
struct MValueMatrix : LabeledMatrix {};

template <class MatrixT>
MatrixT select_probe_rows(const MatrixT& m, const std::vector<Index>& rows) {
    MatrixT out;
    out.sample_ids = m.sample_ids;
    out.probe_ids.reserve(rows.size());
    out.values.resize(static_cast<Index>(rows.size()), m.n_samples());
    out.missing.resize(static_cast<Index>(rows.size()), m.n_samples());
    for (Index k = 0; k < static_cast<Index>(rows.size()); ++k) {
        const Index r = rows[static_cast<std::size_t>(k)];
        out.probe_ids.push_back(m.probe_ids[static_cast<std::size_t>(r)]);
        out.values.row(k) = m.values.row(r);
        out.missing.row(k) = m.missing.row(r);
    }
    return out;
}

enum class ProbeFlag : unsigned {
    LOW_QUALITY = 1u,
    CROSS_REACTIVE = 2u,
    SNP = 4u,
};

inline constexpr unsigned kAllProbeFlags =
    static_cast<unsigned>(ProbeFlag::LOW_QUALITY) |
    static_cast<unsigned>(ProbeFlag::CROSS_REACTIVE) |
    static_cast<unsigned>(ProbeFlag::SNP);

inline unsigned probe_flag_from_name(const std::string& name) {
    if (name == "LOW_QUALITY") return static_cast<unsigned>(ProbeFlag::LOW_QUALITY);
    if (name == "CROSS_REACTIVE") return static_cast<unsigned>(ProbeFlag::CROSS_REACTIVE);
    if (name == "SNP") return static_cast<unsigned>(ProbeFlag::SNP);
    throw Error(ErrorCode::UNKNOWN_FLAG, "unknown probe flag token: '" + name + "'");
}

inline std::vector<std::string> probe_flag_names(unsigned flags) {
    std::vector<std::string> out;
    if (flags & static_cast<unsigned>(ProbeFlag::LOW_QUALITY)) out.push_back("LOW_QUALITY");
    if (flags & static_cast<unsigned>(ProbeFlag::CROSS_REACTIVE)) out.push_back("CROSS_REACTIVE");
    if (flags & static_cast<unsigned>(ProbeFlag::SNP)) out.push_back("SNP");
    return out;
}

struct ProbeAnnotation {
    std::string probe_id;
    std::string gene;        // empty = intergenic
    std::string chromosome;
    unsigned flags = 0;
};

struct AnnotationTable {
    std::vector<ProbeAnnotation> rows;

    void add(ProbeAnnotation row) {
        auto [it, inserted] = by_probe_.emplace(row.probe_id, rows.size());
        if (!inserted)
            throw Error(ErrorCode::DUPLICATE_ID, "duplicate probe_id in annotation: " + row.probe_id);
        rows.push_back(std::move(row));
    }

    const ProbeAnnotation* find(const std::string& probe_id) const {
        auto it = by_probe_.find(probe_id);
        return it == by_probe_.end() ? nullptr : &rows[it->second];
    }

private:
    std::unordered_map<std::string, std::size_t> by_probe_;
};

enum class Phenotype { CASE, CONTROL };
enum class Sex { M, F };

struct Sample {
    std::string sample_id;
    Phenotype label = Phenotype::CONTROL;
    double age = 0.0;
    Sex sex = Sex::F;
    std::string batch;
};

struct SampleTable {
    std::vector<Sample> rows;

    void add(Sample row) {
        auto [it, inserted] = by_id_.emplace(row.sample_id, rows.size());
        if (!inserted)
            throw Error(ErrorCode::DUPLICATE_ID, "duplicate sample_id: " + row.sample_id);
        rows.push_back(std::move(row));
    }

    const Sample* find(const std::string& sample_id) const {
        auto it = by_id_.find(sample_id);
        return it == by_id_.end() ? nullptr : &rows[it->second];
    }

    Index count(Phenotype label) const {
        Index n = 0;
        for (const auto& s : rows)
            if (s.label == label) ++n;
        return n;
    }

private:
    std::unordered_map<std::string, std::size_t> by_id_;
};

struct GeneModule {
    std::string module_id;
    std::string description;
    std::vector<std::string> genes;
};

struct ModuleSet {
    std::vector<GeneModule> modules;

    void add(GeneModule module) {
        if (module.genes.size() < 2)
            throw Error(ErrorCode::MODULE_TOO_SMALL,
                        "module '" + module.module_id + "' has fewer than 2 member genes");
        auto [it, inserted] = by_id_.emplace(module.module_id, modules.size());
        if (!inserted)
            throw Error(ErrorCode::DUPLICATE_ID, "duplicate module_id: " + module.module_id);
        modules.push_back(std::move(module));
    }

    const GeneModule* find(const std::string& module_id) const {
        auto it = by_id_.find(module_id);
        return it == by_id_.end() ? nullptr : &modules[it->second];
    }

private:
    std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace methylhub
