#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "methylhub/error.hpp"
#include "methylhub/types.hpp"

namespace methylhub {

namespace detail {

// Splits on tab, keeping empty fields (including a trailing one).
inline std::vector<std::string> split_tab(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

inline double parse_double_cell(std::string_view cell, const std::string& context) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw Error(ErrorCode::MALFORMED_ROW,
                    context + ": cell '" + std::string(cell) + "' is not numeric");
    return value;
}

inline std::string format_fixed(double value, int precision = 6) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.*f", precision, value);
    return buffer;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open file: " + path.string());
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write file: " + path.string());
    return out;
}

// Strips a trailing carriage return so CRLF files parse like LF files.
inline bool get_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

template <class MatrixT>
MatrixT load_matrix_tsv(const std::filesystem::path& path, bool enforce_unit_range) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!get_line(in, line))
        throw Error(ErrorCode::MALFORMED_ROW, path.string() + ": empty file");

    const std::vector<std::string> header = split_tab(line);
    if (header.empty() || header[0] != "probe_id")
        throw Error(ErrorCode::MALFORMED_ROW,
                    path.string() + ": header must start with 'probe_id'");

    MatrixT m;
    m.sample_ids.assign(header.begin() + 1, header.end());
    {
        std::unordered_set<std::string> seen;
        for (const auto& id : m.sample_ids)
            if (!seen.insert(id).second)
                throw Error(ErrorCode::DUPLICATE_ID, path.string() + ": duplicate sample id " + id);
    }

    const std::size_t n_samples = m.sample_ids.size();
    std::vector<double> values;
    std::vector<bool> missing;
    std::unordered_set<std::string> seen_probes;
    std::size_t line_no = 1;
    while (get_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_tab(line);
        if (fields.size() != n_samples + 1)
            throw Error(ErrorCode::MALFORMED_ROW,
                        path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(n_samples + 1) + " cells, got " +
                            std::to_string(fields.size()));
        if (!seen_probes.insert(fields[0]).second)
            throw Error(ErrorCode::DUPLICATE_ID,
                        path.string() + ": duplicate probe id " + fields[0]);
        m.probe_ids.push_back(fields[0]);
        for (std::size_t j = 1; j < fields.size(); ++j) {
            if (fields[j] == "NA") {
                values.push_back(0.0);
                missing.push_back(true);
                continue;
            }
            const double v = parse_double_cell(
                fields[j], path.string() + ":" + std::to_string(line_no));
            if (enforce_unit_range && (v < 0.0 || v > 1.0))
                throw Error(ErrorCode::VALUE_OUT_OF_RANGE,
                            path.string() + ":" + std::to_string(line_no) + ": value " +
                                fields[j] + " outside [0,1]");
            values.push_back(v);
            missing.push_back(false);
        }
    }

    const Index rows = static_cast<Index>(m.probe_ids.size());
    const Index cols = static_cast<Index>(n_samples);
    m.values.resize(rows, cols);
    m.missing.resize(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) {
            m.values(i, j) = values[static_cast<std::size_t>(i * cols + j)];
            m.missing(i, j) = missing[static_cast<std::size_t>(i * cols + j)];
        }
    return m;
}

template <class MatrixT>
void write_matrix_tsv(std::ostream& out, const MatrixT& m) {
    out << "probe_id";
    for (const auto& id : m.sample_ids) out << '\t' << id;
    out << '\n';
    for (Index i = 0; i < m.n_probes(); ++i) {
        out << m.probe_ids[static_cast<std::size_t>(i)];
        for (Index j = 0; j < m.n_samples(); ++j) {
            out << '\t';
            if (m.missing(i, j))
                out << "NA";
            else
                out << format_fixed(m.values(i, j));
        }
        out << '\n';
    }
}

}  // namespace detail

inline BetaMatrix load_beta_matrix(const std::filesystem::path& path) {
    return detail::load_matrix_tsv<BetaMatrix>(path, /*enforce_unit_range=*/true);
}

inline MValueMatrix load_m_matrix(const std::filesystem::path& path) {
    return detail::load_matrix_tsv<MValueMatrix>(path, /*enforce_unit_range=*/false);
}

inline void write_beta_matrix(std::ostream& out, const BetaMatrix& m) {
    detail::write_matrix_tsv(out, m);
}

inline void write_beta_matrix(const std::filesystem::path& path, const BetaMatrix& m) {
    auto out = detail::open_output(path);
    detail::write_matrix_tsv(out, m);
}

inline void write_m_matrix(const std::filesystem::path& path, const MValueMatrix& m) {
    auto out = detail::open_output(path);
    detail::write_matrix_tsv(out, m);
}

inline AnnotationTable load_annotation(const std::filesystem::path& path) {
    std::ifstream in = detail::open_input(path);
    std::string line;
    if (!detail::get_line(in, line) || detail::split_tab(line) !=
            std::vector<std::string>{"probe_id", "gene", "chromosome", "flags"})
        throw Error(ErrorCode::MALFORMED_ROW,
                    path.string() + ": expected header 'probe_id\\tgene\\tchromosome\\tflags'");

    AnnotationTable table;
    std::size_t line_no = 1;
    while (detail::get_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_tab(line);
        if (fields.size() != 4)
            throw Error(ErrorCode::MALFORMED_ROW,
                        path.string() + ":" + std::to_string(line_no) + ": expected 4 columns");
        ProbeAnnotation row;
        row.probe_id = fields[0];
        row.gene = fields[1];
        row.chromosome = fields[2];
        std::stringstream ss(fields[3]);
        std::string token;
        while (std::getline(ss, token, ';'))
            if (!token.empty()) row.flags |= probe_flag_from_name(token);
        table.add(std::move(row));
    }
    return table;
}

inline void write_annotation(const std::filesystem::path& path, const AnnotationTable& table) {
    auto out = detail::open_output(path);
    out << "probe_id\tgene\tchromosome\tflags\n";
    for (const auto& row : table.rows) {
        out << row.probe_id << '\t' << row.gene << '\t' << row.chromosome << '\t';
        const auto names = probe_flag_names(row.flags);
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (i) out << ';';
            out << names[i];
        }
        out << '\n';
    }
}

inline Phenotype parse_label(const std::string& raw) {
    std::string lower(raw.size(), '\0');
    std::transform(raw.begin(), raw.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "case") return Phenotype::CASE;
    if (lower == "control") return Phenotype::CONTROL;
    throw Error(ErrorCode::UNKNOWN_LABEL, "label must be case/control, got '" + raw + "'");
}

inline SampleTable load_samples(const std::filesystem::path& path) {
    std::ifstream in = detail::open_input(path);
    std::string line;
    if (!detail::get_line(in, line) || detail::split_tab(line) !=
            std::vector<std::string>{"sample_id", "label", "age", "sex", "batch"})
        throw Error(ErrorCode::MALFORMED_ROW,
                    path.string() + ": expected header 'sample_id\\tlabel\\tage\\tsex\\tbatch'");

    SampleTable table;
    std::size_t line_no = 1;
    while (detail::get_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_tab(line);
        if (fields.size() != 5)
            throw Error(ErrorCode::MALFORMED_ROW,
                        path.string() + ":" + std::to_string(line_no) + ": expected 5 columns");
        Sample s;
        s.sample_id = fields[0];
        s.label = parse_label(fields[1]);
        s.age = detail::parse_double_cell(fields[2], path.string() + ":" + std::to_string(line_no));
        if (s.age < 0.0)
            throw Error(ErrorCode::VALUE_OUT_OF_RANGE,
                        path.string() + ":" + std::to_string(line_no) + ": negative age");
        if (fields[3] == "M")
            s.sex = Sex::M;
        else if (fields[3] == "F")
            s.sex = Sex::F;
        else
            throw Error(ErrorCode::UNKNOWN_LABEL,
                        path.string() + ":" + std::to_string(line_no) + ": sex must be M or F");
        s.batch = fields[4];
        table.add(std::move(s));
    }
    return table;
}

inline void write_samples(const std::filesystem::path& path, const SampleTable& table) {
    auto out = detail::open_output(path);
    out << "sample_id\tlabel\tage\tsex\tbatch\n";
    for (const auto& s : table.rows) {
        out << s.sample_id << '\t' << (s.label == Phenotype::CASE ? "case" : "control") << '\t'
            << detail::format_fixed(s.age, 1) << '\t' << (s.sex == Sex::M ? 'M' : 'F') << '\t'
            << s.batch << '\n';
    }
}

// GMT: module_id <TAB> description <TAB> gene [<TAB> gene ...]
inline ModuleSet load_modules(const std::filesystem::path& path) {
    std::ifstream in = detail::open_input(path);
    ModuleSet mods;
    std::string line;
    std::size_t line_no = 0;
    while (detail::get_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_tab(line);
        if (fields.size() < 2)
            throw Error(ErrorCode::MALFORMED_ROW,
                        path.string() + ":" + std::to_string(line_no) +
                            ": GMT line needs id and description");
        GeneModule module;
        module.module_id = fields[0];
        module.description = fields[1];
        std::set<std::string> seen;
        for (std::size_t i = 2; i < fields.size(); ++i) {
            if (fields[i].empty()) continue;
            if (seen.insert(fields[i]).second) module.genes.push_back(fields[i]);
        }
        mods.add(std::move(module));
    }
    return mods;
}

inline void write_modules(const std::filesystem::path& path, const ModuleSet& mods) {
    auto out = detail::open_output(path);
    for (const auto& m : mods.modules) {
        out << m.module_id << '\t' << m.description;
        for (const auto& g : m.genes) out << '\t' << g;
        out << '\n';
    }
}

}  // namespace methylhub
