#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace methylhub {

enum class ErrorCode {
    IO_ERROR,
    MALFORMED_ROW,
    VALUE_OUT_OF_RANGE,
    DUPLICATE_ID,
    UNKNOWN_FLAG,
    UNKNOWN_LABEL,
    MODULE_TOO_SMALL,
    ID_MISMATCH,
    UNANNOTATED_PROBE,
    DEGENERATE_COLUMN,
    RANK_DEFICIENT_DESIGN,
    MISSING_VALUES,
    TOO_FEW_SAMPLES,
    DEGENERATE_VECTOR,
    SINGLE_CLASS,
    NONFINITE_INPUT,
    DIMENSION_MISMATCH,
    UNTRAINED_MODEL,
    EMPTY_INPUT,
    TOO_FEW_FOLDS,
    K_TOO_LARGE,
    EMPTY_MODULE_AFTER_EXCLUSION,
    GENE_NOT_FOUND,
    CONFIG_INVALID,
};

inline const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::IO_ERROR: return "IO_ERROR";
        case ErrorCode::MALFORMED_ROW: return "MALFORMED_ROW";
        case ErrorCode::VALUE_OUT_OF_RANGE: return "VALUE_OUT_OF_RANGE";
        case ErrorCode::DUPLICATE_ID: return "DUPLICATE_ID";
        case ErrorCode::UNKNOWN_FLAG: return "UNKNOWN_FLAG";
        case ErrorCode::UNKNOWN_LABEL: return "UNKNOWN_LABEL";
        case ErrorCode::MODULE_TOO_SMALL: return "MODULE_TOO_SMALL";
        case ErrorCode::ID_MISMATCH: return "ID_MISMATCH";
        case ErrorCode::UNANNOTATED_PROBE: return "UNANNOTATED_PROBE";
        case ErrorCode::DEGENERATE_COLUMN: return "DEGENERATE_COLUMN";
        case ErrorCode::RANK_DEFICIENT_DESIGN: return "RANK_DEFICIENT_DESIGN";
        case ErrorCode::MISSING_VALUES: return "MISSING_VALUES";
        case ErrorCode::TOO_FEW_SAMPLES: return "TOO_FEW_SAMPLES";
        case ErrorCode::DEGENERATE_VECTOR: return "DEGENERATE_VECTOR";
        case ErrorCode::SINGLE_CLASS: return "SINGLE_CLASS";
        case ErrorCode::NONFINITE_INPUT: return "NONFINITE_INPUT";
        case ErrorCode::DIMENSION_MISMATCH: return "DIMENSION_MISMATCH";
        case ErrorCode::UNTRAINED_MODEL: return "UNTRAINED_MODEL";
        case ErrorCode::EMPTY_INPUT: return "EMPTY_INPUT";
        case ErrorCode::TOO_FEW_FOLDS: return "TOO_FEW_FOLDS";
        case ErrorCode::K_TOO_LARGE: return "K_TOO_LARGE";
        case ErrorCode::EMPTY_MODULE_AFTER_EXCLUSION: return "EMPTY_MODULE_AFTER_EXCLUSION";
        case ErrorCode::GENE_NOT_FOUND: return "GENE_NOT_FOUND";
        case ErrorCode::CONFIG_INVALID: return "CONFIG_INVALID";
    }
    return "UNKNOWN";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

protected:
    Error(ErrorCode code, const std::string& what, int /*tag*/)
        : std::runtime_error(what), code_(code) {}

private:
    ErrorCode code_;
};

// Error surfaced from a pipeline run, tagged with the stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.code(), "[" + stage + "] " + cause.what(), 0), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace methylhub
