// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tsods {

/// Every failure the library reports carries one of these codes. The code
/// name (see `to_string`) is part of the wire contract: the CLI prints it and
/// the HTTP service returns it as `{"error": "<name>"}`.
enum class ErrorCode {
    // dataset ingestion
    EmptyInput,
    BadTargetIndex,
    NonNumericCell,
    RaggedRows,
    MalformedCsv,
    NoLabels,
    // processing
    UnsortedTimestamps,
    DuplicateTimestamp,
    AllMissingColumn,
    PeriodTooLarge,
    NonPositivePeriod,
    NonPositiveWindow,
    OrderTooLarge,
    WindowTooLarge,
    UnknownColumn,
    // features
    LagTooLarge,
    TooManyBins,
    NegativeEntry,
    RankTooLarge,
    // detection
    SubsampleTooSmall,
    KTooLarge,
    SeriesTooShort,
    ContaminationOutOfRange,
    UnknownFeature,
    LengthMismatch,
    // pipeline language
    MalformedJson,
    MalformedPipeline,
    UnknownSchemaVersion,
    UnknownPrimitive,
    UnknownHyperparam,
    HyperparamTypeMismatch,
    HyperparamOutOfRange,
    ForwardReference,
    BadOutput,
    // engine
    InvalidPipeline,
    StepFailed,
    BadScheme,
    BadMetric,
    MissingGroundTruth,
    // searcher
    EmptySlot,
    InvalidSearchSpace,
    BudgetZero,
    FailedCandidate,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::BadTargetIndex: return "BadTargetIndex";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::NoLabels: return "NoLabels";
    case ErrorCode::UnsortedTimestamps: return "UnsortedTimestamps";
    case ErrorCode::DuplicateTimestamp: return "DuplicateTimestamp";
    case ErrorCode::AllMissingColumn: return "AllMissingColumn";
    case ErrorCode::PeriodTooLarge: return "PeriodTooLarge";
    case ErrorCode::NonPositivePeriod: return "NonPositivePeriod";
    case ErrorCode::NonPositiveWindow: return "NonPositiveWindow";
    case ErrorCode::OrderTooLarge: return "OrderTooLarge";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::LagTooLarge: return "LagTooLarge";
    case ErrorCode::TooManyBins: return "TooManyBins";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::RankTooLarge: return "RankTooLarge";
    case ErrorCode::SubsampleTooSmall: return "SubsampleTooSmall";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::ContaminationOutOfRange: return "ContaminationOutOfRange";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::MalformedPipeline: return "MalformedPipeline";
    case ErrorCode::UnknownSchemaVersion: return "UnknownSchemaVersion";
    case ErrorCode::UnknownPrimitive: return "UnknownPrimitive";
    case ErrorCode::UnknownHyperparam: return "UnknownHyperparam";
    case ErrorCode::HyperparamTypeMismatch: return "HyperparamTypeMismatch";
    case ErrorCode::HyperparamOutOfRange: return "HyperparamOutOfRange";
    case ErrorCode::ForwardReference: return "ForwardReference";
    case ErrorCode::BadOutput: return "BadOutput";
    case ErrorCode::InvalidPipeline: return "InvalidPipeline";
    case ErrorCode::StepFailed: return "StepFailed";
    case ErrorCode::BadScheme: return "BadScheme";
    case ErrorCode::BadMetric: return "BadMetric";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::EmptySlot: return "EmptySlot";
    case ErrorCode::InvalidSearchSpace: return "InvalidSearchSpace";
    case ErrorCode::BudgetZero: return "BudgetZero";
    case ErrorCode::FailedCandidate: return "FailedCandidate";
    }
    return "Unknown";
}

/// Error categories used by the CLI to pick an exit code.
enum class ErrorCategory { Usage, Data, Pipeline };

constexpr ErrorCategory category(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::EmptyInput:
    case ErrorCode::BadTargetIndex:
    case ErrorCode::NonNumericCell:
    case ErrorCode::RaggedRows:
    case ErrorCode::MalformedCsv:
    case ErrorCode::NoLabels:
    case ErrorCode::MissingGroundTruth:
        return ErrorCategory::Data;
    case ErrorCode::BadScheme:
    case ErrorCode::BadMetric:
    case ErrorCode::BudgetZero:
        return ErrorCategory::Usage;
    default:
        return ErrorCategory::Pipeline;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::optional<std::size_t> step = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), step_(step) {}

    ErrorCode code() const noexcept { return code_; }
    std::string_view name() const noexcept { return to_string(code_); }
    /// Pipeline step the error is attributed to, when known.
    std::optional<std::size_t> step() const noexcept { return step_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> step_;
};

} // namespace tsods
