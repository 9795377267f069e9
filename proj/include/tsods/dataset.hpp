// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tsods/error.hpp"

namespace tsods {

/// Timestamp-indexed table of float feature columns with optional 0/1
/// anomaly labels. Features are stored column-major.
struct TimeSeriesDataset {
    std::string name;
    std::vector<std::int64_t> timestamps;
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> features;
    std::optional<std::vector<std::uint8_t>> labels;

    std::size_t size() const noexcept { return timestamps.size(); }
    std::size_t num_features() const noexcept { return features.size(); }
    bool has_labels() const noexcept { return labels.has_value(); }

    std::optional<std::size_t> column_index(std::string_view column) const {
        for (std::size_t i = 0; i < feature_names.size(); ++i)
            if (feature_names[i] == column) return i;
        return std::nullopt;
    }

    /// Resolves a column hyperparameter; the empty name means the first column.
    std::size_t resolve_column(std::string_view column) const {
        if (column.empty()) {
            if (features.empty()) throw Error(ErrorCode::UnknownColumn, "dataset has no feature columns");
            return 0;
        }
        if (auto idx = column_index(column)) return *idx;
        throw Error(ErrorCode::UnknownColumn, "no feature column named '" + std::string(column) + "'");
    }

    /// Checks the equal-length and binary-label invariants.
    void check_invariants() const {
        const std::size_t n = size();
        if (n == 0) throw Error(ErrorCode::EmptyInput, "dataset has no rows");
        if (feature_names.size() != features.size())
            throw Error(ErrorCode::RaggedRows, "feature names and columns disagree");
        for (const auto& col : features)
            if (col.size() != n) throw Error(ErrorCode::RaggedRows, "feature column length differs from timestamps");
        if (labels) {
            if (labels->size() != n) throw Error(ErrorCode::RaggedRows, "label column length differs from timestamps");
            for (auto v : *labels)
                if (v > 1) throw Error(ErrorCode::BadTargetIndex, "labels must be 0 or 1");
        }
    }

    /// Copy with rows selected (in the given order).
    TimeSeriesDataset select_rows(const std::vector<std::size_t>& rows) const {
        TimeSeriesDataset out;
        out.name = name;
        out.feature_names = feature_names;
        out.timestamps.reserve(rows.size());
        for (auto r : rows) out.timestamps.push_back(timestamps[r]);
        out.features.resize(features.size());
        for (std::size_t c = 0; c < features.size(); ++c) {
            out.features[c].reserve(rows.size());
            for (auto r : rows) out.features[c].push_back(features[c][r]);
        }
        if (labels) {
            std::vector<std::uint8_t> l;
            l.reserve(rows.size());
            for (auto r : rows) l.push_back((*labels)[r]);
            out.labels = std::move(l);
        }
        return out;
    }

    bool operator==(const TimeSeriesDataset& other) const {
        if (name != other.name || timestamps != other.timestamps || feature_names != other.feature_names ||
            labels != other.labels || features.size() != other.features.size())
            return false;
        // NaN cells compare equal to NaN cells.
        for (std::size_t c = 0; c < features.size(); ++c) {
            if (features[c].size() != other.features[c].size()) return false;
            for (std::size_t i = 0; i < features[c].size(); ++i) {
                const double a = features[c][i], b = other.features[c][i];
                if (!(a == b || (std::isnan(a) && std::isnan(b)))) return false;
            }
        }
        return true;
    }
};

namespace csv {

/// Splits RFC-4180 text into records of fields. Quoted fields may contain
/// separators, doubled quotes and line breaks. A trailing line break does not
/// produce an extra record.
inline std::vector<std::vector<std::string>> parse_records(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };

    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (ch == '\n') ++line;
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
        case '"':
            if (field_started && !field.empty())
                throw Error(ErrorCode::MalformedCsv, "unexpected quote on line " + std::to_string(line));
            in_quotes = true;
            field_started = true;
            break;
        case ',': end_field(); break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_record();
            ++line;
            break;
        case '\n':
            end_record();
            ++line;
            break;
        default:
            field.push_back(ch);
            field_started = true;
        }
    }
    if (in_quotes) throw Error(ErrorCode::MalformedCsv, "unterminated quoted field");
    if (field_started || !record.empty()) end_record();
    return records;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

/// Parses a numeric cell. Empty cells are missing values (NaN).
inline std::optional<double> parse_number(std::string_view cell) {
    cell = trim(cell);
    if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
    return value;
}

inline std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

} // namespace csv

/// Builds a dataset from CSV text. The target column (if any) becomes the
/// labels; the timestamp column is `timestamp_column`, else the column named
/// "timestamp", else the ordinal row index. All other columns are features,
/// in file order.
inline TimeSeriesDataset generate_dataset(std::string_view csv_text, std::optional<std::size_t> target_index = {},
                                          std::optional<std::size_t> timestamp_column = {}) {
    auto records = csv::parse_records(csv_text);
    std::erase_if(records, [](const auto& rec) { return rec.size() == 1 && csv::trim(rec[0]).empty(); });
    if (records.empty()) throw Error(ErrorCode::EmptyInput, "no header row");
    const auto& header = records.front();
    const std::size_t width = header.size();
    if (records.size() < 2) throw Error(ErrorCode::EmptyInput, "no data rows");

    for (std::size_t r = 1; r < records.size(); ++r)
        if (records[r].size() != width)
            throw Error(ErrorCode::RaggedRows, "row " + std::to_string(r) + " has " +
                                                   std::to_string(records[r].size()) + " fields, header has " +
                                                   std::to_string(width));

    if (target_index && *target_index >= width)
        throw Error(ErrorCode::BadTargetIndex, "target index " + std::to_string(*target_index) +
                                                   " out of range for " + std::to_string(width) + " columns");

    std::optional<std::size_t> ts_col = timestamp_column;
    if (ts_col && *ts_col >= width)
        throw Error(ErrorCode::MalformedCsv, "timestamp column " + std::to_string(*ts_col) + " out of range");
    if (!ts_col) {
        for (std::size_t c = 0; c < width; ++c)
            if (csv::trim(header[c]) == "timestamp" && (!target_index || *target_index != c)) {
                ts_col = c;
                break;
            }
    }
    if (ts_col && target_index && *ts_col == *target_index)
        throw Error(ErrorCode::BadTargetIndex, "target column cannot also be the timestamp column");

    const std::size_t n = records.size() - 1;
    TimeSeriesDataset ds;
    ds.timestamps.resize(n);

    auto cell_error = [](std::size_t row, std::size_t col, const std::string& cell) {
        return Error(ErrorCode::NonNumericCell,
                     "row " + std::to_string(row) + ", column " + std::to_string(col) + ": '" + cell + "'");
    };

    if (ts_col) {
        for (std::size_t r = 0; r < n; ++r) {
            const auto& cell = records[r + 1][*ts_col];
            auto v = csv::parse_number(cell);
            if (!v || std::isnan(*v) || *v != std::floor(*v)) throw cell_error(r + 1, *ts_col, cell);
            ds.timestamps[r] = static_cast<std::int64_t>(*v);
        }
    } else {
        for (std::size_t r = 0; r < n; ++r) ds.timestamps[r] = static_cast<std::int64_t>(r);
    }

    if (target_index) {
        std::vector<std::uint8_t> labels(n);
        for (std::size_t r = 0; r < n; ++r) {
            const auto& cell = records[r + 1][*target_index];
            auto v = csv::parse_number(cell);
            if (!v || !(*v == 0.0 || *v == 1.0))
                throw Error(ErrorCode::BadTargetIndex,
                            "target column has non-binary value '" + cell + "' at row " + std::to_string(r + 1));
            labels[r] = static_cast<std::uint8_t>(*v);
        }
        ds.labels = std::move(labels);
    }

    for (std::size_t c = 0; c < width; ++c) {
        if ((ts_col && c == *ts_col) || (target_index && c == *target_index)) continue;
        std::vector<double> column(n);
        for (std::size_t r = 0; r < n; ++r) {
            const auto& cell = records[r + 1][c];
            auto v = csv::parse_number(cell);
            if (!v) throw cell_error(r + 1, c, cell);
            column[r] = *v;
        }
        ds.feature_names.emplace_back(csv::trim(header[c]));
        ds.features.push_back(std::move(column));
    }
    return ds;
}

/// Writes the dataset as CSV: timestamp, features..., and "label" when present.
inline std::string to_csv(const TimeSeriesDataset& ds) {
    std::ostringstream out;
    out << "timestamp";
    for (const auto& name : ds.feature_names) out << ',' << csv::quote_if_needed(name);
    if (ds.labels) out << ",label";
    out << '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
        out << ds.timestamps[r];
        for (const auto& col : ds.features) {
            out << ',';
            if (!std::isnan(col[r])) {
                char buf[32];
                auto res = std::to_chars(buf, buf + sizeof buf, col[r]);
                out.write(buf, res.ptr - buf);
            }
        }
        if (ds.labels) out << ',' << static_cast<int>((*ds.labels)[r]);
        out << '\n';
    }
    return out.str();
}

} // namespace tsods
