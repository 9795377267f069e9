// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tsods/dataset.hpp"

namespace tsods {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Feature rows handed from feature analysis to detectors. `row_index[i]` is
/// the original series index the row is attributed to (a window's start).
struct FeatureTable {
    Matrix values;
    std::vector<std::size_t> row_index;
    std::vector<std::string> column_names;

    std::size_t rows() const noexcept { return values.rows(); }
    std::size_t cols() const noexcept { return values.cols(); }

    bool row_has_nan(std::size_t r) const {
        for (double v : values.row(r))
            if (std::isnan(v)) return true;
        return false;
    }
};

/// Row-per-timestamp view of every feature column of a dataset.
inline FeatureTable to_feature_table(const TimeSeriesDataset& ds) {
    FeatureTable t;
    t.values = Matrix(ds.size(), ds.num_features());
    for (std::size_t c = 0; c < ds.num_features(); ++c)
        for (std::size_t r = 0; r < ds.size(); ++r) t.values(r, c) = ds.features[c][r];
    t.row_index.resize(ds.size());
    for (std::size_t r = 0; r < ds.size(); ++r) t.row_index[r] = r;
    t.column_names = ds.feature_names;
    return t;
}

/// Builds a feature table from column-major data.
inline FeatureTable from_columns(const std::vector<std::vector<double>>& columns, std::vector<std::string> names,
                                 std::vector<std::size_t> row_index) {
    FeatureTable t;
    const std::size_t rows = row_index.size();
    t.values = Matrix(rows, columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c)
        for (std::size_t r = 0; r < rows; ++r) t.values(r, c) = columns[c][r];
    t.row_index = std::move(row_index);
    t.column_names = std::move(names);
    return t;
}

} // namespace tsods
