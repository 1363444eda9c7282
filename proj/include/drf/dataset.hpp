#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace drf {

/// Raised for malformed CSV input. The message names the offending row or
/// column.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-column location/scale. A column with zero spread is flagged constant
/// and gets scale 1.
struct ColumnStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
    std::vector<bool> constant;

    static ColumnStats identity(Eigen::Index columns);
    static ColumnStats compute(const Eigen::Ref<const Eigen::MatrixXd>& data);

    Eigen::MatrixXd transform(const Eigen::Ref<const Eigen::MatrixXd>& data) const;
    Eigen::MatrixXd inverse(const Eigen::Ref<const Eigen::MatrixXd>& data) const;
};

/// N samples with features x0..x{d_x-1} and targets y0..y{d_y-1}. Targets
/// may be absent (d_y = 0) for prediction inputs.
struct Dataset {
    Eigen::MatrixXd features;  // N x d_x
    Eigen::MatrixXd targets;   // N x d_y
    std::vector<std::string> feature_names;
    std::vector<std::string> target_names;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index feature_dim() const { return features.cols(); }
    Eigen::Index target_dim() const { return targets.cols(); }
    bool has_targets() const { return targets.cols() > 0; }

    /// Rows `indices` of this dataset, in that order.
    Dataset subset(const std::vector<std::size_t>& indices) const;
};

struct StandardizedDataset {
    Dataset data;
    ColumnStats feature_stats;
    ColumnStats target_stats;
};

/// Zero-mean, unit-variance features and targets (population std).
StandardizedDataset standardize(const Dataset& dataset);

struct CsvSchema {
    bool require_targets = true;
    Eigen::Index feature_dim = -1;  // -1: infer from header
    Eigen::Index target_dim = -1;
};

/// Parsed comma-separated table with a mandatory header.
struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd values;  // rows x header.size()

    /// Index of `name` in the header, or -1.
    Eigen::Index column(const std::string& name) const;
    /// Columns prefix0, prefix1, ... as a matrix; stops at the first gap.
    /// `expected` >= 0 demands exactly that many and names the missing one.
    Eigen::MatrixXd prefixed(const std::string& prefix, Eigen::Index expected,
                             std::vector<std::string>* names = nullptr) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);
void write_csv_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const Eigen::Ref<const Eigen::MatrixXd>& values);

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void save_csv(const std::filesystem::path& path, const Dataset& dataset);

/// Decimal form with 17 significant digits (round-trips any double).
std::string format_double(double value);

}  // namespace drf
