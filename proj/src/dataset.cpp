#include "drf/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace drf {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

bool parse_double(const std::string& cell, double& out) {
    if (cell.empty()) return false;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

ColumnStats ColumnStats::identity(Eigen::Index columns) {
    return {Eigen::VectorXd::Zero(columns), Eigen::VectorXd::Ones(columns),
            std::vector<bool>(static_cast<std::size_t>(columns), false)};
}

ColumnStats ColumnStats::compute(const Eigen::Ref<const Eigen::MatrixXd>& data) {
    const Eigen::Index cols = data.cols();
    ColumnStats stats = identity(cols);
    if (data.rows() == 0) return stats;
    const double n = static_cast<double>(data.rows());
    for (Eigen::Index c = 0; c < cols; ++c) {
        const double mean = data.col(c).sum() / n;
        const double var = (data.col(c).array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        stats.mean(c) = mean;
        if (sd > 0.0 && sd > 1e-12 * std::max(1.0, std::abs(mean))) {
            stats.scale(c) = sd;
        } else {
            stats.scale(c) = 1.0;
            stats.constant[static_cast<std::size_t>(c)] = true;
        }
    }
    return stats;
}

Eigen::MatrixXd ColumnStats::transform(const Eigen::Ref<const Eigen::MatrixXd>& data) const {
    if (data.cols() != mean.size()) throw std::invalid_argument("column count does not match statistics");
    Eigen::MatrixXd out(data.rows(), data.cols());
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
        out.col(c) = ((data.col(c).array() - mean(c)) / scale(c)).matrix();
    }
    return out;
}

Eigen::MatrixXd ColumnStats::inverse(const Eigen::Ref<const Eigen::MatrixXd>& data) const {
    if (data.cols() != mean.size()) throw std::invalid_argument("column count does not match statistics");
    Eigen::MatrixXd out(data.rows(), data.cols());
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
        out.col(c) = (data.col(c).array() * scale(c) + mean(c)).matrix();
    }
    return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.feature_names = feature_names;
    out.target_names = target_names;
    out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
    out.targets.resize(static_cast<Eigen::Index>(indices.size()), targets.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = static_cast<Eigen::Index>(indices[r]);
        const auto dst = static_cast<Eigen::Index>(r);
        out.features.row(dst) = features.row(src);
        if (targets.cols() > 0) out.targets.row(dst) = targets.row(src);
    }
    return out;
}

StandardizedDataset standardize(const Dataset& dataset) {
    StandardizedDataset out;
    out.feature_stats = ColumnStats::compute(dataset.features);
    out.target_stats = ColumnStats::compute(dataset.targets);
    out.data = dataset;
    out.data.features = out.feature_stats.transform(dataset.features);
    out.data.targets = out.target_stats.transform(dataset.targets);
    return out;
}

Eigen::Index CsvTable::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == name) return static_cast<Eigen::Index>(c);
    }
    return -1;
}

Eigen::MatrixXd CsvTable::prefixed(const std::string& prefix, Eigen::Index expected,
                                   std::vector<std::string>* names) const {
    std::vector<Eigen::Index> cols;
    std::vector<std::string> found;
    for (Eigen::Index j = 0;; ++j) {
        const std::string name = prefix + std::to_string(j);
        const Eigen::Index c = column(name);
        if (c < 0) {
            if (expected >= 0 && j < expected) throw DataError("missing column '" + name + "'");
            break;
        }
        if (expected >= 0 && j >= expected) break;
        cols.push_back(c);
        found.push_back(name);
    }
    Eigen::MatrixXd out(values.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = values.col(cols[j]);
    if (names != nullptr) *names = std::move(found);
    return out;
}

CsvTable read_csv_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw DataError("'" + path.string() + "' is an empty file");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    table.header = split_line(line);
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (table.header[c].empty()) throw DataError("empty column name at position " + std::to_string(c + 1));
        for (std::size_t p = 0; p < c; ++p) {
            if (table.header[p] == table.header[c]) throw DataError("duplicate column '" + table.header[c] + "'");
        }
    }

    std::vector<double> flat;
    std::size_t rows = 0;
    const std::size_t width = table.header.size();
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++rows;
        const auto cells = split_line(line);
        if (cells.size() != width) {
            throw DataError("row " + std::to_string(rows) + " (line " + std::to_string(line_no) + ") has " +
                            std::to_string(cells.size()) + " cells, header has " + std::to_string(width));
        }
        for (std::size_t c = 0; c < width; ++c) {
            double v = 0.0;
            if (!parse_double(cells[c], v)) {
                throw DataError("non-numeric value '" + cells[c] + "' at row " + std::to_string(rows) +
                                ", column '" + table.header[c] + "' (line " + std::to_string(line_no) + ")");
            }
            flat.push_back(v);
        }
    }
    table.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * width + c];
        }
    }
    return table;
}

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void write_csv_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const Eigen::Ref<const Eigen::MatrixXd>& values) {
    if (static_cast<Eigen::Index>(header.size()) != values.cols()) {
        throw std::invalid_argument("header width does not match value columns");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << format_double(values(r, c));
        out << '\n';
    }
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    const CsvTable table = read_csv_table(path);
    if (table.values.rows() == 0) throw DataError("'" + path.string() + "' has a header but no rows");
    Dataset data;
    if (schema.feature_dim < 0 && table.column("x0") < 0) throw DataError("missing column 'x0'");
    data.features = table.prefixed("x", schema.feature_dim, &data.feature_names);
    if (schema.require_targets && schema.target_dim < 0 && table.column("y0") < 0) {
        throw DataError("missing column 'y0'");
    }
    if (schema.require_targets || table.column("y0") >= 0) {
        data.targets = table.prefixed("y", schema.target_dim, &data.target_names);
    } else {
        data.targets.resize(table.values.rows(), 0);
    }
    return data;
}

void save_csv(const std::filesystem::path& path, const Dataset& dataset) {
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < dataset.feature_dim(); ++j) header.push_back("x" + std::to_string(j));
    for (Eigen::Index j = 0; j < dataset.target_dim(); ++j) header.push_back("y" + std::to_string(j));
    Eigen::MatrixXd values(dataset.size(), dataset.feature_dim() + dataset.target_dim());
    values.leftCols(dataset.feature_dim()) = dataset.features;
    values.rightCols(dataset.target_dim()) = dataset.targets;
    write_csv_table(path, header, values);
}

}  // namespace drf
