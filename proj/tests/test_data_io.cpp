#include "drf/dataset.hpp"
#include "drf/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace drf;
using Eigen::MatrixXd;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
    const auto path = std::filesystem::temp_directory_path() / ("drf_test_" + name);
    std::ofstream(path) << contents;
    return path;
}

std::string error_of(const std::filesystem::path& path) {
    try {
        load_csv(path);
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Csv, LoadsFeaturesAndTargets) {
    const auto path = temp_file("ok.csv", "x0,x1,y0\n1,2,3\n4,5,6\n");
    const Dataset d = load_csv(path);
    EXPECT_EQ(d.size(), 2);
    EXPECT_EQ(d.feature_dim(), 2);
    EXPECT_EQ(d.target_dim(), 1);
    EXPECT_DOUBLE_EQ(d.features(1, 1), 5);
    EXPECT_DOUBLE_EQ(d.targets(0, 0), 3);
}

TEST(Csv, NonNumericCellNamesRowAndColumn) {
    std::string text = "x0,y0\n";
    for (int r = 1; r <= 6; ++r) text += std::to_string(r) + ",1\n";
    text += "abc,1\n";
    const std::string msg = error_of(temp_file("bad.csv", text));
    EXPECT_NE(msg.find("row 7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("x0"), std::string::npos) << msg;
}

TEST(Csv, MissingTargetColumn) {
    const std::string msg = error_of(temp_file("notarget.csv", "x0,x1\n1,2\n"));
    EXPECT_NE(msg.find("y0"), std::string::npos) << msg;
    CsvSchema schema;
    schema.require_targets = false;
    EXPECT_EQ(load_csv(temp_file("notarget2.csv", "x0,x1\n1,2\n"), schema).target_dim(), 0);
}

TEST(Csv, RaggedRowAndEmptyFile) {
    EXPECT_FALSE(error_of(temp_file("ragged.csv", "x0,y0\n1,2\n3\n")).empty());
    EXPECT_FALSE(error_of(temp_file("empty.csv", "")).empty());
    EXPECT_FALSE(error_of(temp_file("dup.csv", "x0,x0,y0\n1,2,3\n")).empty());
}

TEST(Csv, RoundTripIsExact) {
    Dataset d;
    d.features = MatrixXd::Random(20, 3);
    d.targets = MatrixXd::Random(20, 2) * 1e-7;
    d.features(0, 0) = 1.0 / 3.0;
    const auto path = std::filesystem::temp_directory_path() / "drf_test_roundtrip.csv";
    save_csv(path, d);
    const Dataset back = load_csv(path);
    EXPECT_EQ(back.features, d.features);
    EXPECT_EQ(back.targets, d.targets);
}

TEST(Standardize, ZeroMeanUnitVariance) {
    Dataset d;
    d.features = MatrixXd::Random(100, 2) * 5;
    d.features.col(1).array() += 10;
    d.targets = MatrixXd::Random(100, 1);
    const auto s = standardize(d);
    for (int j = 0; j < 2; ++j) {
        const auto col = s.data.features.col(j);
        EXPECT_NEAR(col.mean(), 0.0, 1e-12);
        EXPECT_NEAR((col.array() - col.mean()).square().mean(), 1.0, 1e-12);
    }
    const MatrixXd back = s.feature_stats.inverse(s.data.features);
    EXPECT_LT((back - d.features).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Standardize, ConstantColumnFlagged) {
    const auto stats = ColumnStats::compute(MatrixXd::Constant(5, 1, 3.0));
    EXPECT_TRUE(stats.constant[0]);
    EXPECT_DOUBLE_EQ(stats.scale(0), 1.0);
}

TEST(Synth, PiecewiseNoiseFreeFollowsFormula) {
    const Dataset d = generate_synthetic({.task = "piecewise", .samples = 200, .noise = 0.0, .seed = 1});
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double x = d.features(i, 0);
        EXPECT_GE(x, -2.0);
        EXPECT_LT(x, 2.0);
        EXPECT_NEAR(d.targets(i, 0), x < 0 ? 3 * x + 1 : -2 * x + 5, 1e-12);
    }
}

TEST(Synth, BimodalBranches) {
    EXPECT_DOUBLE_EQ(synthetic_mean("bimodal", -2.0, 0), 0.0);
    EXPECT_NEAR(synthetic_mean("bimodal", 2.0, 1), 6 + 2 * std::sin(4.0), 1e-15);
    EXPECT_DOUBLE_EQ(synthetic_mean("hetero-noise", 0.5), std::sin(1.5));
}

TEST(Synth, DeterministicAndSeedSensitive) {
    const SynthSpec spec{.task = "hetero-noise", .samples = 50, .noise = 0.5, .seed = 8};
    const Dataset a = generate_synthetic(spec);
    const Dataset b = generate_synthetic(spec);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.targets, b.targets);
    auto other = spec;
    other.seed = 9;
    EXPECT_NE(generate_synthetic(other).features, a.features);
}

TEST(Synth, UnknownTaskListsValidOnes) {
    try {
        generate_synthetic({.task = "spiral"});
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("piecewise"), std::string::npos);
    }
}
