#pragma once

#include <Eigen/Dense>

namespace drf {

inline constexpr double kDefaultCsLevel = 5.0;

/// MAE and cumulative score CS(l) over a test set.
struct MetricsRecord {
    double mae = 0.0;
    double cs = 0.0;        // percent in [0, 100]
    double cs_level = kDefaultCsLevel;
    Eigen::Index count = 0;         // K
    Eigen::Index within_count = 0;  // K_l
};

/// Per-sample absolute error. With several target columns this is the mean
/// of the per-dimension absolute errors.
Eigen::VectorXd absolute_errors(const Eigen::Ref<const Eigen::MatrixXd>& predictions,
                                const Eigen::Ref<const Eigen::MatrixXd>& truths);

double mae(const Eigen::Ref<const Eigen::MatrixXd>& predictions,
           const Eigen::Ref<const Eigen::MatrixXd>& truths);

/// Percentage of samples with absolute error <= level (inclusive).
double cumulative_score(const Eigen::Ref<const Eigen::MatrixXd>& predictions,
                        const Eigen::Ref<const Eigen::MatrixXd>& truths, double level = kDefaultCsLevel);

MetricsRecord compute_metrics(const Eigen::Ref<const Eigen::MatrixXd>& predictions,
                              const Eigen::Ref<const Eigen::MatrixXd>& truths,
                              double level = kDefaultCsLevel);

}  // namespace drf
