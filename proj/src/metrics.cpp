#include "drf/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace drf {

Eigen::VectorXd absolute_errors(const Eigen::Ref<const Eigen::MatrixXd>& predictions,
                                const Eigen::Ref<const Eigen::MatrixXd>& truths) {
    if (predictions.rows() != truths.rows() || predictions.cols() != truths.cols()) {
        throw std::invalid_argument("prediction and truth shapes differ");
    }
    if (predictions.rows() == 0 || predictions.cols() == 0) {
        throw std::invalid_argument("no samples to evaluate");
    }
    return (predictions - truths).cwiseAbs().rowwise().mean();
}

double mae(const Eigen::Ref<const Eigen::MatrixXd>& predictions,
           const Eigen::Ref<const Eigen::MatrixXd>& truths) {
    const Eigen::VectorXd err = absolute_errors(predictions, truths);
    return err.sum() / static_cast<double>(err.size());
}

double cumulative_score(const Eigen::Ref<const Eigen::MatrixXd>& predictions,
                        const Eigen::Ref<const Eigen::MatrixXd>& truths, double level) {
    return compute_metrics(predictions, truths, level).cs;
}

MetricsRecord compute_metrics(const Eigen::Ref<const Eigen::MatrixXd>& predictions,
                              const Eigen::Ref<const Eigen::MatrixXd>& truths, double level) {
    if (!(level >= 0.0)) throw std::invalid_argument("error level must be non-negative");
    const Eigen::VectorXd err = absolute_errors(predictions, truths);
    MetricsRecord m;
    m.cs_level = level;
    m.count = err.size();
    m.within_count = (err.array() <= level).count();
    m.mae = err.sum() / static_cast<double>(m.count);
    m.cs = 100.0 * static_cast<double>(m.within_count) / static_cast<double>(m.count);
    return m;
}

}  // namespace drf
