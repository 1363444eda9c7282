#include "drf/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace drf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)
constexpr double kFloorMargin = 1e-9;

}  // namespace

CovarianceFloor floor_covariance(const Eigen::MatrixXd& cov, double epsilon) {
    if (cov.rows() != cov.cols() || cov.rows() == 0) {
        throw std::invalid_argument("covariance must be a non-empty square matrix");
    }
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("cov_epsilon must be positive");
    }
    const double threshold = epsilon * (1.0 - kFloorMargin);
    if (cov.rows() == 1) {
        const double v = cov(0, 0);
        if (v >= threshold) return {cov, false};
        return {Eigen::MatrixXd::Constant(1, 1, epsilon), true};
    }
    Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) {
        throw std::runtime_error("eigendecomposition of covariance failed");
    }
    if (eig.eigenvalues().minCoeff() >= threshold) return {std::move(sym), false};
    const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(epsilon);
    Eigen::MatrixXd rebuilt =
        eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    rebuilt = 0.5 * (rebuilt + rebuilt.transpose()).eval();
    return {std::move(rebuilt), true};
}

LeafGaussian::LeafGaussian(Eigen::VectorXd mean, const Eigen::MatrixXd& cov, double cov_epsilon)
    : mean_(std::move(mean)) {
    if (mean_.size() == 0) throw std::invalid_argument("leaf mean must be non-empty");
    if (!mean_.allFinite() || !cov.allFinite()) {
        throw std::invalid_argument("leaf parameters must be finite");
    }
    if (cov.rows() != mean_.size() || cov.cols() != mean_.size()) {
        throw std::invalid_argument("leaf covariance shape does not match mean");
    }
    auto floored = floor_covariance(cov, cov_epsilon);
    cov_ = std::move(floored.cov);
    floored_ = floored.clamped;

    const auto d = static_cast<double>(mean_.size());
    if (mean_.size() == 1) {
        const double var = cov_(0, 0);
        precision_ = Eigen::MatrixXd::Constant(1, 1, 1.0 / var);
        log_norm_ = -0.5 * (kLog2Pi + std::log(var));
        return;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("leaf covariance is not positive definite");
    }
    const Eigen::MatrixXd L = llt.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    precision_ = llt.solve(Eigen::MatrixXd::Identity(cov_.rows(), cov_.cols()));
    precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
    log_norm_ = -0.5 * (d * kLog2Pi + log_det);
}

double LeafGaussian::log_density(const Eigen::Ref<const Eigen::VectorXd>& y) const {
    if (y.size() != mean_.size() || !y.allFinite()) {
        throw std::invalid_argument("invalid target");
    }
    if (mean_.size() == 1) {
        const double diff = y(0) - mean_(0);
        return log_norm_ - 0.5 * diff * diff * precision_(0, 0);
    }
    const Eigen::VectorXd diff = y - mean_;
    return log_norm_ - 0.5 * diff.dot(precision_ * diff);
}

double LeafGaussian::density(const Eigen::Ref<const Eigen::VectorXd>& y) const {
    return std::exp(log_density(y));
}

}  // namespace drf
