#pragma once

#include <Eigen/Dense>

namespace drf {

inline constexpr double kDefaultCovEpsilon = 1e-4;

/// Result of projecting a covariance onto {Sigma : eig(Sigma) >= epsilon}.
struct CovarianceFloor {
    Eigen::MatrixXd cov;
    bool clamped = false;
};

/// Symmetrizes `cov` and raises every eigenvalue below `epsilon` to
/// `epsilon`. Matrices whose spectrum already clears the floor (up to a
/// relative 1e-9 margin) pass through with only the symmetrization applied,
/// so a floored matrix is a fixed point.
CovarianceFloor floor_covariance(const Eigen::MatrixXd& cov, double epsilon);

/// Gaussian leaf density N(mean, cov) with cached inverse and log-normalizer.
class LeafGaussian {
public:
    LeafGaussian() = default;

    /// Applies floor_covariance(cov, cov_epsilon) before caching.
    LeafGaussian(Eigen::VectorXd mean, const Eigen::MatrixXd& cov,
                 double cov_epsilon = kDefaultCovEpsilon);

    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& cov() const { return cov_; }
    Eigen::Index dim() const { return mean_.size(); }
    bool floored() const { return floored_; }

    /// log N(y; mean, cov). Throws std::invalid_argument("invalid target")
    /// on non-finite input or dimension mismatch.
    double log_density(const Eigen::Ref<const Eigen::VectorXd>& y) const;
    double density(const Eigen::Ref<const Eigen::VectorXd>& y) const;

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    Eigen::MatrixXd precision_;
    double log_norm_ = 0.0;  // -0.5 * (d log 2pi + log det cov)
    bool floored_ = false;
};

}  // namespace drf
