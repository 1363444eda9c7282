#pragma once

#include "drf/forest.hpp"
#include "drf/gaussian.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace drf {

/// Hard clustering of the targets.
struct ClusterAssignment {
    std::vector<std::size_t> cluster_of_sample;
    Eigen::MatrixXd centers;  // k x d_y
    int iterations = 0;
};

struct KMeansOptions {
    int max_iterations = 100;
    double tolerance = 1e-8;  // stop when no center moves farther than this
};

/// Lloyd's algorithm with k-means++ seeding. Ties go to the lowest cluster
/// index. An emptied cluster is reseeded at the point farthest from its own
/// center. Throws "insufficient samples for initialization" if N < k.
ClusterAssignment kmeans(const Eigen::Ref<const Eigen::MatrixXd>& targets, std::size_t k,
                         std::uint64_t seed, const KMeansOptions& options = {});

/// Leaf densities from a k-means clustering of the targets: per cluster the
/// member mean and population covariance (floored at cov_epsilon; a
/// singleton gets cov_epsilon * I). Sorted by the first mean coordinate.
std::vector<LeafGaussian> kmeans_init(const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                      std::size_t leaf_count, std::uint64_t seed,
                                      double cov_epsilon = kDefaultCovEpsilon);

/// Order in which the sorted clusters are handed to one tree's leaves: a
/// seeded random permutation, or identity when `permute` is false.
std::vector<LeafGaussian> assign_to_leaves(const std::vector<LeafGaussian>& clusters,
                                           bool permute, std::mt19937_64& rng);

/// Leaf responsibilities zeta_l = P(l|x) pi_l(y) / p(y|x) for one sample.
struct ZetaWeights {
    Eigen::VectorXd weight;
    bool floored = false;  // density at floor, weights fell back to uniform
};

ZetaWeights zeta_from_logs(const Eigen::Ref<const Eigen::VectorXd>& log_leaf,
                           const Eigen::Ref<const Eigen::VectorXd>& log_leaf_density);

ZetaWeights compute_zeta(const Routing& routing, std::span<const LeafGaussian> leaves,
                         const Eigen::Ref<const Eigen::VectorXd>& y);

struct LeafUpdateResult {
    std::vector<LeafGaussian> leaves;
    /// Tree NLL on the samples, before the first and after every iteration.
    std::vector<double> nll;
    std::size_t starved_leaves = 0;  // (iteration, leaf) pairs skipped
    std::size_t floor_events = 0;    // covariance floor activations
    std::size_t underflow_events = 0;
};

/// Iterates the step-size-free bound updates for one tree with routing held
/// fixed: zeta from the current leaves, means as zeta-weighted averages, then
/// covariances as zeta-weighted scatter about the new means.
///
/// `log_routing` is N x |L| (log P(l | x_i)), `targets` is N x d_y. A leaf
/// whose total responsibility is below 1e-12 keeps its previous density.
LeafUpdateResult update_leaves(const Eigen::Ref<const Eigen::MatrixXd>& log_routing,
                               const Eigen::Ref<const Eigen::MatrixXd>& targets,
                               std::vector<LeafGaussian> leaves, int iterations,
                               double cov_epsilon = kDefaultCovEpsilon);

/// Tree NLL -1/N sum_i log p(y_i|x_i) with routing fixed.
double tree_nll(const Eigen::Ref<const Eigen::MatrixXd>& log_routing,
                const Eigen::Ref<const Eigen::MatrixXd>& targets,
                std::span<const LeafGaussian> leaves, std::size_t* underflow_events = nullptr);

namespace detail {

/// Weighted mean and scatter of the targets about that mean, normalized by
/// the total weight. `scalar_path` selects plain double arithmetic (d_y = 1
/// only); otherwise the general matrix form is used.
struct WeightedMoments {
    double total = 0.0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd scatter;
};
WeightedMoments weighted_moments(const Eigen::Ref<const Eigen::VectorXd>& weights,
                                 const Eigen::Ref<const Eigen::MatrixXd>& targets, bool scalar_path);

}  // namespace detail

/// Stacks log P(l|x_i) for every row of F (backbone outputs) through tree k.
Eigen::MatrixXd log_routing_matrix(const ForestModel& model, std::size_t k,
                                   const Eigen::Ref<const Eigen::MatrixXd>& F);

}  // namespace drf
