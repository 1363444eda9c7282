#pragma once

#include "drf/backbone.hpp"
#include "drf/gaussian.hpp"
#include "drf/topology.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace drf {

/// Activations are clipped to [-kActivationClip, kActivationClip] before the
/// sigmoid.
inline constexpr double kActivationClip = 40.0;
/// Per-tree log-density floor.
inline constexpr double kLogDensityFloor = -300.0;

/// Soft routing of one sample through one tree. `split[n]` is the
/// probability of taking the left branch at split node n; `split_right[n]`
/// holds 1 - split[n] evaluated without cancellation.
struct Routing {
    Eigen::VectorXd split;
    Eigen::VectorXd split_right;
    Eigen::VectorXd leaf;      // P(leaf | x)
    Eigen::VectorXd log_leaf;  // log P(leaf | x)
    Eigen::VectorXd activation;  // clipped pre-sigmoid value per split node
};

/// Routes one backbone output through a tree: s_n = sigmoid(f[unit(n)]),
/// leaf probabilities by a single top-down product pass.
Routing route(const TreeTopology& topology, const IndexFunction& index,
              const Eigen::Ref<const Eigen::VectorXd>& f_out);

/// Same pass starting from explicit left-branch probabilities in (0, 1).
Routing route_from_splits(const TreeTopology& topology,
                          const Eigen::Ref<const Eigen::VectorXd>& split);

struct MixtureDensity {
    double density = 0.0;
    double log_density = 0.0;
    bool floored = false;  // log-density was raised to kLogDensityFloor
};

/// p(y|x) = sum_l P(l|x) pi_l(y), combined by log-sum-exp.
MixtureDensity mixture_from_logs(const Eigen::Ref<const Eigen::VectorXd>& log_leaf,
                                 const Eigen::Ref<const Eigen::VectorXd>& log_leaf_density);

MixtureDensity tree_conditional_density(const Routing& routing,
                                        std::span<const LeafGaussian> leaves,
                                        const Eigen::Ref<const Eigen::VectorXd>& y);

/// Expected target sum_l P(l|x) mu_l.
Eigen::VectorXd tree_predict(const Routing& routing, std::span<const LeafGaussian> leaves);

Eigen::VectorXd leaf_log_densities(std::span<const LeafGaussian> leaves,
                                   const Eigen::Ref<const Eigen::VectorXd>& y);

/// Per-node posterior mass ratio Gamma_n = p(y|x; T_n) / p(y|x; T), indexed by
/// heap node id. If the tree density hit the floor, leaves get a uniform
/// 1/|L| and `floored` is set.
struct Gamma {
    Eigen::VectorXd node;
    bool floored = false;
};

Gamma gamma_from_logs(const TreeTopology& topology,
                      const Eigen::Ref<const Eigen::VectorXd>& log_leaf,
                      const Eigen::Ref<const Eigen::VectorXd>& log_leaf_density);

Gamma gamma_bottom_up(const TreeTopology& topology, const Routing& routing,
                      std::span<const LeafGaussian> leaves,
                      const Eigen::Ref<const Eigen::VectorXd>& y);

struct Tree {
    IndexFunction index;
    std::vector<LeafGaussian> leaves;
};

/// K soft regression trees over one shared backbone, each with its own index
/// function and leaf table.
class ForestModel {
public:
    ForestModel() = default;
    ForestModel(Backbone backbone, TreeTopology topology, std::vector<Tree> trees,
                Eigen::Index target_dim);

    const Backbone& backbone() const { return backbone_; }
    Backbone& backbone() { return backbone_; }
    const TreeTopology& topology() const { return topology_; }
    std::span<const Tree> trees() const { return trees_; }
    const Tree& tree(std::size_t k) const { return trees_.at(k); }
    std::size_t tree_count() const { return trees_.size(); }
    Eigen::Index input_dim() const { return backbone_.input_dim(); }
    Eigen::Index output_units() const { return backbone_.output_units(); }
    Eigen::Index target_dim() const { return target_dim_; }

    /// Replaces the leaf table of tree k.
    void set_leaves(std::size_t k, std::vector<LeafGaussian> leaves);

private:
    void validate_leaves(const std::vector<LeafGaussian>& leaves) const;

    Backbone backbone_;
    TreeTopology topology_{1};
    std::vector<Tree> trees_;
    Eigen::Index target_dim_ = 0;
};

/// Forest mean of tree predictions for one sample, with one shared backbone
/// pass for all trees.
Eigen::VectorXd forest_predict(const ForestModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);
/// forest_predict for every row of X (N x d_x), returned as N x d_y.
Eigen::MatrixXd forest_predict_batch(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Mean of tree predictions given precomputed backbone output.
Eigen::VectorXd forest_predict_from_features(const ForestModel& model,
                                             const Eigen::Ref<const Eigen::VectorXd>& f_out);

struct LossDiagnostics {
    std::size_t underflow_events = 0;  // (sample, tree) pairs clamped at the floor
    std::vector<double> tree_losses;   // R_{T^k}
};

/// Backbone output for every row of X (N x M).
Eigen::MatrixXd backbone_outputs(const Backbone& backbone, const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Forest NLL R_F = mean over trees of -1/N sum_i log p(y_i | x_i; T^k).
double loss_nll(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                const Eigen::Ref<const Eigen::MatrixXd>& Y, LossDiagnostics* diagnostics = nullptr);

/// Same loss with backbone outputs F (N x M) supplied directly.
double loss_nll_from_features(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& F,
                              const Eigen::Ref<const Eigen::MatrixXd>& Y,
                              LossDiagnostics* diagnostics = nullptr);

/// dR_F / dF (N x M). Each split node contributes
/// (s_n Gamma_right - (1 - s_n) Gamma_left) / N to its unit's column, scaled by
/// 1/K. Floored samples and clipped activations contribute nothing because
/// the loss is flat there.
Eigen::MatrixXd grad_loss_wrt_features(const ForestModel& model,
                                       const Eigen::Ref<const Eigen::MatrixXd>& F,
                                       const Eigen::Ref<const Eigen::MatrixXd>& Y,
                                       LossDiagnostics* diagnostics = nullptr);

Eigen::MatrixXd grad_loss_wrt_f(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                const Eigen::Ref<const Eigen::MatrixXd>& Y,
                                LossDiagnostics* diagnostics = nullptr);

struct LossAndGradient {
    double loss = 0.0;
    BackboneGradient gradient;
    LossDiagnostics diagnostics;
};

/// Loss and its gradient w.r.t. backbone parameters for one batch.
LossAndGradient loss_and_gradient(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  const Eigen::Ref<const Eigen::MatrixXd>& Y);

}  // namespace drf
