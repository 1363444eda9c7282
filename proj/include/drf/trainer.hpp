#pragma once

#include "drf/dataset.hpp"
#include "drf/forest.hpp"
#include "drf/metrics.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace drf {

struct TrainConfig {
    std::size_t trees = 5;
    int depth = 6;
    Eigen::Index output_units = 128;
    std::vector<Eigen::Index> hidden_layers{64};
    int leaf_update_iterations = 20;
    std::size_t batches_per_leaf_update = 50;  // n_B
    std::size_t batch_size = 16;
    std::int64_t max_iterations = 30000;       // gradient steps
    double learning_rate = 0.05;
    double lr_decay = 0.5;
    std::int64_t lr_decay_interval = 10000;
    double cov_epsilon = kDefaultCovEpsilon;
    std::uint64_t seed = 0;
    bool leaf_init_permute = true;
    bool final_leaf_refit = false;
    bool early_stop = false;
    double early_stop_tolerance = 1e-6;
    int early_stop_patience = 10;  // windows

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    void validate(Eigen::Index samples) const;
};

/// A forest plus the standardization it was trained under. predict() takes
/// raw features and returns raw-unit targets.
struct TrainedForest {
    ForestModel model;
    ColumnStats feature_stats;
    ColumnStats target_stats;
    double cov_epsilon = kDefaultCovEpsilon;

    Eigen::MatrixXd predict(const Eigen::Ref<const Eigen::MatrixXd>& features) const;
};

struct LeafUpdateRecord {
    std::int64_t after_step = 0;
    std::size_t window_samples = 0;
    std::vector<double> nll_before;  // per tree, on the window
    std::vector<double> nll_after;
    std::size_t floor_events = 0;
    std::size_t starved_leaves = 0;
};

struct TrainReport {
    std::vector<double> window_losses;  // mean mini-batch loss per window
    std::vector<LeafUpdateRecord> leaf_updates;
    std::int64_t gradient_steps = 0;
    std::int64_t skipped_steps = 0;
    std::size_t underflow_events = 0;
    std::size_t starved_leaves = 0;
    std::size_t floor_events = 0;
    bool stopped_early = false;
    std::vector<std::string> warnings;
    double final_loss = 0.0;  // forest NLL on the standardized training set
    MetricsRecord train_metrics;
    double wall_seconds = 0.0;
};

/// Optional callbacks around each phase of the alternating loop.
struct TrainHooks {
    std::function<void(const ForestModel&)> before_gradient_step;
    std::function<void(const ForestModel&)> after_gradient_step;
    std::function<void(const ForestModel&)> before_leaf_update;
    std::function<void(const ForestModel&)> after_leaf_update;
};

struct TrainResult {
    TrainedForest forest;
    TrainReport report;
};

/// Alternating optimization. Repeats until max_iterations gradient steps:
/// draw n_B mini-batches (uniform with replacement), taking one SGD step on
/// the backbone per batch with leaves frozen; then, with the backbone frozen,
/// refit every tree's leaves on the union of those batches by
/// leaf_update_iterations bound-minimization sweeps. Routing for the refit
/// uses the current backbone.
TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainHooks& hooks = {});

/// MAE and CS(level) of forest predictions against the dataset targets.
MetricsRecord evaluate(const TrainedForest& forest, const Dataset& dataset, double cs_level = kDefaultCsLevel);

/// Builds an untrained forest: random backbone and index functions, k-means
/// leaves on `standardized_targets`.
ForestModel initialize_forest(const TrainConfig& config, Eigen::Index input_dim,
                              const Eigen::Ref<const Eigen::MatrixXd>& standardized_targets);

}  // namespace drf
