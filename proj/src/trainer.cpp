#include "drf/trainer.hpp"

#include "drf/leaf_learn.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

namespace drf {

namespace {

// Independent streams derived from the configured seed.
struct SeedStreams {
    std::uint64_t backbone;
    std::uint64_t index;
    std::uint64_t kmeans;
    std::uint64_t permutation;
    std::uint64_t batches;

    explicit SeedStreams(std::uint64_t seed) {
        std::mt19937_64 master(seed);
        backbone = master();
        index = master();
        kmeans = master();
        permutation = master();
        batches = master();
    }
};

void require(bool ok, const char* field, const std::string& what) {
    if (!ok) throw std::invalid_argument(std::string(field) + ": " + what);
}

void refit_leaves(ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                  const Eigen::Ref<const Eigen::MatrixXd>& Y, const TrainConfig& config,
                  LeafUpdateRecord& record) {
    const Eigen::MatrixXd F = backbone_outputs(model.backbone(), X);
    record.window_samples = static_cast<std::size_t>(X.rows());
    for (std::size_t k = 0; k < model.tree_count(); ++k) {
        const Eigen::MatrixXd log_routing = log_routing_matrix(model, k, F);
        auto result = update_leaves(log_routing, Y, model.tree(k).leaves, config.leaf_update_iterations,
                                    config.cov_epsilon);
        record.nll_before.push_back(result.nll.front());
        record.nll_after.push_back(result.nll.back());
        record.floor_events += result.floor_events;
        record.starved_leaves += result.starved_leaves;
        model.set_leaves(k, std::move(result.leaves));
    }
}

}  // namespace

void TrainConfig::validate() const {
    require(trees >= 1, "trees", "must be at least 1");
    require(depth >= 1 && depth <= 20, "depth", "must be in [1, 20]");
    require(output_units >= 1, "output_units", "must be at least 1");
    for (auto w : hidden_layers) require(w >= 1, "hidden_layers", "widths must be positive");
    require(leaf_update_iterations >= 1, "leaf_update_iterations", "must be at least 1");
    require(batches_per_leaf_update >= 1, "batches_per_leaf_update", "must be at least 1");
    require(batch_size >= 1, "batch_size", "must be at least 1");
    require(max_iterations >= 1, "max_iterations", "must be at least 1");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate", "must be positive");
    require(lr_decay > 0.0 && std::isfinite(lr_decay), "lr_decay", "must be positive");
    require(lr_decay_interval >= 1, "lr_decay_interval", "must be at least 1");
    require(cov_epsilon > 0.0 && std::isfinite(cov_epsilon), "cov_epsilon", "must be positive");
    require(early_stop_tolerance >= 0.0, "early_stop_tolerance", "must be non-negative");
    require(early_stop_patience >= 1, "early_stop_patience", "must be at least 1");
}

void TrainConfig::validate(Eigen::Index samples) const {
    validate();
    require(static_cast<Eigen::Index>(batch_size) <= samples, "batch_size",
            "exceeds the number of training samples (" + std::to_string(samples) + ")");
    const auto leaves = std::size_t{1} << depth;
    require(static_cast<std::size_t>(samples) >= leaves, "depth",
            "insufficient samples for initialization: " + std::to_string(samples) + " samples for " +
                std::to_string(leaves) + " leaves");
}

Eigen::MatrixXd TrainedForest::predict(const Eigen::Ref<const Eigen::MatrixXd>& features) const {
    return target_stats.inverse(forest_predict_batch(model, feature_stats.transform(features)));
}

ForestModel initialize_forest(const TrainConfig& config, Eigen::Index input_dim,
                              const Eigen::Ref<const Eigen::MatrixXd>& standardized_targets) {
    config.validate();
    const SeedStreams seeds(config.seed);
    std::mt19937_64 backbone_rng(seeds.backbone);
    Backbone backbone(input_dim, config.hidden_layers, config.output_units, backbone_rng);
    const TreeTopology topology(config.depth);

    const auto clusters =
        kmeans_init(standardized_targets, topology.leaf_count(), seeds.kmeans, config.cov_epsilon);
    std::mt19937_64 index_rng(seeds.index);
    std::mt19937_64 perm_rng(seeds.permutation);
    std::vector<Tree> trees;
    for (std::size_t k = 0; k < config.trees; ++k) {
        Tree tree;
        tree.index = IndexFunction::random(topology.split_count(),
                                           static_cast<std::size_t>(config.output_units), index_rng);
        tree.leaves = assign_to_leaves(clusters, config.leaf_init_permute, perm_rng);
        trees.push_back(std::move(tree));
    }
    return ForestModel(std::move(backbone), topology, std::move(trees), standardized_targets.cols());
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainHooks& hooks) {
    const auto started = std::chrono::steady_clock::now();
    if (dataset.size() == 0) throw std::invalid_argument("training set is empty");
    if (!dataset.has_targets()) throw std::invalid_argument("training set has no target columns");
    config.validate(dataset.size());

    const StandardizedDataset standardized = standardize(dataset);
    const Eigen::MatrixXd& X = standardized.data.features;
    const Eigen::MatrixXd& Y = standardized.data.targets;

    TrainResult result;
    TrainReport& report = result.report;
    ForestModel model = initialize_forest(config, X.cols(), Y);

    SgdSchedule schedule{config.learning_rate, config.lr_decay, config.lr_decay_interval, 0};
    std::mt19937_64 batch_rng(SeedStreams(config.seed).batches);
    std::uniform_int_distribution<Eigen::Index> pick(0, X.rows() - 1);

    const auto bs = static_cast<Eigen::Index>(config.batch_size);
    Eigen::MatrixXd Xb(bs, X.cols());
    Eigen::MatrixXd Yb(bs, Y.cols());
    int rising_run = 0;
    int flat_run = 0;

    while (report.gradient_steps < config.max_iterations) {
        std::vector<std::size_t> window;
        double window_loss = 0.0;
        std::size_t batches = 0;
        while (batches < config.batches_per_leaf_update && report.gradient_steps < config.max_iterations) {
            for (Eigen::Index r = 0; r < bs; ++r) {
                const Eigen::Index i = pick(batch_rng);
                Xb.row(r) = X.row(i);
                Yb.row(r) = Y.row(i);
                window.push_back(static_cast<std::size_t>(i));
            }
            if (hooks.before_gradient_step) hooks.before_gradient_step(model);
            const LossAndGradient lg = loss_and_gradient(model, Xb, Yb);
            if (sgd_step(model.backbone(), lg.gradient, schedule) == StepStatus::SkippedNonFinite) {
                ++report.skipped_steps;
            }
            if (hooks.after_gradient_step) hooks.after_gradient_step(model);
            report.underflow_events += lg.diagnostics.underflow_events;
            window_loss += lg.loss;
            ++batches;
            ++report.gradient_steps;
        }

        Eigen::MatrixXd Xw(static_cast<Eigen::Index>(window.size()), X.cols());
        Eigen::MatrixXd Yw(static_cast<Eigen::Index>(window.size()), Y.cols());
        for (std::size_t r = 0; r < window.size(); ++r) {
            Xw.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(window[r]));
            Yw.row(static_cast<Eigen::Index>(r)) = Y.row(static_cast<Eigen::Index>(window[r]));
        }
        if (hooks.before_leaf_update) hooks.before_leaf_update(model);
        LeafUpdateRecord record;
        record.after_step = report.gradient_steps;
        refit_leaves(model, Xw, Yw, config, record);
        if (hooks.after_leaf_update) hooks.after_leaf_update(model);
        for (std::size_t k = 0; k < record.nll_after.size(); ++k) {
            if (record.nll_after[k] > record.nll_before[k] + 1e-9 && record.floor_events == 0) {
                report.warnings.push_back("leaf update after step " + std::to_string(record.after_step) +
                                          " raised the NLL of tree " + std::to_string(k));
            }
        }
        report.floor_events += record.floor_events;
        report.starved_leaves += record.starved_leaves;
        report.leaf_updates.push_back(std::move(record));

        const double mean_loss = window_loss / static_cast<double>(batches);
        if (!report.window_losses.empty()) {
            const double previous = report.window_losses.back();
            rising_run = mean_loss >= previous ? rising_run + 1 : 0;
            flat_run = previous - mean_loss < config.early_stop_tolerance ? flat_run + 1 : 0;
            if (rising_run == 5) {
                report.warnings.push_back("window loss has not decreased for 5 consecutive windows (step " +
                                          std::to_string(report.gradient_steps) + ")");
            }
        }
        report.window_losses.push_back(mean_loss);
        if (config.early_stop && flat_run >= config.early_stop_patience) {
            report.stopped_early = true;
            break;
        }
    }

    if (config.final_leaf_refit) {
        LeafUpdateRecord record;
        record.after_step = report.gradient_steps;
        refit_leaves(model, X, Y, config, record);
        report.floor_events += record.floor_events;
        report.starved_leaves += record.starved_leaves;
        report.leaf_updates.push_back(std::move(record));
    }

    for (double loss : report.window_losses) {
        if (!std::isfinite(loss)) throw std::runtime_error("training diverged: non-finite window loss");
    }

    LossDiagnostics diag;
    report.final_loss = loss_nll(model, X, Y, &diag);
    result.forest = TrainedForest{std::move(model), standardized.feature_stats, standardized.target_stats,
                                    config.cov_epsilon};
    report.train_metrics = evaluate(result.forest, dataset);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

MetricsRecord evaluate(const TrainedForest& forest, const Dataset& dataset, double cs_level) {
    if (dataset.size() == 0) throw std::invalid_argument("evaluation set is empty");
    if (dataset.feature_dim() != forest.model.input_dim()) {
        throw std::invalid_argument("evaluation set has " + std::to_string(dataset.feature_dim()) +
                                    " features, model expects " + std::to_string(forest.model.input_dim()));
    }
    if (dataset.target_dim() != forest.model.target_dim()) {
        throw std::invalid_argument("evaluation set target dimension does not match model");
    }
    return compute_metrics(forest.predict(dataset.features), dataset.targets, cs_level);
}

}  // namespace drf
