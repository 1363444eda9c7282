// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "drf/leaf_learn.hpp"
#include "drf/metrics.hpp"
#include "drf/serialization.hpp"
#include "drf/synth.hpp"
#include "drf/trainer.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

using namespace drf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("[%s] %d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), f, a, b, c);
    return buf;
}

MatrixXd gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    std::normal_distribution<double> n01;
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * n01(rng);
    return m;
}

ForestModel random_forest(std::mt19937_64& rng, int depth, int M, int K, int dy, int dx,
                          const std::vector<Eigen::Index>& hidden) {
    const TreeTopology topo(depth);
    Backbone bb(dx, hidden, M, rng);
    std::uniform_real_distribution<double> var(0.3, 1.5);
    std::vector<Tree> trees;
    for (int k = 0; k < K; ++k) {
        std::vector<LeafGaussian> leaves;
        for (std::size_t l = 0; l < topo.leaf_count(); ++l) {
            const MatrixXd a = gaussian_matrix(rng, dy, dy, 0.3);
            const MatrixXd cov = a * a.transpose() + var(rng) * MatrixXd::Identity(dy, dy);
            leaves.emplace_back(VectorXd(gaussian_matrix(rng, dy, 1)), cov);
        }
        trees.push_back(Tree{IndexFunction::random(topo.split_count(), M, rng), leaves});
    }
    return ForestModel(bb, topo, trees, dy);
}

Outcome gradient_oracle() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> depth_d(1, 3), m_d(2, 8), k_d(1, 2), dy_d(1, 2), n_d(1, 16), h_d(0, 1);
    constexpr int kInstances = 60;
    double worst_theta = 0.0;
    double worst_f = 0.0;
    for (int t = 0; t < kInstances; ++t) {
        const int depth = depth_d(rng), M = m_d(rng), K = k_d(rng), dy = dy_d(rng), N = n_d(rng);
        const std::vector<Eigen::Index> hidden = h_d(rng) ? std::vector<Eigen::Index>{5} : std::vector<Eigen::Index>{};
        const ForestModel model = random_forest(rng, depth, M, K, dy, 3, hidden);
        const MatrixXd X = gaussian_matrix(rng, N, 3);
        const MatrixXd Y = gaussian_matrix(rng, N, dy);

        const VectorXd analytic = loss_and_gradient(model, X, Y).gradient.flatten();
        auto loss_theta = [&](const VectorXd& theta) {
            ForestModel probe = model;
            probe.backbone().set_parameters(theta);
            return loss_nll(probe, X, Y);
        };
        const VectorXd fd = oracle::central_difference(loss_theta, model.backbone().parameters(), 1e-6);
        worst_theta = std::max(worst_theta, oracle::max_relative_error(analytic, fd, 1e-6));

        const MatrixXd F = backbone_outputs(model.backbone(), X);
        const VectorXd analytic_f = grad_loss_wrt_features(model, F, Y).reshaped();
        auto loss_f = [&](const VectorXd& v) {
            return loss_nll_from_features(model, MatrixXd(v.reshaped(F.rows(), F.cols())), Y);
        };
        const VectorXd fd_f = oracle::five_point_difference(loss_f, F.reshaped(), 1e-4);
        worst_f = std::max(worst_f, oracle::max_relative_error(analytic_f, fd_f, 1e-6));
    }
    return {worst_theta < 1e-4 && worst_f < 1e-5,
            fmt("%.0f instances, max rel err theta %.2e (tol 1e-4), f %.2e (tol 1e-5)", kInstances, worst_theta,
                worst_f)};
}

Outcome routing_oracle() {
    std::mt19937_64 rng(202);
    double worst = 0.0;
    int sets = 0;
    for (int depth = 1; depth <= 6; ++depth) {
        const TreeTopology topo(depth);
        for (int t = 0; t < 100; ++t) {
            const int M = 1 + t % 9;
            const VectorXd f = gaussian_matrix(rng, M, 1, 3.0);
            const auto phi = IndexFunction::random(topo.split_count(), M, rng);
            std::vector<double> s(topo.split_count());
            for (std::size_t n = 0; n < s.size(); ++n) s[n] = 1.0 / (1.0 + std::exp(-f(phi[n])));
            const auto brute = oracle::path_product_probs(depth, s);
            const Routing r = route(topo, phi, f);
            for (std::size_t l = 0; l < brute.size(); ++l) {
                worst = std::max(worst, std::abs(r.leaf(l) - brute[l]));
                worst = std::max(worst, std::abs(std::exp(r.log_leaf(l)) - brute[l]));
            }
            ++sets;
        }
    }
    return {worst <= 1e-12, fmt("%.0f activation sets over depths 1-6, max abs err %.2e (tol 1e-12)", sets, worst)};
}

Outcome monotonicity() {
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> depth_d(1, 3), dy_d(1, 2);
    double worst_rise = -INFINITY;
    std::size_t floors = 0;
    for (int t = 0; t < 100; ++t) {
        const int depth = depth_d(rng), dy = dy_d(rng);
        const ForestModel model = random_forest(rng, depth, 6, 1, dy, 2, {4});
        const MatrixXd X = gaussian_matrix(rng, 60, 2);
        MatrixXd Y = gaussian_matrix(rng, 60, dy);
        Y.col(0) += 2.0 * X.col(0);
        const MatrixXd lr = log_routing_matrix(model, 0, backbone_outputs(model.backbone(), X));
        const auto res = update_leaves(lr, Y, model.tree(0).leaves, 20);
        floors += res.floor_events;
        for (std::size_t i = 1; i < res.nll.size(); ++i) worst_rise = std::max(worst_rise, res.nll[i] - res.nll[i - 1]);
    }
    return {worst_rise <= 1e-9 && floors == 0,
            fmt("100 instances x 20 iterations, max NLL increase %.2e (slack 1e-9), floor events %.0f", worst_rise,
                static_cast<double>(floors))};
}

Outcome estimator_reduction() {
    std::mt19937_64 rng(404);
    double worst = 0.0;
    for (int dy = 1; dy <= 3; ++dy) {
        MatrixXd Y = gaussian_matrix(rng, 37, dy, 2.0);
        Y.col(0).array() += 5.0;
        const MatrixXd log_routing = MatrixXd::Zero(37, 1);  // one leaf, P = 1
        std::vector<LeafGaussian> leaf{LeafGaussian(VectorXd::Zero(dy), MatrixXd::Identity(dy, dy))};
        const auto res = update_leaves(log_routing, Y, leaf, 1);
        const auto [mean, cov] = oracle::sample_moments(Y);
        worst = std::max(worst, (res.leaves[0].mean() - mean).cwiseAbs().maxCoeff());
        worst = std::max(worst, (res.leaves[0].cov() - cov).cwiseAbs().maxCoeff());
    }
    return {worst < 1e-12, fmt("single leaf, d_y 1-3, max err vs sample mean/cov %.2e (tol 1e-12)", worst)};
}

Outcome gamma_recursion() {
    std::mt19937_64 rng(505);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        const int depth = 1 + t % 5;
        const int dy = 1 + t % 2;
        const ForestModel model = random_forest(rng, depth, 7, 1, dy, 2, {});
        const VectorXd x = gaussian_matrix(rng, 2, 1);
        const VectorXd y = gaussian_matrix(rng, dy, 1);
        const auto& tree = model.tree(0);
        const Routing r = route(model.topology(), tree.index, model.backbone().forward(x));
        const Gamma g = gamma_bottom_up(model.topology(), r, tree.leaves, y);

        std::vector<double> p(r.leaf.data(), r.leaf.data() + r.leaf.size());
        std::vector<double> dens;
        for (const auto& leaf : tree.leaves) dens.push_back(oracle::gaussian_density(leaf.mean(), leaf.cov(), y));
        const auto expect = oracle::gamma_by_subtree(depth, p, dens);
        worst = std::max(worst, std::abs(g.node(0) - 1.0));
        const std::size_t splits = model.topology().split_count();
        for (std::size_t n = 0; n < model.topology().node_count(); ++n) {
            worst = std::max(worst, std::abs(g.node(n) - expect[n]));
            double leaf_sum = 0.0;
            for (int l : oracle::leaves_below(static_cast<int>(n), depth)) leaf_sum += g.node(splits + l);
            worst = std::max(worst, std::abs(g.node(n) - leaf_sum));
        }
    }
    return {worst <= 1e-9, fmt("200 instances, depths 1-5, max err %.2e (tol 1e-9)", worst)};
}

Outcome benchmark() {
    constexpr double kNoise = 0.3;
    const Dataset all = generate_synthetic({.task = "piecewise", .samples = 2500, .noise = kNoise, .seed = 7});
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < 2500; ++i) (i < 2000 ? train_idx : test_idx).push_back(i);
    const Dataset train_set = all.subset(train_idx);
    const Dataset test_set = all.subset(test_idx);

    TrainConfig c;
    c.trees = 5;
    c.depth = 4;
    c.hidden_layers = {32};
    c.output_units = 32;
    c.max_iterations = 3000;
    c.learning_rate = 0.2;
    c.seed = 1;
    const auto result = train(train_set, c);
    const double test_mae = mae(result.forest.predict(test_set.features), test_set.targets);
    const double ols = oracle::ols_mae(train_set.features, train_set.targets, test_set.features, test_set.targets);
    return {test_mae < 0.5 * ols && test_mae < 2 * kNoise,
            fmt("n_train 2000, test MAE %.4f vs OLS %.4f (need < %.4f and < 0.6)", test_mae, ols, 0.5 * ols)};
}

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
    const Dataset data = generate_synthetic({.task = "bimodal", .samples = 400, .noise = 0.2, .seed = 11});
    TrainConfig c;
    c.trees = 3;
    c.depth = 3;
    c.hidden_layers = {16};
    c.output_units = 16;
    c.max_iterations = 300;
    c.seed = 5;
    const auto dir = std::filesystem::temp_directory_path();
    const auto a_path = dir / "drf_accept_a.json";
    const auto b_path = dir / "drf_accept_b.json";
    const auto a = train(data, c);
    save_model(a_path, a.forest);
    save_model(b_path, train(data, c).forest);
    const bool identical_files = read_bytes(a_path) == read_bytes(b_path);

    const TrainedForest loaded = load_model(a_path);
    std::mt19937_64 rng(6);
    const MatrixXd probes = gaussian_matrix(rng, 1000, 1, 3.0);
    const MatrixXd in_memory = a.forest.predict(probes);
    const MatrixXd reloaded = loaded.predict(probes);
    Eigen::Index mismatches = 0;
    for (Eigen::Index i = 0; i < probes.rows(); ++i)
        if (std::memcmp(&in_memory(i, 0), &reloaded(i, 0), sizeof(double)) != 0) ++mismatches;
    return {identical_files && mismatches == 0,
            std::string("model files ") + (identical_files ? "byte-identical" : "DIFFER") + ", " +
                std::to_string(mismatches) + "/1000 probe predictions differ after reload"};
}

Outcome metric_correctness() {
    MatrixXd truth(4, 1), pred(4, 1);
    truth << 10, 10, 10, 10;
    pred << 11, 4, 13, 20;  // errors 1, 6, 3, 10
    const auto m = compute_metrics(pred, truth, 5);
    bool ok = m.mae == 5.0 && m.cs == 50.0;
    double previous = -1;
    for (double l = 0; l <= 12; l += 0.5) {
        const double cs = cumulative_score(pred, truth, l);
        ok = ok && cs >= previous;
        previous = cs;
    }
    const bool at_boundary = cumulative_score(pred, truth, 6) == 75.0 && cumulative_score(pred, truth, 1) == 25.0;
    ok = ok && at_boundary;
    return {ok, fmt("MAE %.4f, CS(5) %.4f%%, monotone in l, inclusive at |e| = l: ", m.mae, m.cs) +
                    (at_boundary ? "yes" : "no")};
}

Outcome schedule() {
    const Dataset data = generate_synthetic({.task = "piecewise", .samples = 200, .noise = 0.2, .seed = 3});
    TrainConfig c;
    c.trees = 2;
    c.depth = 2;
    c.hidden_layers = {8};
    c.output_units = 8;
    c.batches_per_leaf_update = 3;
    c.max_iterations = 30;
    c.seed = 2;

    std::vector<int> steps_between;
    int steps = 0;
    int leaf_changes_during_steps = 0;
    int theta_changes_during_refit = 0;
    int leaf_updates_that_changed = 0;
    std::vector<std::vector<VectorXd>> leaf_snapshot;
    VectorXd theta_snapshot;
    auto snapshot_leaves = [](const ForestModel& m) {
        std::vector<VectorXd> out;
        for (const auto& t : m.trees())
            for (const auto& l : t.leaves) {
                out.push_back(l.mean());
                out.push_back(l.cov().reshaped());
            }
        return std::vector<std::vector<VectorXd>>{out};
    };
    TrainHooks hooks;
    hooks.before_gradient_step = [&](const ForestModel& m) { leaf_snapshot = snapshot_leaves(m); };
    hooks.after_gradient_step = [&](const ForestModel& m) {
        ++steps;
        if (snapshot_leaves(m) != leaf_snapshot) ++leaf_changes_during_steps;
    };
    hooks.before_leaf_update = [&](const ForestModel& m) {
        steps_between.push_back(steps);
        steps = 0;
        theta_snapshot = m.backbone().parameters();
        leaf_snapshot = snapshot_leaves(m);
    };
    hooks.after_leaf_update = [&](const ForestModel& m) {
        if (m.backbone().parameters() != theta_snapshot) ++theta_changes_during_refit;
        if (snapshot_leaves(m) != leaf_snapshot) ++leaf_updates_that_changed;
    };
    train(data, c, hooks);
    bool all_three = steps_between.size() == 10;
    for (int s : steps_between) all_three = all_three && s == 3;
    const bool ok = all_three && leaf_changes_during_steps == 0 && theta_changes_during_refit == 0 &&
                    leaf_updates_that_changed == 10;
    std::ostringstream detail;
    detail << steps_between.size() << " leaf updates, each after exactly 3 steps: " << (all_three ? "yes" : "no")
           << ", leaf changes during steps " << leaf_changes_during_steps << ", backbone changes during refits "
           << theta_changes_during_refit;
    return {ok, detail.str()};
}

}  // namespace

int main() {
    setenv("DRF_THREADS", "1", 1);
    report(1, "gradient oracle", gradient_oracle);
    report(2, "routing oracle", routing_oracle);
    report(3, "leaf update monotonicity", monotonicity);
    report(4, "single-leaf estimator reduction", estimator_reduction);
    report(5, "Gamma recursion", gamma_recursion);
    report(6, "piecewise heterogeneity benchmark", benchmark);
    report(7, "determinism and serialization", determinism);
    report(8, "metric correctness", metric_correctness);
    report(9, "alternating schedule", schedule);
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
