#include "drf/forest.hpp"

#include "drf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace drf {

namespace {

double log_sigmoid(double a) {
    // log(1 / (1 + e^-a)) without overflow for either sign.
    return a >= 0.0 ? -std::log1p(std::exp(-a)) : a - std::log1p(std::exp(a));
}

void top_down(const TreeTopology& topology, Routing& r) {
    const std::size_t nodes = topology.node_count();
    Eigen::VectorXd prob(nodes);
    Eigen::VectorXd log_prob(nodes);
    prob(0) = 1.0;
    log_prob(0) = 0.0;
    for (std::size_t n = 0; n < topology.split_count(); ++n) {
        const auto l = TreeTopology::left(n);
        const auto rt = TreeTopology::right(n);
        const auto ni = static_cast<Eigen::Index>(n);
        prob(l) = prob(ni) * r.split(ni);
        prob(rt) = prob(ni) * r.split_right(ni);
        log_prob(l) = log_prob(ni) + log_sigmoid(r.activation(ni));
        log_prob(rt) = log_prob(ni) + log_sigmoid(-r.activation(ni));
    }
    const auto first = static_cast<Eigen::Index>(topology.split_count());
    const auto leaves = static_cast<Eigen::Index>(topology.leaf_count());
    r.leaf = prob.segment(first, leaves);
    r.log_leaf = log_prob.segment(first, leaves);
}

struct BatchEvaluation {
    double loss = 0.0;
    Eigen::MatrixXd grad;  // N x M, empty unless requested
    LossDiagnostics diagnostics;
};

BatchEvaluation evaluate_batch(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& F,
                               const Eigen::Ref<const Eigen::MatrixXd>& Y, bool want_grad) {
    const Eigen::Index n_samples = F.rows();
    if (n_samples == 0) throw std::invalid_argument("batch is empty");
    if (Y.rows() != n_samples) throw std::invalid_argument("feature and target row counts differ");
    if (F.cols() != model.output_units()) {
        throw std::invalid_argument("backbone output width does not match model");
    }
    if (Y.cols() != model.target_dim()) {
        throw std::invalid_argument("target dimension does not match model");
    }
    const auto& topology = model.topology();
    const auto trees = model.trees();
    const std::size_t K = trees.size();
    const double N = static_cast<double>(n_samples);
    const double scale = 1.0 / (N * static_cast<double>(K));

    Eigen::MatrixXd log_p(n_samples, static_cast<Eigen::Index>(K));
    std::vector<unsigned char> floored(static_cast<std::size_t>(n_samples) * K, 0);
    BatchEvaluation out;
    if (want_grad) out.grad = Eigen::MatrixXd::Zero(n_samples, F.cols());

    parallel_for(static_cast<std::size_t>(n_samples), [&](std::size_t i) {
        const auto row = static_cast<Eigen::Index>(i);
        const Eigen::VectorXd f = F.row(row).transpose();
        const Eigen::VectorXd y = Y.row(row).transpose();
        for (std::size_t k = 0; k < K; ++k) {
            const Tree& tree = trees[k];
            const Routing r = route(topology, tree.index, f);
            const Eigen::VectorXd log_dens = leaf_log_densities(tree.leaves, y);
            const MixtureDensity mix = mixture_from_logs(r.log_leaf, log_dens);
            log_p(row, static_cast<Eigen::Index>(k)) = mix.log_density;
            floored[i * K + k] = mix.floored ? 1 : 0;
            if (!want_grad || mix.floored) continue;
            const Gamma gamma = gamma_from_logs(topology, r.log_leaf, log_dens);
            for (std::size_t n = 0; n < topology.split_count(); ++n) {
                const std::size_t unit = tree.index[n];
                const auto ni = static_cast<Eigen::Index>(n);
                if (std::abs(f(static_cast<Eigen::Index>(unit))) > kActivationClip) continue;
                const double g_left = gamma.node(static_cast<Eigen::Index>(TreeTopology::left(n)));
                const double g_right = gamma.node(static_cast<Eigen::Index>(TreeTopology::right(n)));
                out.grad(row, static_cast<Eigen::Index>(unit)) +=
                    scale * (r.split(ni) * g_right - r.split_right(ni) * g_left);
            }
        }
    });

    out.diagnostics.tree_losses.assign(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n_samples; ++i) sum += log_p(i, static_cast<Eigen::Index>(k));
        out.diagnostics.tree_losses[k] = -sum / N;
    }
    for (auto f : floored) out.diagnostics.underflow_events += f;
    double total = 0.0;
    for (double l : out.diagnostics.tree_losses) total += l;
    out.loss = total / static_cast<double>(K);
    return out;
}

}  // namespace

Routing route(const TreeTopology& topology, const IndexFunction& index,
              const Eigen::Ref<const Eigen::VectorXd>& f_out) {
    if (index.size() != topology.split_count()) {
        throw std::invalid_argument("index function size does not match tree topology");
    }
    if (static_cast<std::size_t>(f_out.size()) != index.output_units()) {
        throw std::invalid_argument("backbone output width does not match index function");
    }
    if (!f_out.allFinite()) throw std::invalid_argument("backbone output is not finite");
    const auto splits = static_cast<Eigen::Index>(topology.split_count());
    Routing r;
    r.activation.resize(splits);
    r.split.resize(splits);
    r.split_right.resize(splits);
    for (Eigen::Index n = 0; n < splits; ++n) {
        const double a = std::clamp(f_out(static_cast<Eigen::Index>(index[static_cast<std::size_t>(n)])),
                                    -kActivationClip, kActivationClip);
        r.activation(n) = a;
        r.split(n) = 1.0 / (1.0 + std::exp(-a));
        r.split_right(n) = 1.0 / (1.0 + std::exp(a));
    }
    top_down(topology, r);
    return r;
}

Routing route_from_splits(const TreeTopology& topology, const Eigen::Ref<const Eigen::VectorXd>& split) {
    if (static_cast<std::size_t>(split.size()) != topology.split_count()) {
        throw std::invalid_argument("split vector size does not match tree topology");
    }
    Routing r;
    r.split = split;
    r.split_right = (1.0 - split.array()).matrix();
    // logit, so that log-domain probabilities stay consistent with split.
    r.activation = (split.array().log() - r.split_right.array().log()).matrix();
    top_down(topology, r);
    return r;
}

MixtureDensity mixture_from_logs(const Eigen::Ref<const Eigen::VectorXd>& log_leaf,
                                 const Eigen::Ref<const Eigen::VectorXd>& log_leaf_density) {
    if (log_leaf.size() != log_leaf_density.size()) {
        throw std::invalid_argument("routing and leaf table sizes differ");
    }
    const Eigen::VectorXd terms = log_leaf + log_leaf_density;
    const double peak = terms.maxCoeff();
    MixtureDensity out;
    double lse = -std::numeric_limits<double>::infinity();
    if (std::isfinite(peak)) lse = peak + std::log((terms.array() - peak).exp().sum());
    if (!(lse >= kLogDensityFloor)) {
        out.floored = true;
        lse = kLogDensityFloor;
    }
    out.log_density = lse;
    out.density = std::exp(lse);
    return out;
}

Eigen::VectorXd leaf_log_densities(std::span<const LeafGaussian> leaves,
                                   const Eigen::Ref<const Eigen::VectorXd>& y) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(leaves.size()));
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        out(static_cast<Eigen::Index>(l)) = leaves[l].log_density(y);
    }
    return out;
}

MixtureDensity tree_conditional_density(const Routing& routing, std::span<const LeafGaussian> leaves,
                                        const Eigen::Ref<const Eigen::VectorXd>& y) {
    if (static_cast<Eigen::Index>(leaves.size()) != routing.leaf.size()) {
        throw std::invalid_argument("leaf table size does not match routing");
    }
    return mixture_from_logs(routing.log_leaf, leaf_log_densities(leaves, y));
}

Eigen::VectorXd tree_predict(const Routing& routing, std::span<const LeafGaussian> leaves) {
    if (static_cast<Eigen::Index>(leaves.size()) != routing.leaf.size() || leaves.empty()) {
        throw std::invalid_argument("leaf table size does not match routing");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(leaves.front().dim());
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        out += routing.leaf(static_cast<Eigen::Index>(l)) * leaves[l].mean();
    }
    return out;
}

Gamma gamma_from_logs(const TreeTopology& topology, const Eigen::Ref<const Eigen::VectorXd>& log_leaf,
                      const Eigen::Ref<const Eigen::VectorXd>& log_leaf_density) {
    const auto leaves = static_cast<Eigen::Index>(topology.leaf_count());
    if (log_leaf.size() != leaves || log_leaf_density.size() != leaves) {
        throw std::invalid_argument("leaf vectors do not match tree topology");
    }
    const MixtureDensity mix = mixture_from_logs(log_leaf, log_leaf_density);
    Gamma g;
    g.floored = mix.floored;
    g.node.resize(static_cast<Eigen::Index>(topology.node_count()));
    const auto first = static_cast<Eigen::Index>(topology.split_count());
    if (mix.floored) {
        g.node.segment(first, leaves).setConstant(1.0 / static_cast<double>(leaves));
    } else {
        g.node.segment(first, leaves) =
            (log_leaf.array() + log_leaf_density.array() - mix.log_density).exp().matrix();
    }
    for (std::size_t n = topology.split_count(); n-- > 0;) {
        g.node(static_cast<Eigen::Index>(n)) =
            g.node(static_cast<Eigen::Index>(TreeTopology::left(n))) +
            g.node(static_cast<Eigen::Index>(TreeTopology::right(n)));
    }
    return g;
}

Gamma gamma_bottom_up(const TreeTopology& topology, const Routing& routing,
                      std::span<const LeafGaussian> leaves, const Eigen::Ref<const Eigen::VectorXd>& y) {
    if (leaves.size() != topology.leaf_count()) {
        throw std::invalid_argument("leaf table size does not match tree topology");
    }
    return gamma_from_logs(topology, routing.log_leaf, leaf_log_densities(leaves, y));
}

ForestModel::ForestModel(Backbone backbone, TreeTopology topology, std::vector<Tree> trees,
                         Eigen::Index target_dim)
    : backbone_(std::move(backbone)), topology_(topology), trees_(std::move(trees)),
      target_dim_(target_dim) {
    if (trees_.empty()) throw std::invalid_argument("forest needs at least one tree");
    if (target_dim_ <= 0) throw std::invalid_argument("target dimension must be positive");
    for (std::size_t k = 0; k < trees_.size(); ++k) {
        const auto& tree = trees_[k];
        if (tree.index.size() != topology_.split_count()) {
            throw std::invalid_argument("tree " + std::to_string(k) +
                                        ": index function size does not match depth");
        }
        if (static_cast<Eigen::Index>(tree.index.output_units()) != backbone_.output_units()) {
            throw std::invalid_argument("tree " + std::to_string(k) +
                                        ": index function unit range does not match backbone");
        }
        validate_leaves(tree.leaves);
    }
}

void ForestModel::validate_leaves(const std::vector<LeafGaussian>& leaves) const {
    if (leaves.size() != topology_.leaf_count()) {
        throw std::invalid_argument("leaf table has " + std::to_string(leaves.size()) +
                                    " entries, expected " + std::to_string(topology_.leaf_count()));
    }
    for (const auto& leaf : leaves) {
        if (leaf.dim() != target_dim_) throw std::invalid_argument("leaf dimension mismatch");
    }
}

void ForestModel::set_leaves(std::size_t k, std::vector<LeafGaussian> leaves) {
    validate_leaves(leaves);
    trees_.at(k).leaves = std::move(leaves);
}

Eigen::VectorXd forest_predict_from_features(const ForestModel& model,
                                             const Eigen::Ref<const Eigen::VectorXd>& f_out) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.target_dim());
    for (const auto& tree : model.trees()) {
        sum += tree_predict(route(model.topology(), tree.index, f_out), tree.leaves);
    }
    return sum / static_cast<double>(model.tree_count());
}

Eigen::VectorXd forest_predict(const ForestModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != model.input_dim()) {
        throw std::invalid_argument("input has " + std::to_string(x.size()) + " features, model expects " +
                                    std::to_string(model.input_dim()));
    }
    return forest_predict_from_features(model, model.backbone().forward(x));
}

Eigen::MatrixXd forest_predict_batch(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X) {
    if (X.cols() != model.input_dim()) {
        throw std::invalid_argument("input has " + std::to_string(X.cols()) + " features, model expects " +
                                    std::to_string(model.input_dim()));
    }
    Eigen::MatrixXd out(X.rows(), model.target_dim());
    parallel_for(static_cast<std::size_t>(X.rows()), [&](std::size_t i) {
        const auto row = static_cast<Eigen::Index>(i);
        const Eigen::VectorXd x = X.row(row).transpose();
        out.row(row) = forest_predict(model, x).transpose();
    });
    return out;
}

Eigen::MatrixXd backbone_outputs(const Backbone& backbone, const Eigen::Ref<const Eigen::MatrixXd>& X) {
    if (X.cols() != backbone.input_dim()) {
        throw std::invalid_argument("input has " + std::to_string(X.cols()) + " features, backbone expects " +
                                    std::to_string(backbone.input_dim()));
    }
    Eigen::MatrixXd F(X.rows(), backbone.output_units());
    parallel_for(static_cast<std::size_t>(X.rows()), [&](std::size_t i) {
        const auto row = static_cast<Eigen::Index>(i);
        F.row(row) = backbone.forward(X.row(row).transpose()).transpose();
    });
    return F;
}

double loss_nll_from_features(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& F,
                              const Eigen::Ref<const Eigen::MatrixXd>& Y, LossDiagnostics* diagnostics) {
    auto eval = evaluate_batch(model, F, Y, false);
    if (diagnostics != nullptr) *diagnostics = std::move(eval.diagnostics);
    return eval.loss;
}

double loss_nll(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                const Eigen::Ref<const Eigen::MatrixXd>& Y, LossDiagnostics* diagnostics) {
    return loss_nll_from_features(model, backbone_outputs(model.backbone(), X), Y, diagnostics);
}

Eigen::MatrixXd grad_loss_wrt_features(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& F,
                                       const Eigen::Ref<const Eigen::MatrixXd>& Y,
                                       LossDiagnostics* diagnostics) {
    auto eval = evaluate_batch(model, F, Y, true);
    if (diagnostics != nullptr) *diagnostics = std::move(eval.diagnostics);
    return std::move(eval.grad);
}

Eigen::MatrixXd grad_loss_wrt_f(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                const Eigen::Ref<const Eigen::MatrixXd>& Y, LossDiagnostics* diagnostics) {
    return grad_loss_wrt_features(model, backbone_outputs(model.backbone(), X), Y, diagnostics);
}

LossAndGradient loss_and_gradient(const ForestModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  const Eigen::Ref<const Eigen::MatrixXd>& Y) {
    const Backbone& backbone = model.backbone();
    if (X.cols() != backbone.input_dim()) {
        throw std::invalid_argument("input has " + std::to_string(X.cols()) + " features, model expects " +
                                    std::to_string(backbone.input_dim()));
    }
    const auto n = static_cast<std::size_t>(X.rows());
    std::vector<ForwardCache> caches(n);
    Eigen::MatrixXd F(X.rows(), backbone.output_units());
    parallel_for(n, [&](std::size_t i) {
        const auto row = static_cast<Eigen::Index>(i);
        F.row(row) = backbone.forward(X.row(row).transpose(), caches[i]).transpose();
    });
    auto eval = evaluate_batch(model, F, Y, true);

    std::vector<BackboneGradient> per_sample(n);
    parallel_for(n, [&](std::size_t i) {
        per_sample[i] = backbone.backward(caches[i], eval.grad.row(static_cast<Eigen::Index>(i)).transpose());
    });
    LossAndGradient out{eval.loss, backbone.zero_gradient(), std::move(eval.diagnostics)};
    for (const auto& g : per_sample) out.gradient += g;
    return out;
}

}  // namespace drf
