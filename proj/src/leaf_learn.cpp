#include "drf/leaf_learn.hpp"

#include "drf/parallel.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace drf {

namespace {

constexpr double kStarvedMass = 1e-12;

std::size_t nearest_center(const Eigen::MatrixXd& centers, const Eigen::VectorXd& point,
                           double* distance_sq = nullptr) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        const double d = (centers.row(c).transpose() - point).squaredNorm();
        if (d < best_d) {  // strict: ties keep the lowest index
            best_d = d;
            best = static_cast<std::size_t>(c);
        }
    }
    if (distance_sq != nullptr) *distance_sq = best_d;
    return best;
}

Eigen::MatrixXd seed_plus_plus(const Eigen::Ref<const Eigen::MatrixXd>& points, std::size_t k,
                               std::mt19937_64& rng) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), points.cols());
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    Eigen::Index pick = first(rng);
    centers.row(0) = points.row(pick);
    taken[static_cast<std::size_t>(pick)] = true;

    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centers.row(0)).squaredNorm();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t c = 1; c < k; ++c) {
        const double total = d2.sum();
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc > target && d2(i) > 0.0) {
                    pick = i;
                    break;
                }
            }
            while (d2(pick) == 0.0 && pick > 0) --pick;
        } else {
            // Every point coincides with a center: take the lowest unused index.
            pick = 0;
            while (taken[static_cast<std::size_t>(pick)] && pick + 1 < n) ++pick;
        }
        taken[static_cast<std::size_t>(pick)] = true;
        centers.row(static_cast<Eigen::Index>(c)) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            d2(i) = std::min(d2(i), (points.row(i) - points.row(pick)).squaredNorm());
        }
    }
    return centers;
}

}  // namespace

ClusterAssignment kmeans(const Eigen::Ref<const Eigen::MatrixXd>& targets, std::size_t k,
                         std::uint64_t seed, const KMeansOptions& options) {
    const Eigen::Index n = targets.rows();
    if (k == 0) throw std::invalid_argument("k-means needs at least one cluster");
    if (static_cast<std::size_t>(n) < k) {
        throw std::invalid_argument("insufficient samples for initialization: " + std::to_string(n) +
                                    " samples for " + std::to_string(k) + " leaves");
    }
    if (!targets.allFinite()) throw std::invalid_argument("k-means targets must be finite");

    std::mt19937_64 rng(seed);
    ClusterAssignment out;
    out.centers = seed_plus_plus(targets, k, rng);
    out.cluster_of_sample.assign(static_cast<std::size_t>(n), 0);
    const auto kk = static_cast<Eigen::Index>(k);

    auto assign = [&] {
        for (Eigen::Index i = 0; i < n; ++i) {
            out.cluster_of_sample[static_cast<std::size_t>(i)] =
                nearest_center(out.centers, targets.row(i).transpose());
        }
    };

    for (int it = 0; it < options.max_iterations; ++it) {
        assign();
        out.iterations = it + 1;
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(kk, targets.cols());
        std::vector<std::size_t> counts(k, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto c = out.cluster_of_sample[static_cast<std::size_t>(i)];
            sums.row(static_cast<Eigen::Index>(c)) += targets.row(i);
            ++counts[c];
        }
        Eigen::MatrixXd next = out.centers;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                next.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) /
                                                         static_cast<double>(counts[c]);
                continue;
            }
            // Empty cluster: reseed at the point farthest from its own center.
            Eigen::Index far = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto own = static_cast<Eigen::Index>(out.cluster_of_sample[static_cast<std::size_t>(i)]);
                const double d = (targets.row(i) - out.centers.row(own)).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            next.row(static_cast<Eigen::Index>(c)) = targets.row(far);
        }
        double shift = 0.0;
        for (Eigen::Index c = 0; c < kk; ++c) {
            shift = std::max(shift, (next.row(c) - out.centers.row(c)).norm());
        }
        out.centers = std::move(next);
        if (shift < options.tolerance) break;
    }
    assign();
    return out;
}

std::vector<LeafGaussian> kmeans_init(const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                      std::size_t leaf_count, std::uint64_t seed, double cov_epsilon) {
    const ClusterAssignment clusters = kmeans(targets, leaf_count, seed);
    const Eigen::Index d = targets.cols();
    std::vector<Eigen::VectorXd> sums(leaf_count, Eigen::VectorXd::Zero(d));
    std::vector<std::size_t> counts(leaf_count, 0);
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
        const auto c = clusters.cluster_of_sample[static_cast<std::size_t>(i)];
        sums[c] += targets.row(i).transpose();
        ++counts[c];
    }
    std::vector<LeafGaussian> leaves;
    leaves.reserve(leaf_count);
    for (std::size_t c = 0; c < leaf_count; ++c) {
        if (counts[c] <= 1) {
            // Singleton (or a cluster left empty by duplicate targets).
            const Eigen::VectorXd mean = counts[c] == 1 ? sums[c]
                                                        : Eigen::VectorXd(clusters.centers.row(static_cast<Eigen::Index>(c)).transpose());
            leaves.emplace_back(mean, cov_epsilon * Eigen::MatrixXd::Identity(d, d), cov_epsilon);
            continue;
        }
        const Eigen::VectorXd mean = sums[c] / static_cast<double>(counts[c]);
        Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
        for (Eigen::Index i = 0; i < targets.rows(); ++i) {
            if (clusters.cluster_of_sample[static_cast<std::size_t>(i)] != c) continue;
            const Eigen::VectorXd diff = targets.row(i).transpose() - mean;
            scatter += diff * diff.transpose();
        }
        leaves.emplace_back(mean, scatter / static_cast<double>(counts[c]), cov_epsilon);
    }
    std::vector<std::size_t> order(leaf_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return leaves[a].mean()(0) < leaves[b].mean()(0);
    });
    std::vector<LeafGaussian> sorted;
    sorted.reserve(leaf_count);
    for (auto idx : order) sorted.push_back(leaves[idx]);
    return sorted;
}

std::vector<LeafGaussian> assign_to_leaves(const std::vector<LeafGaussian>& clusters, bool permute,
                                           std::mt19937_64& rng) {
    if (!permute) return clusters;
    std::vector<std::size_t> order(clusters.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Fisher-Yates with an explicit draw so the permutation does not depend
    // on the standard library's shuffle implementation.
    for (std::size_t i = order.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    std::vector<LeafGaussian> out;
    out.reserve(clusters.size());
    for (auto idx : order) out.push_back(clusters[idx]);
    return out;
}

ZetaWeights zeta_from_logs(const Eigen::Ref<const Eigen::VectorXd>& log_leaf,
                           const Eigen::Ref<const Eigen::VectorXd>& log_leaf_density) {
    const MixtureDensity mix = mixture_from_logs(log_leaf, log_leaf_density);
    ZetaWeights z;
    z.floored = mix.floored;
    if (mix.floored) {
        z.weight = Eigen::VectorXd::Constant(log_leaf.size(), 1.0 / static_cast<double>(log_leaf.size()));
    } else {
        z.weight = (log_leaf.array() + log_leaf_density.array() - mix.log_density).exp().matrix();
    }
    return z;
}

ZetaWeights compute_zeta(const Routing& routing, std::span<const LeafGaussian> leaves,
                         const Eigen::Ref<const Eigen::VectorXd>& y) {
    if (static_cast<Eigen::Index>(leaves.size()) != routing.log_leaf.size()) {
        throw std::invalid_argument("leaf table size does not match routing");
    }
    return zeta_from_logs(routing.log_leaf, leaf_log_densities(leaves, y));
}

namespace detail {

WeightedMoments weighted_moments(const Eigen::Ref<const Eigen::VectorXd>& weights,
                                 const Eigen::Ref<const Eigen::MatrixXd>& targets, bool scalar_path) {
    const Eigen::Index n = targets.rows();
    const Eigen::Index d = targets.cols();
    WeightedMoments m;
    for (Eigen::Index i = 0; i < n; ++i) m.total += weights(i);
    if (scalar_path) {
        if (d != 1) throw std::invalid_argument("scalar moment path needs d_y = 1");
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) sum += weights(i) * targets(i, 0);
        const double mean = sum / m.total;
        double scatter = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double diff = targets(i, 0) - mean;
            scatter += weights(i) * diff * diff;
        }
        m.mean = Eigen::VectorXd::Constant(1, mean);
        m.scatter = Eigen::MatrixXd::Constant(1, 1, scatter / m.total);
        return m;
    }
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) sum += weights(i) * targets.row(i).transpose();
    m.mean = sum / m.total;
    m.scatter = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd diff = targets.row(i).transpose() - m.mean;
        m.scatter += weights(i) * (diff * diff.transpose());
    }
    m.scatter /= m.total;
    return m;
}

}  // namespace detail

double tree_nll(const Eigen::Ref<const Eigen::MatrixXd>& log_routing,
                const Eigen::Ref<const Eigen::MatrixXd>& targets, std::span<const LeafGaussian> leaves,
                std::size_t* underflow_events) {
    const Eigen::Index n = targets.rows();
    if (n == 0) throw std::invalid_argument("batch is empty");
    if (log_routing.rows() != n || log_routing.cols() != static_cast<Eigen::Index>(leaves.size())) {
        throw std::invalid_argument("routing matrix shape does not match samples and leaves");
    }
    Eigen::VectorXd log_p(n);
    std::vector<unsigned char> floored(static_cast<std::size_t>(n), 0);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const auto row = static_cast<Eigen::Index>(i);
        const auto mix = mixture_from_logs(log_routing.row(row).transpose(),
                                           leaf_log_densities(leaves, targets.row(row).transpose()));
        log_p(row) = mix.log_density;
        floored[i] = mix.floored ? 1 : 0;
    });
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) sum += log_p(i);
    if (underflow_events != nullptr) {
        *underflow_events = static_cast<std::size_t>(std::count(floored.begin(), floored.end(), 1));
    }
    return -sum / static_cast<double>(n);
}

LeafUpdateResult update_leaves(const Eigen::Ref<const Eigen::MatrixXd>& log_routing,
                               const Eigen::Ref<const Eigen::MatrixXd>& targets,
                               std::vector<LeafGaussian> leaves, int iterations, double cov_epsilon) {
    const Eigen::Index n = targets.rows();
    const auto L = static_cast<Eigen::Index>(leaves.size());
    if (iterations < 1) throw std::invalid_argument("leaf update needs at least one iteration");
    if (n == 0) throw std::invalid_argument("leaf update needs at least one sample");
    if (leaves.empty()) throw std::invalid_argument("leaf table is empty");
    if (log_routing.rows() != n || log_routing.cols() != L) {
        throw std::invalid_argument("routing matrix shape does not match samples and leaves");
    }
    const bool scalar = targets.cols() == 1;

    LeafUpdateResult out;
    std::size_t underflow = 0;
    out.nll.push_back(tree_nll(log_routing, targets, leaves, &underflow));
    out.underflow_events += underflow;

    Eigen::MatrixXd zeta(n, L);
    for (int t = 0; t < iterations; ++t) {
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
            const auto row = static_cast<Eigen::Index>(i);
            zeta.row(row) = zeta_from_logs(log_routing.row(row).transpose(),
                                           leaf_log_densities(leaves, targets.row(row).transpose()))
                                .weight.transpose();
        });
        std::vector<LeafGaussian> next = leaves;
        for (Eigen::Index l = 0; l < L; ++l) {
            const auto moments = detail::weighted_moments(zeta.col(l), targets, scalar);
            if (!(moments.total >= kStarvedMass)) {
                ++out.starved_leaves;
                continue;
            }
            LeafGaussian updated(moments.mean, moments.scatter, cov_epsilon);
            if (updated.floored()) ++out.floor_events;
            next[static_cast<std::size_t>(l)] = std::move(updated);
        }
        leaves = std::move(next);
        out.nll.push_back(tree_nll(log_routing, targets, leaves, &underflow));
        out.underflow_events += underflow;
    }
    out.leaves = std::move(leaves);
    return out;
}

Eigen::MatrixXd log_routing_matrix(const ForestModel& model, std::size_t k,
                                   const Eigen::Ref<const Eigen::MatrixXd>& F) {
    const Tree& tree = model.tree(k);
    Eigen::MatrixXd out(F.rows(), static_cast<Eigen::Index>(model.topology().leaf_count()));
    parallel_for(static_cast<std::size_t>(F.rows()), [&](std::size_t i) {
        const auto row = static_cast<Eigen::Index>(i);
        out.row(row) = route(model.topology(), tree.index, F.row(row).transpose()).log_leaf.transpose();
    });
    return out;
}

}  // namespace drf
