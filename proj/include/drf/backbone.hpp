#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace drf {

/// One affine layer y = W x + b. Hidden layers apply a rectifier afterwards,
/// the output layer is the identity.
struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out

    Eigen::Index inputs() const { return weights.cols(); }
    Eigen::Index outputs() const { return weights.rows(); }
};

/// Gradient with the same layer structure as the backbone parameters.
struct BackboneGradient {
    std::vector<DenseLayer> layers;

    BackboneGradient& operator+=(const BackboneGradient& other);
    BackboneGradient& operator*=(double scale);
    bool all_finite() const;
    /// Flattened in parameter order (see Backbone::parameters).
    Eigen::VectorXd flatten() const;
};

/// Intermediates recorded by Backbone::forward.
struct ForwardCache {
    std::vector<Eigen::VectorXd> inputs;       // input to each layer
    std::vector<Eigen::VectorXd> pre_activations;
    Eigen::VectorXd output;
    std::uint64_t parameter_version = 0;
};

/// Feature function f: R^{d_x} -> R^M, a linear map or a ReLU MLP.
class Backbone {
public:
    Backbone() = default;

    /// `hidden` lists hidden-layer widths; empty gives a linear backbone.
    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
    Backbone(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden,
             Eigen::Index output_units, std::mt19937_64& rng);

    /// Wraps explicit layers; shapes must chain.
    explicit Backbone(std::vector<DenseLayer> layers);

    Eigen::Index input_dim() const;
    Eigen::Index output_units() const;
    std::vector<Eigen::Index> hidden_widths() const;
    const std::vector<DenseLayer>& layers() const { return layers_; }

    Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& x, ForwardCache& cache) const;

    /// Reverse-mode pass for one sample. Throws std::logic_error if the cache
    /// was produced before the last parameter change.
    BackboneGradient backward(const ForwardCache& cache,
                              const Eigen::Ref<const Eigen::VectorXd>& grad_output,
                              Eigen::VectorXd* grad_input = nullptr) const;

    BackboneGradient zero_gradient() const;

    /// Flat parameter vector: per layer, row-major weights then bias.
    Eigen::Index parameter_count() const;
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::Ref<const Eigen::VectorXd>& theta);

    /// theta <- theta - learning_rate * grad.
    void apply_update(const BackboneGradient& grad, double learning_rate);

    std::uint64_t parameter_version() const { return version_; }

private:
    void validate() const;

    std::vector<DenseLayer> layers_;
    std::uint64_t version_ = 1;
};

/// Step-decay learning rate: lr(t) = initial * decay^floor(t / interval).
struct SgdSchedule {
    double initial_rate = 0.05;
    double decay = 0.5;
    std::int64_t decay_interval = 10000;
    std::int64_t iteration = 0;

    double rate_at(std::int64_t t) const;
    double current_rate() const { return rate_at(iteration); }
    void validate() const;
};

/// Outcome of one SGD step.
enum class StepStatus { Applied, SkippedNonFinite };

/// Applies one SGD update and advances the schedule. A gradient with any
/// non-finite entry leaves the parameters untouched but still advances the
/// iteration counter.
StepStatus sgd_step(Backbone& backbone, const BackboneGradient& grad, SgdSchedule& schedule);

}  // namespace drf
