#include "drf/backbone.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace drf {

BackboneGradient& BackboneGradient::operator+=(const BackboneGradient& other) {
    if (other.layers.size() != layers.size()) {
        throw std::invalid_argument("gradient layer count mismatch");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weights += other.layers[l].weights;
        layers[l].bias += other.layers[l].bias;
    }
    return *this;
}

BackboneGradient& BackboneGradient::operator*=(double scale) {
    for (auto& layer : layers) {
        layer.weights *= scale;
        layer.bias *= scale;
    }
    return *this;
}

bool BackboneGradient::all_finite() const {
    for (const auto& layer : layers) {
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
    }
    return true;
}

Eigen::VectorXd BackboneGradient::flatten() const {
    Eigen::Index count = 0;
    for (const auto& layer : layers) count += layer.weights.size() + layer.bias.size();
    Eigen::VectorXd flat(count);
    Eigen::Index at = 0;
    for (const auto& layer : layers) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) flat(at++) = layer.weights(r, c);
        }
        flat.segment(at, layer.bias.size()) = layer.bias;
        at += layer.bias.size();
    }
    return flat;
}

Backbone::Backbone(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden,
                   Eigen::Index output_units, std::mt19937_64& rng) {
    if (input_dim <= 0 || output_units <= 0) {
        throw std::invalid_argument("backbone input and output widths must be positive");
    }
    Eigen::Index fan_in = input_dim;
    auto add_layer = [&](Eigen::Index width) {
        if (width <= 0) throw std::invalid_argument("hidden layer width must be positive");
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> draw(-bound, bound);
        DenseLayer layer{Eigen::MatrixXd(width, fan_in), Eigen::VectorXd::Zero(width)};
        for (Eigen::Index r = 0; r < width; ++r) {
            for (Eigen::Index c = 0; c < fan_in; ++c) layer.weights(r, c) = draw(rng);
        }
        layers_.push_back(std::move(layer));
        fan_in = width;
    };
    for (auto width : hidden) add_layer(width);
    add_layer(output_units);
}

Backbone::Backbone(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

void Backbone::validate() const {
    if (layers_.empty()) throw std::invalid_argument("backbone needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.weights.rows() == 0 || layer.weights.cols() == 0) {
            throw std::invalid_argument("backbone layer " + std::to_string(l) + " is empty");
        }
        if (layer.bias.size() != layer.weights.rows()) {
            throw std::invalid_argument("backbone layer " + std::to_string(l) +
                                        " bias length does not match weights");
        }
        if (l > 0 && layer.weights.cols() != layers_[l - 1].weights.rows()) {
            throw std::invalid_argument("backbone layer " + std::to_string(l) +
                                        " input width does not match previous layer");
        }
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
            throw std::invalid_argument("backbone layer " + std::to_string(l) +
                                        " has non-finite parameters");
        }
    }
}

Eigen::Index Backbone::input_dim() const { return layers_.front().inputs(); }
Eigen::Index Backbone::output_units() const { return layers_.back().outputs(); }

std::vector<Eigen::Index> Backbone::hidden_widths() const {
    std::vector<Eigen::Index> widths;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) widths.push_back(layers_[l].outputs());
    return widths;
}

Eigen::VectorXd Backbone::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != input_dim()) {
        throw std::invalid_argument("backbone input has " + std::to_string(x.size()) +
                                    " features, expected " + std::to_string(input_dim()));
    }
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Eigen::VectorXd z = layers_[l].weights * h + layers_[l].bias;
        if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
        h = std::move(z);
    }
    return h;
}

Eigen::VectorXd Backbone::forward(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  ForwardCache& cache) const {
    if (x.size() != input_dim()) {
        throw std::invalid_argument("backbone input has " + std::to_string(x.size()) +
                                    " features, expected " + std::to_string(input_dim()));
    }
    cache.inputs.resize(layers_.size());
    cache.pre_activations.resize(layers_.size());
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        cache.inputs[l] = h;
        cache.pre_activations[l] = layers_[l].weights * h + layers_[l].bias;
        h = (l + 1 < layers_.size()) ? cache.pre_activations[l].cwiseMax(0.0).eval()
                                     : cache.pre_activations[l];
    }
    cache.output = h;
    cache.parameter_version = version_;
    return h;
}

BackboneGradient Backbone::backward(const ForwardCache& cache,
                                    const Eigen::Ref<const Eigen::VectorXd>& grad_output,
                                    Eigen::VectorXd* grad_input) const {
    if (cache.parameter_version != version_ || cache.inputs.size() != layers_.size()) {
        throw std::logic_error("stale forward cache: parameters changed since forward()");
    }
    if (grad_output.size() != output_units()) {
        throw std::invalid_argument("output gradient has wrong length");
    }
    BackboneGradient grad;
    grad.layers.resize(layers_.size());
    Eigen::VectorXd delta = grad_output;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        if (l + 1 < layers_.size()) {
            // ReLU derivative, taken as 0 at the kink.
            delta = (cache.pre_activations[l].array() > 0.0).select(delta, 0.0);
        }
        grad.layers[l].weights = delta * cache.inputs[l].transpose();
        grad.layers[l].bias = delta;
        if (l > 0 || grad_input != nullptr) {
            delta = layers_[l].weights.transpose() * delta;
        }
    }
    if (grad_input != nullptr) *grad_input = delta;
    return grad;
}

BackboneGradient Backbone::zero_gradient() const {
    BackboneGradient grad;
    for (const auto& layer : layers_) {
        grad.layers.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                               Eigen::VectorXd::Zero(layer.bias.size())});
    }
    return grad;
}

Eigen::Index Backbone::parameter_count() const {
    Eigen::Index count = 0;
    for (const auto& layer : layers_) count += layer.weights.size() + layer.bias.size();
    return count;
}

Eigen::VectorXd Backbone::parameters() const {
    BackboneGradient view{layers_};
    return view.flatten();
}

void Backbone::set_parameters(const Eigen::Ref<const Eigen::VectorXd>& theta) {
    if (theta.size() != parameter_count()) {
        throw std::invalid_argument("parameter vector has wrong length");
    }
    Eigen::Index at = 0;
    for (auto& layer : layers_) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = theta(at++);
        }
        layer.bias = theta.segment(at, layer.bias.size());
        at += layer.bias.size();
    }
    ++version_;
}

void Backbone::apply_update(const BackboneGradient& grad, double learning_rate) {
    if (grad.layers.size() != layers_.size()) {
        throw std::invalid_argument("gradient layer count mismatch");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        layers_[l].weights -= learning_rate * grad.layers[l].weights;
        layers_[l].bias -= learning_rate * grad.layers[l].bias;
    }
    ++version_;
}

double SgdSchedule::rate_at(std::int64_t t) const {
    const auto drops = static_cast<double>(t / decay_interval);
    return initial_rate * std::pow(decay, drops);
}

void SgdSchedule::validate() const {
    if (!(initial_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(decay > 0.0)) throw std::invalid_argument("learning-rate decay must be positive");
    if (decay_interval <= 0) throw std::invalid_argument("decay interval must be positive");
}

StepStatus sgd_step(Backbone& backbone, const BackboneGradient& grad, SgdSchedule& schedule) {
    const double rate = schedule.current_rate();
    ++schedule.iteration;
    if (!grad.all_finite()) return StepStatus::SkippedNonFinite;
    backbone.apply_update(grad, rate);
    return StepStatus::Applied;
}

}  // namespace drf
