#include "drf/backbone.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace drf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST(Backbone, ZeroMap) {
    const Backbone bb({DenseLayer{MatrixXd::Zero(3, 2), VectorXd::Zero(3)}});
    EXPECT_EQ(bb.forward(VectorXd::Random(2)), VectorXd::Zero(3));
}

TEST(Backbone, IdentityMap) {
    const Backbone bb({DenseLayer{MatrixXd::Identity(3, 3), VectorXd::Zero(3)}});
    const VectorXd x = VectorXd::Random(3);
    EXPECT_EQ(bb.forward(x), x);
}

TEST(Backbone, HandComputedMlp) {
    MatrixXd w1(2, 2);
    w1 << 1, -1, 2, 1;
    VectorXd b1(2);
    b1 << 0, -1;
    MatrixXd w2(1, 2);
    w2 << 3, -2;
    VectorXd b2(1);
    b2 << 0.5;
    const Backbone bb({DenseLayer{w1, b1}, DenseLayer{w2, b2}});
    VectorXd x(2);
    x << 1, 2;
    // hidden pre = (-1, 3) -> relu (0, 3); out = -6 + 0.5
    EXPECT_DOUBLE_EQ(bb.forward(x)(0), -5.5);
}

TEST(Backbone, LinearWeightGradientIsOuterProduct) {
    std::mt19937_64 rng(1);
    Backbone bb(3, {}, 2, rng);
    const VectorXd x = VectorXd::Random(3);
    const VectorXd g = VectorXd::Random(2);
    ForwardCache cache;
    bb.forward(x, cache);
    const auto grad = bb.backward(cache, g);
    EXPECT_LT((grad.layers[0].weights - g * x.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((grad.layers[0].bias - g).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backbone, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    Backbone bb(3, {5, 4}, 3, rng);
    VectorXd x(3);
    x << 0.3, -0.7, 1.1;
    const VectorXd g = VectorXd::Random(3);
    ForwardCache cache;
    bb.forward(x, cache);
    VectorXd gx;
    const VectorXd analytic = bb.backward(cache, g, &gx).flatten();
    const VectorXd theta = bb.parameters();
    auto f = [&](const VectorXd& t) {
        Backbone probe = bb;
        probe.set_parameters(t);
        return g.dot(probe.forward(x));
    };
    EXPECT_LT(oracle::max_relative_error(analytic, oracle::central_difference(f, theta, 1e-6)), 1e-6);
    auto fx = [&](const VectorXd& xp) { return g.dot(bb.forward(xp)); };
    EXPECT_LT(oracle::max_relative_error(gx, oracle::central_difference(fx, x, 1e-6)), 1e-6);
}

TEST(Backbone, ParameterRoundTrip) {
    std::mt19937_64 rng(3);
    Backbone bb(2, {3}, 4, rng);
    EXPECT_EQ(bb.parameter_count(), 2 * 3 + 3 + 3 * 4 + 4);
    const VectorXd theta = bb.parameters();
    Backbone other(2, {3}, 4, rng);
    other.set_parameters(theta);
    EXPECT_EQ(other.parameters(), theta);
}

TEST(Backbone, InitializationBounds) {
    std::mt19937_64 rng(9);
    Backbone bb(16, {8}, 4, rng);
    EXPECT_LE(bb.layers()[0].weights.cwiseAbs().maxCoeff(), 0.25);
    EXPECT_LE(bb.layers()[1].weights.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(8.0));
    EXPECT_EQ(bb.layers()[0].bias, VectorXd::Zero(8));
}

TEST(Backbone, StaleCacheIsRejected) {
    std::mt19937_64 rng(3);
    Backbone bb(2, {3}, 2, rng);
    ForwardCache cache;
    bb.forward(VectorXd::Ones(2), cache);
    bb.apply_update(bb.backward(cache, VectorXd::Ones(2)), 0.1);
    EXPECT_THROW(bb.backward(cache, VectorXd::Ones(2)), std::logic_error);
}

TEST(Sgd, StepDecaySchedule) {
    SgdSchedule s;
    EXPECT_DOUBLE_EQ(s.rate_at(0), 0.05);
    EXPECT_DOUBLE_EQ(s.rate_at(9999), 0.05);
    EXPECT_DOUBLE_EQ(s.rate_at(10000), 0.025);
    EXPECT_DOUBLE_EQ(s.rate_at(20000), 0.0125);
}

TEST(Sgd, SingleStepExample) {
    Backbone bb({DenseLayer{MatrixXd::Constant(1, 1, 1.0), VectorXd::Zero(1)}});
    auto grad = bb.zero_gradient();
    grad.layers[0].weights(0, 0) = 2.0;
    SgdSchedule s{.initial_rate = 0.1};
    EXPECT_EQ(sgd_step(bb, grad, s), StepStatus::Applied);
    EXPECT_DOUBLE_EQ(bb.layers()[0].weights(0, 0), 0.8);
    EXPECT_EQ(s.iteration, 1);
}

TEST(Sgd, NonFiniteGradientSkipped) {
    Backbone bb({DenseLayer{MatrixXd::Constant(1, 1, 1.0), VectorXd::Zero(1)}});
    auto grad = bb.zero_gradient();
    grad.layers[0].bias(0) = std::numeric_limits<double>::quiet_NaN();
    SgdSchedule s;
    const auto version = bb.parameter_version();
    EXPECT_EQ(sgd_step(bb, grad, s), StepStatus::SkippedNonFinite);
    EXPECT_EQ(bb.parameter_version(), version);
    EXPECT_DOUBLE_EQ(bb.layers()[0].weights(0, 0), 1.0);
    EXPECT_EQ(s.iteration, 1);
}
