#pragma once

#include "drf/dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace drf {

/// Seeded synthetic regression tasks with heterogeneous input-output
/// structure. All tasks have d_x = d_y = 1.
///
///   piecewise    x ~ U(-2, 2); y = 3x + 1 for x < 0, y = -2x + 5 otherwise;
///                plus N(0, noise^2).
///   bimodal      c ~ Bernoulli(1/2); x ~ N(-2, 0.5^2) if c = 0 else
///                N(2, 0.5^2); y = (x + 2)^2 for c = 0,
///                y = 6 + 2 sin(2x) for c = 1; plus N(0, noise^2).
///   hetero-noise x ~ U(-2, 2); y = sin(3x) + sigma(x) e with
///                sigma(x) = noise * (0.2 + 0.4 |x|), e ~ N(0, 1).
struct SynthSpec {
    std::string task;
    std::size_t samples = 1000;
    double noise = 0.1;
    std::uint64_t seed = 0;
};

const std::vector<std::string>& synthetic_tasks();

/// Noise-free value of the named task's generating function. For
/// "bimodal" the branch is selected by `component` (0 or 1).
double synthetic_mean(const std::string& task, double x, int component = 0);

/// Throws std::invalid_argument naming the valid tasks if `spec.task` is
/// unknown.
Dataset generate_synthetic(const SynthSpec& spec);

}  // namespace drf
