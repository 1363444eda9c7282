#include "drf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace drf {

const std::vector<std::string>& synthetic_tasks() {
    static const std::vector<std::string> tasks{"piecewise", "bimodal", "hetero-noise"};
    return tasks;
}

namespace {

[[noreturn]] void unknown_task(const std::string& task) {
    std::string valid;
    for (const auto& t : synthetic_tasks()) valid += (valid.empty() ? "" : ", ") + t;
    throw std::invalid_argument("unknown task '" + task + "' (valid tasks: " + valid + ")");
}

}  // namespace

double synthetic_mean(const std::string& task, double x, int component) {
    if (task == "piecewise") return x < 0.0 ? 3.0 * x + 1.0 : -2.0 * x + 5.0;
    if (task == "bimodal") return component == 0 ? (x + 2.0) * (x + 2.0) : 6.0 + 2.0 * std::sin(2.0 * x);
    if (task == "hetero-noise") return std::sin(3.0 * x);
    unknown_task(task);
}

Dataset generate_synthetic(const SynthSpec& spec) {
    const auto& tasks = synthetic_tasks();
    if (std::find(tasks.begin(), tasks.end(), spec.task) == tasks.end()) unknown_task(spec.task);
    if (spec.samples == 0) throw std::invalid_argument("sample count must be positive");
    if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise)) {
        throw std::invalid_argument("noise level must be finite and non-negative");
    }

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uniform(-2.0, 2.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);

    const auto n = static_cast<Eigen::Index>(spec.samples);
    Dataset data;
    data.features.resize(n, 1);
    data.targets.resize(n, 1);
    data.feature_names = {"x0"};
    data.target_names = {"y0"};
    for (Eigen::Index i = 0; i < n; ++i) {
        double x = 0.0;
        double sigma = spec.noise;
        int component = 0;
        if (spec.task == "bimodal") {
            component = coin(rng) ? 1 : 0;
            x = (component == 0 ? -2.0 : 2.0) + 0.5 * gauss(rng);
        } else {
            x = uniform(rng);
        }
        if (spec.task == "hetero-noise") sigma = spec.noise * (0.2 + 0.4 * std::abs(x));
        const double e = gauss(rng);
        data.features(i, 0) = x;
        data.targets(i, 0) = synthetic_mean(spec.task, x, component) + sigma * e;
    }
    return data;
}

}  // namespace drf
