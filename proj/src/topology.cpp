#include "drf/topology.hpp"

#include <stdexcept>
#include <string>

namespace drf {

TreeTopology::TreeTopology(int depth) : depth_(depth) {
    if (depth < 1 || depth > 20) {
        throw std::invalid_argument("tree depth must be in [1, 20], got " + std::to_string(depth));
    }
    leaf_count_ = std::size_t{1} << depth;
    split_count_ = leaf_count_ - 1;
}

TreeTopology::LeafRange TreeTopology::leaves_under(std::size_t node) const {
    // Walk down the leftmost and rightmost paths.
    std::size_t lo = node;
    std::size_t hi = node;
    while (!is_leaf(lo)) {
        lo = left(lo);
        hi = right(hi);
    }
    return {leaf_index(lo), leaf_index(hi) + 1};
}

IndexFunction::IndexFunction(std::vector<std::size_t> unit_of_node, std::size_t output_units)
    : unit_of_node_(std::move(unit_of_node)), output_units_(output_units) {
    for (std::size_t n = 0; n < unit_of_node_.size(); ++n) {
        if (unit_of_node_[n] >= output_units_) {
            throw std::invalid_argument("index function maps node " + std::to_string(n) +
                                        " to unit " + std::to_string(unit_of_node_[n]) +
                                        " outside [0, " + std::to_string(output_units_) + ")");
        }
    }
}

IndexFunction IndexFunction::random(std::size_t split_count, std::size_t output_units,
                                    std::mt19937_64& rng) {
    if (output_units == 0) {
        throw std::invalid_argument("index function needs at least one output unit");
    }
    std::uniform_int_distribution<std::size_t> pick(0, output_units - 1);
    std::vector<std::size_t> units(split_count);
    for (auto& u : units) u = pick(rng);
    return IndexFunction(std::move(units), output_units);
}

}  // namespace drf
