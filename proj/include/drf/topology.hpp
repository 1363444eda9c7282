#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace drf {

/// Complete binary tree stored in heap order. Node n has children 2n+1 and
/// 2n+2; the last 2^depth slots are the leaves.
class TreeTopology {
public:
    explicit TreeTopology(int depth);

    int depth() const { return depth_; }
    std::size_t split_count() const { return split_count_; }
    std::size_t leaf_count() const { return leaf_count_; }
    std::size_t node_count() const { return split_count_ + leaf_count_; }

    static std::size_t left(std::size_t node) { return 2 * node + 1; }
    static std::size_t right(std::size_t node) { return 2 * node + 2; }

    bool is_leaf(std::size_t node) const { return node >= split_count_; }
    std::size_t leaf_index(std::size_t node) const { return node - split_count_; }
    std::size_t leaf_node(std::size_t leaf) const { return leaf + split_count_; }

    /// Half-open range [first, last) of leaf indices below `node`.
    struct LeafRange {
        std::size_t first;
        std::size_t last;
        bool contains(std::size_t leaf) const { return leaf >= first && leaf < last; }
        std::size_t size() const { return last - first; }
    };
    LeafRange leaves_under(std::size_t node) const;

    bool operator==(const TreeTopology&) const = default;

private:
    int depth_;
    std::size_t split_count_;
    std::size_t leaf_count_;
};

/// Maps every split node of one tree to an output unit of the backbone.
/// Units may repeat within a tree and across trees.
class IndexFunction {
public:
    IndexFunction() = default;
    IndexFunction(std::vector<std::size_t> unit_of_node, std::size_t output_units);

    /// Uniform draw of a unit per split node.
    static IndexFunction random(std::size_t split_count, std::size_t output_units,
                                std::mt19937_64& rng);

    std::size_t operator[](std::size_t node) const { return unit_of_node_[node]; }
    std::size_t size() const { return unit_of_node_.size(); }
    std::size_t output_units() const { return output_units_; }
    const std::vector<std::size_t>& units() const { return unit_of_node_; }

private:
    std::vector<std::size_t> unit_of_node_;
    std::size_t output_units_ = 0;
};

}  // namespace drf
