#pragma once

#include "reml/binary_io.hpp"
#include "reml/core.hpp"
#include "reml/random.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace reml {

struct RfConfig {
    std::size_t n_trees = 100;
    std::size_t max_depth = 16;  // 0 = unlimited
    std::size_t min_samples_split = 2;
    std::size_t mtry = 0;  // 0 = ceil(sqrt(d))
    std::uint64_t seed = 0;
    bool bootstrap = true;  // false only in tests

    std::size_t resolved_mtry(std::size_t d) const;
    void validate(std::size_t d) const;
    friend bool operator==(const RfConfig &, const RfConfig &) = default;
};

/// 1 - sum p_i^2. Throws on all-zero counts.
double gini(std::span<const std::size_t> label_counts);

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // go left when x[feature] <= threshold
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::array<std::uint32_t, 2> counts{};

    bool is_leaf() const noexcept { return feature < 0; }
    /// Leaf majority; ties go to attack.
    Label majority() const noexcept { return counts[1] >= counts[0] ? kAttack : kBenign; }
    friend bool operator==(const TreeNode &, const TreeNode &) = default;
};

class DecisionTree {
public:
    DecisionTree() = default;
    DecisionTree(std::vector<TreeNode> nodes, std::size_t n_features);

    const std::vector<TreeNode> &nodes() const noexcept { return nodes_; }
    std::size_t n_features() const noexcept { return n_features_; }
    std::size_t depth() const;

    const TreeNode &leaf_for(std::span<const double> x) const;
    Label predict(std::span<const double> x) const { return leaf_for(x).majority(); }

    friend bool operator==(const DecisionTree &, const DecisionTree &) = default;

private:
    std::vector<TreeNode> nodes_;
    std::size_t n_features_ = 0;
};

/// Greedy CART on the given row multiset (duplicates allowed).
DecisionTree train_tree(const Matrix &x, std::span<const Label> y, std::span<const std::size_t> rows, const RfConfig &cfg,
                        Rng &rng);
DecisionTree train_tree(const Matrix &x, std::span<const Label> y, const RfConfig &cfg, Rng &rng);

struct RandomForest {
    std::vector<DecisionTree> trees;
    RfConfig config;
    std::size_t n_features = 0;

    friend bool operator==(const RandomForest &, const RandomForest &) = default;
};

/// Tree i draws its bootstrap and feature samples from Rng(mix_seed(cfg.seed, i)).
RandomForest train_forest(const Matrix &x, std::span<const Label> y, const RfConfig &cfg);

struct ForestVote {
    Label label = kBenign;
    double attack_fraction = 0.0;
};

/// Majority over trees; an exact tie resolves to attack.
ForestVote forest_predict(const RandomForest &rf, std::span<const double> x);

void write_forest(ByteWriter &w, const RandomForest &rf);
RandomForest read_forest(ByteReader &r);

}  // namespace reml
