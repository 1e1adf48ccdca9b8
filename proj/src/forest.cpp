#include "reml/forest.hpp"
#include "reml/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace reml {

namespace {

constexpr double kMinGain = 1e-12;

double gini2(double c0, double c1) {
    const double n = c0 + c1;
    const double p0 = c0 / n;
    const double p1 = c1 / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double impurity = 0.0;  // weighted child gini
    bool found = false;
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix &x, std::span<const Label> y, const RfConfig &cfg, Rng &rng)
        : x_(x), y_(y), cfg_(cfg), rng_(rng), mtry_(cfg.resolved_mtry(x.cols())) {}

    std::vector<TreeNode> build(std::vector<std::size_t> rows) {
        grow(rows, 0);
        return std::move(nodes_);
    }

private:
    std::uint32_t grow(std::vector<std::size_t> &rows, std::size_t depth) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.emplace_back();
        std::array<std::uint32_t, 2> counts{};
        for (const auto r : rows) {
            ++counts[y_[r]];
        }
        nodes_[id].counts = counts;

        const bool pure = counts[0] == 0 || counts[1] == 0;
        const bool depth_limited = cfg_.max_depth > 0 && depth >= cfg_.max_depth;
        if (pure || depth_limited || rows.size() < cfg_.min_samples_split) {
            return id;
        }
        const Split split = best_split(rows, counts);
        if (!split.found) {
            return id;
        }

        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
        for (const auto r : rows) {
            (x_(r, split.feature) <= split.threshold ? left : right).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();

        const auto l = grow(left, depth + 1);
        const auto rt = grow(right, depth + 1);
        auto &node = nodes_[id];
        node.feature = static_cast<std::int32_t>(split.feature);
        node.threshold = split.threshold;
        node.left = l;
        node.right = rt;
        return id;
    }

    Split best_split(const std::vector<std::size_t> &rows, const std::array<std::uint32_t, 2> &counts) {
        const double n = static_cast<double>(rows.size());
        // Zero-gain splits are accepted when nothing better exists: XOR-shaped
        // cells have no impurity-reducing single split yet must still be fit.
        Split best;
        best.impurity = std::numeric_limits<double>::infinity();

        const auto features = rng_.sample_without_replacement(x_.cols(), mtry_);
        std::vector<std::pair<double, Label>> column(rows.size());
        for (const auto f : features) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                column[i] = {x_(rows[i], f), y_[rows[i]]};
            }
            std::sort(column.begin(), column.end());
            std::array<double, 2> left{};
            for (std::size_t i = 0; i + 1 < column.size(); ++i) {
                left[column[i].second] += 1.0;
                const double a = column[i].first;
                const double b = column[i + 1].first;
                if (!(a < b)) {
                    continue;
                }
                const double nl = left[0] + left[1];
                const double nr = n - nl;
                const double right0 = counts[0] - left[0];
                const double right1 = counts[1] - left[1];
                const double impurity = (nl * gini2(left[0], left[1]) + nr * gini2(right0, right1)) / n;
                if (impurity < best.impurity - kMinGain) {
                    double mid = a + (b - a) / 2.0;
                    if (!(mid < b)) {
                        mid = a;
                    }
                    best = {f, mid, impurity, true};
                }
            }
        }
        return best;
    }

    const Matrix &x_;
    std::span<const Label> y_;
    const RfConfig &cfg_;
    Rng &rng_;
    std::size_t mtry_;
    std::vector<TreeNode> nodes_;
};

void check_training_inputs(const Matrix &x, std::span<const Label> y) {
    if (x.empty()) {
        throw DataError("forest training: empty dataset");
    }
    if (y.size() != x.rows()) {
        throw DimensionMismatch("forest training labels", x.rows(), y.size());
    }
    for (const auto label : y) {
        if (label > 1) {
            throw DataError(fmt::format("forest training: non-binary label {}", label));
        }
    }
}

}  // namespace

std::size_t RfConfig::resolved_mtry(std::size_t d) const {
    if (mtry != 0) {
        return mtry;
    }
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d)))));
}

void RfConfig::validate(std::size_t d) const {
    if (n_trees < 1) {
        throw InvalidConfig("forest needs n_trees >= 1");
    }
    const auto m = resolved_mtry(d);
    if (m < 1 || m > d) {
        throw InvalidConfig(fmt::format("mtry {} must lie in [1, {}]", m, d));
    }
}

double gini(std::span<const std::size_t> label_counts) {
    double total = 0.0;
    for (const auto c : label_counts) {
        total += static_cast<double>(c);
    }
    if (total == 0.0) {
        throw DataError("gini: all label counts are zero");
    }
    double sum_sq = 0.0;
    for (const auto c : label_counts) {
        const double p = static_cast<double>(c) / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, std::size_t n_features)
    : nodes_(std::move(nodes)), n_features_(n_features) {
    if (nodes_.empty()) {
        throw DataError("decision tree has no nodes");
    }
    for (const auto &node : nodes_) {
        if (!node.is_leaf() && (static_cast<std::size_t>(node.feature) >= n_features_ || node.left >= nodes_.size() ||
                                node.right >= nodes_.size())) {
            throw DataError("decision tree node references out of range");
        }
    }
}

std::size_t DecisionTree::depth() const {
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
        const auto [id, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        const auto &node = nodes_[id];
        if (!node.is_leaf()) {
            stack.emplace_back(node.left, d + 1);
            stack.emplace_back(node.right, d + 1);
        }
    }
    return deepest;
}

const TreeNode &DecisionTree::leaf_for(std::span<const double> x) const {
    if (x.size() != n_features_) {
        throw DimensionMismatch("tree predict", n_features_, x.size());
    }
    const TreeNode *node = &nodes_.front();
    while (!node->is_leaf()) {
        node = &nodes_[x[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left : node->right];
    }
    return *node;
}

DecisionTree train_tree(const Matrix &x, std::span<const Label> y, std::span<const std::size_t> rows, const RfConfig &cfg,
                        Rng &rng) {
    check_training_inputs(x, y);
    cfg.validate(x.cols());
    if (rows.empty()) {
        throw DataError("train_tree: no rows");
    }
    TreeBuilder builder(x, y, cfg, rng);
    return DecisionTree(builder.build(std::vector<std::size_t>(rows.begin(), rows.end())), x.cols());
}

DecisionTree train_tree(const Matrix &x, std::span<const Label> y, const RfConfig &cfg, Rng &rng) {
    std::vector<std::size_t> rows(x.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return train_tree(x, y, rows, cfg, rng);
}

RandomForest train_forest(const Matrix &x, std::span<const Label> y, const RfConfig &cfg) {
    check_training_inputs(x, y);
    cfg.validate(x.cols());
    RandomForest rf;
    rf.config = cfg;
    rf.n_features = x.cols();
    rf.trees.resize(cfg.n_trees);
    parallel_for(cfg.n_trees, [&](std::size_t t) {
        Rng rng(mix_seed(cfg.seed, t));
        std::vector<std::size_t> rows(x.rows());
        if (cfg.bootstrap) {
            for (auto &r : rows) {
                r = rng.index(x.rows());
            }
        } else {
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        rf.trees[t] = train_tree(x, y, rows, cfg, rng);
    });
    return rf;
}

ForestVote forest_predict(const RandomForest &rf, std::span<const double> x) {
    if (x.size() != rf.n_features) {
        throw DimensionMismatch("forest_predict", rf.n_features, x.size());
    }
    std::size_t attack = 0;
    for (const auto &tree : rf.trees) {
        attack += tree.predict(x) == kAttack ? 1 : 0;
    }
    const std::size_t total = rf.trees.size();
    return {2 * attack >= total ? kAttack : kBenign, static_cast<double>(attack) / static_cast<double>(total)};
}

void write_forest(ByteWriter &w, const RandomForest &rf) {
    w.raw("RMRF");
    w.u32(static_cast<std::uint32_t>(rf.n_features));
    w.u32(static_cast<std::uint32_t>(rf.config.n_trees));
    w.u32(static_cast<std::uint32_t>(rf.config.max_depth));
    w.u32(static_cast<std::uint32_t>(rf.config.min_samples_split));
    w.u32(static_cast<std::uint32_t>(rf.config.mtry));
    w.u64(rf.config.seed);
    w.u8(rf.config.bootstrap ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(rf.trees.size()));
    for (const auto &tree : rf.trees) {
        w.u32(static_cast<std::uint32_t>(tree.nodes().size()));
        for (const auto &node : tree.nodes()) {
            w.u32(static_cast<std::uint32_t>(node.feature));
            w.f64(node.threshold);
            w.u32(node.left);
            w.u32(node.right);
            w.u32(node.counts[0]);
            w.u32(node.counts[1]);
        }
    }
}

RandomForest read_forest(ByteReader &r) {
    r.expect("RMRF", "forest");
    RandomForest rf;
    rf.n_features = r.u32();
    rf.config.n_trees = r.u32();
    rf.config.max_depth = r.u32();
    rf.config.min_samples_split = r.u32();
    rf.config.mtry = r.u32();
    rf.config.seed = r.u64();
    rf.config.bootstrap = r.u8() != 0;
    const auto n_trees = r.u32();
    rf.trees.reserve(n_trees);
    for (std::uint32_t t = 0; t < n_trees; ++t) {
        std::vector<TreeNode> nodes(r.u32());
        for (auto &node : nodes) {
            node.feature = static_cast<std::int32_t>(r.u32());
            node.threshold = r.f64();
            node.left = r.u32();
            node.right = r.u32();
            node.counts[0] = r.u32();
            node.counts[1] = r.u32();
        }
        rf.trees.emplace_back(std::move(nodes), rf.n_features);
    }
    if (rf.trees.empty()) {
        throw DataError("forest payload has no trees");
    }
    return rf;
}

}  // namespace reml
