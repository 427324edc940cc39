#pragma once

// CART trees shared by the decision tree, the random forest (Gini) and
// gradient boosting (variance). Nodes live in a flat vector; node 0 is the root.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace chatml {

struct TreeNode {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;  // rows with x[feature] <= threshold go left
    int left = -1;
    int right = -1;
    double n_train = 0.0;   // training samples reaching the node
    double impurity = 0.0;  // Gini or variance at the node
    double impurity_decrease_weighted = 0.0;  // (n_node / n_root) * impurity decrease of the split
    std::vector<double> distribution;  // class probabilities (classification leaves)
    double value = 0.0;                // regression leaves

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    const TreeNode& leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    int depth() const;
    std::size_t split_count() const;
};

struct TreeGrowth {
    int max_depth = 1;
    std::size_t min_samples_split = 2;
    /// Candidate features drawn per split; nullopt inspects every allowed feature.
    std::optional<std::size_t> features_per_split;
    std::uint64_t seed = 0;
};

/// Gini tree over the given sample rows (duplicates allowed, e.g. a bootstrap).
Tree grow_classification_tree(const Eigen::MatrixXd& X, const std::vector<int>& y, int n_classes,
                              const std::vector<std::size_t>& rows, const TreeGrowth& growth);

/// Variance-reduction tree restricted to the allowed columns; leaves hold the mean target.
Tree grow_regression_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& target, const std::vector<std::size_t>& rows,
                          const std::vector<int>& allowed_features, const TreeGrowth& growth);

/// Most probable class of a classification leaf (ties to the lower index).
int leaf_class(const TreeNode& leaf);

double gini(const std::vector<double>& class_counts, double total);

}  // namespace chatml
