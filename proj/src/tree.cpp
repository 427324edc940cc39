#include "chatml/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "chatml/rng.hpp"

namespace chatml {

namespace {

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
};

// Larger gain wins; equal gains go to the lower feature index, then the lower threshold.
bool improves(const SplitChoice& best, double gain, int feature, double threshold) {
    if (best.feature < 0 || gain > best.gain) return true;
    if (gain < best.gain) return false;
    if (feature != best.feature) return feature < best.feature;
    return threshold < best.threshold;
}

double midpoint(double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    // Adjacent doubles: the midpoint can round up to hi, which would send hi left.
    return mid < hi ? mid : lo;
}

std::vector<std::pair<double, std::size_t>> sorted_column(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows,
                                                          int feature) {
    std::vector<std::pair<double, std::size_t>> col;
    col.reserve(rows.size());
    for (std::size_t r : rows) col.emplace_back(X(static_cast<Eigen::Index>(r), feature), r);
    std::sort(col.begin(), col.end());
    return col;
}

double variance(double sum, double sum_sq, double n) {
    if (n <= 0.0) return 0.0;
    const double mean = sum / n;
    return std::max(0.0, sum_sq / n - mean * mean);
}

// Order in which features are inspected at one node. With a per-split budget
// the first `budget` features of a random permutation are inspected; if none
// of them can split the node, further ones are added until one can.
class FeatureSampler {
public:
    FeatureSampler(std::vector<int> allowed, std::optional<std::size_t> budget, std::uint64_t seed)
        : allowed_(std::move(allowed)), budget_(budget), rng_(seed) {}

    std::vector<int> order() {
        if (!budget_) return allowed_;
        std::vector<int> perm;
        for (std::size_t i : rng_.sample_without_replacement(allowed_.size(), allowed_.size())) perm.push_back(allowed_[i]);
        return perm;
    }

    std::size_t budget() const { return budget_.value_or(allowed_.size()); }

private:
    std::vector<int> allowed_;
    std::optional<std::size_t> budget_;
    Rng rng_;
};

class ClassificationBuilder {
public:
    ClassificationBuilder(const Eigen::MatrixXd& X, const std::vector<int>& y, int n_classes, const TreeGrowth& growth)
        : X_(X), y_(y), k_(static_cast<std::size_t>(n_classes)), growth_(growth),
          sampler_(all_features(X), growth.features_per_split, growth.seed) {}

    Tree build(const std::vector<std::size_t>& rows) {
        root_n_ = static_cast<double>(rows.size());
        grow(rows, 0);
        return std::move(tree_);
    }

private:
    static std::vector<int> all_features(const Eigen::MatrixXd& X) {
        std::vector<int> f(static_cast<std::size_t>(X.cols()));
        std::iota(f.begin(), f.end(), 0);
        return f;
    }

    std::vector<double> counts_of(const std::vector<std::size_t>& rows) const {
        std::vector<double> c(k_, 0.0);
        for (std::size_t r : rows) c[static_cast<std::size_t>(y_[r])] += 1.0;
        return c;
    }

    bool search_feature(const std::vector<std::size_t>& rows, int feature, double parent_impurity,
                        const std::vector<double>& parent_counts, SplitChoice& best) const {
        const auto col = sorted_column(X_, rows, feature);
        const double n = static_cast<double>(col.size());
        std::vector<double> left(k_, 0.0);
        bool valid = false;
        for (std::size_t i = 0; i + 1 < col.size(); ++i) {
            left[static_cast<std::size_t>(y_[col[i].second])] += 1.0;
            if (!(col[i].first < col[i + 1].first)) continue;
            valid = true;
            const double nl = static_cast<double>(i + 1);
            const double nr = n - nl;
            double sl = 0.0, sr = 0.0;
            for (std::size_t c = 0; c < k_; ++c) {
                const double r = parent_counts[c] - left[c];
                sl += left[c] * left[c];
                sr += r * r;
            }
            const double gl = 1.0 - sl / (nl * nl);
            const double gr = 1.0 - sr / (nr * nr);
            const double gain = parent_impurity - (nl / n) * gl - (nr / n) * gr;
            const double threshold = midpoint(col[i].first, col[i + 1].first);
            if (improves(best, gain, feature, threshold)) best = {feature, threshold, gain};
        }
        return valid;
    }

    int grow(const std::vector<std::size_t>& rows, int depth) {
        const int index = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        const auto counts = counts_of(rows);
        const double n = static_cast<double>(rows.size());
        const double impurity = gini(counts, n);
        tree_.nodes[static_cast<std::size_t>(index)].n_train = n;
        tree_.nodes[static_cast<std::size_t>(index)].impurity = impurity;

        SplitChoice best;
        if (depth < growth_.max_depth && rows.size() >= growth_.min_samples_split && rows.size() >= 2 && impurity > 0.0) {
            const auto order = sampler_.order();
            std::size_t inspected = 0;
            bool any_valid = false;
            for (int f : order) {
                if (inspected >= sampler_.budget() && any_valid) break;
                any_valid = search_feature(rows, f, impurity, counts, best) || any_valid;
                ++inspected;
            }
        }
        if (best.feature < 0) {
            TreeNode& leaf = tree_.nodes[static_cast<std::size_t>(index)];
            leaf.distribution.resize(k_);
            for (std::size_t c = 0; c < k_; ++c) leaf.distribution[c] = n > 0.0 ? counts[c] / n : 0.0;
            return index;
        }
        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : rows) {
            (X_(static_cast<Eigen::Index>(r), best.feature) <= best.threshold ? left_rows : right_rows).push_back(r);
        }
        {
            TreeNode& node = tree_.nodes[static_cast<std::size_t>(index)];
            node.feature = best.feature;
            node.threshold = best.threshold;
            node.impurity_decrease_weighted = (n / root_n_) * best.gain;
        }
        const int l = grow(left_rows, depth + 1);
        const int r = grow(right_rows, depth + 1);
        tree_.nodes[static_cast<std::size_t>(index)].left = l;
        tree_.nodes[static_cast<std::size_t>(index)].right = r;
        return index;
    }

    const Eigen::MatrixXd& X_;
    const std::vector<int>& y_;
    std::size_t k_;
    TreeGrowth growth_;
    FeatureSampler sampler_;
    Tree tree_;
    double root_n_ = 1.0;
};

class RegressionBuilder {
public:
    RegressionBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& target, std::vector<int> allowed,
                      const TreeGrowth& growth)
        : X_(X), t_(target), growth_(growth), sampler_(std::move(allowed), growth.features_per_split, growth.seed) {}

    Tree build(const std::vector<std::size_t>& rows) {
        root_n_ = static_cast<double>(rows.size());
        grow(rows, 0);
        return std::move(tree_);
    }

private:
    bool search_feature(const std::vector<std::size_t>& rows, int feature, double parent_impurity, double total,
                        double total_sq, SplitChoice& best) const {
        const auto col = sorted_column(X_, rows, feature);
        const double n = static_cast<double>(col.size());
        double ls = 0.0, lss = 0.0;
        bool valid = false;
        for (std::size_t i = 0; i + 1 < col.size(); ++i) {
            const double v = t_(static_cast<Eigen::Index>(col[i].second));
            ls += v;
            lss += v * v;
            if (!(col[i].first < col[i + 1].first)) continue;
            valid = true;
            const double nl = static_cast<double>(i + 1);
            const double nr = n - nl;
            const double gain =
                parent_impurity - (nl / n) * variance(ls, lss, nl) - (nr / n) * variance(total - ls, total_sq - lss, nr);
            const double threshold = midpoint(col[i].first, col[i + 1].first);
            if (improves(best, gain, feature, threshold)) best = {feature, threshold, gain};
        }
        return valid;
    }

    int grow(const std::vector<std::size_t>& rows, int depth) {
        const int index = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t r : rows) {
            const double v = t_(static_cast<Eigen::Index>(r));
            sum += v;
            sum_sq += v * v;
        }
        const double n = static_cast<double>(rows.size());
        const double impurity = variance(sum, sum_sq, n);
        tree_.nodes[static_cast<std::size_t>(index)].n_train = n;
        tree_.nodes[static_cast<std::size_t>(index)].impurity = impurity;

        SplitChoice best;
        if (depth < growth_.max_depth && rows.size() >= growth_.min_samples_split && rows.size() >= 2 && impurity > 0.0) {
            std::size_t inspected = 0;
            bool any_valid = false;
            for (int f : sampler_.order()) {
                if (inspected >= sampler_.budget() && any_valid) break;
                any_valid = search_feature(rows, f, impurity, sum, sum_sq, best) || any_valid;
                ++inspected;
            }
        }
        if (best.feature < 0) {
            tree_.nodes[static_cast<std::size_t>(index)].value = n > 0.0 ? sum / n : 0.0;
            return index;
        }
        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : rows) {
            (X_(static_cast<Eigen::Index>(r), best.feature) <= best.threshold ? left_rows : right_rows).push_back(r);
        }
        {
            TreeNode& node = tree_.nodes[static_cast<std::size_t>(index)];
            node.feature = best.feature;
            node.threshold = best.threshold;
            node.impurity_decrease_weighted = (n / root_n_) * best.gain;
            node.value = sum / n;
        }
        const int l = grow(left_rows, depth + 1);
        const int r = grow(right_rows, depth + 1);
        tree_.nodes[static_cast<std::size_t>(index)].left = l;
        tree_.nodes[static_cast<std::size_t>(index)].right = r;
        return index;
    }

    const Eigen::MatrixXd& X_;
    const Eigen::VectorXd& t_;
    TreeGrowth growth_;
    FeatureSampler sampler_;
    Tree tree_;
    double root_n_ = 1.0;
};

}  // namespace

double gini(const std::vector<double>& class_counts, double total) {
    if (total <= 0.0) return 0.0;
    double s = 0.0;
    for (double c : class_counts) s += c * c;
    return 1.0 - s / (total * total);
}

const TreeNode& Tree::leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const TreeNode& n = nodes[i];
        i = static_cast<std::size_t>(x(n.feature) <= n.threshold ? n.left : n.right);
    }
    return nodes[i];
}

int Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<std::pair<std::size_t, int>> stack{{0, 0}};
    int deepest = 0;
    while (!stack.empty()) {
        const auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (!nodes[i].is_leaf()) {
            stack.emplace_back(static_cast<std::size_t>(nodes[i].left), d + 1);
            stack.emplace_back(static_cast<std::size_t>(nodes[i].right), d + 1);
        }
    }
    return deepest;
}

std::size_t Tree::split_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
}

int leaf_class(const TreeNode& leaf) {
    int best = 0;
    for (std::size_t c = 1; c < leaf.distribution.size(); ++c) {
        if (leaf.distribution[c] > leaf.distribution[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    }
    return best;
}

Tree grow_classification_tree(const Eigen::MatrixXd& X, const std::vector<int>& y, int n_classes,
                              const std::vector<std::size_t>& rows, const TreeGrowth& growth) {
    return ClassificationBuilder(X, y, n_classes, growth).build(rows);
}

Tree grow_regression_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& target, const std::vector<std::size_t>& rows,
                          const std::vector<int>& allowed_features, const TreeGrowth& growth) {
    return RegressionBuilder(X, target, allowed_features, growth).build(rows);
}

}  // namespace chatml
