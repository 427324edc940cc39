#include <algorithm>
#include <cmath>

#include "chatml/models.hpp"
#include "model_internal.hpp"
#include "chatml/rng.hpp"

namespace chatml {

namespace {

constexpr double kMinPrior = 1e-12;

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Log-loss of the raw scores: one column for the binary logistic model,
// one column per class for softmax.
double mean_loss(const Eigen::MatrixXd& F, const std::vector<int>& y) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < F.rows(); ++i) {
        const int yi = y[static_cast<std::size_t>(i)];
        if (F.cols() == 1) {
            const double z = F(i, 0);
            // log(1 + exp(-s z)) with s = +1 for class 1, -1 for class 0
            const double s = yi == 1 ? z : -z;
            total += s >= 0.0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s));
        } else {
            const double mx = F.row(i).maxCoeff();
            const double lse = mx + std::log((F.row(i).array() - mx).exp().sum());
            total += lse - F(i, yi);
        }
    }
    return total / static_cast<double>(F.rows());
}

Eigen::MatrixXd probabilities(const Eigen::MatrixXd& F) {
    Eigen::MatrixXd P(F.rows(), F.cols() == 1 ? 2 : F.cols());
    for (Eigen::Index i = 0; i < F.rows(); ++i) {
        if (F.cols() == 1) {
            const double p1 = sigmoid(F(i, 0));
            P(i, 0) = 1.0 - p1;
            P(i, 1) = p1;
        } else {
            const double mx = F.row(i).maxCoeff();
            const Eigen::RowVectorXd e = (F.row(i).array() - mx).exp().matrix();
            P.row(i) = e / e.sum();
        }
    }
    return P;
}

}  // namespace

TrainedModel train_gbt(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp) {
    hp.validate();
    const auto& p = std::get<GbtParams>(hp.params);
    if (X.rows() == 0) throw ModelError(ModelErrc::EmptyTrainingSet, "gbt: empty training set");
    const auto labels = task_labels(hp.task);
    const std::size_t n_classes = labels.size();
    const std::size_t K = n_classes == 2 ? 1 : n_classes;
    const auto n = static_cast<std::size_t>(X.rows());
    const auto d = static_cast<std::size_t>(X.cols());
    const auto n_cols = static_cast<std::size_t>(std::ceil(p.colsample_bytree * static_cast<double>(d) - 1e-9));

    std::vector<double> prior(n_classes, 0.0);
    for (int yi : y) prior[static_cast<std::size_t>(yi)] += 1.0;
    for (double& v : prior) v = std::max(v / static_cast<double>(n), kMinPrior);

    GbtModel model;
    if (K == 1) {
        const double p1 = std::min(prior[1], 1.0 - kMinPrior);
        model.initial_scores = {std::log(p1 / (1.0 - p1))};
    } else {
        for (double v : prior) model.initial_scores.push_back(std::log(v));
    }
    Eigen::MatrixXd F(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K));
    for (std::size_t k = 0; k < K; ++k) F.col(static_cast<Eigen::Index>(k)).setConstant(model.initial_scores[k]);
    model.loss_trace.push_back(mean_loss(F, y));

    std::vector<std::size_t> all_rows(n);
    for (std::size_t i = 0; i < n; ++i) all_rows[i] = i;
    TreeGrowth growth;
    growth.max_depth = p.max_depth;
    growth.min_samples_split = 2;

    for (int m = 0; m < p.n_estimators; ++m) {
        const Eigen::MatrixXd P = probabilities(F);
        std::vector<Tree> round;
        Eigen::MatrixXd update = Eigen::MatrixXd::Zero(F.rows(), F.cols());
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t cls = K == 1 ? 1 : k;
            Eigen::VectorXd residual(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) {
                const double target = y[i] == static_cast<int>(cls) ? 1.0 : 0.0;
                residual(static_cast<Eigen::Index>(i)) = target - P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cls));
            }
            const std::uint64_t member = static_cast<std::uint64_t>(m) * K + k;
            Rng rng(derive_seed(hp.seed, member));
            const auto picked = rng.sample_without_replacement(d, n_cols);
            std::vector<int> cols(picked.begin(), picked.end());
            std::sort(cols.begin(), cols.end());
            growth.seed = derive_seed(hp.seed, member);
            Tree tree = grow_regression_tree(X, residual, all_rows, cols, growth);
            for (std::size_t i = 0; i < n; ++i) {
                update(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                    p.learning_rate * tree.leaf_for(X.row(static_cast<Eigen::Index>(i))).value;
            }
            round.push_back(std::move(tree));
            model.round_features.push_back(std::move(cols));
        }
        F += update;
        model.rounds.push_back(std::move(round));
        model.loss_trace.push_back(mean_loss(F, y));
    }

    TrainedModel out;
    out.hyperparams = hp;
    out.feature_names = default_feature_names(X.cols());
    out.class_labels = labels;
    out.learned = std::move(model);
    return out;
}

Eigen::MatrixXd gbt_scores(const GbtModel& model, double learning_rate, const Eigen::MatrixXd& X) {
    const auto K = static_cast<Eigen::Index>(model.initial_scores.size());
    Eigen::MatrixXd F(X.rows(), K);
    for (Eigen::Index k = 0; k < K; ++k) F.col(k).setConstant(model.initial_scores[static_cast<std::size_t>(k)]);
    for (const auto& round : model.rounds) {
        for (Eigen::Index k = 0; k < K; ++k) {
            const Tree& tree = round[static_cast<std::size_t>(k)];
            for (Eigen::Index i = 0; i < X.rows(); ++i) F(i, k) += learning_rate * tree.leaf_for(X.row(i)).value;
        }
    }
    return probabilities(F);
}

}  // namespace chatml
