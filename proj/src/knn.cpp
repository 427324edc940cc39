#include <algorithm>
#include <utility>

#include "chatml/models.hpp"
#include "model_internal.hpp"

namespace chatml {

TrainedModel train_knn(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp) {
    hp.validate();
    const auto& p = std::get<KnnParams>(hp.params);
    if (X.rows() == 0) throw ModelError(ModelErrc::EmptyTrainingSet, "knn: empty training set");
    if (p.k > X.rows()) {
        throw ModelError(ModelErrc::KTooLarge, "knn: k = " + std::to_string(p.k) + " exceeds the " +
                                                   std::to_string(X.rows()) + " training rows");
    }
    TrainedModel out;
    out.hyperparams = hp;
    out.feature_names = default_feature_names(X.cols());
    out.class_labels = task_labels(hp.task);
    out.learned = KnnModel{X, y};
    return out;
}

Eigen::MatrixXd knn_scores(const KnnModel& model, int k, std::size_t n_classes, const Eigen::MatrixXd& X) {
    const auto n = static_cast<std::size_t>(model.X.rows());
    const auto kk = static_cast<std::size_t>(k);
    Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(X.rows(), static_cast<Eigen::Index>(n_classes));
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = {(model.X.row(static_cast<Eigen::Index>(i)) - X.row(r)).squaredNorm(), i};
        }
        // Pair ordering breaks distance ties by the lower row index.
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
        for (std::size_t j = 0; j < kk; ++j) {
            scores(r, model.y[dist[j].second]) += 1.0;
        }
        scores.row(r) /= static_cast<double>(kk);
    }
    return scores;
}

}  // namespace chatml
