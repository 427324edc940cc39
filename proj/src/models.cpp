#include "chatml/models.hpp"

#include <cmath>
#include <string>

#include "chatml/rng.hpp"
#include "model_internal.hpp"

namespace chatml {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ModelError(ModelErrc::InvalidHyperparams, what);
}

bool is_fraction(double v) { return v > 0.0 && v <= 1.0; }

std::size_t min_split_count(double fraction, std::size_t n) {
    const auto c = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    return std::max<std::size_t>(2, c);
}

}  // namespace

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::gbt: return "gbt";
        case ModelKind::svc: return "svc";
        case ModelKind::decision_tree: return "decision_tree";
        case ModelKind::random_forest: return "random_forest";
        case ModelKind::knn: return "knn";
        case ModelKind::mlp: return "mlp";
    }
    return "unknown";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) {
    for (ModelKind k : kAllModelKinds) {
        if (to_string(k) == text) return k;
    }
    return std::nullopt;
}

void Hyperparams::validate() const {
    const std::size_t n_classes = task_labels(task).size();
    switch (kind) {
        case ModelKind::gbt: {
            require(std::holds_alternative<GbtParams>(params), "gbt: parameter block does not match model kind");
            const auto& p = std::get<GbtParams>(params);
            require(is_fraction(p.colsample_bytree), "gbt: colsample_bytree must lie in (0, 1]");
            require(p.max_depth >= 1, "gbt: max_depth must be >= 1");
            require(p.n_estimators >= 1, "gbt: n_estimators must be >= 1");
            require(p.learning_rate > 0.0, "gbt: learning_rate must be > 0");
            break;
        }
        case ModelKind::svc: {
            require(std::holds_alternative<SvcParams>(params), "svc: parameter block does not match model kind");
            const auto& p = std::get<SvcParams>(params);
            require(p.C > 0.0, "svc: C must be > 0");
            require(p.kernel == "rbf", "svc: only the rbf kernel is supported");
            require(p.gamma_mode == "scale", "svc: only gamma_mode \"scale\" is supported");
            require(p.tolerance > 0.0, "svc: tolerance must be > 0");
            require(p.max_passes >= 1, "svc: max_passes must be >= 1");
            break;
        }
        case ModelKind::decision_tree: {
            require(std::holds_alternative<DecisionTreeParams>(params),
                    "decision_tree: parameter block does not match model kind");
            const auto& p = std::get<DecisionTreeParams>(params);
            require(p.max_depth >= 1, "decision_tree: max_depth must be >= 1");
            require(is_fraction(p.min_samples_split_fraction), "decision_tree: min_samples_split_fraction must lie in (0, 1]");
            break;
        }
        case ModelKind::random_forest: {
            require(std::holds_alternative<RandomForestParams>(params),
                    "random_forest: parameter block does not match model kind");
            const auto& p = std::get<RandomForestParams>(params);
            require(p.max_depth >= 1, "random_forest: max_depth must be >= 1");
            require(is_fraction(p.min_samples_split_fraction), "random_forest: min_samples_split_fraction must lie in (0, 1]");
            require(p.n_estimators >= 1, "random_forest: n_estimators must be >= 1");
            require(p.features_per_split_mode == "sqrt" || p.features_per_split_mode == "all",
                    "random_forest: features_per_split_mode must be \"sqrt\" or \"all\"");
            break;
        }
        case ModelKind::knn: {
            require(std::holds_alternative<KnnParams>(params), "knn: parameter block does not match model kind");
            const auto& p = std::get<KnnParams>(params);
            require(p.k >= 1, "knn: k must be >= 1");
            require(p.distance == "euclidean", "knn: only euclidean distance is supported");
            break;
        }
        case ModelKind::mlp: {
            require(std::holds_alternative<MlpParams>(params), "mlp: parameter block does not match model kind");
            const auto& p = std::get<MlpParams>(params);
            require(!p.layer_widths.empty(), "mlp: layer_widths must not be empty");
            for (int w : p.layer_widths) require(w >= 1, "mlp: every layer width must be >= 1");
            require(static_cast<std::size_t>(p.layer_widths.back()) == n_classes,
                    "mlp: final layer width must equal the class count (" + std::to_string(n_classes) + ")");
            require(p.epochs >= 1, "mlp: epochs must be >= 1");
            require(p.batch_size >= 1, "mlp: batch_size must be >= 1");
            require(p.adam.learning_rate > 0.0, "mlp: learning rate must be > 0");
            require(p.adam.beta1 >= 0.0 && p.adam.beta1 < 1.0, "mlp: beta1 must lie in [0, 1)");
            require(p.adam.beta2 >= 0.0 && p.adam.beta2 < 1.0, "mlp: beta2 must lie in [0, 1)");
            require(p.adam.epsilon > 0.0, "mlp: epsilon must be > 0");
            require(p.dropout_rate >= 0.0 && p.dropout_rate < 1.0, "mlp: dropout_rate must lie in [0, 1)");
            if (p.lr_schedule.kind == LrSchedule::Kind::step) {
                require(p.lr_schedule.factor > 0.0, "mlp: schedule factor must be > 0");
                require(p.lr_schedule.every_n_epochs >= 1, "mlp: schedule every_n_epochs must be >= 1");
            }
            break;
        }
    }
}

Hyperparams table3_preset(ModelKind kind, Task task, std::uint64_t seed) {
    const bool bin = task == Task::binary;
    Hyperparams hp;
    hp.kind = kind;
    hp.task = task;
    hp.seed = seed;
    switch (kind) {
        case ModelKind::gbt: {
            GbtParams p;
            p.colsample_bytree = bin ? 0.65 : 0.55;
            p.max_depth = 2;
            p.n_estimators = 90;
            hp.params = p;
            break;
        }
        case ModelKind::svc: {
            SvcParams p;
            p.C = bin ? 11.20 : 1.55;
            hp.params = p;
            break;
        }
        case ModelKind::decision_tree: {
            DecisionTreeParams p;
            p.max_depth = bin ? 9 : 5;
            p.min_samples_split_fraction = bin ? 0.005 : 0.039;
            hp.params = p;
            break;
        }
        case ModelKind::random_forest: {
            RandomForestParams p;
            p.max_depth = bin ? 8 : 16;
            p.min_samples_split_fraction = bin ? 0.022 : 0.010;
            p.n_estimators = bin ? 240 : 20;
            hp.params = p;
            break;
        }
        case ModelKind::knn: hp.params = KnnParams{}; break;
        case ModelKind::mlp: {
            MlpParams p;
            p.adam.learning_rate = 0.004;
            if (bin) {
                p.layer_widths = {64, 128, 256, 64, 2};
                p.epochs = 60;
            } else {
                p.layer_widths = {64, 128, 256, 256, 256, 128, 64, 6};
                p.epochs = 40;
                p.lr_schedule.kind = LrSchedule::Kind::step;
                p.lr_schedule.factor = 0.8;
                p.lr_schedule.every_n_epochs = 17;
            }
            hp.params = p;
            break;
        }
    }
    return hp;
}

std::vector<std::string> default_feature_names(Eigen::Index d) {
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < d; ++i) names.push_back("x" + std::to_string(i));
    return names;
}

std::vector<std::size_t> bootstrap_rows(std::uint64_t seed, std::size_t tree_index, std::size_t n, bool bootstrap) {
    std::vector<std::size_t> rows(n);
    if (!bootstrap) {
        for (std::size_t i = 0; i < n; ++i) rows[i] = i;
        return rows;
    }
    Rng rng(derive_seed(seed, tree_index));
    for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::size_t>(rng.below(n));
    return rows;
}

TreeGrowth forest_tree_growth(const RandomForestParams& p, std::uint64_t seed, std::size_t tree_index, std::size_t n,
                              std::size_t d) {
    TreeGrowth growth;
    growth.max_depth = p.max_depth;
    growth.min_samples_split = min_split_count(p.min_samples_split_fraction, n);
    if (p.features_per_split_mode == "sqrt") {
        growth.features_per_split = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d)) - 1e-12));
    }
    growth.seed = derive_seed(derive_seed(seed, tree_index), 1);
    return growth;
}

TrainedModel train_decision_tree(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp) {
    hp.validate();
    const auto& p = std::get<DecisionTreeParams>(hp.params);
    if (X.rows() == 0) throw ModelError(ModelErrc::EmptyTrainingSet, "decision_tree: empty training set");
    const auto n = static_cast<std::size_t>(X.rows());
    TrainedModel out;
    out.hyperparams = hp;
    out.class_labels = task_labels(hp.task);
    out.feature_names = default_feature_names(X.cols());
    TreeGrowth growth;
    growth.max_depth = p.max_depth;
    growth.min_samples_split = min_split_count(p.min_samples_split_fraction, n);
    growth.seed = derive_seed(hp.seed, 0);
    out.learned = DecisionTreeModel{
        grow_classification_tree(X, y, static_cast<int>(out.class_labels.size()), bootstrap_rows(0, 0, n, false), growth)};
    return out;
}

TrainedModel train_random_forest(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp) {
    hp.validate();
    const auto& p = std::get<RandomForestParams>(hp.params);
    if (X.rows() == 0) throw ModelError(ModelErrc::EmptyTrainingSet, "random_forest: empty training set");
    const auto n = static_cast<std::size_t>(X.rows());
    const auto d = static_cast<std::size_t>(X.cols());
    TrainedModel out;
    out.hyperparams = hp;
    out.class_labels = task_labels(hp.task);
    out.feature_names = default_feature_names(X.cols());
    RandomForestModel forest;
    for (int t = 0; t < p.n_estimators; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        forest.trees.push_back(grow_classification_tree(X, y, static_cast<int>(out.class_labels.size()),
                                                        bootstrap_rows(hp.seed, ti, n, p.bootstrap),
                                                        forest_tree_growth(p, hp.seed, ti, n, d)));
    }
    out.learned = std::move(forest);
    return out;
}

TrainedModel train_model(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp) {
    if (static_cast<std::size_t>(X.rows()) != y.size()) {
        throw ModelError(ModelErrc::DimensionMismatch, "training matrix has " + std::to_string(X.rows()) +
                                                           " rows but " + std::to_string(y.size()) + " labels");
    }
    const std::size_t n_classes = task_labels(hp.task).size();
    for (int v : y) {
        if (v < 0 || static_cast<std::size_t>(v) >= n_classes) {
            throw ModelError(ModelErrc::DimensionMismatch, "label index " + std::to_string(v) + " outside the task's classes");
        }
    }
    switch (hp.kind) {
        case ModelKind::gbt: return train_gbt(X, y, hp);
        case ModelKind::svc: return train_svc(X, y, hp);
        case ModelKind::decision_tree: return train_decision_tree(X, y, hp);
        case ModelKind::random_forest: return train_random_forest(X, y, hp);
        case ModelKind::knn: return train_knn(X, y, hp);
        case ModelKind::mlp: return train_mlp(X, y, hp);
    }
    throw ModelError(ModelErrc::InvalidHyperparams, "unknown model kind");
}

int argmax_first(const Eigen::Ref<const Eigen::RowVectorXd>& scores) {
    int best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
        if (scores(i) > scores(best)) best = static_cast<int>(i);
    }
    return best;
}

Prediction predict(const TrainedModel& model, const Eigen::MatrixXd& X) {
    if (static_cast<std::size_t>(X.cols()) != model.feature_names.size()) {
        throw ModelError(ModelErrc::DimensionMismatch, "model expects " + std::to_string(model.feature_names.size()) +
                                                           " features, got " + std::to_string(X.cols()));
    }
    const std::size_t n_classes = model.class_labels.size();
    const auto C = static_cast<Eigen::Index>(n_classes);
    Prediction out;
    std::visit(
        [&](const auto& learned) {
            using T = std::decay_t<decltype(learned)>;
            if constexpr (std::is_same_v<T, DecisionTreeModel>) {
                out.scores.resize(X.rows(), C);
                for (Eigen::Index i = 0; i < X.rows(); ++i) {
                    const auto& dist = learned.tree.leaf_for(X.row(i)).distribution;
                    for (Eigen::Index c = 0; c < C; ++c) out.scores(i, c) = dist[static_cast<std::size_t>(c)];
                }
            } else if constexpr (std::is_same_v<T, RandomForestModel>) {
                out.scores = Eigen::MatrixXd::Zero(X.rows(), C);
                for (Eigen::Index i = 0; i < X.rows(); ++i) {
                    for (const Tree& tree : learned.trees) out.scores(i, leaf_class(tree.leaf_for(X.row(i)))) += 1.0;
                }
                out.scores /= static_cast<double>(learned.trees.size());
            } else if constexpr (std::is_same_v<T, GbtModel>) {
                out.scores = gbt_scores(learned, std::get<GbtParams>(model.hyperparams.params).learning_rate, X);
            } else if constexpr (std::is_same_v<T, SvcModel>) {
                out.scores = svc_scores(learned, n_classes, X);
            } else if constexpr (std::is_same_v<T, KnnModel>) {
                out.scores = knn_scores(learned, std::get<KnnParams>(model.hyperparams.params).k, n_classes, X);
            } else {
                out.scores = mlp_forward_inference(learned.network, X);
            }
        },
        model.learned);
    out.labels.resize(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.labels[static_cast<std::size_t>(i)] = argmax_first(out.scores.row(i));
    return out;
}

}  // namespace chatml
