#pragma once

// Six classifier families behind one train / predict / persist contract.
// Every model carries its class labels (task order), the feature names it
// was trained on and the standardization fitted on its training rows.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "chatml/class_label.hpp"
#include "chatml/dataset.hpp"
#include "chatml/error.hpp"
#include "chatml/mlp.hpp"
#include "chatml/tree.hpp"

namespace chatml {

enum class ModelErrc {
    EmptyTrainingSet,
    InvalidHyperparams,
    DimensionMismatch,
    KTooLarge,
    NonFiniteLoss,
    UnknownFormatVersion,
    MalformedModel,
};
using ModelError = Error<ModelErrc>;

enum class ModelKind { gbt, svc, decision_tree, random_forest, knn, mlp };

inline constexpr std::array<ModelKind, 6> kAllModelKinds = {
    ModelKind::gbt, ModelKind::svc, ModelKind::decision_tree, ModelKind::random_forest, ModelKind::knn, ModelKind::mlp,
};

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view text);

struct GbtParams {
    double colsample_bytree = 1.0;
    int max_depth = 2;
    int n_estimators = 90;
    double learning_rate = 0.1;
};

struct SvcParams {
    double C = 1.0;
    std::string kernel = "rbf";
    std::string gamma_mode = "scale";
    double tolerance = 1e-3;
    int max_passes = 1000;  // iteration cap is max_passes * n
};

struct DecisionTreeParams {
    int max_depth = 9;
    double min_samples_split_fraction = 0.005;
};

struct RandomForestParams {
    int max_depth = 8;
    double min_samples_split_fraction = 0.022;
    int n_estimators = 240;
    std::string features_per_split_mode = "sqrt";
    bool bootstrap = true;
};

struct KnnParams {
    int k = 5;
    std::string distance = "euclidean";
};

struct MlpParams {
    std::vector<int> layer_widths;
    int epochs = 60;
    AdamParams adam;
    LrSchedule lr_schedule;
    double dropout_rate = 0.3;
    int batch_size = 32;
};

using KindParams = std::variant<GbtParams, SvcParams, DecisionTreeParams, RandomForestParams, KnnParams, MlpParams>;

struct Hyperparams {
    ModelKind kind = ModelKind::decision_tree;
    Task task = Task::binary;
    std::uint64_t seed = 0;
    KindParams params = DecisionTreeParams{};

    /// Throws InvalidHyperparams when a count, fraction or rate is out of range.
    void validate() const;
};

/// Tuned settings per model family and task; knn k and the gbt learning
/// rate, which the tuning grid did not report, use 5 and 0.1.
Hyperparams table3_preset(ModelKind kind, Task task, std::uint64_t seed = 0);

struct DecisionTreeModel {
    Tree tree;
};

struct RandomForestModel {
    std::vector<Tree> trees;
};

struct GbtModel {
    std::vector<double> initial_scores;       // one per score dimension
    std::vector<std::vector<Tree>> rounds;    // rounds[m][k]
    std::vector<std::vector<int>> round_features;  // columns seen by each tree, flattened [m*K+k]
    std::vector<double> loss_trace;           // training loss before round 0 and after each round
};

struct SvcModel {
    double gamma = 1.0;
    Eigen::MatrixXd support_vectors;
    std::vector<std::vector<double>> dual_coef;  // [classifier][support vector] = alpha * y
    std::vector<double> bias;
    std::vector<int> iterations;
};

struct KnnModel {
    Eigen::MatrixXd X;
    std::vector<int> y;
};

struct MlpModel {
    MlpNetwork network;
    std::vector<double> lr_trace;    // per epoch
    std::vector<double> loss_trace;  // mean training loss per epoch
};

using LearnedParams = std::variant<GbtModel, SvcModel, DecisionTreeModel, RandomForestModel, KnnModel, MlpModel>;

struct TrainedModel {
    Hyperparams hyperparams;
    std::vector<std::string> feature_names;
    StandardizationParams standardization;
    std::vector<ClassLabel> class_labels;
    LearnedParams learned;
    std::vector<std::string> notes;
};

TrainedModel train_decision_tree(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp);
TrainedModel train_random_forest(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp);
TrainedModel train_gbt(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp);
TrainedModel train_svc(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp);
TrainedModel train_knn(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp);
TrainedModel train_mlp(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp);

/// Sample rows of forest member `tree_index`: n draws with replacement, or
/// 0..n-1 when bootstrapping is off.
std::vector<std::size_t> bootstrap_rows(std::uint64_t seed, std::size_t tree_index, std::size_t n, bool bootstrap);

/// Growth settings of forest member `tree_index` for n training rows and d features.
TreeGrowth forest_tree_growth(const RandomForestParams& p, std::uint64_t seed, std::size_t tree_index, std::size_t n,
                              std::size_t d);

/// Dispatches on hp.kind after checking that X and y agree.
TrainedModel train_model(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp);

struct Prediction {
    std::vector<int> labels;  // indices into TrainedModel::class_labels
    Eigen::MatrixXd scores;   // rows x classes
};

/// Index of the largest entry; ties go to the lowest index.
int argmax_first(const Eigen::Ref<const Eigen::RowVectorXd>& scores);

Prediction predict(const TrainedModel& model, const Eigen::MatrixXd& X);

inline constexpr int kModelFormatVersion = 1;

nlohmann::json hyperparams_to_json(const Hyperparams& hp);
/// Starts from the preset for (kind, task) and applies the keys present in `params`.
Hyperparams hyperparams_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);

void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

/// Serialized text of a model, as written by save_model.
std::string dump_model(const TrainedModel& model);

}  // namespace chatml
