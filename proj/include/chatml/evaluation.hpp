#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chatml/class_label.hpp"
#include "chatml/error.hpp"
#include "chatml/models.hpp"

namespace chatml {

enum class EvalErrc { UnknownLabel, LengthMismatch, EmptyMatrix, UnsupportedModel };
using EvalError = Error<EvalErrc>;

struct ConfusionMatrix {
    std::vector<ClassLabel> class_labels;
    std::vector<std::vector<long>> counts;  // rows: true class, columns: predicted class

    long total() const;
};

ConfusionMatrix confusion_matrix(const std::vector<ClassLabel>& y_true, const std::vector<ClassLabel>& y_pred,
                                 const std::vector<ClassLabel>& class_labels);

/// Same, with labels given as indices into class_labels.
ConfusionMatrix confusion_matrix(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                 const std::vector<ClassLabel>& class_labels);

struct ClassMetrics {
    ClassLabel label = ClassLabel::ProbableAD;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long support = 0;
};

struct MetricsReport {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
};

/// Zero denominators yield 0 for the affected metric.
MetricsReport metrics(const ConfusionMatrix& cm);

struct ImportanceReport {
    ModelKind model_kind = ModelKind::decision_tree;
    Task task = Task::binary;
    std::vector<std::pair<std::string, double>> entries;  // descending
};

/// Normalized impurity-decrease importance of the tree-based families.
ImportanceReport impurity_importance(const TrainedModel& model);

/// Rounds to 4 decimal places.
double round4(double v);

nlohmann::json evaluation_report_json(const TrainedModel& model, const ConfusionMatrix& cm, const MetricsReport& m);

/// "feature,importance" header plus the top `top_k` rows.
std::string importance_csv(const ImportanceReport& report, std::size_t top_k = 10);

}  // namespace chatml
