#include "chatml/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "chatml/feature_csv.hpp"
#include "chatml/features.hpp"

namespace chatml {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

void accumulate_tree(const Tree& tree, std::vector<double>& out) {
    for (const TreeNode& n : tree.nodes) {
        if (!n.is_leaf()) out[static_cast<std::size_t>(n.feature)] += n.impurity_decrease_weighted;
    }
}

}  // namespace

long ConfusionMatrix::total() const {
    long t = 0;
    for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
    return t;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                 const std::vector<ClassLabel>& class_labels) {
    if (y_true.size() != y_pred.size()) {
        throw EvalError(EvalErrc::LengthMismatch, "confusion matrix: " + std::to_string(y_true.size()) +
                                                      " true labels but " + std::to_string(y_pred.size()) + " predictions");
    }
    const std::size_t k = class_labels.size();
    ConfusionMatrix cm{class_labels, std::vector<std::vector<long>>(k, std::vector<long>(k, 0))};
    for (std::size_t t = 0; t < y_true.size(); ++t) {
        const int a = y_true[t];
        const int b = y_pred[t];
        if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= k || static_cast<std::size_t>(b) >= k) {
            throw EvalError(EvalErrc::UnknownLabel, "confusion matrix: label index outside the class list at row " +
                                                        std::to_string(t));
        }
        ++cm.counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }
    return cm;
}

ConfusionMatrix confusion_matrix(const std::vector<ClassLabel>& y_true, const std::vector<ClassLabel>& y_pred,
                                 const std::vector<ClassLabel>& class_labels) {
    auto index = [&](ClassLabel c) {
        const auto it = std::find(class_labels.begin(), class_labels.end(), c);
        if (it == class_labels.end()) {
            throw EvalError(EvalErrc::UnknownLabel, "confusion matrix: label " + std::string(to_string(c)) +
                                                        " is not among the class labels");
        }
        return static_cast<int>(it - class_labels.begin());
    };
    std::vector<int> a;
    std::vector<int> b;
    for (ClassLabel c : y_true) a.push_back(index(c));
    for (ClassLabel c : y_pred) b.push_back(index(c));
    return confusion_matrix(a, b, class_labels);
}

MetricsReport metrics(const ConfusionMatrix& cm) {
    const double total = static_cast<double>(cm.total());
    if (total <= 0.0) throw EvalError(EvalErrc::EmptyMatrix, "metrics: confusion matrix is empty");
    const std::size_t k = cm.counts.size();
    MetricsReport r;
    double trace = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double row = 0.0;
        double col = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            row += static_cast<double>(cm.counts[c][j]);
            col += static_cast<double>(cm.counts[j][c]);
        }
        const double tp = static_cast<double>(cm.counts[c][c]);
        trace += tp;
        ClassMetrics m;
        m.label = cm.class_labels[c];
        m.precision = ratio(tp, col);
        m.recall = ratio(tp, row);
        m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
        m.support = static_cast<long>(row);
        const double w = row / total;
        r.weighted_precision += w * m.precision;
        r.weighted_recall += w * m.recall;
        r.weighted_f1 += w * m.f1;
        r.per_class.push_back(m);
    }
    r.accuracy = trace / total;
    return r;
}

ImportanceReport impurity_importance(const TrainedModel& model) {
    const std::size_t d = model.feature_names.size();
    std::vector<double> raw(d, 0.0);
    std::size_t n_trees = 0;
    std::visit(
        [&](const auto& learned) {
            using T = std::decay_t<decltype(learned)>;
            if constexpr (std::is_same_v<T, DecisionTreeModel>) {
                accumulate_tree(learned.tree, raw);
                n_trees = 1;
            } else if constexpr (std::is_same_v<T, RandomForestModel>) {
                for (const Tree& t : learned.trees) accumulate_tree(t, raw);
                n_trees = learned.trees.size();
            } else if constexpr (std::is_same_v<T, GbtModel>) {
                for (const auto& round : learned.rounds) {
                    for (const Tree& t : round) accumulate_tree(t, raw);
                    n_trees += round.size();
                }
            } else {
                throw EvalError(EvalErrc::UnsupportedModel, "impurity importance is undefined for model kind " +
                                                                std::string(to_string(model.hyperparams.kind)));
            }
        },
        model.learned);
    for (double& v : raw) v /= static_cast<double>(std::max<std::size_t>(n_trees, 1));
    const double sum = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (sum > 0.0) {
        for (double& v : raw) v /= sum;
    }

    // Ties go to registry order; names outside the registry follow, in model order.
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rank = [&](std::size_t i) {
        const auto r = registry_index(model.feature_names[i]);
        return r ? *r : kFeatureRegistry.size() + i;
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (raw[a] != raw[b]) return raw[a] > raw[b];
        return rank(a) < rank(b);
    });
    ImportanceReport report;
    report.model_kind = model.hyperparams.kind;
    report.task = model.hyperparams.task;
    for (std::size_t i : order) report.entries.emplace_back(model.feature_names[i], raw[i]);
    return report;
}

double round4(double v) {
    const double r = std::round(v * 1e4) / 1e4;
    return r == 0.0 ? 0.0 : r;
}

nlohmann::json evaluation_report_json(const TrainedModel& model, const ConfusionMatrix& cm, const MetricsReport& m) {
    nlohmann::json labels = nlohmann::json::array();
    for (ClassLabel c : cm.class_labels) labels.push_back(std::string(to_string(c)));
    nlohmann::json per_class = nlohmann::json::array();
    for (const ClassMetrics& c : m.per_class) {
        per_class.push_back({{"label", std::string(to_string(c.label))},
                             {"precision", round4(c.precision)},
                             {"recall", round4(c.recall)},
                             {"f1", round4(c.f1)},
                             {"support", c.support}});
    }
    return {{"model_kind", std::string(to_string(model.hyperparams.kind))},
            {"task", std::string(to_string(model.hyperparams.task))},
            {"seed", model.hyperparams.seed},
            {"class_labels", labels},
            {"confusion_matrix", cm.counts},
            {"n_evaluated", cm.total()},
            {"accuracy", round4(m.accuracy)},
            {"per_class", per_class},
            {"weighted", {{"precision", round4(m.weighted_precision)}, {"recall", round4(m.weighted_recall)}, {"f1", round4(m.weighted_f1)}}}};
}

std::string importance_csv(const ImportanceReport& report, std::size_t top_k) {
    std::ostringstream out;
    out << "feature,importance\n";
    for (std::size_t i = 0; i < report.entries.size() && i < top_k; ++i) {
        out << report.entries[i].first << ',' << format_number(report.entries[i].second) << '\n';
    }
    return out.str();
}

}  // namespace chatml
