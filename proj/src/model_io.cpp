#include <fstream>
#include <sstream>

#include "chatml/models.hpp"

namespace chatml {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& what) { throw ModelError(ModelErrc::MalformedModel, "model file: " + what); }

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const json& data = j.at("data");
    if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows)) malformed("matrix row count mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = data[static_cast<std::size_t>(r)];
        if (row.size() != static_cast<std::size_t>(cols)) malformed("matrix column count mismatch");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json tree_to_json(const Tree& tree) {
    json nodes = json::array();
    for (const TreeNode& n : tree.nodes) {
        json node{{"n_train", n.n_train}, {"impurity", n.impurity}};
        if (n.is_leaf()) {
            if (!n.distribution.empty()) node["distribution"] = n.distribution;
            node["value"] = n.value;
        } else {
            node["feature"] = n.feature;
            node["threshold"] = n.threshold;
            node["left"] = n.left;
            node["right"] = n.right;
            node["impurity_decrease_weighted"] = n.impurity_decrease_weighted;
            if (!n.distribution.empty()) node["distribution"] = n.distribution;
            node["value"] = n.value;
        }
        nodes.push_back(std::move(node));
    }
    return nodes;
}

Tree tree_from_json(const json& j) {
    Tree tree;
    if (!j.is_array() || j.empty()) malformed("tree without nodes");
    for (const json& node : j) {
        TreeNode n;
        n.n_train = node.at("n_train").get<double>();
        n.impurity = node.at("impurity").get<double>();
        if (node.contains("distribution")) n.distribution = node.at("distribution").get<std::vector<double>>();
        n.value = node.at("value").get<double>();
        if (node.contains("feature")) {
            n.feature = node.at("feature").get<int>();
            n.threshold = node.at("threshold").get<double>();
            n.left = node.at("left").get<int>();
            n.right = node.at("right").get<int>();
            n.impurity_decrease_weighted = node.at("impurity_decrease_weighted").get<double>();
        }
        tree.nodes.push_back(std::move(n));
    }
    const auto count = static_cast<int>(tree.nodes.size());
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const TreeNode& n = tree.nodes[i];
        if (n.is_leaf()) continue;
        // Children always follow their parent, which also rules out cycles.
        if (n.left <= static_cast<int>(i) || n.right <= static_cast<int>(i) || n.left >= count || n.right >= count) {
            malformed("tree child index out of range");
        }
    }
    return tree;
}

json params_to_json(const KindParams& params) {
    return std::visit(
        [](const auto& p) -> json {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GbtParams>) {
                return {{"colsample_bytree", p.colsample_bytree},
                        {"max_depth", p.max_depth},
                        {"n_estimators", p.n_estimators},
                        {"learning_rate", p.learning_rate}};
            } else if constexpr (std::is_same_v<T, SvcParams>) {
                return {{"C", p.C},
                        {"kernel", p.kernel},
                        {"gamma_mode", p.gamma_mode},
                        {"tolerance", p.tolerance},
                        {"max_passes", p.max_passes}};
            } else if constexpr (std::is_same_v<T, DecisionTreeParams>) {
                return {{"max_depth", p.max_depth}, {"min_samples_split_fraction", p.min_samples_split_fraction}};
            } else if constexpr (std::is_same_v<T, RandomForestParams>) {
                return {{"max_depth", p.max_depth},
                        {"min_samples_split_fraction", p.min_samples_split_fraction},
                        {"n_estimators", p.n_estimators},
                        {"features_per_split_mode", p.features_per_split_mode},
                        {"bootstrap", p.bootstrap}};
            } else if constexpr (std::is_same_v<T, KnnParams>) {
                return {{"k", p.k}, {"distance", p.distance}};
            } else {
                json schedule{{"kind", p.lr_schedule.kind == LrSchedule::Kind::step ? "step" : "constant"}};
                if (p.lr_schedule.kind == LrSchedule::Kind::step) {
                    schedule["factor"] = p.lr_schedule.factor;
                    schedule["every_n_epochs"] = p.lr_schedule.every_n_epochs;
                }
                return {{"layer_widths", p.layer_widths},
                        {"epochs", p.epochs},
                        {"optimizer",
                         {{"name", "adam"},
                          {"learning_rate", p.adam.learning_rate},
                          {"beta1", p.adam.beta1},
                          {"beta2", p.adam.beta2},
                          {"epsilon", p.adam.epsilon}}},
                        {"lr_schedule", schedule},
                        {"dropout_rate", p.dropout_rate},
                        {"batch_size", p.batch_size}};
            }
        },
        params);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ModelError(ModelErrc::InvalidHyperparams, where + " must be an object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || item.key() == a;
        if (!ok) throw ModelError(ModelErrc::InvalidHyperparams, "unknown hyperparameter \"" + item.key() + "\" in " + where);
    }
}

template <typename T>
void assign(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_overrides(const json& j, KindParams& params) {
    std::visit(
        [&](auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GbtParams>) {
                check_keys(j, {"colsample_bytree", "max_depth", "n_estimators", "learning_rate"}, "gbt params");
                assign(j, "colsample_bytree", p.colsample_bytree);
                assign(j, "max_depth", p.max_depth);
                assign(j, "n_estimators", p.n_estimators);
                assign(j, "learning_rate", p.learning_rate);
            } else if constexpr (std::is_same_v<T, SvcParams>) {
                check_keys(j, {"C", "kernel", "gamma_mode", "tolerance", "max_passes"}, "svc params");
                assign(j, "C", p.C);
                assign(j, "kernel", p.kernel);
                assign(j, "gamma_mode", p.gamma_mode);
                assign(j, "tolerance", p.tolerance);
                assign(j, "max_passes", p.max_passes);
            } else if constexpr (std::is_same_v<T, DecisionTreeParams>) {
                check_keys(j, {"max_depth", "min_samples_split_fraction"}, "decision_tree params");
                assign(j, "max_depth", p.max_depth);
                assign(j, "min_samples_split_fraction", p.min_samples_split_fraction);
            } else if constexpr (std::is_same_v<T, RandomForestParams>) {
                check_keys(j, {"max_depth", "min_samples_split_fraction", "n_estimators", "features_per_split_mode", "bootstrap"},
                           "random_forest params");
                assign(j, "max_depth", p.max_depth);
                assign(j, "min_samples_split_fraction", p.min_samples_split_fraction);
                assign(j, "n_estimators", p.n_estimators);
                assign(j, "features_per_split_mode", p.features_per_split_mode);
                assign(j, "bootstrap", p.bootstrap);
            } else if constexpr (std::is_same_v<T, KnnParams>) {
                check_keys(j, {"k", "distance"}, "knn params");
                assign(j, "k", p.k);
                assign(j, "distance", p.distance);
            } else {
                check_keys(j, {"layer_widths", "epochs", "optimizer", "lr_schedule", "dropout_rate", "batch_size"}, "mlp params");
                assign(j, "layer_widths", p.layer_widths);
                assign(j, "epochs", p.epochs);
                assign(j, "dropout_rate", p.dropout_rate);
                assign(j, "batch_size", p.batch_size);
                if (j.contains("optimizer")) {
                    const json& o = j.at("optimizer");
                    check_keys(o, {"name", "learning_rate", "beta1", "beta2", "epsilon"}, "mlp optimizer");
                    if (o.contains("name") && o.at("name").get<std::string>() != "adam") {
                        throw ModelError(ModelErrc::InvalidHyperparams, "mlp: only the adam optimizer is supported");
                    }
                    assign(o, "learning_rate", p.adam.learning_rate);
                    assign(o, "beta1", p.adam.beta1);
                    assign(o, "beta2", p.adam.beta2);
                    assign(o, "epsilon", p.adam.epsilon);
                }
                if (j.contains("lr_schedule")) {
                    const json& s = j.at("lr_schedule");
                    check_keys(s, {"kind", "factor", "every_n_epochs"}, "mlp lr_schedule");
                    if (s.contains("kind")) {
                        const auto kind = s.at("kind").get<std::string>();
                        if (kind == "constant") p.lr_schedule.kind = LrSchedule::Kind::constant;
                        else if (kind == "step") p.lr_schedule.kind = LrSchedule::Kind::step;
                        else throw ModelError(ModelErrc::InvalidHyperparams, "mlp: unknown lr_schedule kind \"" + kind + "\"");
                    }
                    assign(s, "factor", p.lr_schedule.factor);
                    assign(s, "every_n_epochs", p.lr_schedule.every_n_epochs);
                }
            }
        },
        params);
}

json standardization_to_json(const StandardizationParams& s) {
    return {{"feature_names", s.feature_names}, {"median", s.median}, {"mean", s.mean}, {"std", s.std}};
}

StandardizationParams standardization_from_json(const json& j) {
    StandardizationParams s;
    s.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    s.median = j.at("median").get<std::vector<double>>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
    const std::size_t d = s.feature_names.size();
    if (s.median.size() != d || s.mean.size() != d || s.std.size() != d) malformed("standardization length mismatch");
    return s;
}

json layer_to_json(const DenseLayer& l) {
    json j{{"weights", matrix_to_json(l.weights)}, {"bias", vector_to_json(l.bias)}, {"batch_norm", l.batch_norm}};
    if (l.batch_norm) {
        j["gamma"] = vector_to_json(l.gamma);
        j["beta"] = vector_to_json(l.beta);
        j["running_mean"] = vector_to_json(l.running_mean);
        j["running_var"] = vector_to_json(l.running_var);
    }
    return j;
}

DenseLayer layer_from_json(const json& j) {
    DenseLayer l;
    l.weights = matrix_from_json(j.at("weights"));
    l.bias = vector_from_json(j.at("bias"));
    l.batch_norm = j.at("batch_norm").get<bool>();
    if (l.bias.size() != l.weights.rows()) malformed("layer bias width mismatch");
    if (l.batch_norm) {
        l.gamma = vector_from_json(j.at("gamma"));
        l.beta = vector_from_json(j.at("beta"));
        l.running_mean = vector_from_json(j.at("running_mean"));
        l.running_var = vector_from_json(j.at("running_var"));
        const Eigen::Index w = l.weights.rows();
        if (l.gamma.size() != w || l.beta.size() != w || l.running_mean.size() != w || l.running_var.size() != w) {
            malformed("batch-norm width mismatch");
        }
    }
    return l;
}

json learned_to_json(const LearnedParams& learned) {
    return std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DecisionTreeModel>) {
                return {{"tree", tree_to_json(m.tree)}};
            } else if constexpr (std::is_same_v<T, RandomForestModel>) {
                json trees = json::array();
                for (const Tree& t : m.trees) trees.push_back(tree_to_json(t));
                return {{"trees", std::move(trees)}};
            } else if constexpr (std::is_same_v<T, GbtModel>) {
                json rounds = json::array();
                for (const auto& round : m.rounds) {
                    json r = json::array();
                    for (const Tree& t : round) r.push_back(tree_to_json(t));
                    rounds.push_back(std::move(r));
                }
                return {{"initial_scores", m.initial_scores},
                        {"rounds", std::move(rounds)},
                        {"round_features", m.round_features},
                        {"loss_trace", m.loss_trace}};
            } else if constexpr (std::is_same_v<T, SvcModel>) {
                return {{"gamma", m.gamma},
                        {"support_vectors", matrix_to_json(m.support_vectors)},
                        {"dual_coef", m.dual_coef},
                        {"bias", m.bias},
                        {"iterations", m.iterations}};
            } else if constexpr (std::is_same_v<T, KnnModel>) {
                return {{"X", matrix_to_json(m.X)}, {"y", m.y}};
            } else {
                json layers = json::array();
                for (const DenseLayer& l : m.network.layers) layers.push_back(layer_to_json(l));
                return {{"dropout_rate", m.network.dropout_rate},
                        {"layers", std::move(layers)},
                        {"lr_trace", m.lr_trace},
                        {"loss_trace", m.loss_trace}};
            }
        },
        learned);
}

LearnedParams learned_from_json(ModelKind kind, const json& j, std::size_t n_features, std::size_t n_classes) {
    switch (kind) {
        case ModelKind::decision_tree: return DecisionTreeModel{tree_from_json(j.at("tree"))};
        case ModelKind::random_forest: {
            RandomForestModel m;
            for (const json& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
            if (m.trees.empty()) malformed("forest without trees");
            return m;
        }
        case ModelKind::gbt: {
            GbtModel m;
            m.initial_scores = j.at("initial_scores").get<std::vector<double>>();
            for (const json& r : j.at("rounds")) {
                std::vector<Tree> round;
                for (const json& t : r) round.push_back(tree_from_json(t));
                if (round.size() != m.initial_scores.size()) malformed("boosting round width mismatch");
                m.rounds.push_back(std::move(round));
            }
            m.round_features = j.at("round_features").get<std::vector<std::vector<int>>>();
            m.loss_trace = j.at("loss_trace").get<std::vector<double>>();
            const std::size_t expected = n_classes == 2 ? 1 : n_classes;
            if (m.initial_scores.size() != expected) malformed("boosting score width mismatch");
            return m;
        }
        case ModelKind::svc: {
            SvcModel m;
            m.gamma = j.at("gamma").get<double>();
            m.support_vectors = matrix_from_json(j.at("support_vectors"));
            m.dual_coef = j.at("dual_coef").get<std::vector<std::vector<double>>>();
            m.bias = j.at("bias").get<std::vector<double>>();
            m.iterations = j.at("iterations").get<std::vector<int>>();
            const std::size_t expected = n_classes == 2 ? 1 : n_classes;
            if (m.dual_coef.size() != expected || m.bias.size() != expected) malformed("classifier count mismatch");
            for (const auto& c : m.dual_coef) {
                if (c.size() != static_cast<std::size_t>(m.support_vectors.rows())) malformed("dual coefficient count mismatch");
            }
            if (m.support_vectors.rows() > 0 && static_cast<std::size_t>(m.support_vectors.cols()) != n_features) {
                malformed("support vector width mismatch");
            }
            return m;
        }
        case ModelKind::knn: {
            KnnModel m;
            m.X = matrix_from_json(j.at("X"));
            m.y = j.at("y").get<std::vector<int>>();
            if (m.y.size() != static_cast<std::size_t>(m.X.rows())) malformed("knn label count mismatch");
            if (static_cast<std::size_t>(m.X.cols()) != n_features) malformed("knn width mismatch");
            for (int v : m.y) {
                if (v < 0 || static_cast<std::size_t>(v) >= n_classes) malformed("knn label out of range");
            }
            return m;
        }
        case ModelKind::mlp: {
            MlpModel m;
            m.network.dropout_rate = j.at("dropout_rate").get<double>();
            for (const json& l : j.at("layers")) m.network.layers.push_back(layer_from_json(l));
            m.lr_trace = j.at("lr_trace").get<std::vector<double>>();
            m.loss_trace = j.at("loss_trace").get<std::vector<double>>();
            const auto& layers = m.network.layers;
            if (layers.empty()) malformed("network without layers");
            if (static_cast<std::size_t>(layers.front().weights.cols()) != n_features) malformed("network input width mismatch");
            if (static_cast<std::size_t>(layers.back().weights.rows()) != n_classes) malformed("network output width mismatch");
            for (std::size_t i = 1; i < layers.size(); ++i) {
                if (layers[i].weights.cols() != layers[i - 1].weights.rows()) malformed("network layer widths disagree");
            }
            return m;
        }
    }
    malformed("unknown model kind");
}

}  // namespace

json hyperparams_to_json(const Hyperparams& hp) {
    return {{"model_kind", std::string(to_string(hp.kind))},
            {"task", std::string(to_string(hp.task))},
            {"seed", hp.seed},
            {"params", params_to_json(hp.params)}};
}

Hyperparams hyperparams_from_json(const json& j) {
    try {
        check_keys(j, {"model_kind", "task", "seed", "params"}, "hyperparams");
        const auto kind_text = j.at("model_kind").get<std::string>();
        const auto kind = parse_model_kind(kind_text);
        if (!kind) throw ModelError(ModelErrc::InvalidHyperparams, "unknown model_kind \"" + kind_text + "\"");
        const auto task_text = j.at("task").get<std::string>();
        const auto task = parse_task(task_text);
        if (!task) throw ModelError(ModelErrc::InvalidHyperparams, "unknown task \"" + task_text + "\"");
        Hyperparams hp = table3_preset(*kind, *task, j.value("seed", std::uint64_t{0}));
        if (j.contains("params")) apply_overrides(j.at("params"), hp.params);
        hp.validate();
        return hp;
    } catch (const json::exception& e) {
        throw ModelError(ModelErrc::InvalidHyperparams, std::string("hyperparams: ") + e.what());
    }
}

json model_to_json(const TrainedModel& model) {
    json labels = json::array();
    for (ClassLabel c : model.class_labels) labels.push_back(std::string(to_string(c)));
    return {{"format_version", kModelFormatVersion},
            {"model_kind", std::string(to_string(model.hyperparams.kind))},
            {"task", std::string(to_string(model.hyperparams.task))},
            {"seed", model.hyperparams.seed},
            {"hyperparams", hyperparams_to_json(model.hyperparams)},
            {"class_labels", std::move(labels)},
            {"feature_names", model.feature_names},
            {"standardization", standardization_to_json(model.standardization)},
            {"notes", model.notes},
            {"learned", learned_to_json(model.learned)}};
}

TrainedModel model_from_json(const json& j) {
    try {
        if (!j.is_object()) malformed("top level is not an object");
        const int version = j.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw ModelError(ModelErrc::UnknownFormatVersion, "model file: unknown format_version " +
                                                                  std::to_string(version) + " (expected " +
                                                                  std::to_string(kModelFormatVersion) + ")");
        }
        TrainedModel m;
        try {
            m.hyperparams = hyperparams_from_json(j.at("hyperparams"));
        } catch (const ModelError& e) {
            malformed(e.what());
        }
        for (const json& c : j.at("class_labels")) {
            const auto label = parse_class_label(c.get<std::string>());
            if (!label) malformed("unknown class label");
            m.class_labels.push_back(*label);
        }
        if (m.class_labels != task_labels(m.hyperparams.task)) malformed("class labels do not match the task");
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.standardization = standardization_from_json(j.at("standardization"));
        m.notes = j.at("notes").get<std::vector<std::string>>();
        m.learned = learned_from_json(m.hyperparams.kind, j.at("learned"), m.feature_names.size(), m.class_labels.size());
        return m;
    } catch (const json::exception& e) {
        malformed(e.what());
    }
}

std::string dump_model(const TrainedModel& model) { return model_to_json(model).dump(1) + "\n"; }

void save_model(const TrainedModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError(ModelErrc::MalformedModel, "cannot write model file " + path);
    out << dump_model(model);
    if (!out) throw ModelError(ModelErrc::MalformedModel, "failed writing model file " + path);
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError(ModelErrc::MalformedModel, "cannot open model file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    json j;
    try {
        j = json::parse(buf.str());
    } catch (const json::exception& e) {
        malformed(path + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace chatml
