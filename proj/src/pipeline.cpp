#include "chatml/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "chatml/chat.hpp"
#include "chatml/dataset.hpp"
#include "chatml/evaluation.hpp"
#include "chatml/feature_csv.hpp"
#include "chatml/features.hpp"
#include "chatml/ipsyn.hpp"
#include "chatml/models.hpp"

namespace chatml {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void usage(const std::string& what) { throw PipelineError(PipelineErrc::Usage, "config: " + what); }

[[noreturn]] void stage_failure(const std::string& stage, const std::string& what) {
    throw PipelineError(PipelineErrc::StageFailure, stage + ": " + what);
}

std::string out_path(const PipelineConfig& c, const char* name) { return (fs::path(c.output_dir) / name).string(); }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& stage, const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) stage_failure(stage, "cannot write " + path);
}

// Runs `body`, re-tagging library errors with the stage name.
template <typename F>
auto tagged(const std::string& stage, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const PipelineError&) {
        throw;
    } catch (const DatasetError& e) {
        if (e.code() == DatasetErrc::EmptyResult) throw PipelineError(PipelineErrc::EmptyInput, stage + ": " + e.what());
        stage_failure(stage, e.what());
    } catch (const std::exception& e) {
        stage_failure(stage, e.what());
    }
}

FeatureMatrix read_stage_csv(const std::string& stage, const std::string& path) {
    if (!fs::exists(path)) {
        throw PipelineError(PipelineErrc::EmptyInput, stage + ": missing input " + path + " (run the previous stage first)");
    }
    return read_feature_csv(path);
}

json hyperparams_document(const PipelineConfig& c) {
    json hp = c.model;
    hp["task"] = std::string(to_string(c.task));
    hp["seed"] = c.seed;
    return hp;
}

json class_counts_json(const std::vector<std::pair<ClassLabel, std::size_t>>& counts) {
    json j = json::object();
    for (const auto& [label, n] : counts) j[std::string(to_string(label))] = n;
    return j;
}

}  // namespace

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) usage("override \"" + assignment + "\" is not of the form key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &config;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) usage("override key \"" + key + "\" has an empty segment");
        if (!node->is_object()) usage("override key \"" + key + "\" descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

PipelineConfig config_from_json(const json& j) {
    if (!j.is_object()) usage("top level must be an object");
    static const char* const known[] = {"corpus_dir",     "output_dir", "task",  "correlation_threshold",
                                        "test_fraction",  "seed",       "model", "ipsyn_items",
                                        "importance_top_k"};
    for (const auto& item : j.items()) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return item.key() == k; }) ==
            std::end(known)) {
            usage("unknown key \"" + item.key() + "\"");
        }
    }
    PipelineConfig c;
    try {
        c.corpus_dir = j.value("corpus_dir", std::string());
        c.output_dir = j.value("output_dir", std::string());
        const auto task = parse_task(j.value("task", std::string("binary")));
        if (!task) usage("task must be \"binary\" or \"multiclass\"");
        c.task = *task;
        c.correlation_threshold = j.value("correlation_threshold", 0.8);
        c.test_fraction = j.value("test_fraction", 0.2);
        if (!j.contains("seed")) usage("seed is required");
        c.seed = j.at("seed").get<std::uint64_t>();
        c.model = j.value("model", json{{"model_kind", "decision_tree"}});
        if (j.contains("ipsyn_items") && !j.at("ipsyn_items").is_null()) c.ipsyn_items = j.at("ipsyn_items").get<std::string>();
        c.importance_top_k = j.value("importance_top_k", std::size_t{10});
    } catch (const json::exception& e) {
        usage(e.what());
    }
    if (c.corpus_dir.empty()) usage("corpus_dir must be non-empty");
    if (c.output_dir.empty()) usage("output_dir must be non-empty");
    if (!(c.correlation_threshold > 0.0 && c.correlation_threshold <= 1.0)) usage("correlation_threshold must lie in (0, 1]");
    if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) usage("test_fraction must lie in (0, 1)");
    if (c.importance_top_k == 0) usage("importance_top_k must be >= 1");
    if (!c.model.is_object() || !c.model.contains("model_kind")) usage("model must be an object with model_kind");
    for (const auto& item : c.model.items()) {
        if (item.key() != "model_kind" && item.key() != "params") usage("unknown model key \"" + item.key() + "\"");
    }
    try {
        hyperparams_from_json(hyperparams_document(c));
    } catch (const std::exception& e) {
        usage(e.what());
    }
    return c;
}

json config_to_json(const PipelineConfig& c) {
    return {{"corpus_dir", c.corpus_dir},
            {"output_dir", c.output_dir},
            {"task", std::string(to_string(c.task))},
            {"correlation_threshold", c.correlation_threshold},
            {"test_fraction", c.test_fraction},
            {"seed", c.seed},
            {"model", c.model},
            {"ipsyn_items", c.ipsyn_items ? json(*c.ipsyn_items) : json(nullptr)},
            {"importance_top_k", c.importance_top_k}};
}

PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        usage(path + ": " + e.what());
    } catch (const std::exception& e) {
        usage(e.what());
    }
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j);
}

ExtractSummary stage_extract(const PipelineConfig& c) {
    const std::string stage = "extract";
    if (!fs::is_directory(c.corpus_dir)) {
        throw PipelineError(PipelineErrc::EmptyInput, stage + ": corpus directory " + c.corpus_dir + " is not readable");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(c.corpus_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".cha") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw PipelineError(PipelineErrc::EmptyInput, stage + ": no .cha files in " + c.corpus_dir);

    const ItemSet items = tagged(stage, [&] {
        return c.ipsyn_items ? parse_item_set(read_file(*c.ipsyn_items)) : default_item_set();
    });

    std::vector<std::optional<FeatureVector>> results(files.size());
    std::vector<std::string> errors(files.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < files.size(); i = next++) {
            try {
                const Transcript t = parse_transcript(read_file(files[i]), files[i].stem().string());
                results[i] = extract_features(t, items);
            } catch (const std::exception& e) {
                errors[i] = files[i].filename().string() + ": " + e.what();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 16);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::min(n_threads, files.size()); ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    ExtractSummary s;
    s.files = files.size();
    std::vector<FeatureVector> vectors;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (results[i]) vectors.push_back(std::move(*results[i]));
        else s.errors.push_back(errors[i]);
    }
    std::sort(vectors.begin(), vectors.end(), [](const auto& a, const auto& b) { return a.file_id < b.file_id; });
    s.rows = vectors.size();

    tagged(stage, [&] {
        fs::create_directories(c.output_dir);
        std::string log;
        for (const auto& e : s.errors) log += e + "\n";
        write_file(stage, out_path(c, "extract_errors.txt"), log);
        if (!vectors.empty()) write_feature_csv(out_path(c, "features.csv"), make_feature_matrix(vectors));
        return 0;
    });
    if (vectors.empty()) {
        throw PipelineError(PipelineErrc::EmptyInput, stage + ": none of the " + std::to_string(files.size()) +
                                                          " transcripts could be processed (see extract_errors.txt)");
    }
    return s;
}

SelectSummary stage_select(const PipelineConfig& c) {
    const std::string stage = "select";
    return tagged(stage, [&] {
        const FeatureMatrix all = read_stage_csv(stage, out_path(c, "features.csv"));
        SelectSummary s;
        s.rows_in = all.rows.size();
        const FeatureMatrix kept = filter_groups(all, c.task);
        s.rows_kept = kept.rows.size();
        s.class_counts = class_counts(kept);
        const PruneResult pruned = prune_correlated(kept, c.correlation_threshold);
        s.kept_features = pruned.matrix.feature_names;
        s.dropped = json::array();
        for (const auto& d : pruned.dropped) s.dropped.push_back({{"name", d.name}, {"kept_partner", d.kept_partner}, {"r", d.r}});
        write_feature_csv(out_path(c, "selected.csv"), pruned.matrix);
        std::ostringstream dropped;
        write_dropped_features(dropped, pruned.dropped);
        write_file(stage, out_path(c, "dropped_features.txt"), dropped.str());
        return s;
    });
}

SplitSummary stage_split(const PipelineConfig& c) {
    const std::string stage = "split";
    return tagged(stage, [&] {
        const FeatureMatrix m = read_stage_csv(stage, out_path(c, "selected.csv"));
        const SplitResult split = stratified_split(m, c.test_fraction, c.seed);
        write_feature_csv(out_path(c, "train.csv"), split.train);
        write_feature_csv(out_path(c, "test.csv"), split.test);
        return SplitSummary{split.train.rows.size(), split.test.rows.size(), split.warnings};
    });
}

TrainSummary stage_train(const PipelineConfig& c) {
    const std::string stage = "train";
    return tagged(stage, [&] {
        const FeatureMatrix train = read_stage_csv(stage, out_path(c, "train.csv"));
        FeatureMatrix no_rows;
        no_rows.feature_names = train.feature_names;
        const PreparedSplit prepared = impute_and_standardize(train, no_rows);
        const Hyperparams hp = hyperparams_from_json(hyperparams_document(c));
        const Eigen::MatrixXd X = design_matrix(prepared.train);
        const std::vector<int> y = label_indices(prepared.train, task_labels(c.task));
        TrainedModel model = train_model(X, y, hp);
        model.feature_names = prepared.train.feature_names;
        model.standardization = prepared.params;
        for (const auto& name : prepared.dropped_all_missing) model.notes.push_back("AllMissingFeature: " + name);
        save_model(model, out_path(c, "model.json"));
        return TrainSummary{prepared.dropped_all_missing, model.notes};
    });
}

EvaluateSummary stage_evaluate(const PipelineConfig& c) {
    const std::string stage = "evaluate";
    return tagged(stage, [&] {
        if (!fs::exists(out_path(c, "model.json"))) {
            throw PipelineError(PipelineErrc::EmptyInput, stage + ": missing model.json (run train first)");
        }
        const TrainedModel model = load_model(out_path(c, "model.json"));
        const FeatureMatrix test = read_stage_csv(stage, out_path(c, "test.csv"));
        const FeatureMatrix standardized = apply_standardization(model.standardization, test);
        const Prediction pred = predict(model, design_matrix(standardized));
        const ConfusionMatrix cm = confusion_matrix(label_indices(standardized, model.class_labels), pred.labels, model.class_labels);
        const MetricsReport m = metrics(cm);
        write_file(stage, out_path(c, "report.json"), evaluation_report_json(model, cm, m).dump(2) + "\n");
        return EvaluateSummary{m.accuracy, static_cast<std::size_t>(cm.total())};
    });
}

ImportanceSummary stage_importance(const PipelineConfig& c) {
    const std::string stage = "importance";
    return tagged(stage, [&] {
        if (!fs::exists(out_path(c, "model.json"))) {
            throw PipelineError(PipelineErrc::EmptyInput, stage + ": missing model.json (run train first)");
        }
        const TrainedModel model = load_model(out_path(c, "model.json"));
        ImportanceSummary s;
        try {
            const ImportanceReport report = impurity_importance(model);
            write_file(stage, out_path(c, "importance.csv"), importance_csv(report, c.importance_top_k));
            s.written = true;
        } catch (const EvalError& e) {
            if (e.code() != EvalErrc::UnsupportedModel) throw;
            s.notice = std::string("UnsupportedModel: ") + e.what();
            std::error_code ec;
            fs::remove(out_path(c, "importance.csv"), ec);
        }
        return s;
    });
}

std::string manifest_timestamp() {
    std::time_t t = std::time(nullptr);
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long long v = std::strtoll(env, &end, 10);
        if (end != nullptr && *end == '\0') t = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

json run_after_extract(const PipelineConfig& c, const std::optional<ExtractSummary>& extract) {
    const SelectSummary sel = stage_select(c);
    const SplitSummary split = stage_split(c);
    const TrainSummary train = stage_train(c);
    const EvaluateSummary eval = stage_evaluate(c);
    const ImportanceSummary imp = stage_importance(c);

    json manifest;
    manifest["tool"] = "chatml";
    manifest["versions"] = {{"chatml", kToolVersion}, {"model_format_version", kModelFormatVersion},
                            {"feature_registry_size", kFeatureRegistry.size()}};
    manifest["timestamp"] = manifest_timestamp();
    manifest["config"] = config_to_json(c);
    manifest["seed"] = c.seed;
    manifest["task"] = std::string(to_string(c.task));
    if (extract) {
        manifest["extract"] = {{"files", extract->files}, {"rows", extract->rows}, {"errors", extract->errors}};
    }
    manifest["rows"] = {{"features_csv", sel.rows_in}, {"after_filter", sel.rows_kept},
                        {"train", split.train_rows}, {"test", split.test_rows}};
    manifest["class_counts"] = class_counts_json(sel.class_counts);
    manifest["kept_features"] = sel.kept_features;
    manifest["dropped_features"] = sel.dropped;
    manifest["dropped_all_missing"] = train.dropped_all_missing;
    manifest["split_warnings"] = split.warnings;
    manifest["model_notes"] = train.notes;
    manifest["evaluation"] = {{"accuracy", round4(eval.accuracy)}, {"n_evaluated", eval.n_evaluated}};
    manifest["importance"] = imp.written ? json("written") : json(imp.notice);
    json outputs = {"selected.csv", "dropped_features.txt", "train.csv", "test.csv", "model.json", "report.json"};
    if (extract) {
        outputs.insert(outputs.begin(), "extract_errors.txt");
        outputs.insert(outputs.begin(), "features.csv");
    }
    if (imp.written) outputs.push_back("importance.csv");
    manifest["outputs"] = outputs;
    write_file("run", out_path(c, "manifest.json"), manifest.dump(2) + "\n");
    return manifest;
}

}  // namespace

json run_stages(const PipelineConfig& c) { return run_after_extract(c, std::nullopt); }

json run_pipeline(const PipelineConfig& c) { return run_after_extract(c, stage_extract(c)); }

}  // namespace chatml
