#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <map>

#include "chatml/feature_csv.hpp"
#include "chatml/pipeline.hpp"
#include "chatml/synthetic.hpp"
#include "test_support.hpp"

using namespace chatml;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// One small synthetic corpus shared by the end-to-end cases.
const testing::TempDir& corpus() {
    static const testing::TempDir dir;
    static const bool written = [] {
        SyntheticConfig sc;
        sc.total = 160;
        sc.seed = 11;
        write_corpus(generate_corpus(sc), dir.str());
        return true;
    }();
    (void)written;
    return dir;
}

json base_config(const testing::TempDir& out, const std::string& kind = "decision_tree") {
    return {{"corpus_dir", corpus().str()},
            {"output_dir", (out / "run").string()},
            {"task", "binary"},
            {"seed", 5},
            {"model", {{"model_kind", kind}}}};
}

std::string write_config(const testing::TempDir& dir, const json& config) {
    const fs::path p = dir / "config.json";
    testing::write_file(p, config.dump(2));
    return p.string();
}

std::string cli(const std::string& args) {
    return std::string(CHATML_CLI_PATH) + " " + args + " >/dev/null 2>&1";
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) files[entry.path().filename().string()] = testing::read_file(entry.path());
    return files;
}

PipelineErrc code_of(const std::function<void()>& body) {
    try {
        body();
    } catch (const PipelineError& e) {
        return e.code();
    }
    FAIL("expected a PipelineError");
    return PipelineErrc::Usage;
}

struct EpochGuard {
    EpochGuard() { setenv("SOURCE_DATE_EPOCH", "1700000000", 1); }
    ~EpochGuard() { unsetenv("SOURCE_DATE_EPOCH"); }
};

}  // namespace

TEST_CASE("config overrides") {
    json j = {{"seed", 1}, {"model", {{"model_kind", "svc"}}}};
    apply_override(j, "model.params.C=2.5");
    apply_override(j, "task=multiclass");
    apply_override(j, "corpus_dir=data/x");
    apply_override(j, "model.params.layer_widths=[4,6]");
    CHECK(j["model"]["params"]["C"] == 2.5);
    CHECK(j["task"] == "multiclass");
    CHECK(j["corpus_dir"] == "data/x");
    CHECK(j["model"]["params"]["layer_widths"] == json::array({4, 6}));
    CHECK(code_of([&] { apply_override(j, "no_equals"); }) == PipelineErrc::Usage);
    CHECK(code_of([&] { apply_override(j, "=3"); }) == PipelineErrc::Usage);
    CHECK(code_of([&] { apply_override(j, "task.inner=3"); }) == PipelineErrc::Usage);
    CHECK(code_of([&] { apply_override(j, "model..C=3"); }) == PipelineErrc::Usage);
}

TEST_CASE("config validation") {
    const json good = {{"corpus_dir", "c"}, {"output_dir", "o"}, {"seed", 3}};
    const PipelineConfig c = config_from_json(good);
    CHECK(c.task == Task::binary);
    CHECK(c.correlation_threshold == 0.8);
    CHECK(c.test_fraction == 0.2);
    CHECK(c.importance_top_k == 10);
    CHECK(c.model["model_kind"] == "decision_tree");
    CHECK(config_from_json(config_to_json(c)).seed == 3);
    CHECK(config_to_json(config_from_json(config_to_json(c))) == config_to_json(c));

    auto with = [&](const std::string& key, const json& v) {
        json j = good;
        j[key] = v;
        return j;
    };
    json no_seed = good;
    no_seed.erase("seed");
    for (const json& bad : {no_seed, with("colour", "red"), with("task", "ternary"), with("correlation_threshold", 0.0),
                            with("correlation_threshold", 1.2), with("test_fraction", 1.0), with("corpus_dir", ""),
                            with("model", json{{"params", json::object()}}),
                            with("model", json{{"model_kind", "xgb"}}),
                            with("model", json{{"model_kind", "knn"}, {"extra", 1}}),
                            with("model", json{{"model_kind", "knn"}, {"params", {{"k", 0}}}}),
                            with("seed", "five")}) {
        CAPTURE(bad.dump());
        CHECK(code_of([&] { config_from_json(bad); }) == PipelineErrc::Usage);
    }
    CHECK(config_from_json(with("correlation_threshold", 1.0)).correlation_threshold == 1.0);

    testing::TempDir dir;
    CHECK(code_of([&] { load_config((dir / "none.json").string(), {}); }) == PipelineErrc::Usage);
    testing::write_file(dir / "bad.json", "{");
    CHECK(code_of([&] { load_config((dir / "bad.json").string(), {}); }) == PipelineErrc::Usage);
    testing::write_file(dir / "ok.json", good.dump());
    CHECK(load_config((dir / "ok.json").string(), {"seed=9", "task=multiclass"}).seed == 9);
}

TEST_CASE("extract: partial failures are logged, not fatal") {
    testing::TempDir dir;
    fs::create_directories(dir / "corpus");
    for (const char* name : {"02_id_header.cha", "14_clitics_mor.cha", "17_error_missing_begin.cha"}) {
        fs::copy_file(testing::fixture_dir() / "chat" / name, dir / "corpus" / name);
    }
    testing::write_file(dir / "corpus" / "notes.txt", "not a transcript");
    json config = base_config(dir);
    config["corpus_dir"] = (dir / "corpus").string();
    const ExtractSummary s = stage_extract(config_from_json(config));
    CHECK(s.files == 3);
    CHECK(s.rows == 2);
    REQUIRE(s.errors.size() == 1);
    CHECK(s.errors[0].rfind("17_error_missing_begin.cha: ", 0) == 0);
    const std::string log = testing::read_file(dir / "run" / "extract_errors.txt");
    CHECK(log == s.errors[0] + "\n");
    const FeatureMatrix m = read_feature_csv((dir / "run" / "features.csv").string());
    CHECK(m.rows.size() == 2);
    CHECK(m.rows[0].file_id == "02_id_header");

    const std::string cfg = write_config(dir, config);
    CHECK(testing::run_command(cli("extract -c " + cfg)) == 0);
}

TEST_CASE("cli exit codes") {
    testing::TempDir dir;
    CHECK(testing::run_command(cli("")) == 1);
    CHECK(testing::run_command(cli("frobnicate")) == 1);
    CHECK(testing::run_command(cli("extract -c " + (dir / "absent.json").string())) == 1);
    CHECK(testing::run_command(cli("--version")) == 0);

    json config = base_config(dir);
    config["seed"] = "x";
    CHECK(testing::run_command(cli("extract -c " + write_config(dir, config))) == 1);

    config = base_config(dir);
    fs::create_directories(dir / "empty");
    config["corpus_dir"] = (dir / "empty").string();
    const std::string cfg = write_config(dir, config);
    CHECK(testing::run_command(cli("extract -c " + cfg)) == 2);
    CHECK(testing::run_command(cli("evaluate -c " + cfg)) == 2);
    CHECK(code_of([&] { stage_select(config_from_json(config)); }) == PipelineErrc::EmptyInput);

    // Only unparseable transcripts: nothing to write.
    fs::copy_file(testing::fixture_dir() / "chat" / "18_error_unknown_speaker.cha", dir / "empty" / "bad.cha");
    CHECK(testing::run_command(cli("extract -c " + cfg)) == 2);

    fs::create_directories(dir / "run");
    testing::write_file(dir / "run" / "features.csv", "file_id,a,Group\nx,oops,Control\n");
    CHECK(testing::run_command(cli("select -c " + cfg)) == 3);
    CHECK(testing::run_command(cli("select -c " + cfg + " --set correlation_threshold=2")) == 1);
}

TEST_CASE("stages compose and the manifest records the run") {
    testing::TempDir dir;
    EpochGuard epoch;
    const PipelineConfig c = config_from_json(base_config(dir));
    const json manifest = run_pipeline(c);
    for (const char* f : {"features.csv", "extract_errors.txt", "selected.csv", "dropped_features.txt", "train.csv",
                          "test.csv", "model.json", "report.json", "importance.csv", "manifest.json"}) {
        CHECK(fs::exists(dir / "run" / f));
    }
    CHECK(manifest["timestamp"] == "2023-11-14T22:13:20Z");
    CHECK(manifest["config"] == config_to_json(c));
    CHECK(manifest["seed"] == 5);
    CHECK(manifest["extract"]["rows"] == 160);
    CHECK(manifest["importance"] == "written");

    // Binary runs keep ProbableAD and Control only.
    const FeatureMatrix features = read_feature_csv((dir / "run" / "features.csv").string());
    std::size_t binary_rows = 0, mci = 0;
    for (const auto& r : features.rows) {
        binary_rows += r.label == ClassLabel::ProbableAD || r.label == ClassLabel::Control;
        mci += r.label == ClassLabel::MCI;
    }
    CHECK(mci > 0);
    CHECK(manifest["rows"]["features_csv"] == 160);
    CHECK(manifest["rows"]["after_filter"] == binary_rows);
    CHECK_FALSE(manifest["class_counts"].contains("MCI"));
    CHECK(manifest["rows"]["train"].get<std::size_t>() + manifest["rows"]["test"].get<std::size_t>() == binary_rows);

    const json report = json::parse(testing::read_file(dir / "run" / "report.json"));
    CHECK(report["confusion_matrix"].size() == 2);
    CHECK(report["n_evaluated"] == manifest["rows"]["test"]);
    const std::string imp = testing::read_file(dir / "run" / "importance.csv");
    CHECK(imp.rfind("feature,importance\n", 0) == 0);
    CHECK(std::count(imp.begin(), imp.end(), '\n') <= 11);

    const auto kept = manifest["kept_features"].get<std::vector<std::string>>();
    const auto dropped = manifest["dropped_features"];
    CHECK(kept.size() + dropped.size() == features.feature_names.size());
    const std::string dropped_txt = testing::read_file(dir / "run" / "dropped_features.txt");
    CHECK(std::count(dropped_txt.begin(), dropped_txt.end(), '\n') == static_cast<long>(dropped.size()));
}

TEST_CASE("reruns are byte-identical and intermediates regenerate") {
    testing::TempDir dir;
    EpochGuard epoch;
    json config = base_config(dir, "random_forest");
    config["model"]["params"] = {{"n_estimators", 12}};
    const std::string cfg = write_config(dir, config);
    REQUIRE(testing::run_command(cli("pipeline -c " + cfg)) == 0);
    const auto first = snapshot(dir / "run");
    REQUIRE(testing::run_command(cli("pipeline -c " + cfg)) == 0);
    CHECK(snapshot(dir / "run") == first);

    for (const char* f : {"features.csv", "selected.csv", "train.csv", "test.csv", "model.json", "report.json"}) {
        fs::remove(dir / "run" / f);
    }
    REQUIRE(testing::run_command(cli("pipeline -c " + cfg)) == 0);
    CHECK(snapshot(dir / "run") == first);

    // Single stages rerun on their own inputs.
    fs::remove(dir / "run" / "report.json");
    REQUIRE(testing::run_command(cli("evaluate -c " + cfg)) == 0);
    CHECK(snapshot(dir / "run") == first);
    REQUIRE(testing::run_command(cli("train -c " + cfg + " --set model.params.n_estimators=13")) == 0);
    CHECK(testing::read_file(dir / "run" / "model.json") != first.at("model.json"));
}

TEST_CASE("knn skips importance with a notice") {
    testing::TempDir dir;
    const PipelineConfig c = config_from_json(base_config(dir, "knn"));
    stage_extract(c);
    fs::create_directories(dir / "run");
    testing::write_file(dir / "run" / "importance.csv", "stale\n");
    const json manifest = run_stages(c);
    CHECK(manifest["importance"].get<std::string>().rfind("UnsupportedModel: ", 0) == 0);
    CHECK_FALSE(fs::exists(dir / "run" / "importance.csv"));
    CHECK_FALSE(manifest.contains("extract"));
}

TEST_CASE("multiclass mlp reports a 6x6 confusion matrix") {
    testing::TempDir dir;
    json config = base_config(dir, "mlp");
    config["task"] = "multiclass";
    config["model"]["params"] = {{"epochs", 3}};
    const json manifest = run_pipeline(config_from_json(config));
    const json report = json::parse(testing::read_file(dir / "run" / "report.json"));
    REQUIRE(report["confusion_matrix"].size() == 6);
    for (const auto& row : report["confusion_matrix"]) CHECK(row.size() == 6);
    CHECK(report["class_labels"].size() == 6);
    CHECK(manifest["class_counts"].size() == 6);
    CHECK(manifest["importance"].get<std::string>().rfind("UnsupportedModel", 0) == 0);
}

TEST_CASE("manifest timestamp") {
    {
        EpochGuard epoch;
        CHECK(manifest_timestamp() == "2023-11-14T22:13:20Z");
    }
    const std::string now = manifest_timestamp();
    CHECK(now.size() == 20);
    CHECK(now[10] == 'T');
    CHECK(now.back() == 'Z');
}
