// chatml: command-line front end for the transcript classification pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "chatml/chat.hpp"
#include "chatml/features.hpp"
#include "chatml/pipeline.hpp"
#include "chatml/synthetic.hpp"

using namespace chatml;

namespace {

struct StageOptions {
    std::string config;
    std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, StageOptions& opts) {
    cmd->add_option("-c,--config", opts.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", opts.overrides, "Override a config key, e.g. --set model.params.C=2.5");
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError(PipelineErrc::EmptyInput, "cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const PipelineError& e) {
        std::cerr << "chatml: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "chatml: " << e.what() << "\n";
        return static_cast<int>(PipelineErrc::StageFailure);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Speech-transcript feature extraction and dementia classification"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    StageOptions opts;
    struct Stage {
        const char* name;
        const char* help;
        std::function<void(const PipelineConfig&)> run;
    };
    const std::vector<Stage> stages = {
        {"extract", "Parse transcripts and write features.csv",
         [](const PipelineConfig& c) {
             const auto s = stage_extract(c);
             std::cout << "extracted " << s.rows << " of " << s.files << " transcripts";
             if (!s.errors.empty()) std::cout << " (" << s.errors.size() << " failures logged to extract_errors.txt)";
             std::cout << "\n";
         }},
        {"select", "Filter groups and prune correlated features",
         [](const PipelineConfig& c) {
             const auto s = stage_select(c);
             std::cout << "kept " << s.rows_kept << " of " << s.rows_in << " rows, " << s.kept_features.size()
                       << " features (" << s.dropped.size() << " dropped)\n";
         }},
        {"split", "Stratified train/test split",
         [](const PipelineConfig& c) {
             const auto s = stage_split(c);
             for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
             std::cout << "train " << s.train_rows << " rows, test " << s.test_rows << " rows\n";
         }},
        {"train", "Impute, standardize and train the configured model",
         [](const PipelineConfig& c) {
             const auto s = stage_train(c);
             for (const auto& n : s.notes) std::cerr << "note: " << n << "\n";
             std::cout << "wrote model.json\n";
         }},
        {"evaluate", "Evaluate model.json on test.csv",
         [](const PipelineConfig& c) {
             const auto s = stage_evaluate(c);
             std::cout << "accuracy " << s.accuracy << " on " << s.n_evaluated << " rows\n";
         }},
        {"importance", "Impurity feature importance of a tree-based model",
         [](const PipelineConfig& c) {
             const auto s = stage_importance(c);
             if (s.written) std::cout << "wrote importance.csv\n";
             else std::cout << "importance skipped: " << s.notice << "\n";
         }},
        {"run", "select, split, train, evaluate, importance and manifest",
         [](const PipelineConfig& c) {
             const auto m = run_stages(c);
             std::cout << "accuracy " << m["evaluation"]["accuracy"] << "; wrote manifest.json\n";
         }},
        {"pipeline", "extract followed by run",
         [](const PipelineConfig& c) {
             const auto m = run_pipeline(c);
             std::cout << "accuracy " << m["evaluation"]["accuracy"] << "; wrote manifest.json\n";
         }},
    };
    std::vector<std::pair<CLI::App*, const Stage*>> stage_cmds;
    for (const Stage& s : stages) {
        CLI::App* cmd = app.add_subcommand(s.name, s.help);
        add_config_options(cmd, opts);
        stage_cmds.emplace_back(cmd, &s);
    }

    SyntheticConfig synth;
    std::string synth_dir;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Write a synthetic CHAT corpus");
    synth_cmd->add_option("-o,--out", synth_dir, "Output directory")->required();
    synth_cmd->add_option("-n,--total", synth.total, "Number of transcripts")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth.seed, "Generator seed");
    synth_cmd->add_flag("--rare-groups", synth.include_rare_groups, "Include Other, Dementia and Uncategorised");

    std::string parse_file;
    bool parse_features = false;
    CLI::App* parse_cmd = app.add_subcommand("parse", "Print a transcript (or its features) as JSON");
    parse_cmd->add_option("file", parse_file, "CHAT file")->required()->check(CLI::ExistingFile);
    parse_cmd->add_flag("--features", parse_features, "Print the feature vector instead");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(PipelineErrc::Usage);
    }

    for (const auto& [cmd, stage] : stage_cmds) {
        if (cmd->parsed()) {
            return run_guarded([&, stage = stage] { stage->run(load_config(opts.config, opts.overrides)); });
        }
    }
    if (synth_cmd->parsed()) {
        return run_guarded([&] {
            const auto corpus = generate_corpus(synth);
            write_corpus(corpus, synth_dir);
            std::cout << "wrote " << corpus.size() << " transcripts to " << synth_dir << "\n";
        });
    }
    if (parse_cmd->parsed()) {
        return run_guarded([&] {
            const Transcript t = parse_transcript(read_text(parse_file), std::filesystem::path(parse_file).stem().string());
            if (!parse_features) {
                std::cout << to_json(t).dump(2) << "\n";
                return;
            }
            const FeatureVector v = extract_features(t, default_item_set());
            nlohmann::json j = nlohmann::json::object();
            for (std::size_t i = 0; i < kFeatureRegistry.size(); ++i) {
                j[std::string(kFeatureRegistry[i])] = v.values[i] ? nlohmann::json(*v.values[i]) : nlohmann::json(nullptr);
            }
            std::cout << nlohmann::json{{"file_id", v.file_id}, {"group", std::string(to_string(v.group))}, {"features", j}, {"notes", v.notes}}.dump(2) << "\n";
        });
    }
    return static_cast<int>(PipelineErrc::Usage);
}
