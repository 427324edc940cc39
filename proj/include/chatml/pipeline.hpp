#pragma once

// File-based pipeline stages. Each stage reads and writes only the files
// named below inside output_dir, so any stage can be re-run on its own.
//
//   extract     corpus_dir/*.cha  -> features.csv, extract_errors.txt
//   select      features.csv      -> selected.csv, dropped_features.txt
//   split       selected.csv      -> train.csv, test.csv
//   train       train.csv         -> model.json
//   evaluate    model.json, test.csv -> report.json
//   importance  model.json        -> importance.csv
//   run         select .. importance, then manifest.json
//   pipeline    extract, then run

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chatml/class_label.hpp"
#include "chatml/error.hpp"

namespace chatml {

/// Exit statuses of the command-line tool.
enum class PipelineErrc { Usage = 1, EmptyInput = 2, StageFailure = 3 };
using PipelineError = Error<PipelineErrc>;

inline constexpr const char* kToolVersion = "1.0.0";

struct PipelineConfig {
    std::string corpus_dir;
    std::string output_dir;
    Task task = Task::binary;
    double correlation_threshold = 0.8;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    nlohmann::json model;  // {"model_kind": ..., "params": {...}}
    std::optional<std::string> ipsyn_items;
    std::size_t importance_top_k = 10;
};

/// Applies "dotted.key=value" to a config document; the value is read as
/// JSON when it parses, otherwise as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Validates and converts a config document. Throws PipelineError{Usage}.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& c);

/// Reads a JSON config file and applies the overrides in order.
PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

struct ExtractSummary {
    std::size_t files = 0;
    std::size_t rows = 0;
    std::vector<std::string> errors;  // "<file>: <message>", sorted by file
};

struct SelectSummary {
    std::size_t rows_in = 0;
    std::size_t rows_kept = 0;
    std::vector<std::pair<ClassLabel, std::size_t>> class_counts;
    std::vector<std::string> kept_features;
    nlohmann::json dropped;  // [{name, kept_partner, r}]
};

struct SplitSummary {
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::vector<std::string> warnings;
};

struct TrainSummary {
    std::vector<std::string> dropped_all_missing;
    std::vector<std::string> notes;
};

struct EvaluateSummary {
    double accuracy = 0.0;
    std::size_t n_evaluated = 0;
};

struct ImportanceSummary {
    bool written = false;
    std::string notice;  // set when the stage was skipped
};

ExtractSummary stage_extract(const PipelineConfig& c);
SelectSummary stage_select(const PipelineConfig& c);
SplitSummary stage_split(const PipelineConfig& c);
TrainSummary stage_train(const PipelineConfig& c);
EvaluateSummary stage_evaluate(const PipelineConfig& c);
ImportanceSummary stage_importance(const PipelineConfig& c);

/// select .. importance, then manifest.json. Returns the manifest.
nlohmann::json run_stages(const PipelineConfig& c);

/// extract, then run_stages.
nlohmann::json run_pipeline(const PipelineConfig& c);

/// ISO-8601 UTC time from SOURCE_DATE_EPOCH when set, otherwise the clock.
std::string manifest_timestamp();

}  // namespace chatml
