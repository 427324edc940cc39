#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "chatml/class_label.hpp"
#include "chatml/error.hpp"
#include "chatml/features.hpp"

namespace chatml {

enum class DatasetErrc { EmptyResult, InvalidArgument, ShapeMismatch, BadCsv, AllMissingFeature };
using DatasetError = Error<DatasetErrc>;

struct FeatureRow {
    std::string file_id;
    std::vector<std::optional<double>> values;
    ClassLabel label = ClassLabel::Uncategorised;

    bool operator==(const FeatureRow&) const = default;
};

struct FeatureMatrix {
    std::vector<std::string> feature_names;
    std::vector<FeatureRow> rows;

    /// Throws ShapeMismatch on ragged rows or duplicate names.
    void validate() const;
    std::optional<std::size_t> feature_index(std::string_view name) const;
    /// Copy restricted to the named columns, in the given order.
    FeatureMatrix select(const std::vector<std::string>& names) const;

    bool operator==(const FeatureMatrix&) const = default;
};

FeatureMatrix make_feature_matrix(const std::vector<FeatureVector>& vectors);

/// Keeps the six analysed groups (multiclass) or ProbableAD/Control (binary).
FeatureMatrix filter_groups(const FeatureMatrix& m, Task task);

/// Row count per label, in kAllClassLabels order, zero counts omitted.
std::vector<std::pair<ClassLabel, std::size_t>> class_counts(const FeatureMatrix& m);

struct CorrelationMatrix {
    std::vector<std::string> names;
    std::vector<double> values;  // row-major, names.size()^2
    std::vector<bool> constant;  // zero variance over the present values

    double at(std::size_t i, std::size_t j) const { return values[i * names.size() + j]; }
};

/// Pearson coefficients over pairwise-complete rows. Constant features get
/// r = 0 against every other feature; the diagonal is always 1.
CorrelationMatrix pearson_correlation_matrix(const FeatureMatrix& m);

/// Pearson coefficient of two equally long samples (0 when either is constant).
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct DroppedFeature {
    std::string name;
    std::string kept_partner;
    double r = 0.0;
};

struct PruneResult {
    FeatureMatrix matrix;
    std::vector<DroppedFeature> dropped;
};

/// Greedy pass in column order: a feature survives iff |r| <= threshold
/// against every feature already kept.
PruneResult prune_correlated(const FeatureMatrix& m, double threshold = 0.8);

struct SplitResult {
    FeatureMatrix train;
    FeatureMatrix test;
    std::vector<std::string> warnings;
};

/// Rows moved to the test side for a class of n rows.
std::size_t stratified_test_count(std::size_t n, double test_fraction);

SplitResult stratified_split(const FeatureMatrix& m, double test_fraction, std::uint64_t seed);

struct StandardizationParams {
    std::vector<std::string> feature_names;
    std::vector<double> median;
    std::vector<double> mean;
    std::vector<double> std;  // population standard deviation

    bool operator==(const StandardizationParams&) const = default;
};

struct PreparedSplit {
    FeatureMatrix train;  // dense: every value present
    FeatureMatrix test;
    StandardizationParams params;
    std::vector<std::string> dropped_all_missing;
};

/// Median imputation followed by z-scoring, both fitted on the train rows.
PreparedSplit impute_and_standardize(const FeatureMatrix& train, const FeatureMatrix& test);

/// Applies fitted parameters to a matrix, matching columns by name. Missing
/// values get the fitted median.
FeatureMatrix apply_standardization(const StandardizationParams& params, const FeatureMatrix& m);

/// Dense design matrix; throws InvalidArgument if a value is missing.
Eigen::MatrixXd design_matrix(const FeatureMatrix& m);

/// Class indices into `labels`; throws InvalidArgument on a row outside it.
std::vector<int> label_indices(const FeatureMatrix& m, const std::vector<ClassLabel>& labels);

}  // namespace chatml
