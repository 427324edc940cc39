#include "chatml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "chatml/rng.hpp"

namespace chatml {

void FeatureMatrix::validate() const {
    std::set<std::string_view> seen;
    for (const auto& name : feature_names) {
        if (!seen.insert(name).second) throw DatasetError(DatasetErrc::ShapeMismatch, "duplicate feature name '" + name + "'");
    }
    for (const auto& row : rows) {
        if (row.values.size() != feature_names.size()) {
            throw DatasetError(DatasetErrc::ShapeMismatch, "row '" + row.file_id + "' has " +
                                                               std::to_string(row.values.size()) + " values, expected " +
                                                               std::to_string(feature_names.size()));
        }
    }
}

std::optional<std::size_t> FeatureMatrix::feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
        if (feature_names[i] == name) return i;
    }
    return std::nullopt;
}

FeatureMatrix FeatureMatrix::select(const std::vector<std::string>& names) const {
    std::vector<std::size_t> cols;
    for (const auto& name : names) {
        const auto idx = feature_index(name);
        if (!idx) throw DatasetError(DatasetErrc::ShapeMismatch, "feature '" + name + "' not in matrix");
        cols.push_back(*idx);
    }
    FeatureMatrix out;
    out.feature_names = names;
    out.rows.reserve(rows.size());
    for (const auto& row : rows) {
        FeatureRow r{row.file_id, {}, row.label};
        r.values.reserve(cols.size());
        for (std::size_t c : cols) r.values.push_back(row.values[c]);
        out.rows.push_back(std::move(r));
    }
    return out;
}

FeatureMatrix make_feature_matrix(const std::vector<FeatureVector>& vectors) {
    FeatureMatrix m;
    m.feature_names.assign(kFeatureRegistry.begin(), kFeatureRegistry.end());
    for (const auto& fv : vectors) m.rows.push_back({fv.file_id, fv.values, fv.group});
    m.validate();
    return m;
}

FeatureMatrix filter_groups(const FeatureMatrix& m, Task task) {
    const auto keep = task_labels(task);
    FeatureMatrix out;
    out.feature_names = m.feature_names;
    for (const auto& row : m.rows) {
        if (std::find(keep.begin(), keep.end(), row.label) != keep.end()) out.rows.push_back(row);
    }
    if (out.rows.empty()) {
        throw DatasetError(DatasetErrc::EmptyResult, "no rows left after keeping the " + std::string(to_string(task)) + " groups");
    }
    return out;
}

std::vector<std::pair<ClassLabel, std::size_t>> class_counts(const FeatureMatrix& m) {
    std::vector<std::pair<ClassLabel, std::size_t>> out;
    for (ClassLabel label : kAllClassLabels) {
        const auto n = static_cast<std::size_t>(
            std::count_if(m.rows.begin(), m.rows.end(), [&](const FeatureRow& r) { return r.label == label; }));
        if (n > 0) out.emplace_back(label, n);
    }
    return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) return 0.0;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationMatrix pearson_correlation_matrix(const FeatureMatrix& m) {
    m.validate();
    const std::size_t d = m.feature_names.size();
    CorrelationMatrix c;
    c.names = m.feature_names;
    c.values.assign(d * d, 0.0);
    c.constant.assign(d, false);
    for (std::size_t j = 0; j < d; ++j) {
        std::optional<double> first;
        bool varies = false;
        std::size_t present = 0;
        for (const auto& row : m.rows) {
            if (!row.values[j]) continue;
            ++present;
            if (!first) first = row.values[j];
            else if (*row.values[j] != *first) varies = true;
        }
        c.constant[j] = present < 2 || !varies;
    }
    std::vector<double> x, y;
    for (std::size_t i = 0; i < d; ++i) {
        c.values[i * d + i] = 1.0;
        for (std::size_t j = i + 1; j < d; ++j) {
            double r = 0.0;
            if (!c.constant[i] && !c.constant[j]) {
                x.clear();
                y.clear();
                for (const auto& row : m.rows) {
                    if (row.values[i] && row.values[j]) {
                        x.push_back(*row.values[i]);
                        y.push_back(*row.values[j]);
                    }
                }
                r = pearson(x, y);
            }
            c.values[i * d + j] = r;
            c.values[j * d + i] = r;
        }
    }
    return c;
}

PruneResult prune_correlated(const FeatureMatrix& m, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw DatasetError(DatasetErrc::InvalidArgument, "correlation threshold must lie in (0, 1]");
    }
    const CorrelationMatrix corr = pearson_correlation_matrix(m);
    PruneResult out;
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < corr.names.size(); ++j) {
        std::optional<std::size_t> partner;
        for (std::size_t k : kept) {
            if (std::abs(corr.at(j, k)) > threshold) {
                partner = k;
                break;
            }
        }
        if (partner) out.dropped.push_back({corr.names[j], corr.names[*partner], corr.at(j, *partner)});
        else kept.push_back(j);
    }
    std::vector<std::string> names;
    for (std::size_t k : kept) names.push_back(corr.names[k]);
    out.matrix = m.select(names);
    return out;
}

std::size_t stratified_test_count(std::size_t n, double test_fraction) {
    if (n < 2) return 0;
    auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    return std::clamp<std::size_t>(k, 1, n - 1);
}

SplitResult stratified_split(const FeatureMatrix& m, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw DatasetError(DatasetErrc::InvalidArgument, "test fraction must lie in (0, 1)");
    }
    std::vector<bool> in_test(m.rows.size(), false);
    SplitResult out;
    for (std::size_t c = 0; c < kAllClassLabels.size(); ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < m.rows.size(); ++i) {
            if (m.rows[i].label == kAllClassLabels[c]) members.push_back(i);
        }
        if (members.empty()) continue;
        if (members.size() == 1) {
            out.warnings.push_back("ClassTooSmall: class " + std::string(to_string(kAllClassLabels[c])) +
                                   " has one row; it stays in the training set");
            continue;
        }
        Rng rng(derive_seed(seed, c));
        for (std::size_t pick : rng.sample_without_replacement(members.size(), stratified_test_count(members.size(), test_fraction))) {
            in_test[members[pick]] = true;
        }
    }
    out.train.feature_names = m.feature_names;
    out.test.feature_names = m.feature_names;
    for (std::size_t i = 0; i < m.rows.size(); ++i) (in_test[i] ? out.test : out.train).rows.push_back(m.rows[i]);
    return out;
}

PreparedSplit impute_and_standardize(const FeatureMatrix& train, const FeatureMatrix& test) {
    if (train.rows.empty()) throw DatasetError(DatasetErrc::EmptyResult, "empty training set");
    train.validate();
    test.validate();
    if (test.feature_names != train.feature_names) {
        throw DatasetError(DatasetErrc::ShapeMismatch, "train and test columns differ");
    }
    PreparedSplit out;
    StandardizationParams& p = out.params;
    const std::size_t d = train.feature_names.size();
    const double n = static_cast<double>(train.rows.size());
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> present;
        for (const auto& row : train.rows) {
            if (row.values[j]) present.push_back(*row.values[j]);
        }
        if (present.empty()) {
            out.dropped_all_missing.push_back(train.feature_names[j]);
            continue;
        }
        std::sort(present.begin(), present.end());
        const std::size_t k = present.size();
        const double median = k % 2 == 1 ? present[k / 2] : 0.5 * (present[k / 2 - 1] + present[k / 2]);
        double mean = 0.0;
        for (const auto& row : train.rows) mean += row.values[j].value_or(median);
        mean /= n;
        double var = 0.0;
        for (const auto& row : train.rows) {
            const double dlt = row.values[j].value_or(median) - mean;
            var += dlt * dlt;
        }
        p.feature_names.push_back(train.feature_names[j]);
        p.median.push_back(median);
        p.mean.push_back(mean);
        p.std.push_back(std::sqrt(var / n));
    }
    out.train = apply_standardization(p, train);
    out.test = apply_standardization(p, test);
    return out;
}

FeatureMatrix apply_standardization(const StandardizationParams& params, const FeatureMatrix& m) {
    FeatureMatrix out = m.select(params.feature_names);
    for (auto& row : out.rows) {
        for (std::size_t j = 0; j < params.feature_names.size(); ++j) {
            const double raw = row.values[j].value_or(params.median[j]);
            row.values[j] = params.std[j] > 0.0 ? (raw - params.mean[j]) / params.std[j] : 0.0;
        }
    }
    return out;
}

Eigen::MatrixXd design_matrix(const FeatureMatrix& m) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(m.rows.size()), static_cast<Eigen::Index>(m.feature_names.size()));
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        for (std::size_t j = 0; j < m.feature_names.size(); ++j) {
            if (!m.rows[i].values[j]) {
                throw DatasetError(DatasetErrc::InvalidArgument,
                                   "missing value for '" + m.feature_names[j] + "' in row '" + m.rows[i].file_id + "'");
            }
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *m.rows[i].values[j];
        }
    }
    return x;
}

std::vector<int> label_indices(const FeatureMatrix& m, const std::vector<ClassLabel>& labels) {
    std::vector<int> y;
    y.reserve(m.rows.size());
    for (const auto& row : m.rows) {
        const auto it = std::find(labels.begin(), labels.end(), row.label);
        if (it == labels.end()) {
            throw DatasetError(DatasetErrc::InvalidArgument,
                               "row '" + row.file_id + "' has label " + std::string(to_string(row.label)) + " outside the task");
        }
        y.push_back(static_cast<int>(it - labels.begin()));
    }
    return y;
}

}  // namespace chatml
