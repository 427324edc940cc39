#pragma once

// Feature table files: RFC 4180 CSV with a header row. Column 1 is
// "file_id", the last column is "Group", the rest are features. Missing
// values are empty fields; numbers carry at most 9 significant digits.

#include <iosfwd>
#include <string>
#include <vector>

#include "chatml/dataset.hpp"

namespace chatml {

std::string format_number(double value);

void write_feature_csv(std::ostream& os, const FeatureMatrix& m);
FeatureMatrix read_feature_csv(std::istream& is);

void write_feature_csv(const std::string& path, const FeatureMatrix& m);
FeatureMatrix read_feature_csv(const std::string& path);

/// Sidecar listing pruned columns as "name,kept_partner,r".
void write_dropped_features(std::ostream& os, const std::vector<DroppedFeature>& dropped);

/// Splits one CSV record; handles quoted fields with doubled quotes.
std::vector<std::string> split_csv_record(std::istream& is, bool& ok);

}  // namespace chatml
