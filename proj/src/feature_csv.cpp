#include "chatml/feature_csv.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace chatml {

namespace {

std::string quote_if_needed(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string format_number(double value) {
    // %.9g rounds the exact binary value; exact ties go to even under the
    // default rounding mode.
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    std::string s(buf);
    if (s == "-0") s = "0";
    return s;
}

std::vector<std::string> split_csv_record(std::istream& is, bool& ok) {
    std::vector<std::string> fields;
    std::string field;
    ok = false;
    int c = is.get();
    if (c == EOF) return fields;
    ok = true;
    bool quoted = false;
    bool field_started = false;
    while (c != EOF) {
        const char ch = static_cast<char>(c);
        if (quoted) {
            if (ch == '"') {
                if (is.peek() == '"') {
                    field += '"';
                    is.get();
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
            field_started = false;
        } else if (ch == '\n') {
            break;
        } else if (ch == '\r') {
            if (is.peek() == '\n') is.get();
            break;
        } else {
            field += ch;
            field_started = true;
        }
        c = is.get();
    }
    fields.push_back(std::move(field));
    return fields;
}

void write_feature_csv(std::ostream& os, const FeatureMatrix& m) {
    m.validate();
    os << "file_id";
    for (const auto& name : m.feature_names) os << ',' << quote_if_needed(name);
    os << ",Group\r\n";
    for (const auto& row : m.rows) {
        os << quote_if_needed(row.file_id);
        for (const auto& v : row.values) {
            os << ',';
            if (v) os << format_number(*v);
        }
        os << ',' << to_string(row.label) << "\r\n";
    }
}

FeatureMatrix read_feature_csv(std::istream& is) {
    bool ok = false;
    std::vector<std::string> header = split_csv_record(is, ok);
    if (!header.empty() && header[0].substr(0, 3) == "\xEF\xBB\xBF") header[0].erase(0, 3);
    if (!ok || header.size() < 2 || header.front() != "file_id" || header.back() != "Group") {
        throw DatasetError(DatasetErrc::BadCsv, "feature CSV header must start with file_id and end with Group");
    }
    FeatureMatrix m;
    m.feature_names.assign(header.begin() + 1, header.end() - 1);
    std::size_t line = 1;
    while (true) {
        auto fields = split_csv_record(is, ok);
        if (!ok) break;
        ++line;
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != header.size()) {
            throw DatasetError(DatasetErrc::BadCsv, "CSV record " + std::to_string(line) + " has " +
                                                        std::to_string(fields.size()) + " fields, expected " +
                                                        std::to_string(header.size()));
        }
        FeatureRow row;
        row.file_id = fields.front();
        const auto label = parse_class_label(fields.back());
        if (!label) throw DatasetError(DatasetErrc::BadCsv, "CSV record " + std::to_string(line) + ": unknown group '" + fields.back() + "'");
        row.label = *label;
        for (std::size_t j = 1; j + 1 < fields.size(); ++j) {
            if (fields[j].empty()) {
                row.values.emplace_back(std::nullopt);
                continue;
            }
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(fields[j], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != fields[j].size()) {
                throw DatasetError(DatasetErrc::BadCsv, "CSV record " + std::to_string(line) + ": '" + fields[j] + "' is not a number");
            }
            row.values.emplace_back(v);
        }
        m.rows.push_back(std::move(row));
    }
    m.validate();
    return m;
}

void write_feature_csv(const std::string& path, const FeatureMatrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DatasetError(DatasetErrc::BadCsv, "cannot write " + path);
    write_feature_csv(os, m);
}

FeatureMatrix read_feature_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DatasetError(DatasetErrc::BadCsv, "cannot read " + path);
    return read_feature_csv(is);
}

void write_dropped_features(std::ostream& os, const std::vector<DroppedFeature>& dropped) {
    for (const auto& d : dropped) os << quote_if_needed(d.name) << ',' << quote_if_needed(d.kept_partner) << ',' << format_number(d.r) << '\n';
}

}  // namespace chatml
