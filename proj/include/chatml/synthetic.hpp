#pragma once

// Synthetic CHAT corpus whose diagnostic signal lives only in the rate of
// present participles (-PRESP) and third-person singular verbs (-3S).
// Every other feature is drawn from class-independent distributions: the
// signal tokens keep their surface form and only swap the %mor suffix for
// one no feature counts (-PERF, -PRES).

#include <cstdint>
#include <string>
#include <vector>

#include "chatml/class_label.hpp"

namespace chatml {

struct SyntheticConfig {
    std::size_t total = 1200;
    std::uint64_t seed = 7;
    /// Also allocate the Other / Dementia / Uncategorised groups.
    bool include_rare_groups = false;
};

struct SyntheticTranscript {
    std::string file_id;
    ClassLabel group = ClassLabel::Control;
    std::string text;  // CHAT document
};

/// Corpus group sizes in the corpus' proportions, scaled to `total` by largest remainder.
std::vector<std::pair<ClassLabel, std::size_t>> table1_allocation(std::size_t total, bool include_rare_groups);

/// Mean per-slot rates (present participle, third singular) planted for a group.
std::pair<double, double> planted_rates(ClassLabel group);

std::vector<SyntheticTranscript> generate_corpus(const SyntheticConfig& config);

/// Writes <file_id>.cha files into `dir`, creating it if needed.
void write_corpus(const std::vector<SyntheticTranscript>& corpus, const std::string& dir);

}  // namespace chatml
