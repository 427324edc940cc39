#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chatml/chat.hpp"
#include "chatml/class_label.hpp"
#include "chatml/error.hpp"
#include "chatml/ipsyn.hpp"

namespace chatml {

/// Canonical feature order. Feature CSV columns follow this order.
inline constexpr std::array<std::string_view, 49> kFeatureRegistry = {
    "Age",
    "Sex",
    "Duration_(sec)",
    "MLU_Utts",
    "MLU_Morphemes",
    "FREQ_TTR",
    "Words_Min",
    "Verbs_Utt",
    "%_Word_Errors",
    "Utt_Errors",
    "density",
    "%_Nouns",
    "%_Plurals",
    "%_Verbs",
    "%_Aux",
    "%_Mod",
    "%_3S",
    "%_13S",
    "%_PAST",
    "%_PASTP",
    "%_PRESP",
    "%_prep",
    "%_adj",
    "%_adv",
    "%_conj",
    "%_det",
    "%_pro",
    "noun_verb",
    "retracing",
    "repetition",
    "mor_Utts",
    "mor_syllables",
    "syllables_min",
    "%_Prolongation",
    "Mean_RU",
    "%_Phonological_fragment",
    "%_Phrase_repetitions",
    "%_Word_revisions",
    "%_Phrase_revisions",
    "%_Pauses",
    "%_Filled_pauses",
    "%_TD",
    "SLD_Ratio",
    "Content_words_ratio",
    "Function_words_ratio",
    "IPSyn_N",
    "IPSyn_V",
    "IPSyn_Q",
    "IPSyn_S",
};

/// Position of a name in kFeatureRegistry, or nullopt.
std::optional<std::size_t> registry_index(std::string_view name);

enum class FeatureErrc { NoParUtterances };
using FeatureError = Error<FeatureErrc>;

/// Some of the registry features; absent keys were not computed, present
/// keys with nullopt are computed-but-missing.
struct PartialFeatures {
    std::map<std::string, std::optional<double>, std::less<>> values;
    std::vector<std::string> notes;

    std::optional<double> at(std::string_view name) const;
};

struct FeatureVector {
    std::string file_id;
    ClassLabel group = ClassLabel::Uncategorised;
    std::vector<std::optional<double>> values;  // kFeatureRegistry order
    std::vector<std::string> notes;

    std::optional<double> get(std::string_view name) const;
};

/// Vowel-group syllable estimate; always >= 1.
int syllable_count(std::string_view word);

PartialFeatures eval_features(const Transcript& t);
PartialFeatures flucalc_features(const Transcript& t);

/// Full registry for one transcript, analysing the "PAR" participant.
FeatureVector extract_features(const Transcript& t, const ItemSet& items);

/// Utterances spoken by the target participant.
std::vector<const Utterance*> target_utterances(const Transcript& t);

inline constexpr std::string_view kTargetSpeaker = "PAR";

}  // namespace chatml
