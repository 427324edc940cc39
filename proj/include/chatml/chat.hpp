#pragma once

// Typed document model for the subset of the CHAT transcription format that
// the feature calculators consume, plus the parser that builds it.
//
// Supported on the main tier: [/] [//] [///] with optional <...> grouping,
// &-filler, &+fragment, (.) (..) (...), word-internal ':' prolongation,
// [* code] errors, xxx, and the terminators . ? ! +...
// Everything else in brackets is consumed and reported as a warning.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chatml/class_label.hpp"
#include "chatml/error.hpp"

namespace chatml {

enum class ParseErrc {
    MissingBegin,
    UnknownSpeaker,
    MalformedIdHeader,
    NotAMorWord,
    NoAlignment,
};

using ParseError = Error<ParseErrc>;

enum class Sex { male, female, unknown };

struct Participant {
    std::string code;  // three uppercase letters, e.g. "PAR"
    std::string role;
    std::optional<double> age_years;
    std::optional<Sex> sex;
    std::optional<ClassLabel> group;

    bool operator==(const Participant&) const = default;
};

enum class TokenKind { word, filled_pause, phonological_fragment, unfilled_pause, unintelligible };

enum class DisfluencyKind { repetition, retracing, reformulation };

struct DisfluencyMark {
    DisfluencyKind kind = DisfluencyKind::repetition;
    std::string source;  // "[/]", "[//]" or "[///]"
    int scope_len = 1;   // word tokens covered by the scope, at least 1
    int scope_begin = 0; // index of the first token of the scope in the utterance

    bool operator==(const DisfluencyMark&) const = default;
};

struct Token {
    TokenKind kind = TokenKind::word;
    std::string surface;
    bool prolonged = false;
    std::optional<int> pause_ticks;
    std::vector<DisfluencyMark> trailing_marks;
    std::vector<std::string> error_codes;  // "[* ...]" scoped to this token
    bool mor_excluded = false;            // inside a repetition/retracing scope

    bool operator==(const Token&) const = default;
};

enum class Terminator { period, question, exclamation, trailing_off };

struct TimeAlignment {
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;

    bool operator==(const TimeAlignment&) const = default;
};

struct MorTag {
    std::string pos;
    std::string lemma;
    std::vector<std::string> suffixes;
    std::vector<std::string> fusions;
    std::vector<MorTag> clitics;

    bool operator==(const MorTag&) const = default;
};

/// 1 + suffixes + fusions + morphemes of every clitic.
int morpheme_count(const MorTag& tag);

/// Morphemes as counted for MLU: stems and "-" suffixes, clitics recursively.
/// Fusional "&" features are not separate morphemes.
int mlu_morpheme_count(const MorTag& tag);

/// Part of speech up to the first ':' ("pro:sub" -> "pro").
std::string_view base_pos(const MorTag& tag);

struct Utterance {
    std::string speaker;
    std::vector<Token> tokens;
    Terminator terminator = Terminator::period;
    std::optional<TimeAlignment> time_alignment;
    std::vector<std::string> error_codes;
    std::optional<std::vector<MorTag>> mor_tags;

    bool operator==(const Utterance&) const = default;
};

struct Transcript {
    std::string file_id;
    std::vector<Participant> participants;
    std::optional<std::string> media_name;
    std::vector<Utterance> utterances;
    std::vector<std::string> warnings;

    const Participant* find_participant(std::string_view code) const;

    bool operator==(const Transcript&) const = default;
};

Transcript parse_transcript(std::string_view text, std::string file_id);

/// Throws ParseError{NotAMorWord} for tier items without a '|' (punctuation).
MorTag parse_mor_token(std::string_view s);

/// Span in seconds between the earliest bullet start and the latest bullet end.
double transcript_duration_sec(const Transcript& t);

/// Number of word tokens a %mor tier is expected to cover.
std::size_t mor_aligned_word_count(const Utterance& u);

/// Lexical pieces of a main-tier body. Every non-whitespace byte belongs to
/// exactly one lexeme.
struct Lexeme {
    enum class Kind { atom, group_open, group_close, code, pause, terminator, separator, bullet };
    Kind kind;
    std::string text;
    std::size_t offset;
};

std::vector<Lexeme> lex_main_line(std::string_view body);

/// Normalized main-tier text for an utterance, without the "*CODE:\t" prefix.
std::string format_main_line(const Utterance& u);

/// Normalized CHAT text for a whole transcript.
std::string format_transcript(const Transcript& t);

std::string_view to_string(TokenKind kind);
std::string_view to_string(Terminator terminator);
std::string_view to_string(Sex sex);
std::string_view to_string(DisfluencyKind kind);

std::string format_mor_tag(const MorTag& tag);

nlohmann::json to_json(const Transcript& t);

}  // namespace chatml
