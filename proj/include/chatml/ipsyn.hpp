#pragma once

// IPSyn-style syntactic scoring over %mor tags.
//
// An item set is plain text, one item per line:
//
//     <scale>\t<name>\t<expression>
//
// scale is N, V, Q or S. The expression is a list of clauses joined by " & ";
// every clause must hold somewhere in the utterance. A clause is either
// "term=<terminator>" or an optional "<k>*" count followed by comma-joined
// matchers (pos=..., lemma=..., suffix=...) that a single tag has to satisfy;
// with a count, at least k distinct tags must satisfy them. Blank lines and
// lines starting with '#' are ignored.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chatml/chat.hpp"
#include "chatml/error.hpp"

namespace chatml {

enum class IpsynErrc { BadItemLine, MissingMorphology, EmptyItemSet };
using IpsynError = Error<IpsynErrc>;

struct TagMatcher {
    enum class Key { pos, lemma, suffix };
    Key key;
    std::string value;
};

struct ItemClause {
    int min_count = 1;
    std::vector<TagMatcher> matchers;
    std::optional<Terminator> terminator;
};

struct IpsynItem {
    char scale = 'N';
    std::string name;
    std::string expression;
    std::vector<ItemClause> clauses;
};

using ItemSet = std::vector<IpsynItem>;

ItemSet parse_item_set(std::string_view text);

/// Built-in 20-item set, five items per scale.
std::string_view default_item_set_text();
const ItemSet& default_item_set();

bool item_matches(const IpsynItem& item, const Utterance& u);

struct IpsynScores {
    int noun_phrase = 0;
    int verb_phrase = 0;
    int question_negation = 0;
    int sentence = 0;

    bool operator==(const IpsynScores&) const = default;
};

/// Utterances considered for scoring, at most this many.
inline constexpr std::size_t kIpsynUtteranceCap = 100;

IpsynScores ipsyn_scores(const Transcript& t, const ItemSet& items);

/// Per-item scores (0..2) in item-set order, for reporting and tests.
std::vector<int> ipsyn_item_scores(const Transcript& t, const ItemSet& items);

}  // namespace chatml
