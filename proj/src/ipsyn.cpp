#include "chatml/ipsyn.hpp"

#include <algorithm>
#include <charconv>

#include "chatml/features.hpp"

namespace chatml {

namespace {

constexpr std::string_view kDefaultItems =
    "# scale\tname\texpression\n"
    "N\tnoun\tpos=n\n"
    "N\tpronoun\tpos=pro\n"
    "N\tdeterminer with noun\tpos=det & pos=n\n"
    "N\tplural suffix\tsuffix=PL\n"
    "N\tadjective with noun\tpos=adj & pos=n\n"
    "V\tverb\tpos=v\n"
    "V\tpreposition\tpos=prep\n"
    "V\tpresent progressive\tpos=aux,lemma=be & suffix=PRESP\n"
    "V\tmodal\tpos=mod\n"
    "V\tpast tense\tsuffix=PAST\n"
    "Q\tquestion intonation\tterm=?\n"
    "Q\tnegation\tlemma=not\n"
    "Q\twh-pronoun\tpos=pro:int\n"
    "Q\tnegated auxiliary\tpos=aux & lemma=not\n"
    "Q\tauxiliary question\tpos=aux & term=?\n"
    "S\tsubject with verb\tpos=pro & pos=v\n"
    "S\tconjunction\tpos=conj\n"
    "S\ttwo verbs\t2*pos=v\n"
    "S\tinfinitive\tpos=inf\n"
    "S\tthird person present\tpos=pro & suffix=3S\n";

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_on(std::string_view s, std::string_view sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t p = s.find(sep, start);
        if (p == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, p - start));
        start = p + sep.size();
    }
}

std::optional<Terminator> parse_terminator(std::string_view s) {
    if (s == "." || s == "period") return Terminator::period;
    if (s == "?" || s == "question") return Terminator::question;
    if (s == "!" || s == "exclamation") return Terminator::exclamation;
    if (s == "+..." || s == "trailing_off") return Terminator::trailing_off;
    return std::nullopt;
}

ItemClause parse_clause(std::string_view text, std::size_t line_no) {
    auto fail = [&](const std::string& why) {
        return IpsynError(IpsynErrc::BadItemLine, "item line " + std::to_string(line_no) + ": " + why);
    };
    ItemClause clause;
    text = trim(text);
    if (text.substr(0, 5) == "term=") {
        clause.terminator = parse_terminator(text.substr(5));
        if (!clause.terminator) throw fail("unknown terminator '" + std::string(text.substr(5)) + "'");
        return clause;
    }
    if (const std::size_t star = text.find('*'); star != std::string_view::npos) {
        int count = 0;
        const std::string_view num = trim(text.substr(0, star));
        const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), count);
        if (ec != std::errc{} || ptr != num.data() + num.size() || count < 1) {
            throw fail("bad count '" + std::string(num) + "'");
        }
        clause.min_count = count;
        text = trim(text.substr(star + 1));
    }
    for (std::string_view m : split_on(text, ",")) {
        m = trim(m);
        const std::size_t eq = m.find('=');
        if (eq == std::string_view::npos || eq + 1 == m.size()) throw fail("matcher '" + std::string(m) + "' needs key=value");
        const std::string_view key = m.substr(0, eq);
        TagMatcher tm;
        if (key == "pos") tm.key = TagMatcher::Key::pos;
        else if (key == "lemma") tm.key = TagMatcher::Key::lemma;
        else if (key == "suffix") tm.key = TagMatcher::Key::suffix;
        else throw fail("unknown matcher key '" + std::string(key) + "'");
        tm.value = std::string(m.substr(eq + 1));
        clause.matchers.push_back(std::move(tm));
    }
    return clause;
}

void flatten(const MorTag& tag, std::vector<const MorTag*>& out) {
    out.push_back(&tag);
    for (const MorTag& c : tag.clitics) flatten(c, out);
}

bool tag_satisfies(const MorTag& tag, const TagMatcher& m) {
    switch (m.key) {
        case TagMatcher::Key::pos: return tag.pos == m.value || base_pos(tag) == m.value;
        case TagMatcher::Key::lemma: return tag.lemma == m.value;
        case TagMatcher::Key::suffix:
            return std::find(tag.suffixes.begin(), tag.suffixes.end(), m.value) != tag.suffixes.end() ||
                   std::find(tag.fusions.begin(), tag.fusions.end(), m.value) != tag.fusions.end();
    }
    return false;
}

std::vector<const Utterance*> scored_utterances(const Transcript& t) {
    std::vector<const Utterance*> out;
    bool any_par = false;
    for (const Utterance* u : target_utterances(t)) {
        any_par = true;
        if (out.size() >= kIpsynUtteranceCap) break;
        if (u->mor_tags && !u->mor_tags->empty()) out.push_back(u);
    }
    if (any_par && out.empty()) {
        bool has_mor = false;
        for (const Utterance* u : target_utterances(t)) has_mor = has_mor || u->mor_tags.has_value();
        if (!has_mor) throw IpsynError(IpsynErrc::MissingMorphology, t.file_id + ": no %mor tiers for IPSyn");
    }
    return out;
}

}  // namespace

ItemSet parse_item_set(std::string_view text) {
    ItemSet items;
    std::size_t line_no = 0;
    for (std::string_view line : split_on(text, "\n")) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty() || trim(line).front() == '#') continue;
        const auto fields = split_on(line, "\t");
        if (fields.size() != 3) {
            throw IpsynError(IpsynErrc::BadItemLine,
                             "item line " + std::to_string(line_no) + ": expected scale<TAB>name<TAB>expression");
        }
        const std::string_view scale = trim(fields[0]);
        if (scale.size() != 1 || std::string_view("NVQS").find(scale[0]) == std::string_view::npos) {
            throw IpsynError(IpsynErrc::BadItemLine,
                             "item line " + std::to_string(line_no) + ": scale must be N, V, Q or S");
        }
        IpsynItem item;
        item.scale = scale[0];
        item.name = std::string(trim(fields[1]));
        item.expression = std::string(trim(fields[2]));
        for (std::string_view clause : split_on(item.expression, " & ")) item.clauses.push_back(parse_clause(clause, line_no));
        items.push_back(std::move(item));
    }
    if (items.empty()) throw IpsynError(IpsynErrc::EmptyItemSet, "item set has no items");
    return items;
}

std::string_view default_item_set_text() { return kDefaultItems; }

const ItemSet& default_item_set() {
    static const ItemSet items = parse_item_set(kDefaultItems);
    return items;
}

bool item_matches(const IpsynItem& item, const Utterance& u) {
    std::vector<const MorTag*> tags;
    if (u.mor_tags) {
        for (const MorTag& tag : *u.mor_tags) flatten(tag, tags);
    }
    for (const ItemClause& clause : item.clauses) {
        if (clause.terminator) {
            if (u.terminator != *clause.terminator) return false;
            continue;
        }
        const auto hits = std::count_if(tags.begin(), tags.end(), [&](const MorTag* tag) {
            return std::all_of(clause.matchers.begin(), clause.matchers.end(),
                               [&](const TagMatcher& m) { return tag_satisfies(*tag, m); });
        });
        if (hits < clause.min_count) return false;
    }
    return true;
}

std::vector<int> ipsyn_item_scores(const Transcript& t, const ItemSet& items) {
    if (items.empty()) throw IpsynError(IpsynErrc::EmptyItemSet, "item set has no items");
    const auto utterances = scored_utterances(t);
    std::vector<int> scores;
    scores.reserve(items.size());
    for (const IpsynItem& item : items) {
        int matched = 0;
        for (const Utterance* u : utterances) {
            if (item_matches(item, *u) && ++matched == 2) break;
        }
        scores.push_back(matched);
    }
    return scores;
}

IpsynScores ipsyn_scores(const Transcript& t, const ItemSet& items) {
    const auto per_item = ipsyn_item_scores(t, items);
    IpsynScores s;
    for (std::size_t i = 0; i < items.size(); ++i) {
        switch (items[i].scale) {
            case 'N': s.noun_phrase += per_item[i]; break;
            case 'V': s.verb_phrase += per_item[i]; break;
            case 'Q': s.question_negation += per_item[i]; break;
            default: s.sentence += per_item[i]; break;
        }
    }
    return s;
}

}  // namespace chatml
