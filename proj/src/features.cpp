#include "chatml/features.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace chatml {

namespace {

bool is_vowel(char c, std::size_t position) {
    switch (c) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return true;
        case 'y': return position > 0;
        default: return false;
    }
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::optional<double> ratio(double num, double den) {
    if (den == 0.0) return std::nullopt;
    return num / den;
}

std::optional<double> percent(double num, double den) {
    if (den == 0.0) return std::nullopt;
    return 100.0 * num / den;
}

std::optional<double> duration_or_missing(const Transcript& t) {
    try {
        return transcript_duration_sec(t);
    } catch (const ParseError&) {
        return std::nullopt;
    }
}

void flatten(const MorTag& tag, std::vector<const MorTag*>& out) {
    out.push_back(&tag);
    for (const MorTag& c : tag.clitics) flatten(c, out);
}

bool has_affix(const MorTag& tag, std::string_view code) {
    return std::find(tag.suffixes.begin(), tag.suffixes.end(), code) != tag.suffixes.end() ||
           std::find(tag.fusions.begin(), tag.fusions.end(), code) != tag.fusions.end();
}

// Word-token index of every token (-1 for non-words).
std::vector<int> word_positions(const Utterance& u) {
    std::vector<int> pos(u.tokens.size(), -1);
    int w = 0;
    for (std::size_t i = 0; i < u.tokens.size(); ++i) {
        if (u.tokens[i].kind == TokenKind::word) pos[i] = w++;
    }
    return pos;
}

}  // namespace

std::optional<std::size_t> registry_index(std::string_view name) {
    for (std::size_t i = 0; i < kFeatureRegistry.size(); ++i) {
        if (kFeatureRegistry[i] == name) return i;
    }
    return std::nullopt;
}

std::optional<double> PartialFeatures::at(std::string_view name) const {
    const auto it = values.find(name);
    return it == values.end() ? std::nullopt : it->second;
}

std::optional<double> FeatureVector::get(std::string_view name) const {
    const auto idx = registry_index(name);
    if (!idx || *idx >= values.size()) return std::nullopt;
    return values[*idx];
}

std::vector<const Utterance*> target_utterances(const Transcript& t) {
    std::vector<const Utterance*> out;
    for (const Utterance& u : t.utterances) {
        if (u.speaker == kTargetSpeaker) out.push_back(&u);
    }
    return out;
}

int syllable_count(std::string_view word) {
    std::string w;
    for (char c : word) {
        if (c != ':') w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (w.empty() || !std::all_of(w.begin(), w.end(), [](char c) { return c >= 'a' && c <= 'z'; })) return 1;
    int groups = 0;
    std::size_t last_group_start = 0;
    bool in_group = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const bool v = is_vowel(w[i], i);
        if (v && !in_group) {
            ++groups;
            last_group_start = i;
        }
        in_group = v;
    }
    // A lone final 'e' is usually silent ("make"), except after 'l' ("table").
    const std::size_t n = w.size();
    if (groups > 1 && w.back() == 'e' && last_group_start == n - 1 && w[n - 2] != 'l') --groups;
    return std::max(1, groups);
}

PartialFeatures eval_features(const Transcript& t) {
    const auto utts = target_utterances(t);
    if (utts.empty()) throw FeatureError(FeatureErrc::NoParUtterances, t.file_id + ": no PAR utterances");
    PartialFeatures out;
    auto& v = out.values;

    // Lexical and timing features.
    std::size_t words = 0;
    std::size_t word_errors = 0;
    std::size_t utt_errors = 0;
    std::set<std::string> types;
    for (const Utterance* u : utts) {
        if (!u->error_codes.empty()) ++utt_errors;
        for (const Token& tok : u->tokens) {
            word_errors += tok.error_codes.size();
            if (tok.kind != TokenKind::word) continue;
            ++words;
            types.insert(lowercase(tok.surface));
        }
    }
    const auto duration = duration_or_missing(t);
    v["Duration_(sec)"] = duration;
    v["Words_Min"] = duration ? ratio(static_cast<double>(words), *duration / 60.0) : std::nullopt;
    v["FREQ_TTR"] = ratio(static_cast<double>(types.size()), static_cast<double>(words));
    v["%_Word_Errors"] = percent(static_cast<double>(word_errors), static_cast<double>(words));
    v["Utt_Errors"] = static_cast<double>(utt_errors);

    const bool has_mor = std::any_of(utts.begin(), utts.end(), [](const Utterance* u) { return u->mor_tags.has_value(); });
    static constexpr std::array<std::string_view, 19> kMorphFeatures = {
        "MLU_Utts", "MLU_Morphemes", "Verbs_Utt", "density", "%_Nouns", "%_Plurals", "%_Verbs",
        "%_Aux", "%_Mod", "%_3S", "%_13S", "%_PAST", "%_PASTP", "%_PRESP", "%_prep", "%_adj",
        "%_adv", "%_conj", "%_det"};
    if (!has_mor) {
        for (std::string_view name : kMorphFeatures) v[std::string(name)] = std::nullopt;
        for (std::string_view name : {"%_pro", "noun_verb", "Content_words_ratio", "Function_words_ratio"}) {
            v[std::string(name)] = std::nullopt;
        }
        out.notes.push_back("MissingMorphology: no %mor tiers, morphology features missing");
        return out;
    }

    std::size_t mlu_utts = 0;
    std::size_t mlu_morphemes = 0;
    std::size_t tagged = 0;
    std::size_t nouns = 0, verbs = 0, aux = 0, mod = 0, prep = 0, adj = 0, adv = 0, conj = 0, det = 0, pro = 0;
    std::size_t pl = 0, s3 = 0, s13 = 0, past = 0, pastp = 0, presp = 0;
    for (const Utterance* u : utts) {
        if (!u->mor_tags) continue;
        const bool unintelligible_only = std::all_of(u->tokens.begin(), u->tokens.end(), [](const Token& tok) {
            return tok.kind == TokenKind::unintelligible || tok.kind == TokenKind::unfilled_pause;
        });
        if (!u->mor_tags->empty() && !unintelligible_only) {
            ++mlu_utts;
            for (const MorTag& tag : *u->mor_tags) mlu_morphemes += static_cast<std::size_t>(mlu_morpheme_count(tag));
        }
        for (const MorTag& host : *u->mor_tags) {
            // Inflection counts look at the host word; clitics count as tagged words only.
            pl += has_affix(host, "PL");
            s3 += has_affix(host, "3S");
            s13 += has_affix(host, "13S");
            past += has_affix(host, "PAST");
            pastp += has_affix(host, "PASTP");
            presp += has_affix(host, "PRESP");
            std::vector<const MorTag*> flat;
            flatten(host, flat);
            for (const MorTag* tag : flat) {
                ++tagged;
                const std::string_view pos = base_pos(*tag);
                if (pos == "n") ++nouns;
                else if (pos == "v") ++verbs;
                else if (pos == "aux") ++aux;
                else if (pos == "mod") ++mod;
                else if (pos == "prep") ++prep;
                else if (pos == "adj") ++adj;
                else if (pos == "adv") ++adv;
                else if (pos == "conj" || pos == "coord") ++conj;
                else if (pos == "det") ++det;
                else if (pos == "pro") ++pro;
            }
        }
    }
    const double T = static_cast<double>(tagged);
    v["MLU_Utts"] = static_cast<double>(mlu_utts);
    v["MLU_Morphemes"] = ratio(static_cast<double>(mlu_morphemes), static_cast<double>(mlu_utts));
    v["Verbs_Utt"] = ratio(static_cast<double>(verbs), static_cast<double>(utts.size()));
    v["%_Nouns"] = percent(nouns, T);
    v["%_Plurals"] = percent(pl, T);
    v["%_Verbs"] = percent(verbs, T);
    v["%_Aux"] = percent(aux, T);
    v["%_Mod"] = percent(mod, T);
    v["%_3S"] = percent(s3, T);
    v["%_13S"] = percent(s13, T);
    v["%_PAST"] = percent(past, T);
    v["%_PASTP"] = percent(pastp, T);
    v["%_PRESP"] = percent(presp, T);
    v["%_prep"] = percent(prep, T);
    v["%_adj"] = percent(adj, T);
    v["%_adv"] = percent(adv, T);
    v["%_conj"] = percent(conj, T);
    v["%_det"] = percent(det, T);
    v["%_pro"] = percent(pro, T);
    v["noun_verb"] = ratio(nouns, verbs);
    v["density"] = ratio(static_cast<double>(verbs + adj + adv + prep + conj), T);
    const auto content = ratio(static_cast<double>(nouns + verbs + adj + adv), T);
    v["Content_words_ratio"] = content;
    v["Function_words_ratio"] = content ? std::optional<double>(1.0 - *content) : std::nullopt;
    return out;
}

PartialFeatures flucalc_features(const Transcript& t) {
    const auto utts = target_utterances(t);
    if (utts.empty()) throw FeatureError(FeatureErrc::NoParUtterances, t.file_id + ": no PAR utterances");
    PartialFeatures out;
    auto& v = out.values;

    std::size_t syllables = 0;
    std::size_t prolonged = 0, fragments = 0, filled = 0, pauses = 0;
    std::size_t repetitions = 0, retracings = 0, reformulations = 0;
    std::size_t word_revisions = 0, phrase_revisions = 0, phrase_repetitions = 0;
    std::size_t mono_repetitions = 0;
    std::size_t repetition_events = 0;

    for (const Utterance* u : utts) {
        const auto wpos = word_positions(*u);
        // Previous [/] mark in this utterance: (owner word position, scope length).
        int tail_pos = -1;
        int tail_len = 0;
        for (std::size_t i = 0; i < u->tokens.size(); ++i) {
            const Token& tok = u->tokens[i];
            switch (tok.kind) {
                case TokenKind::word:
                    syllables += static_cast<std::size_t>(syllable_count(tok.surface));
                    if (tok.prolonged) ++prolonged;
                    break;
                case TokenKind::phonological_fragment: ++fragments; break;
                case TokenKind::filled_pause: ++filled; break;
                case TokenKind::unfilled_pause: ++pauses; break;
                case TokenKind::unintelligible: break;
            }
            for (const DisfluencyMark& m : tok.trailing_marks) {
                switch (m.kind) {
                    case DisfluencyKind::repetition: {
                        ++repetitions;
                        if (m.scope_len > 1) ++phrase_repetitions;
                        if (m.scope_len == 1 && tok.kind == TokenKind::word && syllable_count(tok.surface) == 1) {
                            ++mono_repetitions;
                        }
                        const int here = wpos[i];
                        const bool continues =
                            here >= 0 && tail_pos >= 0 && tail_len == m.scope_len && tail_pos + m.scope_len == here;
                        if (!continues) ++repetition_events;
                        tail_pos = here;
                        tail_len = m.scope_len;
                        break;
                    }
                    case DisfluencyKind::retracing:
                        ++retracings;
                        if (m.scope_len == 1) ++word_revisions;
                        else ++phrase_revisions;
                        break;
                    case DisfluencyKind::reformulation: ++reformulations; break;
                }
            }
        }
    }

    const double S = static_cast<double>(syllables);
    const auto duration = duration_or_missing(t);
    const std::size_t total_marks = repetitions + retracings + reformulations;
    const std::size_t sld = prolonged + fragments + mono_repetitions;
    const std::size_t td = sld + (total_marks - mono_repetitions) + filled;

    v["mor_Utts"] = static_cast<double>(utts.size());
    v["mor_syllables"] = S;
    v["syllables_min"] = duration ? ratio(S, *duration / 60.0) : std::nullopt;
    v["repetition"] = static_cast<double>(repetitions);
    v["retracing"] = static_cast<double>(retracings + reformulations);
    v["%_Prolongation"] = percent(prolonged, S);
    v["%_Phonological_fragment"] = percent(fragments, S);
    v["%_Filled_pauses"] = percent(filled, S);
    v["%_Pauses"] = percent(pauses, S);
    v["%_Word_revisions"] = percent(word_revisions, S);
    v["%_Phrase_revisions"] = percent(phrase_revisions, S);
    v["%_Phrase_repetitions"] = percent(phrase_repetitions, S);
    v["Mean_RU"] = ratio(static_cast<double>(repetitions), static_cast<double>(repetition_events));
    v["%_TD"] = percent(td, S);
    v["SLD_Ratio"] = ratio(sld, td);
    if (!duration) out.notes.push_back("NoAlignment: duration-dependent features missing");
    return out;
}

FeatureVector extract_features(const Transcript& t, const ItemSet& items) {
    FeatureVector fv;
    fv.file_id = t.file_id;
    fv.values.assign(kFeatureRegistry.size(), std::nullopt);
    auto set = [&](std::string_view name, std::optional<double> value) {
        fv.values[*registry_index(name)] = value;
    };

    if (const Participant* par = t.find_participant(kTargetSpeaker)) {
        set("Age", par->age_years);
        if (par->sex == Sex::male) set("Sex", 0.0);
        else if (par->sex == Sex::female) set("Sex", 1.0);
        if (par->group) fv.group = *par->group;
        else fv.notes.push_back("no group on the PAR @ID header, labelled Uncategorised");
    }

    for (const PartialFeatures& part : {eval_features(t), flucalc_features(t)}) {
        for (const auto& [name, value] : part.values) set(name, value);
        fv.notes.insert(fv.notes.end(), part.notes.begin(), part.notes.end());
    }

    try {
        const IpsynScores s = ipsyn_scores(t, items);
        set("IPSyn_N", s.noun_phrase);
        set("IPSyn_V", s.verb_phrase);
        set("IPSyn_Q", s.question_negation);
        set("IPSyn_S", s.sentence);
    } catch (const IpsynError& e) {
        fv.notes.emplace_back(e.what());
    }
    return fv;
}

}  // namespace chatml
