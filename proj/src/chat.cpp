#include "chatml/chat.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace chatml {

namespace {

constexpr std::string_view kMiddleDot = "\xC2\xB7";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t p = s.find(sep, start);
        if (p == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, p - start));
        start = p + 1;
    }
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        const std::size_t start = i;
        while (i < s.size() && !is_space(s[i])) ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    Int value{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
    return value;
}

bool is_terminator_text(std::string_view s) {
    if (s == "." || s == "?" || s == "!") return true;
    if (s.size() >= 2 && s.front() == '+') {
        const char last = s.back();
        return last == '.' || last == '?' || last == '!';
    }
    return false;
}

bool is_pause_body(std::string_view inner) {
    if (inner.empty()) return false;
    return std::all_of(inner.begin(), inner.end(), [](char c) {
        return c == '.' || c == ':' || std::isdigit(static_cast<unsigned char>(c));
    });
}

bool is_atom_end(std::string_view body, std::size_t i) {
    const char c = body[i];
    if (is_space(c) || c == '[' || c == '<' || c == '>' || c == ',' || c == '\x15') return true;
    return body.substr(i, kMiddleDot.size()) == kMiddleDot;
}

// ---------------------------------------------------------------------------
// Main tier

struct AtomResult {
    std::optional<Token> token;
    std::string warning;
};

const std::set<std::string, std::less<>> kLegacyFillers = {"uh", "um", "er", "ah", "eh", "hm", "mm", "uhm", "erm"};

std::string strip_chars(std::string_view s, std::string_view drop) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (drop.find(c) == std::string_view::npos) out.push_back(c);
    }
    return out;
}

AtomResult classify_atom(std::string_view atom) {
    AtomResult r;
    if (atom.size() >= 2 && atom[0] == '&' && (atom[1] == '-' || atom[1] == '+')) {
        std::string surface = strip_chars(atom.substr(2), ":");
        if (surface.empty()) {
            r.warning = "empty filler/fragment '" + std::string(atom) + "' discarded";
            return r;
        }
        Token t;
        t.kind = atom[1] == '-' ? TokenKind::filled_pause : TokenKind::phonological_fragment;
        t.surface = std::move(surface);
        r.token = std::move(t);
        return r;
    }
    if (atom.size() >= 2 && atom[0] == '&' && is_alpha(atom[1])) {
        // Older transcripts mark fillers and fragments with a bare '&'.
        Token t;
        t.surface = strip_chars(atom.substr(1), ":");
        t.kind = kLegacyFillers.count(t.surface) != 0 ? TokenKind::filled_pause
                                                        : TokenKind::phonological_fragment;
        r.token = std::move(t);
        return r;
    }
    if (atom[0] == '&') {
        r.warning = "unsupported code '" + std::string(atom) + "' discarded";
        return r;
    }
    if (atom == "xxx" || atom == "yyy" || atom == "www") {
        Token t;
        t.kind = TokenKind::unintelligible;
        t.surface = std::string(atom);
        r.token = std::move(t);
        return r;
    }
    if (atom[0] == '0' || atom[0] == '+') {
        r.warning = "unsupported form '" + std::string(atom) + "' discarded";
        return r;
    }
    if (std::none_of(atom.begin(), atom.end(), is_alnum)) {
        r.warning = "stray punctuation '" + std::string(atom) + "' discarded";
        return r;
    }
    Token t;
    t.kind = TokenKind::word;
    for (char c : atom) {
        if (c == '@') break;
        if (c == ':') {
            t.prolonged = true;
            continue;
        }
        if (c == '(' || c == ')') continue;
        t.surface.push_back(c);
    }
    if (std::none_of(t.surface.begin(), t.surface.end(), is_alnum)) {
        r.warning = "word '" + std::string(atom) + "' has no letters, discarded";
        return r;
    }
    r.token = std::move(t);
    return r;
}

std::optional<TimeAlignment> parse_bullet(std::string_view bullet) {
    std::string_view inner = bullet;
    if (inner.substr(0, 1) == "\x15") {
        inner.remove_prefix(1);
        if (!inner.empty() && inner.back() == '\x15') inner.remove_suffix(1);
    } else if (inner.substr(0, kMiddleDot.size()) == kMiddleDot) {
        inner.remove_prefix(kMiddleDot.size());
        if (inner.size() >= kMiddleDot.size() && inner.substr(inner.size() - kMiddleDot.size()) == kMiddleDot) {
            inner.remove_suffix(kMiddleDot.size());
        }
    }
    const std::size_t us = inner.find('_');
    if (us == std::string_view::npos) return std::nullopt;
    const auto start = parse_int<std::int64_t>(inner.substr(0, us));
    const auto end = parse_int<std::int64_t>(inner.substr(us + 1));
    if (!start || !end || *start < 0 || *end < *start) return std::nullopt;
    return TimeAlignment{*start, *end};
}

struct Scope {
    std::size_t begin;
    std::size_t end;
};

void apply_code(std::string_view code, Utterance& u, const std::optional<Scope>& scope, bool terminated,
                std::vector<std::string>& warnings, std::size_t line_no) {
    auto warn = [&](const std::string& msg) {
        warnings.push_back("line " + std::to_string(line_no) + ": " + msg);
    };
    const std::string_view inner = trim(code.substr(1, code.size() >= 2 ? code.size() - 2 : 0));
    if (!inner.empty() && inner.front() == '*') {
        std::string err(trim(inner.substr(1)));
        if (scope && !terminated) u.tokens[scope->end - 1].error_codes.push_back(err);
        u.error_codes.push_back(std::move(err));
        return;
    }
    std::optional<DisfluencyKind> kind;
    if (code == "[/]") kind = DisfluencyKind::repetition;
    else if (code == "[//]") kind = DisfluencyKind::retracing;
    else if (code == "[///]") kind = DisfluencyKind::reformulation;
    if (!kind) {
        warn("unsupported code '" + std::string(code) + "' discarded");
        return;
    }
    if (!scope || terminated) {
        warn("'" + std::string(code) + "' without a preceding scope discarded");
        return;
    }
    DisfluencyMark mark;
    mark.kind = *kind;
    mark.source = std::string(code);
    int words = 0;
    for (std::size_t i = scope->begin; i < scope->end; ++i) {
        if (u.tokens[i].kind == TokenKind::word) {
            ++words;
            u.tokens[i].mor_excluded = true;
        }
    }
    mark.scope_len = std::max(1, words);
    mark.scope_begin = static_cast<int>(scope->begin);
    u.tokens[scope->end - 1].trailing_marks.push_back(std::move(mark));
}

Utterance parse_main_tier(std::string speaker, std::string_view body, std::vector<std::string>& warnings,
                          std::size_t line_no) {
    auto warn = [&](const std::string& msg) {
        warnings.push_back("line " + std::to_string(line_no) + ": " + msg);
    };
    Utterance u;
    u.speaker = std::move(speaker);
    std::vector<std::size_t> groups;
    std::optional<Scope> scope;
    bool terminated = false;

    for (const Lexeme& lx : lex_main_line(body)) {
        if (terminated && lx.kind != Lexeme::Kind::code && lx.kind != Lexeme::Kind::bullet) {
            warn("'" + lx.text + "' after terminator ignored");
            continue;
        }
        switch (lx.kind) {
            case Lexeme::Kind::atom: {
                AtomResult r = classify_atom(lx.text);
                if (r.token) {
                    u.tokens.push_back(std::move(*r.token));
                    scope = Scope{u.tokens.size() - 1, u.tokens.size()};
                } else {
                    warn(r.warning);
                    scope.reset();
                }
                break;
            }
            case Lexeme::Kind::group_open:
                groups.push_back(u.tokens.size());
                scope.reset();
                break;
            case Lexeme::Kind::group_close:
                if (groups.empty()) {
                    warn("unmatched '>' ignored");
                    scope.reset();
                    break;
                }
                if (groups.back() == u.tokens.size()) {
                    warn("empty <...> group ignored");
                    scope.reset();
                } else {
                    scope = Scope{groups.back(), u.tokens.size()};
                }
                groups.pop_back();
                break;
            case Lexeme::Kind::code:
                if (lx.text.size() < 2 || lx.text.back() != ']') {
                    warn("unterminated code '" + lx.text + "' discarded");
                    break;
                }
                apply_code(lx.text, u, scope, terminated, warnings, line_no);
                break;
            case Lexeme::Kind::pause: {
                const std::string_view inner = std::string_view(lx.text).substr(1, lx.text.size() - 2);
                if (std::all_of(inner.begin(), inner.end(), [](char c) { return c == '.'; }) && inner.size() <= 3) {
                    Token t;
                    t.kind = TokenKind::unfilled_pause;
                    t.surface = lx.text;
                    t.pause_ticks = static_cast<int>(inner.size());
                    u.tokens.push_back(std::move(t));
                    scope = Scope{u.tokens.size() - 1, u.tokens.size()};
                } else {
                    warn("timed pause '" + lx.text + "' discarded");
                    scope.reset();
                }
                break;
            }
            case Lexeme::Kind::terminator:
                if (lx.text == ".") u.terminator = Terminator::period;
                else if (lx.text == "?") u.terminator = Terminator::question;
                else if (lx.text == "!") u.terminator = Terminator::exclamation;
                else if (lx.text == "+...") u.terminator = Terminator::trailing_off;
                else {
                    warn("terminator '" + lx.text + "' read as '.'");
                    u.terminator = Terminator::period;
                }
                terminated = true;
                scope.reset();
                break;
            case Lexeme::Kind::separator:
                scope.reset();
                break;
            case Lexeme::Kind::bullet: {
                const auto ta = parse_bullet(lx.text);
                if (!ta) warn("malformed time bullet ignored");
                else if (u.time_alignment) warn("extra time bullet ignored");
                else u.time_alignment = ta;
                break;
            }
        }
    }
    if (!groups.empty()) warn("unclosed '<' group");
    if (!terminated) warn("utterance without terminator, '.' assumed");
    return u;
}

// ---------------------------------------------------------------------------
// Headers

std::optional<double> parse_age(std::string_view field) {
    field = trim(field);
    if (field.empty()) return std::nullopt;
    const std::size_t semi = field.find(';');
    const auto years = parse_int<int>(field.substr(0, semi));
    if (!years) return std::nullopt;
    double age = *years;
    if (semi != std::string_view::npos) {
        std::string_view rest = field.substr(semi + 1);
        const std::size_t dot = rest.find('.');
        const auto months = parse_int<int>(rest.substr(0, dot));
        if (months && *months >= 0 && *months < 12) age += *months / 12.0;
    }
    return age;
}

std::string format_age(double age) {
    const double whole = std::floor(age);
    const int months = static_cast<int>(std::lround((age - whole) * 12.0));
    std::string out = std::to_string(static_cast<long long>(whole)) + ";";
    if (months > 0) {
        out += (months < 10 ? "0" : "") + std::to_string(months) + ".";
    }
    return out;
}

bool valid_participant_code(std::string_view code) {
    return code.size() == 3 && std::all_of(code.begin(), code.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
}

// Splits "@Name:\tvalue" / "*ABC:\tvalue" / "%mor:\tvalue".
std::pair<std::string_view, std::string_view> split_tier(std::string_view line) {
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) return {trim(line), {}};
    return {line.substr(0, colon), trim(line.substr(colon + 1))};
}

}  // namespace

// ---------------------------------------------------------------------------

int morpheme_count(const MorTag& tag) {
    int n = 1 + static_cast<int>(tag.suffixes.size() + tag.fusions.size());
    for (const MorTag& c : tag.clitics) n += morpheme_count(c);
    return n;
}

int mlu_morpheme_count(const MorTag& tag) {
    int n = 1 + static_cast<int>(tag.suffixes.size());
    for (const MorTag& c : tag.clitics) n += mlu_morpheme_count(c);
    return n;
}

std::string_view base_pos(const MorTag& tag) {
    const std::string_view pos = tag.pos;
    return pos.substr(0, pos.find(':'));
}

const Participant* Transcript::find_participant(std::string_view code) const {
    for (const Participant& p : participants) {
        if (p.code == code) return &p;
    }
    return nullptr;
}

std::size_t mor_aligned_word_count(const Utterance& u) {
    return static_cast<std::size_t>(std::count_if(u.tokens.begin(), u.tokens.end(), [](const Token& t) {
        return t.kind == TokenKind::word && !t.mor_excluded;
    }));
}

std::vector<Lexeme> lex_main_line(std::string_view body) {
    std::vector<Lexeme> out;
    const std::size_t n = body.size();
    std::size_t i = 0;
    while (i < n) {
        const char c = body[i];
        if (is_space(c)) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (c == '\x15' || body.substr(i, kMiddleDot.size()) == kMiddleDot) {
            const std::string_view delim = c == '\x15' ? std::string_view("\x15") : kMiddleDot;
            const std::size_t close = body.find(delim, i + delim.size());
            i = close == std::string_view::npos ? n : close + delim.size();
            out.push_back({Lexeme::Kind::bullet, std::string(body.substr(start, i - start)), start});
            continue;
        }
        if (c == '[') {
            const std::size_t close = body.find(']', i);
            i = close == std::string_view::npos ? n : close + 1;
            out.push_back({Lexeme::Kind::code, std::string(body.substr(start, i - start)), start});
            continue;
        }
        if (c == '<') {
            out.push_back({Lexeme::Kind::group_open, "<", start});
            ++i;
            continue;
        }
        if (c == '>') {
            out.push_back({Lexeme::Kind::group_close, ">", start});
            ++i;
            continue;
        }
        if (c == ',') {
            out.push_back({Lexeme::Kind::separator, ",", start});
            ++i;
            continue;
        }
        if (c == '(') {
            const std::size_t close = body.find(')', i);
            if (close != std::string_view::npos && is_pause_body(body.substr(i + 1, close - i - 1))) {
                i = close + 1;
                out.push_back({Lexeme::Kind::pause, std::string(body.substr(start, i - start)), start});
                continue;
            }
        }
        while (i < n && !is_atom_end(body, i)) ++i;
        if (i == start) {
            // Defensive: is_atom_end covers every dispatch above, but never stall.
            ++i;
        }
        std::string_view atom = body.substr(start, i - start);
        if (is_terminator_text(atom)) {
            out.push_back({Lexeme::Kind::terminator, std::string(atom), start});
            continue;
        }
        const char last = atom.back();
        if (atom.size() > 1 && (last == '.' || last == '?' || last == '!') && atom.front() != '+') {
            const char before = atom[atom.size() - 2];
            if (before != '.' && before != '?' && before != '!' && before != '+') {
                out.push_back({Lexeme::Kind::atom, std::string(atom.substr(0, atom.size() - 1)), start});
                out.push_back({Lexeme::Kind::terminator, std::string(1, last), start + atom.size() - 1});
                continue;
            }
        }
        out.push_back({Lexeme::Kind::atom, std::string(atom), start});
    }
    return out;
}

MorTag parse_mor_token(std::string_view s) {
    const auto segments = split(s, '~');
    auto parse_segment = [&](std::string_view seg) {
        const std::size_t bar = seg.find('|');
        if (bar == std::string_view::npos) {
            throw ParseError(ParseErrc::NotAMorWord, "not a %mor word: '" + std::string(s) + "'");
        }
        MorTag tag;
        std::string_view pos = seg.substr(0, bar);
        const std::size_t hash = pos.rfind('#');
        if (hash != std::string_view::npos) pos.remove_prefix(hash + 1);
        tag.pos = std::string(pos);
        std::string_view rest = seg.substr(bar + 1);
        const std::size_t gloss = rest.find('=');
        if (gloss != std::string_view::npos) rest = rest.substr(0, gloss);
        std::size_t cut = rest.find_first_of("-&");
        tag.lemma = std::string(rest.substr(0, cut));
        while (cut != std::string_view::npos) {
            const char sep = rest[cut];
            const std::size_t next = rest.find_first_of("-&", cut + 1);
            std::string piece(rest.substr(cut + 1, next == std::string_view::npos ? std::string_view::npos : next - cut - 1));
            if (!piece.empty()) (sep == '-' ? tag.suffixes : tag.fusions).push_back(std::move(piece));
            cut = next;
        }
        if (tag.pos.empty() || tag.lemma.empty()) {
            throw ParseError(ParseErrc::NotAMorWord, "incomplete %mor word: '" + std::string(s) + "'");
        }
        return tag;
    };
    MorTag host = parse_segment(segments.front());
    for (std::size_t i = 1; i < segments.size(); ++i) host.clitics.push_back(parse_segment(segments[i]));
    return host;
}

double transcript_duration_sec(const Transcript& t) {
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = std::numeric_limits<std::int64_t>::min();
    for (const Utterance& u : t.utterances) {
        if (!u.time_alignment) continue;
        lo = std::min(lo, u.time_alignment->start_ms);
        hi = std::max(hi, u.time_alignment->end_ms);
    }
    if (lo > hi) throw ParseError(ParseErrc::NoAlignment, "no time-aligned utterances in " + t.file_id);
    return static_cast<double>(hi - lo) / 1000.0;
}

namespace {

// Length of the well-formed UTF-8 sequence starting at s[i], or 0.
std::size_t utf8_sequence_length(std::string_view s, std::size_t i) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char b0 = byte(i);
    if (b0 < 0x80) return 1;
    std::size_t len = 0;
    unsigned char lo = 0x80, hi = 0xBF;
    if (b0 >= 0xC2 && b0 <= 0xDF) len = 2;
    else if (b0 >= 0xE0 && b0 <= 0xEF) {
        len = 3;
        if (b0 == 0xE0) lo = 0xA0;
        if (b0 == 0xED) hi = 0x9F;
    } else if (b0 >= 0xF0 && b0 <= 0xF4) {
        len = 4;
        if (b0 == 0xF0) lo = 0x90;
        if (b0 == 0xF4) hi = 0x8F;
    } else {
        return 0;
    }
    if (i + len > s.size()) return 0;
    if (byte(i + 1) < lo || byte(i + 1) > hi) return 0;
    for (std::size_t k = 2; k < len; ++k) {
        if (byte(i + k) < 0x80 || byte(i + k) > 0xBF) return 0;
    }
    return len;
}

// Copy of s with every ill-formed byte replaced by U+FFFD.
std::string repair_utf8(std::string_view s, std::size_t& replaced) {
    std::string out;
    out.reserve(s.size());
    replaced = 0;
    for (std::size_t i = 0; i < s.size();) {
        const std::size_t len = utf8_sequence_length(s, i);
        if (len == 0) {
            out += "\xEF\xBF\xBD";
            ++replaced;
            ++i;
        } else {
            out.append(s, i, len);
            i += len;
        }
    }
    return out;
}

}  // namespace

Transcript parse_transcript(std::string_view text, std::string file_id) {
    Transcript t;
    t.file_id = std::move(file_id);
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    std::size_t invalid_bytes = 0;
    const std::string repaired = repair_utf8(text, invalid_bytes);
    if (invalid_bytes > 0) {
        text = repaired;
        t.warnings.push_back(std::to_string(invalid_bytes) + " invalid UTF-8 byte(s) replaced with U+FFFD");
    }

    // Logical lines: tab-initial physical lines continue the previous one.
    struct Line {
        std::string text;
        std::size_t number;
    };
    std::vector<Line> lines;
    {
        std::size_t number = 0;
        for (std::string_view raw : split(text, '\n')) {
            ++number;
            if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
            if (!raw.empty() && raw.front() == '\t' && !lines.empty()) {
                lines.back().text += ' ';
                lines.back().text += trim(raw);
                continue;
            }
            if (trim(raw).empty()) continue;
            lines.push_back({std::string(raw), number});
        }
    }

    std::size_t idx = 0;
    while (idx < lines.size() && trim(lines[idx].text) == "@UTF8") ++idx;
    if (idx >= lines.size() || trim(lines[idx].text) != "@Begin") {
        throw ParseError(ParseErrc::MissingBegin, t.file_id + ": transcript does not start with @Begin");
    }
    ++idx;

    std::set<std::string, std::less<>> warned_tiers;
    bool ended = false;
    auto warn = [&](std::size_t line_no, const std::string& msg) {
        t.warnings.push_back("line " + std::to_string(line_no) + ": " + msg);
    };

    for (; idx < lines.size(); ++idx) {
        const std::string_view line = lines[idx].text;
        const std::size_t line_no = lines[idx].number;
        if (ended) {
            warn(line_no, "content after @End ignored");
            break;
        }
        if (line.front() == '@') {
            const auto [name, value] = split_tier(line);
            if (trim(line) == "@End") {
                ended = true;
            } else if (name == "@Participants") {
                for (std::string_view entry : split(value, ',')) {
                    const auto words = split_ws(entry);
                    if (words.empty()) continue;
                    if (!valid_participant_code(words.front())) {
                        warn(line_no, "participant code '" + std::string(words.front()) + "' is not three uppercase letters");
                        continue;
                    }
                    Participant p;
                    p.code = std::string(words.front());
                    p.role = words.size() > 1 ? std::string(words.back()) : std::string();
                    if (t.find_participant(p.code) == nullptr) t.participants.push_back(std::move(p));
                }
            } else if (name == "@ID") {
                const auto fields = split(value, '|');
                bool ok = fields.size() >= 10;
                for (std::size_t i = 11; ok && i < fields.size(); ++i) ok = trim(fields[i]).empty();
                if (!ok) {
                    throw ParseError(ParseErrc::MalformedIdHeader,
                                     t.file_id + ": line " + std::to_string(line_no) + ": @ID needs 10 '|' fields, got " +
                                         std::to_string(fields.size()));
                }
                const std::string_view code = trim(fields[2]);
                auto it = std::find_if(t.participants.begin(), t.participants.end(),
                                       [&](const Participant& p) { return p.code == code; });
                if (it == t.participants.end()) {
                    warn(line_no, "@ID for undeclared participant '" + std::string(code) + "'");
                    continue;
                }
                if (const std::string_view age_field = trim(fields[3]); !age_field.empty()) {
                    const auto age = parse_age(age_field);
                    if (age && *age > 0.0 && *age < 120.0) it->age_years = age;
                    else warn(line_no, "unusable age '" + std::string(age_field) + "'");
                }
                if (const std::string_view sex = trim(fields[4]); !sex.empty()) {
                    if (sex == "male") it->sex = Sex::male;
                    else if (sex == "female") it->sex = Sex::female;
                    else if (sex == "unknown") it->sex = Sex::unknown;
                    else {
                        it->sex = Sex::unknown;
                        warn(line_no, "unknown sex '" + std::string(sex) + "'");
                    }
                }
                if (const std::string_view group = trim(fields[5]); !group.empty()) {
                    it->group = parse_class_label(group);
                    if (!it->group) warn(line_no, "unknown group '" + std::string(group) + "'");
                }
                if (it->role.empty()) {
                    const std::string_view role = trim(fields[7]).empty() ? trim(fields[8]) : trim(fields[7]);
                    it->role = std::string(role);
                }
            } else if (name == "@Media") {
                const auto parts = split(value, ',');
                if (!trim(parts.front()).empty()) t.media_name = std::string(trim(parts.front()));
            }
            continue;
        }
        if (line.front() == '*') {
            const auto [name, body] = split_tier(line);
            const std::string speaker(name.substr(1));
            if (t.find_participant(speaker) == nullptr) {
                throw ParseError(ParseErrc::UnknownSpeaker, t.file_id + ": line " + std::to_string(line_no) +
                                                                ": speaker '" + speaker + "' not in @Participants");
            }
            t.utterances.push_back(parse_main_tier(speaker, body, t.warnings, line_no));
            continue;
        }
        if (line.front() == '%') {
            const auto [name, body] = split_tier(line);
            if (name != "%mor") {
                if (warned_tiers.insert(std::string(name)).second) {
                    warn(line_no, "dependent tier '" + std::string(name) + "' skipped");
                }
                continue;
            }
            if (t.utterances.empty()) {
                warn(line_no, "%mor before any utterance ignored");
                continue;
            }
            Utterance& u = t.utterances.back();
            if (u.mor_tags) {
                warn(line_no, "second %mor tier for one utterance ignored");
                continue;
            }
            std::vector<MorTag> tags;
            for (std::string_view item : split_ws(body)) {
                if (item.front() == '\x15' || item.substr(0, kMiddleDot.size()) == kMiddleDot) continue;
                try {
                    MorTag tag = parse_mor_token(item);
                    const std::string_view pos = tag.pos;
                    if (pos == "cm" || pos == "bq" || pos == "eq" || pos == "end" || pos == "beg") continue;
                    tags.push_back(std::move(tag));
                } catch (const ParseError&) {
                    // punctuation on the %mor tier
                }
            }
            const std::size_t expected = mor_aligned_word_count(u);
            if (tags.size() != expected) {
                warn(line_no, "%mor has " + std::to_string(tags.size()) + " words, main tier has " +
                                  std::to_string(expected) + "; morphology dropped for this utterance");
                continue;
            }
            u.mor_tags = std::move(tags);
            continue;
        }
        warn(line_no, "unrecognized line ignored");
    }
    if (!ended) t.warnings.push_back("missing @End");
    return t;
}

// ---------------------------------------------------------------------------
// Formatting

std::string_view to_string(TokenKind kind) {
    switch (kind) {
        case TokenKind::word: return "word";
        case TokenKind::filled_pause: return "filled_pause";
        case TokenKind::phonological_fragment: return "phonological_fragment";
        case TokenKind::unfilled_pause: return "unfilled_pause";
        case TokenKind::unintelligible: return "unintelligible";
    }
    return "word";
}

std::string_view to_string(Terminator terminator) {
    switch (terminator) {
        case Terminator::period: return ".";
        case Terminator::question: return "?";
        case Terminator::exclamation: return "!";
        case Terminator::trailing_off: return "+...";
    }
    return ".";
}

std::string_view to_string(Sex sex) {
    switch (sex) {
        case Sex::male: return "male";
        case Sex::female: return "female";
        case Sex::unknown: return "unknown";
    }
    return "unknown";
}

std::string_view to_string(DisfluencyKind kind) {
    switch (kind) {
        case DisfluencyKind::repetition: return "repetition";
        case DisfluencyKind::retracing: return "retracing";
        case DisfluencyKind::reformulation: return "reformulation";
    }
    return "repetition";
}

std::string format_mor_tag(const MorTag& tag) {
    std::string out = tag.pos + "|" + tag.lemma;
    for (const auto& s : tag.suffixes) out += "-" + s;
    for (const auto& f : tag.fusions) out += "&" + f;
    for (const auto& c : tag.clitics) out += "~" + format_mor_tag(c);
    return out;
}

std::string format_main_line(const Utterance& u) {
    const std::size_t n = u.tokens.size();
    std::vector<int> opens(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (const DisfluencyMark& m : u.tokens[i].trailing_marks) {
            if (static_cast<std::size_t>(m.scope_begin) < i) ++opens[static_cast<std::size_t>(m.scope_begin)];
        }
    }
    std::vector<std::string> parts;
    std::vector<std::string> scoped_errors;
    for (std::size_t i = 0; i < n; ++i) {
        const Token& t = u.tokens[i];
        std::string text(static_cast<std::size_t>(opens[i]), '<');
        switch (t.kind) {
            case TokenKind::word: text += t.surface + (t.prolonged ? ":" : ""); break;
            case TokenKind::filled_pause: text += "&-" + t.surface; break;
            case TokenKind::phonological_fragment: text += "&+" + t.surface; break;
            case TokenKind::unfilled_pause: text += "(" + std::string(static_cast<std::size_t>(t.pause_ticks.value_or(1)), '.') + ")"; break;
            case TokenKind::unintelligible: text += t.surface; break;
        }
        parts.push_back(std::move(text));
        for (const DisfluencyMark& m : t.trailing_marks) {
            if (static_cast<std::size_t>(m.scope_begin) < i) parts.back() += ">";
            parts.push_back(m.source);
        }
        for (const std::string& e : t.error_codes) {
            parts.push_back(e.empty() ? "[*]" : "[* " + e + "]");
            scoped_errors.push_back(e);
        }
    }
    parts.emplace_back(to_string(u.terminator));
    // Utterance-level codes not attached to any token.
    for (const std::string& e : u.error_codes) {
        auto it = std::find(scoped_errors.begin(), scoped_errors.end(), e);
        if (it != scoped_errors.end()) {
            scoped_errors.erase(it);
            continue;
        }
        parts.push_back(e.empty() ? "[*]" : "[* " + e + "]");
    }
    if (u.time_alignment) {
        parts.push_back("\x15" + std::to_string(u.time_alignment->start_ms) + "_" +
                        std::to_string(u.time_alignment->end_ms) + "\x15");
    }
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += ' ';
        out += p;
    }
    return out;
}

std::string format_transcript(const Transcript& t) {
    std::ostringstream os;
    os << "@Begin\n";
    if (!t.participants.empty()) {
        os << "@Participants:\t";
        for (std::size_t i = 0; i < t.participants.size(); ++i) {
            const Participant& p = t.participants[i];
            os << (i ? ", " : "") << p.code;
            if (!p.role.empty()) os << ' ' << p.role;
        }
        os << '\n';
    }
    for (const Participant& p : t.participants) {
        if (!p.age_years && !p.sex && !p.group) continue;
        os << "@ID:\teng||" << p.code << '|' << (p.age_years ? format_age(*p.age_years) : "") << '|'
           << (p.sex ? std::string(to_string(*p.sex)) : "") << '|'
           << (p.group ? std::string(to_string(*p.group)) : "") << "|||" << p.role << "|||\n";
    }
    if (t.media_name) os << "@Media:\t" << *t.media_name << ", audio\n";
    for (const Utterance& u : t.utterances) {
        os << '*' << u.speaker << ":\t" << format_main_line(u) << '\n';
        if (u.mor_tags) {
            os << "%mor:\t";
            for (const MorTag& tag : *u.mor_tags) os << format_mor_tag(tag) << ' ';
            os << to_string(u.terminator) << '\n';
        }
    }
    os << "@End\n";
    return os.str();
}

namespace {

nlohmann::json mor_to_json(const MorTag& tag) {
    nlohmann::json j{{"pos", tag.pos}, {"lemma", tag.lemma}, {"suffixes", tag.suffixes}, {"fusions", tag.fusions}};
    j["clitics"] = nlohmann::json::array();
    for (const MorTag& c : tag.clitics) j["clitics"].push_back(mor_to_json(c));
    return j;
}

}  // namespace

nlohmann::json to_json(const Transcript& t) {
    using nlohmann::json;
    json j;
    j["file_id"] = t.file_id;
    j["media_name"] = t.media_name ? json(*t.media_name) : json(nullptr);
    j["participants"] = json::array();
    for (const Participant& p : t.participants) {
        j["participants"].push_back({
            {"code", p.code},
            {"role", p.role},
            {"age_years", p.age_years ? json(*p.age_years) : json(nullptr)},
            {"sex", p.sex ? json(to_string(*p.sex)) : json(nullptr)},
            {"group", p.group ? json(to_string(*p.group)) : json(nullptr)},
        });
    }
    j["utterances"] = json::array();
    for (const Utterance& u : t.utterances) {
        json ju;
        ju["speaker"] = u.speaker;
        ju["terminator"] = to_string(u.terminator);
        ju["time_alignment"] = u.time_alignment ? json::array({u.time_alignment->start_ms, u.time_alignment->end_ms})
                                                : json(nullptr);
        ju["error_codes"] = u.error_codes;
        ju["tokens"] = json::array();
        for (const Token& tok : u.tokens) {
            json jt{{"kind", to_string(tok.kind)}, {"surface", tok.surface}};
            if (tok.prolonged) jt["prolonged"] = true;
            if (tok.pause_ticks) jt["pause_ticks"] = *tok.pause_ticks;
            if (tok.mor_excluded) jt["mor_excluded"] = true;
            if (!tok.error_codes.empty()) jt["error_codes"] = tok.error_codes;
            if (!tok.trailing_marks.empty()) {
                jt["marks"] = json::array();
                for (const DisfluencyMark& m : tok.trailing_marks) {
                    jt["marks"].push_back({{"kind", to_string(m.kind)},
                                           {"source", m.source},
                                           {"scope_len", m.scope_len},
                                           {"scope_begin", m.scope_begin}});
                }
            }
            ju["tokens"].push_back(std::move(jt));
        }
        if (u.mor_tags) {
            ju["mor_tags"] = json::array();
            for (const MorTag& tag : *u.mor_tags) ju["mor_tags"].push_back(mor_to_json(tag));
        } else {
            ju["mor_tags"] = nullptr;
        }
        j["utterances"].push_back(std::move(ju));
    }
    j["warnings"] = t.warnings;
    return j;
}

}  // namespace chatml
