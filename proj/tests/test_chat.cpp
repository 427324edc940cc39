#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <map>

#include "chatml/chat.hpp"
#include "chatml/features.hpp"
#include "chatml/rng.hpp"
#include "test_support.hpp"

using namespace chatml;
namespace fs = std::filesystem;

namespace {

std::string errc_name(ParseErrc c) {
    switch (c) {
        case ParseErrc::MissingBegin: return "MissingBegin";
        case ParseErrc::UnknownSpeaker: return "UnknownSpeaker";
        case ParseErrc::MalformedIdHeader: return "MalformedIdHeader";
        case ParseErrc::NotAMorWord: return "NotAMorWord";
        case ParseErrc::NoAlignment: return "NoAlignment";
    }
    return "?";
}

std::vector<fs::path> chat_fixtures() {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(testing::fixture_dir() / "chat")) {
        if (e.path().extension() == ".cha") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

Transcript parse_file(const fs::path& p) { return parse_transcript(testing::read_file(p), p.stem().string()); }

std::optional<ParseErrc> parse_error_of(const std::string& text) {
    try {
        parse_transcript(text, "x");
    } catch (const ParseError& e) {
        return e.code();
    }
    return std::nullopt;
}

const char* kDoc =
    "@Begin\n"
    "@Participants:\tPAR Participant\n"
    "*PAR:\t%s\n"
    "@End\n";

Utterance single(const std::string& main_line) {
    std::string doc = kDoc;
    doc.replace(doc.find("%s"), 2, main_line);
    const Transcript t = parse_transcript(doc, "x");
    REQUIRE(t.utterances.size() == 1);
    return t.utterances[0];
}

}  // namespace

TEST_CASE("minimal document") {
    const Transcript t = parse_transcript("@Begin\n@Participants:\tPAR Participant\n*PAR:\thello .\n@End", "min");
    CHECK(t.file_id == "min");
    REQUIRE(t.participants.size() == 1);
    CHECK(t.participants[0].code == "PAR");
    CHECK(t.participants[0].role == "Participant");
    REQUIRE(t.utterances.size() == 1);
    const Utterance& u = t.utterances[0];
    REQUIRE(u.tokens.size() == 1);
    CHECK(u.tokens[0].kind == TokenKind::word);
    CHECK(u.tokens[0].surface == "hello");
    CHECK(u.terminator == Terminator::period);
    CHECK(t.warnings.empty());
}

TEST_CASE("@ID header fills participant metadata") {
    const Transcript t = parse_transcript(
        "@Begin\n@Participants:\tPAR Participant\n@ID:\teng|Pitt|PAR|63;|female|ProbableAD|||Participant|||\n@End\n", "id");
    const Participant* p = t.find_participant("PAR");
    REQUIRE(p != nullptr);
    CHECK(p->age_years == doctest::Approx(63.0));
    CHECK(p->sex == Sex::female);
    CHECK(p->group == ClassLabel::ProbableAD);

    const Transcript t2 = parse_transcript(
        "@Begin\n@Participants:\tPAR Participant\n@ID:\teng|Pitt|PAR|70;6.|unknown|Control|||Participant|||\n@End\n", "id");
    CHECK(t2.participants[0].age_years == doctest::Approx(70.5));
    CHECK(t2.participants[0].sex == Sex::unknown);
    CHECK(t2.warnings.empty());
}

TEST_CASE("main line tokens of the repetition example") {
    const Utterance u = single("&-um the (.) the [/] boy s:o fell .");
    REQUIRE(u.tokens.size() == 7);
    CHECK(u.tokens[0].kind == TokenKind::filled_pause);
    CHECK(u.tokens[0].surface == "um");
    CHECK(u.tokens[1].kind == TokenKind::word);
    CHECK(u.tokens[1].surface == "the");
    CHECK(u.tokens[1].trailing_marks.empty());
    CHECK(u.tokens[2].kind == TokenKind::unfilled_pause);
    CHECK(u.tokens[2].pause_ticks == 1);
    CHECK(u.tokens[3].surface == "the");
    REQUIRE(u.tokens[3].trailing_marks.size() == 1);
    CHECK(u.tokens[3].trailing_marks[0].kind == DisfluencyKind::repetition);
    CHECK(u.tokens[3].trailing_marks[0].source == "[/]");
    CHECK(u.tokens[3].trailing_marks[0].scope_len == 1);
    CHECK(u.tokens[3].mor_excluded);
    CHECK(u.tokens[4].surface == "boy");
    CHECK_FALSE(u.tokens[4].prolonged);
    CHECK(u.tokens[5].surface == "so");
    CHECK(u.tokens[5].prolonged);
    CHECK(u.tokens[6].surface == "fell");
    CHECK(mor_aligned_word_count(u) == 4);
}

TEST_CASE("grouped scopes count their words") {
    const Utterance u = single("<the little boy> [//] the girl is here .");
    REQUIRE(u.tokens.size() == 7);
    const auto& marks = u.tokens[2].trailing_marks;
    REQUIRE(marks.size() == 1);
    CHECK(marks[0].kind == DisfluencyKind::retracing);
    CHECK(marks[0].scope_len == 3);
    CHECK(marks[0].scope_begin == 0);
    CHECK(mor_aligned_word_count(u) == 4);

    const Utterance r = single("<the water> [///] the sink overflows .");
    CHECK(r.tokens[1].trailing_marks.at(0).kind == DisfluencyKind::reformulation);
    CHECK(r.tokens[1].trailing_marks.at(0).scope_len == 2);
}

TEST_CASE("pause, fragment, unintelligible and terminator kinds") {
    const Utterance u = single("&+fr (..) xxx (...) word ?");
    REQUIRE(u.tokens.size() == 5);
    CHECK(u.tokens[0].kind == TokenKind::phonological_fragment);
    CHECK(u.tokens[0].surface == "fr");
    CHECK(u.tokens[1].pause_ticks == 2);
    CHECK(u.tokens[2].kind == TokenKind::unintelligible);
    CHECK(u.tokens[3].pause_ticks == 3);
    CHECK_FALSE(u.tokens[4].pause_ticks.has_value());
    CHECK(u.terminator == Terminator::question);
    CHECK(single("wow !").terminator == Terminator::exclamation);
    CHECK(single("and then +...").terminator == Terminator::trailing_off);
}

TEST_CASE("error codes attach to the preceding word and the utterance") {
    const Utterance u = single("she goed [* m:+ed] home . [* s]");
    CHECK(u.tokens[1].error_codes == std::vector<std::string>{"m:+ed"});
    CHECK(u.error_codes == std::vector<std::string>{"m:+ed", "s"});
}

TEST_CASE("parse_mor_token examples") {
    const MorTag a = parse_mor_token("v|cycle-3S");
    CHECK(a.pos == "v");
    CHECK(a.lemma == "cycle");
    CHECK(a.suffixes == std::vector<std::string>{"3S"});
    CHECK(a.fusions.empty());

    const MorTag b = parse_mor_token("pro|he~aux|be&3S");
    CHECK(b.pos == "pro");
    CHECK(b.lemma == "he");
    REQUIRE(b.clitics.size() == 1);
    CHECK(b.clitics[0].pos == "aux");
    CHECK(b.clitics[0].lemma == "be");
    CHECK(b.clitics[0].fusions == std::vector<std::string>{"3S"});

    CHECK(morpheme_count(parse_mor_token("n|dog-PL")) == 2);
    CHECK(base_pos(parse_mor_token("det:art|the")) == "det");

    for (const char* bad : {".", "?", "dog", "+..."}) {
        try {
            parse_mor_token(bad);
            FAIL("expected NotAMorWord for " << bad);
        } catch (const ParseError& e) {
            CHECK(e.code() == ParseErrc::NotAMorWord);
        }
    }
}

TEST_CASE("morpheme_count equals separator count plus one on random tags") {
    Rng rng(2024);
    const std::string seps = "-&~";
    auto word = [&] {
        std::string w;
        const std::size_t len = 1 + rng.below(6);
        for (std::size_t i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.below(26)));
        return w;
    };
    for (int trial = 0; trial < 2000; ++trial) {
        std::string s;
        const std::size_t parts = 1 + rng.below(3);
        for (std::size_t p = 0; p < parts; ++p) {
            if (p > 0) s += '~';
            s += word() + "|" + word();
            const std::size_t affixes = rng.below(4);
            for (std::size_t k = 0; k < affixes; ++k) {
                s += rng.below(2) ? '-' : '&';
                std::string code = word();
                for (char& c : code) c = static_cast<char>(c - 'a' + 'A');
                s += code;
            }
        }
        const auto separators = std::count_if(s.begin(), s.end(), [&](char c) { return seps.find(c) != std::string::npos; });
        const MorTag tag = parse_mor_token(s);
        INFO(s);
        CHECK(morpheme_count(tag) == separators + 1);
        CHECK(morpheme_count(tag) >= 1);
        CHECK(parse_mor_token(format_mor_tag(tag)) == tag);
    }
}

TEST_CASE("transcript_duration_sec") {
    Transcript t;
    Utterance a, b;
    a.time_alignment = TimeAlignment{0, 5000};
    b.time_alignment = TimeAlignment{5000, 12000};
    t.utterances = {a, b};
    CHECK(transcript_duration_sec(t) == doctest::Approx(12.0));

    Transcript one;
    Utterance c;
    c.time_alignment = TimeAlignment{3000, 4500};
    one.utterances = {c};
    CHECK(transcript_duration_sec(one) == doctest::Approx(1.5));

    Transcript none;
    none.utterances = {Utterance{}};
    try {
        transcript_duration_sec(none);
        FAIL("expected NoAlignment");
    } catch (const ParseError& e) {
        CHECK(e.code() == ParseErrc::NoAlignment);
    }
}

TEST_CASE("fatal errors") {
    CHECK(parse_error_of("*PAR:\thello .\n") == ParseErrc::MissingBegin);
    CHECK(parse_error_of("") == ParseErrc::MissingBegin);
    CHECK(parse_error_of("@Begin\n@Participants:\tPAR Participant\n*MOT:\thi .\n") == ParseErrc::UnknownSpeaker);
    CHECK(parse_error_of("@Begin\n@Participants:\tPAR Participant\n@ID:\teng|Pitt|PAR\n") == ParseErrc::MalformedIdHeader);
    CHECK_FALSE(parse_error_of("\xEF\xBB\xBF@Begin\n@Participants:\tPAR Participant\n*PAR:\thi .\n@End\n").has_value());
}

TEST_CASE("golden fixtures") {
    const auto files = chat_fixtures();
    CHECK(files.size() >= 15);
    std::string corpus;
    for (const fs::path& cha : files) {
        CAPTURE(cha.filename().string());
        const std::string text = testing::read_file(cha);
        corpus += text;
        fs::path golden = cha;
        golden.replace_extension(".json");
        REQUIRE(fs::exists(golden));
        const auto expected = nlohmann::json::parse(testing::read_file(golden));
        if (expected.contains("error")) {
            try {
                parse_transcript(text, cha.stem().string());
                FAIL("expected " << expected["error"]);
            } catch (const ParseError& e) {
                CHECK(errc_name(e.code()) == expected["error"].get<std::string>());
            }
            continue;
        }
        const nlohmann::json actual = to_json(parse_transcript(text, cha.stem().string()));
        CHECK(actual == expected);
        if (actual != expected) MESSAGE(nlohmann::json::diff(expected, actual).dump());
    }
    // Every supported construct appears somewhere in the corpus.
    for (const char* code : {"[/]", "[//]", "[///]", "<", "&-", "&+", "(.)", "(..)", "(...)", "s:o", "[* ", "xxx",
                             " .", " ?", " !", "+...", "\x15", "\xC2\xB7", "@ID:", "@Media:", "%mor:", "@Participants:",
                             "@End", "~", "&3S"}) {
        CAPTURE(code);
        CHECK(corpus.find(code) != std::string::npos);
    }
}

TEST_CASE("round trip through the normalized form is a fixed point") {
    for (const fs::path& cha : chat_fixtures()) {
        CAPTURE(cha.filename().string());
        Transcript t1;
        try {
            t1 = parse_file(cha);
        } catch (const ParseError&) {
            continue;
        }
        const std::string n1 = format_transcript(t1);
        const Transcript t2 = parse_transcript(n1, t1.file_id);
        const std::string n2 = format_transcript(t2);
        const Transcript t3 = parse_transcript(n2, t1.file_id);
        CHECK(n1 == n2);
        CHECK(t2 == t3);
        CHECK(t2.utterances == t1.utterances);
        CHECK(t2.participants == t1.participants);
        CHECK(t2.media_name == t1.media_name);
    }
}

TEST_CASE("lexemes partition every non-blank byte of a main line") {
    auto check_partition = [](const std::string& body) {
        const auto lexemes = lex_main_line(body);
        std::vector<int> owner(body.size(), -1);
        for (std::size_t k = 0; k < lexemes.size(); ++k) {
            const Lexeme& lx = lexemes[k];
            REQUIRE(lx.offset + lx.text.size() <= body.size());
            CHECK(body.compare(lx.offset, lx.text.size(), lx.text) == 0);
            CHECK(!lx.text.empty());
            for (std::size_t i = lx.offset; i < lx.offset + lx.text.size(); ++i) {
                CHECK(owner[i] == -1);
                owner[i] = static_cast<int>(k);
            }
        }
        for (std::size_t i = 0; i < body.size(); ++i) {
            const bool blank = body[i] == ' ' || body[i] == '\t' || body[i] == '\n' || body[i] == '\r';
            if (!blank) CHECK(owner[i] >= 0);
        }
    };
    for (const fs::path& cha : chat_fixtures()) {
        std::istringstream in(testing::read_file(cha));
        for (std::string line; std::getline(in, line);) {
            if (line.size() > 6 && line[0] == '*') check_partition(line.substr(6));
        }
    }
    Rng rng(99);
    const std::string alphabet = "ab :<>[]/*&-+().?!\x15_019\xC2\xB7,";
    for (int trial = 0; trial < 3000; ++trial) {
        std::string body;
        const std::size_t len = rng.below(40);
        for (std::size_t i = 0; i < len; ++i) body.push_back(alphabet[rng.below(alphabet.size())]);
        check_partition(body);
    }
}

TEST_CASE("byte mutations never crash the parser") {
    std::vector<std::string> seeds;
    for (const fs::path& cha : chat_fixtures()) seeds.push_back(testing::read_file(cha));
    const std::string interesting = "@*%\t\n:|[]<>/&-+().?!~\x15_0123456789 xPAR";
    Rng rng(12345);
    const auto start = std::chrono::steady_clock::now();
    int parsed = 0, rejected = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        std::string s = seeds[rng.below(seeds.size())];
        const std::size_t ops = 1 + rng.below(8);
        for (std::size_t k = 0; k < ops && !s.empty(); ++k) {
            const std::size_t pos = rng.below(s.size());
            const char c = rng.below(3) == 0 ? static_cast<char>(rng.below(256)) : interesting[rng.below(interesting.size())];
            switch (rng.below(5)) {
                case 0: s[pos] = c; break;
                case 1: s.insert(pos, 1, c); break;
                case 2: s.erase(pos, 1 + rng.below(4)); break;
                case 3: s.insert(pos, s.substr(rng.below(s.size()), 1 + rng.below(12))); break;
                default: s.resize(pos); break;
            }
        }
        try {
            const Transcript t = parse_transcript(s, "fuzz");
            ++parsed;
            (void)format_transcript(t);
            (void)to_json(t).dump();
            try {
                (void)extract_features(t, default_item_set());
            } catch (const FeatureError&) {
            }
        } catch (const ParseError&) {
            ++rejected;
        }
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    MESSAGE("fuzz: " << parsed << " parsed, " << rejected << " rejected in " << seconds << " s");
    CHECK(parsed + rejected == 10000);
    CHECK(seconds < 60.0);
}

TEST_CASE("unknown tiers and codes degrade to warnings") {
    const Transcript t = parse_transcript(
        "@Begin\n@Participants:\tPAR Participant\n*PAR:\tthe cookie [: cookies] [+ exc] .\n%gra:\t1|2|DET\n%com:\tnote\n@End\n",
        "w");
    REQUIRE(t.utterances.size() == 1);
    CHECK(t.utterances[0].tokens.size() == 2);
    CHECK(t.warnings.size() == 4);
}

TEST_CASE("ill-formed UTF-8 is replaced with a warning") {
    const Transcript t = parse_transcript("@Begin\n@Participants:\tPAR Participant\n*PAR:\tcaf\xE9 \xC0\xAF ok .\n@End\n", "u");
    REQUIRE(t.utterances.size() == 1);
    CHECK(t.utterances[0].tokens[0].surface == "caf\xEF\xBF\xBD");
    REQUIRE_FALSE(t.warnings.empty());
    CHECK(t.warnings[0].find("UTF-8") != std::string::npos);
    CHECK_NOTHROW((void)to_json(t).dump());
}

TEST_CASE("continuation lines join the main tier") {
    const Transcript t = parse_transcript("@Begin\n@Participants:\tPAR Participant\n*PAR:\tthe mother\n\tis here .\n@End\n", "c");
    REQUIRE(t.utterances.size() == 1);
    CHECK(t.utterances[0].tokens.size() == 4);
}

TEST_CASE("mor tier length mismatch drops morphology with a warning") {
    const Transcript t = parse_transcript(
        "@Begin\n@Participants:\tPAR Participant\n*PAR:\tthe boy falls .\n%mor:\tdet:art|the v|fall-3S .\n@End\n", "m");
    CHECK_FALSE(t.utterances[0].mor_tags.has_value());
    CHECK(t.warnings.size() == 1);
}
