#include "chatml/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <sstream>

#include "chatml/rng.hpp"

namespace chatml {

namespace {

struct Lexeme {
    const char* surface;
    const char* lemma;
};

constexpr Lexeme kNouns[] = {{"boy", "boy"},       {"girl", "girl"},   {"mother", "mother"}, {"cookie", "cookie"},
                             {"jar", "jar"},       {"water", "water"}, {"sink", "sink"},     {"dish", "dish"},
                             {"window", "window"}, {"stool", "stool"}, {"curtain", "curtain"}, {"floor", "floor"}};
constexpr Lexeme kPluralNouns[] = {{"cookies", "cookie"}, {"plates", "plate"}, {"cups", "cup"}, {"dishes", "dish"}};
constexpr Lexeme kAdjectives[] = {{"big", "big"}, {"little", "little"}, {"open", "open"}, {"wet", "wet"}};
constexpr Lexeme kAdverbs[] = {{"here", "here"}, {"there", "there"}, {"too", "too"}, {"again", "again"}};
constexpr Lexeme kPreps[] = {{"on", "on"}, {"in", "in"}, {"from", "from"}, {"near", "near"}};
constexpr Lexeme kThirdSingular[] = {{"falls", "fall"},   {"reaches", "reach"}, {"climbs", "climb"}, {"spills", "spill"},
                                     {"wipes", "wipe"},   {"holds", "hold"},    {"drips", "drip"},   {"tips", "tip"}};
constexpr Lexeme kParticiples[] = {{"reaching", "reach"}, {"standing", "stand"}, {"washing", "wash"}, {"drying", "dry"},
                                   {"falling", "fall"},   {"spilling", "spill"}, {"looking", "look"}, {"holding", "hold"}};
constexpr Lexeme kPastVerbs[] = {{"took", "take"}, {"saw", "see"}, {"broke", "break"}, {"got", "get"}};
constexpr Lexeme kRegularPast[] = {{"dropped", "drop"}, {"opened", "open"}, {"wanted", "want"}, {"climbed", "climb"}};
constexpr Lexeme kBaseVerbs[] = {{"fall", "fall"}, {"break", "break"}, {"slip", "slip"}, {"spill", "spill"}};
constexpr Lexeme kPronouns[] = {{"she", "she"}, {"he", "he"}, {"they", "they"}};
constexpr const char* kFillers[] = {"uh", "um", "er"};
constexpr const char* kFragments[] = {"b", "st", "w", "c"};

template <typename T, std::size_t N>
const T& pick(Rng& rng, const T (&items)[N]) {
    return items[rng.below(N)];
}

// Class-independent noise rates.
struct NoiseProfile {
    double filled_pause = 0.0;
    double unfilled_pause = 0.0;
    double repetition = 0.0;
    double retracing = 0.0;
    double fragment = 0.0;
    double prolongation = 0.0;
    double word_error = 0.0;
    double question = 0.0;
};

class UtteranceBuilder {
public:
    UtteranceBuilder(Rng& rng, const NoiseProfile& noise) : rng_(rng), noise_(noise) {}

    void word(const std::string& surface, const std::string& mor) {
        if (rng_.bernoulli(noise_.filled_pause)) main_.push_back(std::string("&-") + pick(rng_, kFillers));
        if (rng_.bernoulli(noise_.unfilled_pause)) main_.push_back("(.)");
        if (rng_.bernoulli(noise_.fragment)) main_.push_back(std::string("&+") + pick(rng_, kFragments));
        if (rng_.bernoulli(noise_.repetition)) main_.push_back(surface + " [/]");
        main_.push_back(surface);
        mor_.push_back(mor);
    }

    void noun_phrase(bool allow_adjective) {
        if (rng_.bernoulli(noise_.retracing)) {
            const Lexeme& wrong = pick(rng_, kNouns);
            main_.push_back(std::string("<the ") + wrong.surface + "> [//]");
        }
        if (rng_.bernoulli(0.6)) word("the", "det:art|the");
        else word("a", "det:art|a");
        if (allow_adjective && rng_.bernoulli(0.3)) {
            const Lexeme& a = pick(rng_, kAdjectives);
            word(a.surface, std::string("adj|") + a.lemma);
        }
        if (rng_.bernoulli(0.2)) {
            const Lexeme& n = pick(rng_, kPluralNouns);
            word(n.surface, std::string("n|") + n.lemma + "-PL");
        } else {
            const Lexeme& n = pick(rng_, kNouns);
            word(n.surface, std::string("n|") + n.lemma);
        }
        if (rng_.bernoulli(noise_.word_error)) main_.back() += " [* s:r]";
    }

    void conjunction() {
        const bool prolonged = rng_.bernoulli(noise_.prolongation);
        word(prolonged ? "a:nd" : "and", "coord|and");
    }

    void set_question() { terminator_ = "?"; }
    bool want_question() { return rng_.bernoulli(noise_.question); }
    Rng& rng() { return rng_; }

    std::string main_line() const {
        std::string s;
        for (const auto& m : main_) s += m + " ";
        return s + terminator_;
    }

    std::string mor_line() const {
        std::string s;
        for (const auto& m : mor_) s += m + " ";
        return s + terminator_;
    }

private:
    Rng& rng_;
    const NoiseProfile& noise_;
    std::vector<std::string> main_;
    std::vector<std::string> mor_;
    std::string terminator_ = ".";
};

// "the boy reaches ..." with the verb tagged -3S or, otherwise, -PRES.
void third_singular_utterance(UtteranceBuilder& b, bool marked) {
    b.noun_phrase(true);
    const Lexeme& v = pick(b.rng(), kThirdSingular);
    b.word(v.surface, std::string("v|") + v.lemma + (marked ? "-3S" : "-PRES"));
    if (b.rng().bernoulli(0.5)) {
        const Lexeme& p = pick(b.rng(), kPreps);
        b.word(p.surface, std::string("prep|") + p.lemma);
    }
    b.noun_phrase(false);
}

// "the girl washing the dish" with the participle tagged -PRESP or, otherwise, -PERF.
void participle_utterance(UtteranceBuilder& b, bool marked) {
    b.noun_phrase(true);
    const Lexeme& v = pick(b.rng(), kParticiples);
    b.word(v.surface, std::string("part|") + v.lemma + (marked ? "-PRESP" : "-PERF"));
    b.noun_phrase(false);
    if (b.rng().bernoulli(0.4)) {
        const Lexeme& a = pick(b.rng(), kAdverbs);
        b.word(a.surface, std::string("adv|") + a.lemma);
    }
}

// Pronoun-subject filler with past-tense or modal verbs; never carries -3S or -PRESP.
void filler_utterance(UtteranceBuilder& b) {
    Rng& rng = b.rng();
    if (b.want_question()) {
        b.word("where", "pro:int|where");
        b.word("did", "aux|do&PAST");
        const Lexeme& p = pick(rng, kPronouns);
        b.word(p.surface, std::string("pro:sub|") + p.lemma);
        b.word("go", "v|go");
        b.set_question();
        return;
    }
    const Lexeme& p = pick(rng, kPronouns);
    b.word(p.surface, std::string("pro:sub|") + p.lemma);
    if (rng.bernoulli(0.5)) {
        const Lexeme& v = pick(rng, kPastVerbs);
        b.word(v.surface, std::string("v|") + v.lemma + "&PAST");
    } else {
        const Lexeme& v = pick(rng, kRegularPast);
        b.word(v.surface, std::string("v|") + v.lemma + "-PAST");
    }
    b.noun_phrase(true);
    if (rng.bernoulli(0.5)) {
        b.conjunction();
        const Lexeme& q = pick(rng, kPronouns);
        b.word(q.surface, std::string("pro:sub|") + q.lemma);
        b.word("might", "mod|might");
        const Lexeme& v = pick(rng, kBaseVerbs);
        b.word(v.surface, std::string("v|") + v.lemma);
    }
}

std::string render_transcript(const std::string& file_id, ClassLabel group, std::uint64_t seed) {
    Rng rng(seed);
    const auto [presp_mean, s3_mean] = planted_rates(group);
    auto subject_rate = [&](double mean) { return std::clamp(mean + 0.06 * rng.normal(), 0.01, 0.99); };
    const double presp_rate = subject_rate(presp_mean);
    const double s3_rate = subject_rate(s3_mean);

    NoiseProfile noise;
    noise.filled_pause = rng.uniform(0.01, 0.08);
    noise.unfilled_pause = rng.uniform(0.0, 0.06);
    noise.repetition = rng.uniform(0.0, 0.04);
    noise.retracing = rng.uniform(0.0, 0.08);
    noise.fragment = rng.uniform(0.0, 0.03);
    noise.prolongation = rng.uniform(0.0, 0.3);
    noise.word_error = rng.uniform(0.0, 0.05);
    noise.question = rng.uniform(0.0, 0.2);

    const auto n_s3 = static_cast<std::size_t>(16 + rng.below(9));
    const auto n_presp = static_cast<std::size_t>(16 + rng.below(9));
    const auto n_filler = static_cast<std::size_t>(4 + rng.below(7));
    std::vector<int> kinds;
    kinds.insert(kinds.end(), n_s3, 0);
    kinds.insert(kinds.end(), n_presp, 1);
    kinds.insert(kinds.end(), n_filler, 2);
    rng.shuffle(kinds);

    const int age = 55 + static_cast<int>(rng.below(31));
    const char* sex = rng.bernoulli(0.5) ? "female" : "male";

    std::ostringstream out;
    out << "@UTF8\n@Begin\n@Languages:\teng\n";
    out << "@Participants:\tPAR Participant, INV Investigator\n";
    out << "@ID:\teng|Pitt|PAR|" << age << ";|" << sex << '|' << to_string(group) << "|||Participant|||\n";
    out << "@ID:\teng|Pitt|INV|||||Investigator|||\n";
    out << "@Media:\t" << file_id << ", audio\n";
    long clock = static_cast<long>(rng.below(2000));
    auto bullet = [&](long length) {
        const long start = clock;
        clock += length;
        std::string b = "\x15" + std::to_string(start) + "_" + std::to_string(clock) + "\x15";
        clock += static_cast<long>(rng.below(800));
        return b;
    };
    out << "*INV:\tjust tell me everything you see happening in the picture . " << bullet(3000) << "\n";
    for (std::size_t u = 0; u < kinds.size(); ++u) {
        UtteranceBuilder b(rng, noise);
        if (kinds[u] == 0) third_singular_utterance(b, rng.bernoulli(s3_rate));
        else if (kinds[u] == 1) participle_utterance(b, rng.bernoulli(presp_rate));
        else filler_utterance(b);
        const long length = 1200 + static_cast<long>(rng.below(3500));
        out << "*PAR:\t" << b.main_line() << ' ' << bullet(length) << "\n";
        out << "%mor:\t" << b.mor_line() << "\n";
        if (rng.bernoulli(0.1)) out << "*INV:\tmhm . " << bullet(600) << "\n";
    }
    out << "@End\n";
    return out.str();
}

}  // namespace

std::vector<std::pair<ClassLabel, std::size_t>> table1_allocation(std::size_t total, bool include_rare_groups) {
    const std::vector<std::pair<ClassLabel, std::size_t>> source = {
        {ClassLabel::ProbableAD, 762}, {ClassLabel::Control, 243}, {ClassLabel::MCI, 162},
        {ClassLabel::PossibleAD, 68},  {ClassLabel::Vascular, 20}, {ClassLabel::Memory, 12},
        {ClassLabel::Other, 4},        {ClassLabel::Dementia, 1},  {ClassLabel::Uncategorised, 1},
    };
    const std::size_t groups = include_rare_groups ? source.size() : 6;
    double source_total = 0.0;
    for (std::size_t g = 0; g < groups; ++g) source_total += static_cast<double>(source[g].second);
    std::vector<std::pair<ClassLabel, std::size_t>> out;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        const double exact = static_cast<double>(total) * static_cast<double>(source[g].second) / source_total;
        const auto whole = static_cast<std::size_t>(std::floor(exact));
        out.emplace_back(source[g].first, whole);
        remainders.emplace_back(exact - static_cast<double>(whole), g);
        assigned += whole;
    }
    // Largest remainders first; equal remainders go to the earlier group.
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out[remainders[i % groups].second].second;
    return out;
}

std::pair<double, double> planted_rates(ClassLabel group) {
    switch (group) {
        case ClassLabel::ProbableAD: return {0.50, 0.45};
        case ClassLabel::Control: return {0.10, 0.10};
        case ClassLabel::MCI: return {0.35, 0.12};
        case ClassLabel::PossibleAD: return {0.15, 0.38};
        case ClassLabel::Vascular: return {0.40, 0.22};
        case ClassLabel::Memory: return {0.22, 0.40};
        default: return {0.30, 0.30};
    }
}

std::vector<SyntheticTranscript> generate_corpus(const SyntheticConfig& config) {
    std::vector<ClassLabel> groups;
    for (const auto& [label, count] : table1_allocation(config.total, config.include_rare_groups)) {
        groups.insert(groups.end(), count, label);
    }
    Rng order(derive_seed(config.seed, 0));
    order.shuffle(groups);
    std::vector<SyntheticTranscript> corpus;
    corpus.reserve(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "syn%04zu", i + 1);
        SyntheticTranscript t;
        t.file_id = id;
        t.group = groups[i];
        t.text = render_transcript(t.file_id, t.group, derive_seed(config.seed, i + 1));
        corpus.push_back(std::move(t));
    }
    return corpus;
}

void write_corpus(const std::vector<SyntheticTranscript>& corpus, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& t : corpus) {
        const auto path = std::filesystem::path(dir) / (t.file_id + ".cha");
        std::ofstream out(path, std::ios::binary);
        out << t.text;
        if (!out) throw std::runtime_error("cannot write " + path.string());
    }
}

}  // namespace chatml
