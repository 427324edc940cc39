#!/usr/bin/env python3
"""Reference feature values for the CHAT fixtures under tests/fixtures/features.

Independent of the C++ code: its own tokenizer, its own counters, plain
Python arithmetic. Only the subset of CHAT used by the fixtures is handled.

    python3 tests/oracle/feature_oracle.py tests/fixtures/features

writes <name>.expected.json next to every <name>.cha.
"""

import json
import re
import sys
from pathlib import Path

REGISTRY = [
    "Age", "Sex", "Duration_(sec)", "MLU_Utts", "MLU_Morphemes", "FREQ_TTR", "Words_Min", "Verbs_Utt",
    "%_Word_Errors", "Utt_Errors", "density", "%_Nouns", "%_Plurals", "%_Verbs", "%_Aux", "%_Mod", "%_3S",
    "%_13S", "%_PAST", "%_PASTP", "%_PRESP", "%_prep", "%_adj", "%_adv", "%_conj", "%_det", "%_pro",
    "noun_verb", "retracing", "repetition", "mor_Utts", "mor_syllables", "syllables_min", "%_Prolongation",
    "Mean_RU", "%_Phonological_fragment", "%_Phrase_repetitions", "%_Word_revisions", "%_Phrase_revisions",
    "%_Pauses", "%_Filled_pauses", "%_TD", "SLD_Ratio", "Content_words_ratio", "Function_words_ratio",
    "IPSyn_N", "IPSyn_V", "IPSyn_Q", "IPSyn_S",
]

# Same item set the library ships, as data.
IPSYN_ITEMS = [
    ("N", [["pos=n"]]),
    ("N", [["pos=pro"]]),
    ("N", [["pos=det"], ["pos=n"]]),
    ("N", [["suffix=PL"]]),
    ("N", [["pos=adj"], ["pos=n"]]),
    ("V", [["pos=v"]]),
    ("V", [["pos=prep"]]),
    ("V", [["pos=aux", "lemma=be"], ["suffix=PRESP"]]),
    ("V", [["pos=mod"]]),
    ("V", [["suffix=PAST"]]),
    ("Q", ["term=?"]),
    ("Q", [["lemma=not"]]),
    ("Q", [["pos=pro:int"]]),
    ("Q", [["pos=aux"], ["lemma=not"]]),
    ("Q", [["pos=aux"], "term=?"]),
    ("S", [["pos=pro"], ["pos=v"]]),
    ("S", [["pos=conj"]]),
    ("S", [(2, ["pos=v"])]),
    ("S", [["pos=inf"]]),
    ("S", [["pos=pro"], ["suffix=3S"]]),
]

DISFLUENCY = {"[/]": "rep", "[//]": "retrace", "[///]": "reform"}
LEXEME = re.compile(r"\x15[^\x15]*\x15|\[[^\]]*\]|\(\.{1,3}\)|\+\.\.\.|[<>]|[.?!]|[^\s<>\[\]]+")


class Tag:
    def __init__(self, text):
        host, *clitics = text.split("~")
        pos, rest = host.split("|", 1)
        pieces = re.split(r"([-&])", rest)
        self.pos = pos
        self.lemma = pieces[0]
        self.suffixes = [pieces[i + 1] for i in range(1, len(pieces) - 1, 2) if pieces[i] == "-"]
        self.fusions = [pieces[i + 1] for i in range(1, len(pieces) - 1, 2) if pieces[i] == "&"]
        self.clitics = [Tag(c) for c in clitics]

    def all_tags(self):
        out = [self]
        for c in self.clitics:
            out += c.all_tags()
        return out

    def base(self):
        return self.pos.split(":")[0]

    def has(self, code):
        return code in self.suffixes or code in self.fusions

    def mlu_morphemes(self):
        return 1 + len(self.suffixes) + sum(c.mlu_morphemes() for c in self.clitics)


def syllables(word):
    w = word.replace(":", "").lower()
    if not w or not w.isalpha():
        return 1
    groups = []
    for m in re.finditer(r"[aeiouy]+", w):
        start = m.start()
        if start == 0 and w[0] == "y":
            start = 1
            if m.end() == 1:
                continue
        groups.append(start)
    n = len(groups)
    if n > 1 and w.endswith("e") and groups[-1] == len(w) - 1 and w[-2] != "l":
        n -= 1
    return max(1, n)


class Utt:
    def __init__(self, speaker, body):
        self.speaker = speaker
        self.tokens = []  # dicts: kind, surface, prolonged, marks, errors, excluded
        self.terminator = "."
        self.errors = []
        self.align = None
        self.mor = None
        group_starts = []
        scope = None  # (first token index, one past last)
        done = False
        for lx in LEXEME.findall(body):
            if lx.startswith("\x15"):
                a, b = lx.strip("\x15").split("_")
                self.align = (int(a), int(b))
            elif lx == "<":
                group_starts.append(len(self.tokens))
                scope = None
            elif lx == ">":
                scope = (group_starts.pop(), len(self.tokens))
            elif lx.startswith("["):
                if lx.startswith("[*"):
                    code = lx[2:-1].strip()
                    self.errors.append(code)
                    if scope and not done:
                        self.tokens[scope[1] - 1]["errors"].append(code)
                elif lx in DISFLUENCY:
                    words = [t for t in self.tokens[scope[0]:scope[1]] if t["kind"] == "word"]
                    for t in words:
                        t["excluded"] = True
                    self.tokens[scope[1] - 1]["marks"].append((DISFLUENCY[lx], max(1, len(words))))
            elif lx in (".", "?", "!", "+..."):
                self.terminator = lx
                done = True
                scope = None
            else:
                self.tokens.append(classify(lx))
                scope = (len(self.tokens) - 1, len(self.tokens))

    def aligned_words(self):
        return sum(1 for t in self.tokens if t["kind"] == "word" and not t["excluded"])


def classify(atom):
    tok = {"marks": [], "errors": [], "excluded": False, "prolonged": False}
    if atom.startswith("&-"):
        tok.update(kind="filler", surface=atom[2:])
    elif atom.startswith("&+"):
        tok.update(kind="fragment", surface=atom[2:])
    elif atom.startswith("("):
        tok.update(kind="pause", surface=atom)
    elif atom in ("xxx", "yyy", "www"):
        tok.update(kind="unintelligible", surface=atom)
    else:
        tok.update(kind="word", surface=atom.replace(":", ""), prolonged=":" in atom)
    return tok


def parse(text):
    text = text.lstrip("﻿")
    lines = []
    for raw in text.split("\n"):
        if raw.startswith("\t") and lines:
            lines[-1] += " " + raw.strip()
        elif raw:
            lines.append(raw)
    par = {}
    utts = []
    for line in lines:
        if line.startswith("@ID:"):
            f = line.split("\t", 1)[1].split("|")
            if f[2] == "PAR":
                years, _, rest = f[3].partition(";")
                months = rest.split(".")[0]
                par["age"] = float(years) + (float(months) / 12.0 if months else 0.0) if years else None
                par["sex"] = {"male": 0.0, "female": 1.0}.get(f[4])
        elif line.startswith("*"):
            speaker, body = line[1:].split(":\t", 1)
            utts.append(Utt(speaker, body))
        elif line.startswith("%mor:"):
            tags = [Tag(w) for w in line.split("\t", 1)[1].split() if "|" in w]
            if len(tags) == utts[-1].aligned_words():
                utts[-1].mor = tags
    return par, utts


def div(a, b):
    return None if b == 0 else a / b


def pct(a, b):
    return None if b == 0 else 100.0 * a / b


def clause_holds(clause, utt, tags):
    if isinstance(clause, str):
        return utt.terminator == clause[len("term="):]
    need, matchers = clause if isinstance(clause, tuple) else (1, clause)

    def ok(tag, m):
        key, value = m.split("=", 1)
        if key == "pos":
            return tag.pos == value or tag.base() == value
        if key == "lemma":
            return tag.lemma == value
        return tag.has(value)

    return sum(1 for t in tags if all(ok(t, m) for m in matchers)) >= need


def features(text):
    par, all_utts = parse(text)
    out = {name: None for name in REGISTRY}
    out["Age"] = par.get("age")
    out["Sex"] = par.get("sex")
    aligned = [u.align for u in all_utts if u.align]
    duration = (max(b for _, b in aligned) - min(a for a, _ in aligned)) / 1000.0 if aligned else None
    out["Duration_(sec)"] = duration
    minutes = duration / 60.0 if duration else 0

    utts = [u for u in all_utts if u.speaker == "PAR"]
    words = [t for u in utts for t in u.tokens if t["kind"] == "word"]
    W = len(words)
    out["Words_Min"] = div(W, minutes) if duration is not None else None
    out["FREQ_TTR"] = div(len({t["surface"].lower() for t in words}), W)
    out["%_Word_Errors"] = pct(sum(len(t["errors"]) for u in utts for t in u.tokens), W)
    out["Utt_Errors"] = float(sum(1 for u in utts if u.errors))

    if any(u.mor is not None for u in utts):
        eligible = [u for u in utts if u.mor and not all(t["kind"] in ("unintelligible", "pause") for t in u.tokens)]
        out["MLU_Utts"] = float(len(eligible))
        out["MLU_Morphemes"] = div(sum(t.mlu_morphemes() for u in eligible for t in u.mor), len(eligible))
        hosts = [t for u in utts if u.mor for t in u.mor]
        flat = [x for t in hosts for x in t.all_tags()]
        T = len(flat)
        count = lambda *bases: sum(1 for x in flat if x.base() in bases)
        n, v, adj, adv, prep, conj = count("n"), count("v"), count("adj"), count("adv"), count("prep"), count("conj", "coord")
        out["Verbs_Utt"] = div(v, len(utts))
        for name, bases in (("%_Nouns", ("n",)), ("%_Verbs", ("v",)), ("%_Aux", ("aux",)), ("%_Mod", ("mod",)),
                            ("%_prep", ("prep",)), ("%_adj", ("adj",)), ("%_adv", ("adv",)),
                            ("%_conj", ("conj", "coord")), ("%_det", ("det",)), ("%_pro", ("pro",))):
            out[name] = pct(count(*bases), T)
        for name, code in (("%_Plurals", "PL"), ("%_3S", "3S"), ("%_13S", "13S"), ("%_PAST", "PAST"),
                           ("%_PASTP", "PASTP"), ("%_PRESP", "PRESP")):
            out[name] = pct(sum(1 for t in hosts if t.has(code)), T)
        out["noun_verb"] = div(n, v)
        out["density"] = div(v + adj + adv + prep + conj, T)
        content = div(n + v + adj + adv, T)
        out["Content_words_ratio"] = content
        out["Function_words_ratio"] = None if content is None else 1.0 - content

        scored = [u for u in utts if u.mor][:100]
        totals = {"N": 0, "V": 0, "Q": 0, "S": 0}
        for scale, clauses in IPSYN_ITEMS:
            hits = 0
            for u in scored:
                tags = [x for t in u.mor for x in t.all_tags()]
                if all(clause_holds(c, u, tags) for c in clauses):
                    hits += 1
            totals[scale] += min(2, hits)
        for scale in "NVQS":
            out["IPSyn_" + scale] = float(totals[scale])

    # Fluency counts.
    S = float(sum(syllables(t["surface"]) for t in words))
    out["mor_Utts"] = float(len(utts))
    out["mor_syllables"] = S
    out["syllables_min"] = div(S, minutes) if duration is not None else None
    marks = []  # (kind, scope, token, word position)
    for u in utts:
        wpos = 0
        for tok in u.tokens:
            here = wpos if tok["kind"] == "word" else None
            for kind, scope in tok["marks"]:
                marks.append((u, kind, scope, tok, here))
            if tok["kind"] == "word":
                wpos += 1
    reps = [m for m in marks if m[1] == "rep"]
    retr = [m for m in marks if m[1] == "retrace"]
    reform = [m for m in marks if m[1] == "reform"]
    events = 0
    prev = None
    for m in reps:
        u, _, scope, _, here = m
        chained = (prev is not None and prev[0] is u and here is not None and prev[4] is not None
                   and prev[2] == scope and prev[4] + scope == here)
        events += 0 if chained else 1
        prev = m
    mono = sum(1 for _, _, scope, tok, _ in reps
               if scope == 1 and tok["kind"] == "word" and syllables(tok["surface"]) == 1)
    kinds = [t["kind"] for u in utts for t in u.tokens]
    prolonged = sum(1 for t in words if t["prolonged"])
    fragments, fillers, pauses = kinds.count("fragment"), kinds.count("filler"), kinds.count("pause")
    out["repetition"] = float(len(reps))
    out["retracing"] = float(len(retr) + len(reform))
    out["%_Prolongation"] = pct(prolonged, S)
    out["%_Phonological_fragment"] = pct(fragments, S)
    out["%_Filled_pauses"] = pct(fillers, S)
    out["%_Pauses"] = pct(pauses, S)
    out["%_Word_revisions"] = pct(sum(1 for m in retr if m[2] == 1), S)
    out["%_Phrase_revisions"] = pct(sum(1 for m in retr if m[2] > 1), S)
    out["%_Phrase_repetitions"] = pct(sum(1 for m in reps if m[2] > 1), S)
    out["Mean_RU"] = div(len(reps), events)
    sld = prolonged + fragments + mono
    td = sld + (len(marks) - mono) + fillers
    out["%_TD"] = pct(td, S)
    out["SLD_Ratio"] = div(sld, td)
    return out


def main():
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/features")
    for cha in sorted(root.glob("*.cha")):
        values = features(cha.read_text(encoding="utf-8"))
        cha.with_suffix(".expected.json").write_text(json.dumps(values, indent=1) + "\n", encoding="utf-8")
        print(cha.name)


if __name__ == "__main__":
    main()
