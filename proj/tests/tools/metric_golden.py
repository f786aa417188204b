"""Regenerates tests/data/metric_golden.json.

Independent reference for the BLEU / ROUGE-L conventions the library uses:
lowercase, whitespace split, every ASCII punctuation character its own token;
BLEU clips by the max reference count, uses the closest reference length
(shorter on ties) for the brevity penalty, drops orders longer than the
candidate, smooths zero higher-order precisions to 1e-9 and returns 0 when no
unigram matches. ROUGE-L reports the reference with the best (F, R, P).
"""
import json
import math
import string
import sys
from collections import Counter
from fractions import Fraction

EPS = 1e-9


def tokenize(s):
    out, cur = [], []
    for ch in s.lower():
        if ch.isspace():
            if cur:
                out.append("".join(cur))
                cur = []
        elif ch in string.punctuation:
            if cur:
                out.append("".join(cur))
                cur = []
            out.append(ch)
        else:
            cur.append(ch)
    if cur:
        out.append("".join(cur))
    return out


def ngrams(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def bleu(cand, refs, max_n):
    c = tokenize(cand)
    rs = [tokenize(r) for r in refs]
    if not c:
        return 0.0
    r_len = min((abs(len(r) - len(c)), len(r)) for r in rs)[1]
    bp = 1.0 if len(c) > r_len else math.exp(1 - r_len / len(c))
    orders = min(max_n, len(c))
    logs = 0.0
    for n in range(1, orders + 1):
        cc = ngrams(c, n)
        best = Counter()
        for r in rs:
            for g, k in ngrams(r, n).items():
                best[g] = max(best[g], k)
        match = sum(min(k, best[g]) for g, k in cc.items())
        p = Fraction(match, sum(cc.values()))
        if n == 1 and match == 0:
            return 0.0
        logs += math.log(max(float(p), EPS))
    return bp * math.exp(logs / orders)


def lcs(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            t[i][j] = t[i - 1][j - 1] + 1 if a[i - 1] == b[j - 1] else max(t[i - 1][j], t[i][j - 1])
    return t[len(a)][len(b)]


def rouge_l(cand, refs):
    c = tokenize(cand)
    if not c:
        return 0.0
    best = None
    for r in refs:
        rt = tokenize(r)
        l = lcs(c, rt)
        p = Fraction(l, len(c))
        rec = Fraction(l, len(rt)) if rt else Fraction(0)
        f = 2 * p * rec / (p + rec) if p + rec > 0 else Fraction(0)
        key = (f, rec, p)
        if best is None or key > best:
            best = key
    return float(best[0])


CASES = [
    ("brevity", "the cat sat", ["the cat sat down"], 2),
    ("identity", "the cat is on the mat", ["the cat is on the mat"], 4),
    ("disjoint", "a b c", ["d e f"], 4),
    ("clipping", "the the the the the the the", ["the cat is on the mat", "there is a cat on the mat"], 1),
    ("single_token", "peace", ["peace and respect"], 4),
    ("smoothed_bigram", "a b c d", ["a c b d"], 4),
    ("punctuation", "Hello, world!", ["hello world"], 2),
    ("case_fold", "Muslims ARE Our Neighbours", ["muslims are our neighbours"], 4),
    ("longer_candidate", "we all share the same values and the same hopes", ["we share values"], 4),
    ("two_refs_closest_shorter", "one two three four", ["one two three", "one two three four five"], 2),
    ("partial_overlap", "immigrants contribute to the economy every day",
     ["many immigrants contribute greatly to our economy"], 4),
    ("repeated_ngrams", "no no no hate here", ["no hate here", "there is no hate"], 3),
    ("reordered", "respect deserves everyone", ["everyone deserves respect"], 4),
    ("trigram_cap", "people of every faith", ["people of every faith live here"], 3),
    ("multi_ref_best_rouge", "women can lead", ["women lead", "women can lead companies and countries"], 4),
    ("apostrophe", "it's not true", ["it is not true"], 2),
    ("numbers", "over 3 million people", ["3 million people work here"], 4),
    ("lcs_two_of_three", "the cat sat", ["the cat ran"], 2),
    ("max_n_one", "the economy grows", ["the economy shrinks"], 1),
    ("empty_reference_mix", "kindness matters", ["", "kindness always matters"], 2),
]


def main(out):
    cases = []
    for name, cand, refs, n in CASES:
        cases.append({"name": name, "candidate": cand, "references": refs, "max_n": n,
                      "bleu": bleu(cand, refs, n), "rouge_l_f": rouge_l(cand, refs)})
    with open(out, "w") as f:
        json.dump(cases, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "metric_golden.json")
