#!/usr/bin/env python3
"""Regenerates the frozen reference values used by the sfs-core test suite.

The references are computed with tooling that shares no code with the crate:
  * mpmath at 60 significant digits for the selection and backup formulas,
  * difflib.SequenceMatcher (autojunk=False, smaller token list first) for
    token-sequence similarity,
  * scikit-learn's TfidfVectorizer for tf-idf cosine similarity.

Run from the repository root:
    python3 crates/core/tests/oracles/gen_fixtures.py
"""

import difflib
import json
import os
import random

import mpmath
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.metrics.pairwise import cosine_similarity

mpmath.mp.dps = 60
HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "data")


def uct_cases(rng, n):
    cases = []
    for _ in range(n):
        q = rng.random()
        visits = rng.randint(1, 200)
        total = visits + rng.randint(0, 400)
        c = rng.uniform(0.0, 3.0)
        val = mpmath.mpf(q) + mpmath.mpf(c) * mpmath.sqrt(
            mpmath.log(mpmath.mpf(total)) / mpmath.mpf(visits)
        )
        cases.append(
            {"q": q, "visits": visits, "total": total, "c": c, "expected": float(val)}
        )
    return cases


def puct_cases(rng, n):
    cases = []
    for _ in range(n):
        q = rng.random()
        prior = rng.random()
        visits = rng.randint(0, 100)
        total = visits + rng.randint(1, 300)
        c_base = rng.choice([19652.0, rng.uniform(0.5, 50000.0)])
        c = rng.uniform(0.0, 3.0)
        nt = mpmath.mpf(total)
        beta = mpmath.log((nt + mpmath.mpf(c_base) + 1) / mpmath.mpf(c_base)) + mpmath.mpf(c)
        val = mpmath.mpf(q) + beta * mpmath.mpf(prior) * mpmath.sqrt(
            mpmath.log(nt) / (1 + mpmath.mpf(visits))
        )
        cases.append(
            {
                "q": q,
                "prior": prior,
                "visits": visits,
                "total": total,
                "c_base": c_base,
                "c": c,
                "beta": float(beta),
                "expected": float(val),
            }
        )
    return cases


def backup_cases(rng, n):
    cases = []
    for _ in range(n):
        q_old = rng.random()
        target = rng.random()
        visits = rng.randint(0, 50)
        alpha = mpmath.mpf(1) / (1 + visits)
        qo = mpmath.mpf(q_old)
        val = (1 - alpha) * qo + alpha * max(qo, mpmath.mpf(target))
        cases.append(
            {"q_old": q_old, "target": target, "visits": visits, "expected": float(val)}
        )
    return cases


WORDS = ["def", "return", "x", "y", "for", "in", "range", "if", "sum", "len", "a_b", "k2"]


def random_doc(rng, lo=1, hi=14):
    n = rng.randint(lo, hi)
    seps = [" ", "  ", "\n", "\t", " ( ", ") ", ": ", ", "]
    out = []
    for i in range(n):
        out.append(rng.choice(WORDS))
        if i + 1 < n:
            out.append(rng.choice(seps))
    return "".join(out)


def token_seq_cases(rng, n):
    cases = []
    for _ in range(n):
        a = random_doc(rng, 0, 16)
        b = random_doc(rng, 0, 16) if rng.random() < 0.7 else a
        ta, tb = a.split(), b.split()
        # the ratio depends on argument order; the crate puts the smaller list first
        ta, tb = min(ta, tb), max(ta, tb)
        if not ta and not tb:
            ratio = 1.0
        else:
            ratio = difflib.SequenceMatcher(None, ta, tb, autojunk=False).ratio()
        cases.append({"a": a, "b": b, "expected": ratio})
    return cases


def tfidf_cases(rng, n):
    cases = []
    vec_args = dict(
        token_pattern=r"(?u)\w+",
        lowercase=False,
        smooth_idf=True,
        sublinear_tf=False,
        norm="l2",
    )
    for _ in range(n):
        docs = [random_doc(rng) for _ in range(rng.randint(2, 6))]
        m = TfidfVectorizer(**vec_args).fit_transform(docs)
        sims = cosine_similarity(m)
        cases.append({"docs": docs, "expected": [[float(v) for v in row] for row in sims]})
    return cases


def main():
    rng = random.Random(20241016)
    formulas = {
        "uct": uct_cases(rng, 50),
        "puct": puct_cases(rng, 50),
        "backup": backup_cases(rng, 50),
    }
    similarity = {
        "token_seq": token_seq_cases(rng, 200),
        "tfidf": tfidf_cases(rng, 60),
    }
    with open(os.path.join(OUT, "formula_reference.json"), "w") as f:
        json.dump(formulas, f, indent=1)
        f.write("\n")
    with open(os.path.join(OUT, "similarity_reference.json"), "w") as f:
        json.dump(similarity, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
