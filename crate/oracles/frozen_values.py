"""Independent reference values frozen into the Rust acceptance tests.

Run with `python3 oracles/frozen_values.py`; every printed number is pasted
into crates/core/tests/acceptance.rs. Nothing here imports the Rust code.
"""
import math
import re

import numpy as np
from scipy import stats


def tokenize(text):
    out = []
    for w in text.split():
        t = re.sub(r"^[^0-9A-Za-z]+|[^0-9A-Za-z]+$", "", w)
        if t:
            out.append(t.lower())
    return out


def sentences(text):
    parts = re.split(r"(?<=[.!?])(?=\s|$)", text)
    return [p.strip() for p in parts if p.strip()]


def idf_value(n, df):
    return math.log((n + 1) / (df + 1)) + 1


def df_table(docs):
    df = {}
    for d in docs:
        for t in set(tokenize(d)):
            df[t] = df.get(t, 0) + 1
    return df


def idf_dist(docs, vocab):
    df = df_table(docs)
    v = np.array([idf_value(len(docs), df.get(t, 0)) for t in vocab])
    return v / v.sum()


def kl(p, q):
    return float(sum(pi * math.log(pi / qi) for pi, qi in zip(p, q) if pi > 0))


def mean_sentence_vec(docs, vocab, idf):
    idx = {t: i for i, t in enumerate(vocab)}
    vecs = []
    for d in docs:
        for s in sentences(d):
            toks = tokenize(s)
            if not toks:
                continue
            v = np.zeros(len(vocab))
            for t in toks:
                v[idx[t]] += 1
            v = v * idf
            vecs.append(v / np.linalg.norm(v))
    return np.mean(vecs, axis=0)


def distances(source, target):
    vocab = sorted(set(t for d in source + target for t in tokenize(d)))
    p = idf_dist(source, vocab)
    q = idf_dist(target, vocab)
    m = 0.5 * (p + q)
    js = 0.5 * kl(p, m) + 0.5 * kl(q, m)
    dfs, dft = df_table(source), df_table(target)
    n = len(source) + len(target)
    idf = np.array([idf_value(n, dfs.get(t, 0) + dft.get(t, 0)) for t in vocab])
    a = mean_sentence_vec(source, vocab, idf)
    b = mean_sentence_vec(target, vocab, idf)
    cos = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    return kl(q, p), kl(p, q), js, (1 - cos) / 2


def dqi_c1(docs, a, b):
    vocab = set(t for d in docs for t in tokenize(d))
    lens = [len(tokenize(s)) for d in docs for s in sentences(d)]
    lens = [n for n in lens if n > 0]
    term1 = len(vocab) / len(docs)
    term2 = float(np.std(lens))
    term3 = float(np.mean([np.sign((s - a) * (b - s)) for s in lens]))
    return term1, term2, term3, term1 + term2 * term3


SOURCE = ["The cat sat. The dog ran!", "A cat and a dog.", "Birds fly high? Yes they do."]
TARGET = ["The bird sat on the mat.", "Dogs and cats run. The end", "A mat!"]

C1_DOCS = [
    "One two three. Four five six seven eight!",
    "Nine ten? Eleven twelve thirteen fourteen fifteen sixteen seventeen.",
    "one TWO, three... Eighteen.",
]

# source: D_KL(Q||P), D_KL(P||Q), D_JS, D_cos, accuracy change (points)
TABLE = {
    "Political Statements": (1.140, 1.062, 0.228, 0.287, 3.55),
    "Fake News": (0.703, 0.392, 0.114, 0.307, 0.59),
    "Product Reviews": (1.096, 0.809, 0.199, 0.356, 0.0),
    "Job Scams": (1.217, 0.929, 0.224, 0.423, 5.32),
    "Phishing": (0.689, 0.353, 0.105, 0.356, 1.77),
    "PHEME": (1.106, 1.208, 0.243, 0.315, 0.0),
    "LIAR": (1.132, 1.082, 0.230, 0.281, -2.0),
    "SMS Spam": (1.226, 1.327, 0.267, 0.446, -1.0),
}


def main():
    print("distances", [repr(x) for x in distances(SOURCE, TARGET)])
    print("dqi_c1 a=1.5 b=6", [repr(x) for x in dqi_c1(C1_DOCS, 1.5, 6.0)])
    names = sorted(TABLE)
    delta = np.array([TABLE[n][4] for n in names])
    for col, label in enumerate(["KL(Q||P)", "KL(P||Q)", "JS", "cos"]):
        d = np.array([TABLE[n][col] for n in names])
        r, _ = stats.pearsonr(-d, delta)
        rho, _ = stats.spearmanr(-d, delta)
        print(f"paper {label}: r={r!r} rho={rho!r}")


if __name__ == "__main__":
    main()
