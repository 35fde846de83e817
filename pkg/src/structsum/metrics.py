"""Evaluation metrics: ROUGE-1/2/L plus the Abstract/Copy content metrics.

All functions operate on token sequences (any hashable token type).
"""
import json
import os
from collections import Counter

import numpy as np

from . import _kernels, text


def _prf(overlap, n_cand, n_ref):
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def clipped_overlap(cand_counts, ref_counts):
    return sum(min(c, ref_counts[g]) for g, c in cand_counts.items())


def rouge_n(candidate, reference, n, stem=False):
    """Clipped n-gram precision/recall/F between two token sequences."""
    if stem:
        candidate = [text.porter_stem(t) for t in candidate]
        reference = [text.porter_stem(t) for t in reference]
    cc = ngram_counts(candidate, n)
    rc = ngram_counts(reference, n)
    overlap = clipped_overlap(cc, rc)
    return _prf(overlap, sum(cc.values()), sum(rc.values()))


def rouge_l(candidate, reference, stem=False):
    """LCS-based precision/recall/F."""
    if stem:
        candidate = [text.porter_stem(t) for t in candidate]
        reference = [text.porter_stem(t) for t in reference]
    if not candidate or not reference:
        return 0.0, 0.0, 0.0
    ids = {}
    a = np.asarray([ids.setdefault(t, len(ids)) for t in candidate],
                   dtype=np.int64)
    b = np.asarray([ids.setdefault(t, len(ids)) for t in reference],
                   dtype=np.int64)
    lcs = int(_kernels.lcs_length(a, b))
    return _prf(lcs, len(candidate), len(reference))


def _content_counts(tokens):
    sw = text.stopwords()
    return Counter(t.lower() for t in tokens
                   if t.lower() not in sw and str(t).isalpha())


def abstract_metric(generated, reference, source):
    """Unigram f-measure between reference and generation after removing
    every token type that appears in the source. Measures abstraction."""
    src = set(_content_counts(source))
    g = Counter({w: c for w, c in _content_counts(generated).items()
                 if w not in src})
    r = Counter({w: c for w, c in _content_counts(reference).items()
                 if w not in src})
    overlap = clipped_overlap(g, r)
    _, _, f = _prf(overlap, sum(g.values()), sum(r.values()))
    return f


def copy_metric(generated, reference, source):
    """Unigram f-measure restricted to token types present in the source.
    Measures coverage of input detail."""
    src = set(_content_counts(source))
    g = Counter({w: c for w, c in _content_counts(generated).items()
                 if w in src})
    r = Counter({w: c for w, c in _content_counts(reference).items()
                 if w in src})
    overlap = clipped_overlap(g, r)
    _, _, f = _prf(overlap, sum(g.values()), sum(r.values()))
    return f


def evaluate_corpus(systems, references, sources=None, stem=False):
    """Per-instance and mean scores for a system run.

    systems/references: lists of token sequences (one flat sequence per
    instance). sources enables the Abstract/Copy metrics.
    """
    if len(systems) != len(references):
        raise ValueError("system and reference counts differ")
    rows = []
    for i, (cand, ref) in enumerate(zip(systems, references)):
        row = {"id": i, "empty": len(cand) == 0}
        for n in (1, 2):
            p, r, f = rouge_n(cand, ref, n, stem=stem)
            row[f"r{n}_p"], row[f"r{n}_r"], row[f"r{n}_f"] = p, r, f
        p, r, f = rouge_l(cand, ref, stem=stem)
        row["rl_p"], row["rl_r"], row["rl_f"] = p, r, f
        if sources is not None:
            row["abstract"] = abstract_metric(cand, ref, sources[i])
            row["copy"] = copy_metric(cand, ref, sources[i])
        rows.append(row)

    keys = [k for k in rows[0] if k not in ("id", "empty")] if rows else []
    report = {
        "instances": rows,
        "mean": {k: float(np.mean([row[k] for row in rows])) for k in keys},
        "n_instances": len(rows),
        "n_empty": sum(row["empty"] for row in rows),
    }
    return report


def write_report(path, report):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(report, f, sort_keys=True, indent=2)
        f.write("\n")
    os.replace(tmp, path)
