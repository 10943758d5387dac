"""Independent recomputations used as test oracles.

These avoid the package's code paths on purpose: plain lists, explicit
loops and exact fractions.
"""

from __future__ import annotations

from fractions import Fraction


def prf(predicted, gold):
    pred = sorted(set(predicted))
    ref = sorted(set(gold))
    hits = 0
    for p in pred:
        for g in ref:
            if p == g:
                hits += 1
    precision = Fraction(hits, len(pred)) if pred else Fraction(0)
    recall = Fraction(hits, len(ref))
    f1 = Fraction(0) if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def macro(pairs):
    """Mean of per-instance scores over instances with non-empty gold."""
    rows = [prf(p, g) for p, g in pairs if len(set(g)) > 0]
    n = len(rows)
    return tuple(sum(r[i] for r in rows) / n for i in range(3))
