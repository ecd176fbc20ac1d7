"""BLEU (multi-bleu semantics), Fleiss' kappa and Welch's t-test."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass
class BleuReport:
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    score: float
    hyp_len: int
    ref_len: int

    @property
    def ratio(self) -> float:
        return self.hyp_len / self.ref_len if self.ref_len else 0.0

    def format(self) -> str:
        p = "/".join(f"{100 * x:.1f}" for x in self.precisions)
        return (f"BLEU = {self.score:.2f}, {p} (BP={self.brevity_penalty:.3f}, "
                f"ratio={self.ratio:.3f}, hyp_len={self.hyp_len}, ref_len={self.ref_len})")


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references, lowercase: bool = False) -> BleuReport:
    """Corpus BLEU over pre-tokenized lines, clipped counts, no smoothing.

    ``references`` is one list of reference lines, or a list of such lists for
    multiple references; the closest reference length (shorter on ties) is used.
    """
    hyps = list(hypotheses)
    if references and isinstance(references[0], str):
        ref_sets = [list(references)]
    else:
        ref_sets = [list(r) for r in references]
    for refs in ref_sets:
        if len(refs) != len(hyps):
            raise ValueError(f"bleu: {len(hyps)} hypotheses vs {len(refs)} references")
    correct = [0] * 4
    total = [0] * 4
    hyp_len = ref_len = 0
    for i, hyp in enumerate(hyps):
        norm = (lambda s: s.lower()) if lowercase else (lambda s: s)
        h = norm(hyp).split()
        rs = [norm(refs[i]).split() for refs in ref_sets]
        hyp_len += len(h)
        closest = min(rs, key=lambda r: (abs(len(r) - len(h)), len(r)))
        ref_len += len(closest)
        for n in range(1, 5):
            hc = _ngrams(h, n)
            max_ref: Counter = Counter()
            for r in rs:
                max_ref |= _ngrams(r, n)
            total[n - 1] += sum(hc.values())
            correct[n - 1] += sum(min(c, max_ref[g]) for g, c in hc.items())
    precisions = tuple(c / t if t else 0.0 for c, t in zip(correct, total))
    if ref_len == 0:
        return BleuReport((0.0,) * 4, 0.0, 0.0, hyp_len, ref_len)
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    if min(precisions) == 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4)
    return BleuReport(precisions, bp, score, hyp_len, ref_len)


# ---------------------------------------------------------------- agreement


def fleiss_kappa(matrix) -> float:
    """Fleiss' kappa for an N x K matrix of per-category rating counts.

    Every row must sum to the same number of raters.  When chance agreement
    is 1 (all ratings in one category) kappa is defined as 1.0.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1:
        raise ValueError("fleiss_kappa: expected a non-empty N x K matrix")
    if (m < 0).any():
        raise ValueError("fleiss_kappa: negative counts")
    n_raters = m.sum(axis=1)
    if not np.all(n_raters == n_raters[0]) or n_raters[0] < 2:
        raise ValueError("fleiss_kappa: every subject needs the same number (>= 2) of raters")
    n = n_raters[0]
    N = m.shape[0]
    p_j = m.sum(axis=0) / (N * n)
    P_i = ((m * m).sum(axis=1) - n) / (n * (n - 1))
    P_bar = P_i.mean()
    Pe = (p_j * p_j).sum()
    if np.isclose(Pe, 1.0, rtol=0, atol=1e-15):
        if np.isclose(P_bar, 1.0):
            return 1.0
        raise ValueError("fleiss_kappa: undefined (chance agreement is 1)")
    return float((P_bar - Pe) / (1.0 - Pe))


# ---------------------------------------------------------------- t-test


def _t_pdf(x: float, df: float) -> float:
    logc = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(logc - (df + 1) / 2 * math.log1p(x * x / df))


def _adaptive_simpson(f, a: float, b: float, tol: float, depth: int = 50) -> float:
    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, depth)


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t, by adaptive quadrature of the density."""
    x = abs(t)
    if x == 0.0:
        return 1.0
    # integrate the central mass on [0, x] piecewise so sharp tails stay resolved
    edges = np.linspace(0.0, x, int(min(64, 4 + x)) + 1)
    mass = sum(_adaptive_simpson(lambda u: _t_pdf(u, df), lo, hi, 1e-14)
               for lo, hi in zip(edges[:-1], edges[1:]))
    return float(min(1.0, max(0.0, 1.0 - 2.0 * mass)))


@dataclass
class WelchResult:
    t: float
    df: float
    p: float


def welch_t(sample_a, sample_b) -> WelchResult:
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("welch_t: each sample needs at least two values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    se2 = va + vb
    diff = a.mean() - b.mean()
    if se2 == 0.0:
        if diff == 0.0:
            return WelchResult(0.0, float(len(a) + len(b) - 2), 1.0)
        return WelchResult(math.copysign(math.inf, diff), float(len(a) + len(b) - 2), 0.0)
    t = diff / math.sqrt(se2)
    df = se2 * se2 / (va * va / (len(a) - 1) + vb * vb / (len(b) - 1))
    return WelchResult(float(t), float(df), t_sf_two_sided(t, df))
