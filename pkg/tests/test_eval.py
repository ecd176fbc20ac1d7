import math

import numpy as np
import pytest
import sacrebleu
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from statsmodels.stats import inter_rater

from tweet2news.evaluation import bleu, fleiss_kappa, t_sf_two_sided, welch_t

from oracles import (BLEU_FIXTURES, FLEISS_TABLE, FLEISS_VALUE, SMALL_TABLE, SMALL_VALUE, WELCH_A, WELCH_B,
                     WELCH_DF, WELCH_P, WELCH_T)


@pytest.mark.parametrize("name", list(BLEU_FIXTURES))
def test_bleu_fixture_scores(name):
    hyps, refs, want = BLEU_FIXTURES[name]
    got = bleu(hyps, refs if len(refs) > 1 else refs[0])
    assert f"{got.score:.2f}" == f"{want:.2f}"
    assert got.score == pytest.approx(want, abs=1e-9)


@pytest.mark.parametrize("name", list(BLEU_FIXTURES))
def test_bleu_agrees_with_sacrebleu_live(name):
    hyps, refs, _ = BLEU_FIXTURES[name]
    ref = sacrebleu.corpus_bleu(hyps, refs, tokenize="none", smooth_method="none", force=True)
    got = bleu(hyps, refs)
    assert got.score == pytest.approx(ref.score, abs=1e-9)
    assert (got.hyp_len, got.ref_len) == (ref.sys_len, ref.ref_len)


def test_bleu_clipping_by_hand():
    r = bleu(["the the the"], ["the cat"])
    assert r.precisions[0] == pytest.approx(1 / 3)
    assert r.brevity_penalty == 1.0 and r.score == 0.0


def test_bleu_brevity_formula():
    r = bleu(["a b c d"], ["a b c d e f"])
    assert r.brevity_penalty == pytest.approx(math.exp(1 - 6 / 4))
    assert r.score == pytest.approx(100 * math.exp(1 - 6 / 4))


def test_bleu_case_and_errors():
    assert bleu(["The Cat sat on mat"], ["the cat sat on mat"]).score < 100
    assert bleu(["The Cat sat on mat"], ["the cat sat on mat"], lowercase=True).score == pytest.approx(100)
    with pytest.raises(ValueError):
        bleu(["a"], ["a", "b"])


def test_bleu_format_line():
    line = bleu(["a b c d e"], ["a b c d e"]).format()
    assert line == "BLEU = 100.00, 100.0/100.0/100.0/100.0 (BP=1.000, ratio=1.000, hyp_len=5, ref_len=5)"


def test_bleu_permutation_invariant():
    hyps, refs, _ = BLEU_FIXTURES["brevity"]
    fwd = bleu(hyps, refs[0]).score
    assert bleu(hyps[::-1], refs[0][::-1]).score == fwd


def test_bleu_monotone_under_perfect_append():
    for name in ("brevity", "multi_ref"):
        hyps, refs, _ = BLEU_FIXTURES[name]
        refs = refs[0]
        extra = "the river flooded the whole town overnight"
        assert bleu(hyps + [extra], refs + [extra]).score >= bleu(hyps, refs).score


# ---------------------------------------------------------------- kappa


def test_kappa_fixtures():
    assert fleiss_kappa(FLEISS_TABLE) == pytest.approx(FLEISS_VALUE, abs=1e-6)
    assert fleiss_kappa(FLEISS_TABLE) == pytest.approx(inter_rater.fleiss_kappa(FLEISS_TABLE), abs=1e-12)
    assert fleiss_kappa(SMALL_TABLE) == pytest.approx(SMALL_VALUE, abs=1e-6)


def test_kappa_perfect_and_degenerate():
    assert fleiss_kappa([[3, 0], [0, 3], [3, 0]]) == pytest.approx(1.0)
    assert fleiss_kappa([[4, 0], [4, 0]]) == 1.0
    with pytest.raises(ValueError):
        fleiss_kappa([[2, 1], [3, 1]])


def test_kappa_independent_raters_near_zero():
    rng = np.random.default_rng(0)
    ratings = rng.integers(0, 2, size=(1000, 2))
    table = np.stack([(ratings == 0).sum(1), (ratings == 1).sum(1)], axis=1)
    assert abs(fleiss_kappa(table)) <= 0.05


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_kappa_bounds_and_relabeling(seed):
    rng = np.random.default_rng(seed)
    n, k, raters = int(rng.integers(2, 12)), int(rng.integers(2, 5)), int(rng.integers(2, 6))
    table = np.array([np.bincount(rng.integers(0, k, raters), minlength=k) for _ in range(n)])
    if np.count_nonzero(table.sum(0)) < 2:
        return
    kappa = fleiss_kappa(table)
    assert -1.0 <= kappa <= 1.0
    assert fleiss_kappa(table[:, rng.permutation(k)]) == pytest.approx(kappa, abs=1e-12)


# ---------------------------------------------------------------- t-test


def test_welch_fixture():
    r = welch_t(WELCH_A, WELCH_B)
    assert r.t == pytest.approx(WELCH_T, abs=1e-9)
    assert r.df == pytest.approx(WELCH_DF, abs=1e-9)
    assert r.p == pytest.approx(WELCH_P, abs=1e-6)


def test_welch_matches_scipy():
    rng = np.random.default_rng(4)
    for _ in range(5):
        a, b = rng.normal(0, 1, 8), rng.normal(0.7, 2, 13)
        ref = stats.ttest_ind(a, b, equal_var=False)
        r = welch_t(a, b)
        assert r.t == pytest.approx(ref.statistic, abs=1e-9)
        assert r.p == pytest.approx(ref.pvalue, abs=1e-6)


def test_welch_edges():
    r = welch_t([1, 2, 3], [1, 2, 3])
    assert r.t == 0 and r.p == 1.0
    assert welch_t([1, 2, 3], [1001, 1002, 1003]).p < 0.001
    with pytest.raises(ValueError):
        welch_t([1], [1, 2])


@pytest.mark.parametrize("t,df", [(0.5, 3), (2.0, 10), (4.0, 2.5), (12.0, 40), (1.96, 1000)])
def test_t_tail_against_scipy(t, df):
    assert t_sf_two_sided(t, df) == pytest.approx(2 * stats.t.sf(t, df), abs=1e-6)
