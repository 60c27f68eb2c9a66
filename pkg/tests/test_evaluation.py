import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mogu.evaluation import (CHANNELS, UndefinedCorrelation, mae_mse, pearson, permutation_pvalue,
                             spearman, uncertainty_error_correlation)
from mogu.mixture import MixtureOutput


def loop_mae_mse(p, t):
    n = 0
    sa = ss = 0.0
    for a, b in zip(np.ravel(p), np.ravel(t)):
        sa += abs(a - b)
        ss += (a - b) ** 2
        n += 1
    return sa / n, ss / n


def cov_pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b)) / (n - 1)
    va = sum((x - ma) ** 2 for x in a) / (n - 1)
    vb = sum((y - mb) ** 2 for y in b) / (n - 1)
    if va == 0 or vb == 0:
        raise ZeroDivisionError("constant input")
    return cov / math.sqrt(va * vb)


def brute_ranks(a):
    """Average rank: 1 + (#strictly smaller) + (#ties - 1) / 2."""
    return [1 + sum(y < x for y in a) + (sum(y == x for y in a) - 1) / 2 for x in a]


def test_mae_mse_examples():
    x = np.random.default_rng(0).normal(size=(4, 3, 2))
    assert mae_mse(x, x) == (0.0, 0.0)
    assert mae_mse(x + 1.0, x) == pytest.approx((1.0, 1.0), abs=1e-15)
    p, t = np.random.default_rng(1).normal(size=(2, 5, 6, 3))
    np.testing.assert_allclose(mae_mse(p, t), loop_mae_mse(p, t), rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        mae_mse(np.zeros(3), np.zeros(4))


def test_mse_is_mean_of_per_variable_mse():
    p, t = np.random.default_rng(2).normal(size=(2, 7, 4, 5))
    per = [mae_mse(p[..., j], t[..., j])[1] for j in range(5)]
    assert mae_mse(p, t)[1] == pytest.approx(np.mean(per), rel=1e-14)


def test_pearson_examples():
    assert pearson([1, 2, 3], [1, 2, 3]) == 1.0
    assert pearson([1, 2, 3], [3, 2, 1]) == -1.0
    a, b = np.random.default_rng(3).normal(size=(2, 50))
    assert pearson(a, b) == pytest.approx(cov_pearson(list(a), list(b)), abs=1e-12)
    with pytest.raises(UndefinedCorrelation):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelation):
        pearson([1], [2])


def test_spearman_examples():
    a = np.random.default_rng(4).normal(size=30)
    assert spearman(a, np.exp(a) + 3 * a ** 3) == pytest.approx(1.0, abs=1e-15)
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
    assert brute_ranks([1, 1, 2]) == [1.5, 1.5, 3]
    assert spearman([1, 1, 2], [1, 2, 3]) == pytest.approx(cov_pearson([1.5, 1.5, 3], [1, 2, 3]), abs=1e-12)


@settings(max_examples=60)
@given(st.integers(2, 40).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.integers(-5, 5).map(float)),
    arrays(np.float64, n, elements=st.floats(-1e3, 1e3)))))
def test_spearman_matches_brute_force_ranks(pair):
    a, b = pair
    try:
        want = cov_pearson(brute_ranks(list(a)), brute_ranks(list(b)))
    except ZeroDivisionError:
        with pytest.raises(UndefinedCorrelation):
            spearman(a, b)
        return
    assert spearman(a, b) == pytest.approx(want, abs=1e-12)


well_spread = arrays(np.float64, 20, elements=st.floats(-100, 100)).filter(lambda v: np.std(v) > 1e-3)


@given(well_spread, well_spread, st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_symmetry_and_affine_invariance(a, b, scale, shift):
    r = pearson(a, b)
    assert -1 <= r <= 1
    assert pearson(b, a) == pytest.approx(r, abs=1e-12)
    assert pearson(a * scale + shift, b) == pytest.approx(r, abs=1e-9)


@given(well_spread, well_spread)
def test_spearman_symmetry_and_monotone_invariance(a, b):
    r = spearman(a, b)
    assert spearman(b, a) == pytest.approx(r, abs=1e-12)
    t = np.arctan(a / 10) * 7 - 2
    assume(len(np.unique(t)) == len(np.unique(a)))  # rounding can merge neighbours
    assert spearman(t, b) == pytest.approx(r, abs=1e-12)


def test_permutation_pvalue_examples():
    a = np.arange(20.0)
    assert permutation_pvalue(a, 2 * a + 1, n_perm=1000, seed=0) <= 0.002
    b = np.random.default_rng(0).normal(size=20)
    assert permutation_pvalue(a, b, n_perm=100) >= 1 / 101
    assert permutation_pvalue(a, a, n_perm=100) == pytest.approx(1 / 101)
    assert permutation_pvalue(a, b, 200, seed=3) == permutation_pvalue(a, b, 200, seed=3)
    with pytest.raises(ValueError):
        permutation_pvalue(a, b, n_perm=99)


def test_permutation_pvalue_matches_exhaustive_enumeration():
    a = np.array([0.3, -1.2, 2.0, 0.7, 1.1, -0.4])
    b = np.array([1.0, -0.5, 1.7, -0.2, 0.9, 0.1])
    obs = abs(pearson(a, b))
    perms = list(itertools.permutations(range(6)))
    exact = sum(abs(pearson(a, b[list(p)])) >= obs - 1e-12 for p in perms) / len(perms)
    est = permutation_pvalue(a, b, n_perm=4000, seed=1)
    assert abs(est - exact) < 0.03


def test_permutation_pvalues_roughly_uniform_under_null():
    rng = np.random.default_rng(11)
    ps = np.array([permutation_pvalue(rng.normal(size=25), rng.normal(size=25), 100, seed=s)
                   for s in range(300)])
    assert abs(ps.mean() - 0.5) < 0.06
    assert 0.04 < np.mean(ps <= 0.1) < 0.17
    assert 0.4 < np.mean(ps <= 0.5) < 0.6


def fake_output(pred, alea, epi):
    n, h, V = pred.shape
    return MixtureOutput(expert_means=pred[:, None], expert_variances=alea[:, None],
                         weights=np.ones((n, 1, h, V)), combined_mean=pred, aleatoric=alea,
                         epistemic=epi, total_variance=alea + epi)


def test_uncertainty_equal_to_error_is_perfect():
    rng = np.random.default_rng(5)
    truth = rng.normal(size=(30, 4, 3))
    pred = truth + rng.normal(size=truth.shape)
    err = np.abs(pred - truth)
    rep = uncertainty_error_correlation(fake_output(pred, err, err * 2), truth, ["a", "b", "c"])
    for c in CHANNELS:
        assert rep.per_variable[c]["pearson"] == pytest.approx([1, 1, 1], abs=1e-12)
        assert rep.per_variable[c]["spearman"] == pytest.approx([1, 1, 1], abs=1e-12)
    assert rep.variables == ["a", "b", "c"] and rep.n_windows == 30 and rep.horizon == 4


def test_independent_uncertainty_is_uncorrelated():
    rng = np.random.default_rng(6)
    truth = rng.normal(size=(2500, 4, 1))
    pred = truth + rng.normal(size=truth.shape)
    alea = rng.uniform(0.1, 1, size=truth.shape)
    rep = uncertainty_error_correlation(fake_output(pred, alea, alea), truth)
    assert abs(rep.average["aleatoric"]["pearson"]) < 0.05
    assert abs(rep.average["aleatoric"]["spearman"]) < 0.05


def test_report_average_is_mean_of_entries_and_excludes_degenerate():
    rng = np.random.default_rng(7)
    truth = rng.normal(size=(10, 3, 3))
    pred = truth + rng.normal(size=truth.shape)
    alea = rng.uniform(size=truth.shape)
    epi = np.zeros_like(alea)  # single-expert style: constant channel
    rep = uncertainty_error_correlation(fake_output(pred, alea, epi), truth, n_perm=100)
    per = rep.per_variable["aleatoric"]["pearson"]
    assert rep.average["aleatoric"]["pearson"] == float(np.mean(per))
    assert rep.excluded["epistemic"] == 3 and rep.average["epistemic"]["pearson"] is None
    assert rep.excluded["aleatoric"] == 0
    assert len(rep.per_horizon["total"]) == 3
    assert all(1 / 101 <= p <= 1 for p in rep.pvalues["aleatoric"])
    assert rep.pvalues["epistemic"] == [None] * 3
    mae, mse = mae_mse(pred, truth)
    assert (rep.mae, rep.mse) == (mae, mse)
    assert '"mae"' in rep.to_json()
