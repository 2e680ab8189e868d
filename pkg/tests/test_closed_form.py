import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_pair, enumerate_sizes, random_table
from scipy import stats

from collabdyn.closed_form import (
    ResourceError,
    appendix_bounds,
    coauthor_pair_law,
    coauthor_size_law,
    expected_coauthors_closed_form,
    expected_coauthors_recursion,
    expected_index,
    ht_gt,
    index_rate_limit,
    per_author_pmf,
    poisson_window_weight,
    poisson_window_weights,
    theorem1_limits,
)
from collabdyn.collab_model import ConstantLaw, LinearLaw, TabulatedLaw, simulate_sizes
from collabdyn.indices import PHI_CC, PHI_CI, PHI_DC, PhiFunction
from collabdyn.process import IntensityFunction, Segment, sample_event_times

# sum_{v>=1} e^-1 / (v! v), evaluated term by term with math.factorial
UNIT_MASS_FIRST_WEIGHT = 0.48482910699568765
# fig3 config, L = 100, p = 0.01: 1 - 0.99^100 and 1 - (1 - 0.99^101)/1.01
DC_CONST = 0.6339676587267709
CC_CONST = 0.36868516619851177

SMALL = TabulatedLaw("min(0.1 + 0.2*k + 0.01*n, 0.95)", 3)


def test_pmf_constant_law_is_binomial():
    law = ConstantLaw(0.23, 10)
    for n in (0, 1, 5, 12):
        np.testing.assert_allclose(per_author_pmf(law, n).pmf, stats.binom.pmf(np.arange(n + 1), n, 0.23),
                                   rtol=0, atol=1e-14)


def test_pmf_first_event():
    p = per_author_pmf(SMALL, 1).pmf
    np.testing.assert_allclose(p, [0.89, 0.11])


def test_pmf_positivity_and_moments():
    d = per_author_pmf(SMALL, 6)
    assert d.pmf.sum() == pytest.approx(1, abs=1e-12)
    assert np.all(d.pmf > 0)
    k = np.arange(7)
    assert d.mean == pytest.approx(np.dot(k, d.pmf))
    assert d.second_moment == pytest.approx(np.dot(k**2, d.pmf))


def test_pmf_matches_simulation():
    law = TabulatedLaw("min(0.1 + 0.15*k, 1)", 1)
    R, n = 100_000, 6
    rng = np.random.default_rng(3)
    m = np.zeros(R, dtype=int)
    for e in range(1, n + 1):
        m += rng.random(R) < law.prob(e, m)
    freq = np.bincount(m, minlength=n + 1) / R
    p = per_author_pmf(law, n).pmf
    se = np.sqrt(p * (1 - p) / R)
    assert np.all(np.abs(freq - p) <= 4 * se + 1e-12)


@pytest.mark.parametrize("L,n", [(1, 1), (2, 2), (3, 2), (3, 3), (4, 2)])
def test_joint_law_equals_enumeration(L, n):
    rng = np.random.default_rng(L * 10 + n)
    law = TabulatedLaw(random_table(rng, n + 1), L)
    dist = coauthor_size_law(law, n, want_joint=True)
    np.testing.assert_allclose(dist.joint, brute_force_pair(law, n, n + 1), rtol=0, atol=1e-13)


def test_pair_law_for_distant_events_equals_enumeration():
    law = TabulatedLaw(random_table(np.random.default_rng(0), 4), 2)
    np.testing.assert_allclose(coauthor_pair_law(law, 1, 4), brute_force_pair(law, 1, 4), atol=1e-13)


def test_marginal_is_binomial_and_joint_marginals_agree():
    dist = coauthor_size_law(SMALL, 4, want_joint=True)
    sizes, probs = enumerate_sizes(SMALL, 4)
    exact = np.bincount(sizes[:, 3], weights=probs, minlength=4)
    np.testing.assert_allclose(dist.marginal, exact, atol=1e-13)
    np.testing.assert_allclose(dist.joint.sum(axis=1), dist.marginal, atol=1e-10)
    nxt = coauthor_size_law(SMALL, 5)
    np.testing.assert_allclose(dist.joint.sum(axis=0), nxt.marginal, atol=1e-10)


def test_constant_law_joint_factorizes():
    law = ConstantLaw(0.2, 6)
    d = coauthor_size_law(law, 3, want_joint=True)
    b = stats.binom.pmf(np.arange(7), 6, 0.2)
    np.testing.assert_allclose(d.joint, np.outer(b, b), atol=1e-14)


def test_certain_inclusion_law():
    d = coauthor_size_law(ConstantLaw(1.0, 5), 4, want_joint=True)
    assert d.marginal[5] == 1.0 and d.joint[5, 5] == pytest.approx(1.0)


def test_budget_guard():
    with pytest.raises(ResourceError):
        coauthor_size_law(ConstantLaw(0.1, 200), 2, want_joint=True, budget=1e6)


def test_ht_zero_mass_is_first_event_law():
    f = IntensityFunction.constant(0.0)
    lim = ht_gt(SMALL, f, 5.0)
    np.testing.assert_allclose(lim.H, coauthor_size_law(SMALL, 1).marginal)
    assert lim.n_terms == 1 and lim.tail_mass == 0.0


def test_ht_constant_law_is_binomial_for_all_t():
    law = ConstantLaw(0.05, 30)
    for t in (0.0, 3.0, 40.0):
        lim = ht_gt(law, IntensityFunction.constant(0.7), t)
        np.testing.assert_allclose(lim.H, stats.binom.pmf(np.arange(31), 30, 0.05), atol=1e-11)


def test_ht_tail_and_row_sums():
    f = IntensityFunction.constant(1.3)
    lim = ht_gt(SMALL, f, 2.0, eps=1e-12)
    assert lim.tail_mass < 1e-12
    assert lim.H.sum() >= 1 - 1e-12
    np.testing.assert_allclose(lim.G.sum(axis=1), lim.H, atol=1e-12)


def test_ht_matches_first_paper_after_t():
    f = IntensityFunction.constant(1.0)
    t, R = 2.0, 100_000
    rng = np.random.default_rng(5)
    U = rng.poisson(f.cumulative(t), R)
    sizes = simulate_sizes(SMALL, int(U.max()) + 1, R, rng)
    first = sizes[np.arange(R), U]
    freq = np.bincount(first, minlength=4) / R
    H = ht_gt(SMALL, f, t).H
    assert np.all(np.abs(freq - H) <= 4 * np.sqrt(H * (1 - H) / R) + 1e-12)


def test_theorem1_constant_law_uncorrelated_and_symmetric():
    lim = ht_gt(ConstantLaw(0.1, 8), IntensityFunction.constant(0.5), 3.0)
    for k, k2 in ((0, 1), (2, 5)):
        _, cov, corr = theorem1_limits(lim, k, k2)
        assert abs(cov) < 1e-12 and abs(corr) < 1e-12
    small = ht_gt(SMALL, IntensityFunction.constant(1.0), 2.0)
    assert theorem1_limits(small, 0, 2)[2] == pytest.approx(theorem1_limits(small, 2, 0)[2])


def test_theorem1_zero_rate_and_undefined_corr():
    f = IntensityFunction([Segment(0, 1, 0, 1.0), Segment(1, math.inf, 0, 0.0)])
    lim = ht_gt(SMALL, f, 2.0)
    assert theorem1_limits(lim, 0, 1)[:2] == (0.0, 0.0)
    lim = ht_gt(ConstantLaw(1.0, 3), IntensityFunction.constant(1.0), 1.0)
    assert theorem1_limits(lim, 0, 3)[2] is None
    with pytest.raises(ValueError):
        theorem1_limits(lim, 1, 1)


def _random_admissible(rng, n_max):
    n = np.arange(1, n_max + 1)
    b = rng.uniform(0, 1, n_max)
    span = np.maximum(n - 1, 1)
    a = -b / span + rng.uniform(0, 1, n_max) / span
    return a, b


def test_recursion_zero_slope_and_n2():
    b = np.linspace(0.1, 0.3, 10)
    np.testing.assert_allclose(expected_coauthors_recursion(np.zeros(10), b, 50, 10), 50 * b)
    a, b = _random_admissible(np.random.default_rng(0), 5)
    assert expected_coauthors_closed_form(a, b, 40, 2) == pytest.approx(40 * (b[1] + a[1] * b[0]))
    assert expected_coauthors_closed_form(a, b, 40, 1) == pytest.approx(40 * b[0])


def test_fig2_first_value():
    n = np.arange(1, 11)
    a, b = 0.4 / n, 0.05 * (1 - 1 / np.log(n + 2))
    assert expected_coauthors_closed_form(a, b, 100, 1) == pytest.approx(0.4488038668658134, rel=1e-14)


def test_recursion_rejects_inadmissible():
    with pytest.raises(ValueError):
        expected_coauthors_recursion([0.0, 2.0], [0.1, 0.1], 10, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 120))
def test_closed_form_equals_recursion(seed, n_max):
    a, b = _random_admissible(np.random.default_rng(seed), n_max)
    rec = expected_coauthors_recursion(a, b, 100, n_max)
    for n in {1, min(2, n_max), min(3, n_max), n_max}:
        assert expected_coauthors_closed_form(a, b, 100, n) == pytest.approx(rec[n - 1], rel=1e-10, abs=1e-300)


def test_recursion_is_the_simulated_mean():
    law = LinearLaw.from_expressions("0.3/n", "0.1", 12, 40)
    sizes = simulate_sizes(law, 12, 20_000, seed=8).astype(float)
    exact = expected_coauthors_recursion(law.a, law.b, 40, 12)
    se = sizes.std(axis=0, ddof=1) / math.sqrt(sizes.shape[0])
    assert np.all(np.abs(sizes.mean(axis=0) - exact) < 4 * se)


def test_window_weight_unit_mass():
    f = IntensityFunction.constant(1.0)
    assert poisson_window_weight(f, 0, 1, 1) == pytest.approx(UNIT_MASS_FIRST_WEIGHT, rel=1e-12)
    series = sum(math.exp(-1) / (math.factorial(v) * v) for v in range(1, 40))
    assert series == pytest.approx(UNIT_MASS_FIRST_WEIGHT, rel=1e-15)


def test_window_weight_monte_carlo():
    f = IntensityFunction.constant(0.8)
    rng = np.random.default_rng(2)
    U, V = rng.poisson(0.8 * 2, 200_000), rng.poisson(0.8 * 1.5, 200_000)
    for n in (1, 2, 3):
        x = np.where((U < n) & (U + V >= n), 1.0 / np.maximum(V, 1), 0.0)
        assert abs(x.mean() - poisson_window_weight(f, 2, 3.5, n)) < 4 * x.std() / math.sqrt(x.size)


def test_window_weight_zero_mass():
    f = IntensityFunction([Segment(0, 5, 0, 1.0), Segment(5, 10, 0, 0.0), Segment(10, math.inf, 0, 1.0)])
    assert all(poisson_window_weight(f, 6, 9, n) == 0 for n in range(1, 8))


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 30), st.floats(0, 20), st.floats(0.01, 3))
def test_window_weights_sum_identity(s, length, rate):
    f = IntensityFunction.constant(rate)
    w = poisson_window_weights(f, s, s + length, eps=1e-14)
    assert w.sum() == pytest.approx(-math.expm1(-rate * length), abs=1e-10)


def test_expected_index_constant_law():
    L, p = 100, 0.01
    law = ConstantLaw(p, L)
    f = IntensityFunction.piecewise_constant([100, 200], [1 / 6, 1 / 3, 1 / 2])
    for s, t in ((0, 12), (96, 108), (300, 312)):
        assert expected_index(f, law, PHI_CI, s, t) == pytest.approx(1.0, rel=1e-9)
        assert expected_index(f, law, PHI_DC, s, t) == pytest.approx(DC_CONST, rel=1e-9)
        assert expected_index(f, law, PHI_CC, s, t) == pytest.approx(CC_CONST, rel=1e-9)


def test_expected_index_zero_phi_and_empty_window():
    zero = PhiFunction.custom([0.0] * 10)
    f = IntensityFunction.constant(1.0)
    assert expected_index(f, SMALL, zero, 0, 3) == 0.0
    g = IntensityFunction([Segment(0, 5, 0, 0.0), Segment(5, math.inf, 0, 1.0)])
    assert expected_index(g, SMALL, PHI_CI, 0, 4) is None
    assert expected_index(g, SMALL, PHI_CI, 0, 4, conditional=False) == 0.0


def test_expected_index_matches_monte_carlo():
    f = IntensityFunction.constant(1.0)
    s, t, R = 1.0, 3.0, 100_000
    rng = np.random.default_rng(4)
    U = rng.poisson(1.0 * s, R)
    V = rng.poisson(t - s, R)
    sizes = simulate_sizes(SMALL, int((U + V).max()) + 1, R, rng).astype(float)
    idx = np.arange(sizes.shape[1])
    inside = (idx[None, :] >= U[:, None]) & (idx[None, :] < (U + V)[:, None])
    vals = (sizes * inside).sum(axis=1)[V > 0] / V[V > 0]
    exact = expected_index(f, SMALL, PHI_CI, s, t)
    assert abs(vals.mean() - exact) < 4 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_index_rate_limit_special_cases():
    f0 = IntensityFunction([Segment(0, 1, 0, 1.0), Segment(1, math.inf, 0, 0.0)])
    assert index_rate_limit(f0, SMALL, PHI_CI, 3.0) == 0.0
    law = ConstantLaw(0.01, 100)
    f = IntensityFunction.constant(0.5)
    assert index_rate_limit(f, law, PHI_DC, 7.0) == pytest.approx(0.5 * DC_CONST, rel=1e-10)


def test_appendix_bounds_values():
    assert appendix_bounds(0.0) == (0.0, 0.0, 0.0, 0.0)
    r1, r2, r3, r4 = appendix_bounds(0.5)
    assert r1 == pytest.approx(0.75)
    assert r2 == pytest.approx(0.5 * 3 + 2 * 0.25 * 7)
    assert r3 == pytest.approx(2 * 0.125 * 7)
    assert r4 == pytest.approx(0.75)
    with pytest.raises(ValueError):
        appendix_bounds(1.0)


def test_sample_paths_agree_with_window_mass_weights():
    # sanity link between the sampler and the window weights
    f = IntensityFunction.constant(0.9)
    hits = np.array([sample_event_times(f, 4.0, s).count(1, 2) > 0 for s in range(5000)])
    assert abs(hits.mean() - poisson_window_weights(f, 1, 2).sum()) < 4 * math.sqrt(0.25 / hits.size)
