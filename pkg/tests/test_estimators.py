import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collabdyn.closed_form import per_author_pmf
from collabdyn.collab_model import ConstantLaw, LinearLaw, simulate_coauthor_sets
from collabdyn.estimators import (
    EstimateWithCI,
    EventSnapshot,
    delta_method_context,
    estimate_F_nonparam,
    estimate_F_series,
    estimate_linear,
    intercept_gradient,
    ratio_asymptotics,
    slope_gradient,
    write_estimates_csv,
)
from collabdyn.experiments import simulate_event_snapshots

SNAP = EventSnapshot(2, [0, 0, 1, 1], [1, 0, 1, 0])


def test_nonparam_hand_value():
    est = estimate_F_nonparam(SNAP, 0)
    assert est.value == 0.5 and est.support_count == 2
    # sigma^2 = F(1-F) / (support / L) = 0.25 / 0.5
    assert est.se == pytest.approx(math.sqrt(0.5))
    assert est.lo <= est.value <= est.hi
    assert est.hi - est.value == pytest.approx(1.959963984540054 * est.se / 2)


def test_nonparam_all_included():
    est = estimate_F_nonparam(EventSnapshot(3, [1, 1, 2], [1, 1, 0]), 1)
    assert est.value == 1.0 and est.se == 0.0


def test_nonparam_no_support():
    est = estimate_F_nonparam(SNAP, 3)
    assert est.value == 0.0 and est.se is None and est.lo is None and not est.covers(0.0)


def test_linear_hand_value():
    a, b = estimate_linear(SNAP)
    assert a.value == pytest.approx(0.0, abs=1e-15)
    assert b.value == pytest.approx(0.5)


def test_linear_flat_response():
    a, b = estimate_linear(EventSnapshot(4, [0, 1, 2, 3, 1], [1, 1, 1, 1, 1]))
    assert a.value == pytest.approx(0.0, abs=1e-15) and b.value == pytest.approx(1.0)


def test_linear_degenerate_counts():
    a, b = estimate_linear(EventSnapshot(4, [2, 2, 2], [1, 0, 1]))
    assert a.value == 0.0 and a.se is None
    assert b.value == pytest.approx(2 / 3) and b.se is None
    again = estimate_linear(EventSnapshot(4, [2, 2, 2], [1, 0, 1]))
    assert again == (a, b)


def test_snapshot_validation():
    with pytest.raises(ValueError):
        EventSnapshot(2, [0, 2], [0, 1])
    with pytest.raises(ValueError):
        EventSnapshot(2, [0, 1], [0, 2])
    with pytest.raises(ValueError):
        EventSnapshot(2, [0, 1], [0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 1)), min_size=1, max_size=60), st.integers(0, 4))
def test_nonparam_in_unit_interval(pairs, k):
    snap = EventSnapshot(5, [p[0] for p in pairs], [p[1] for p in pairs])
    est = estimate_F_nonparam(snap, k)
    assert 0.0 <= est.value <= 1.0
    if est.se is not None:
        assert est.lo <= est.value <= est.hi


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=3, max_size=60))
def test_linear_matches_numpy_least_squares(pairs):
    y = np.array([p[0] for p in pairs], float)
    x = np.array([p[1] for p in pairs], float)
    if y.var() < 1e-9:
        return
    a, b = estimate_linear(EventSnapshot(7, y.astype(int), x.astype(int)))
    slope, intercept = np.polyfit(y, x, 1)
    assert a.value == pytest.approx(slope, abs=1e-9)
    assert b.value == pytest.approx(intercept, abs=1e-9)


def test_series_length_and_early_degenerate():
    run = simulate_coauthor_sets(ConstantLaw(0.3, 20), 5, seed=1)
    series = estimate_F_series(run, 2)
    assert len(series) == 5
    assert series[0].value == 0.0 and series[0].se is None      # k > n - 1 at n = 1
    assert series[1].se is None


def test_series_mean_near_constant_p():
    p = 0.2
    vals = [estimate_F_series(simulate_coauthor_sets(ConstantLaw(p, 200), 4, seed=s), 1)[3].value
            for s in range(300)]
    assert abs(np.mean(vals) - p) < 3 * np.std(vals, ddof=1) / math.sqrt(len(vals))


def test_ratio_asymptotics_cases():
    assert ratio_asymptotics(1.0, 2.0, 0.0, 0.0, 0.3) == 0.0
    with pytest.raises(ValueError):
        ratio_asymptotics(1.0, 0.0, 1.0, 1.0, 0.0)
    # X = 1_C 1(m=k), Y = 1(m=k): mu_x = Fp, mu_y = p
    F, p = 0.3, 0.4
    var_x, var_y = F * p * (1 - F * p), p * (1 - p)
    rho = (F * p - F * p * p) / math.sqrt(var_x * var_y)
    assert ratio_asymptotics(F * p, p, var_x, var_y, rho) == pytest.approx(F * (1 - F) / p)


def test_ratio_asymptotics_simulation():
    rng = np.random.default_rng(0)
    n, reps = 400, 4000
    mean = [2.0, 3.0]
    cov = [[1.0, 0.6], [0.6, 2.0]]
    z = rng.multivariate_normal(mean, cov, size=(reps, n))
    stat = math.sqrt(n) * (z[..., 0].mean(1) / z[..., 1].mean(1) - 2 / 3)
    target = ratio_asymptotics(2.0, 3.0, 1.0, 2.0, 0.6 / math.sqrt(2.0))
    assert stat.var(ddof=1) == pytest.approx(target, rel=0.1)


def test_gradients_match_finite_differences():
    z = np.array([0.3, 1.2, 2.5, 0.5])

    def slope(v):
        return (v[3] - v[0] * v[1]) / (v[2] - v[1] ** 2)

    def intercept(v):
        return v[0] - v[1] * slope(v)
    for g, fn in ((slope_gradient, slope), (intercept_gradient, intercept)):
        num = np.array([(fn(z + 1e-6 * e) - fn(z - 1e-6 * e)) / 2e-6 for e in np.eye(4)])
        np.testing.assert_allclose(g(z), num, rtol=1e-6)


def test_delta_context_expanded_forms_agree():
    law = LinearLaw.from_expressions("0.3/max(n-1, 1)", "0.2", 20, 1000)
    for n in (3, 4, 8):
        ctx = delta_method_context(law, n)
        assert ctx.sigma_a2 == pytest.approx(ctx.sigma_a2_expanded(), rel=1e-10)
        assert ctx.sigma_b2 == pytest.approx(ctx.sigma_b2_expanded(), rel=1e-10)
        assert ctx.beta == pytest.approx(law.a[n - 1])
        assert ctx.alpha == pytest.approx(law.b[n - 1])
        np.testing.assert_allclose(ctx.sigma, ctx.sigma.T)
        assert np.linalg.eigvalsh(ctx.sigma).min() > -1e-12


def test_delta_context_preconditions():
    with pytest.raises(TypeError):
        delta_method_context(ConstantLaw(0.1, 5), 3)
    with pytest.raises(ValueError):
        delta_method_context(LinearLaw([0.0, 0.1], [0.2, 0.2], 5), 1)


def test_linear_estimates_within_four_se():
    law = LinearLaw.from_expressions("0.1/max(n-1, 1)", "0.2", 10, 10_000)
    n = 4
    m, x = simulate_event_snapshots(law, n, 500, seed=7)
    hits = 0
    for r in range(500):
        a, b = estimate_linear(EventSnapshot(n, m[r], x[r]))
        hits += (abs(a.value - law.a[n - 1]) <= 4 * a.se / 100) and (abs(b.value - law.b[n - 1]) <= 4 * b.se / 100)
    assert hits >= 0.99 * 500


def test_plugin_sigma_converges():
    law = LinearLaw.from_expressions("0.1/max(n-1, 1)", "0.2", 10, 10_000)
    n, k = 4, 1
    p = per_author_pmf(law, n - 1).pmf[k]
    F = law.prob(n, k)
    m, x = simulate_event_snapshots(law, n, 50, seed=3)
    s2 = [estimate_F_nonparam(EventSnapshot(n, m[r], x[r]), k).se ** 2 for r in range(50)]
    assert np.mean(s2) == pytest.approx(F * (1 - F) / p, rel=0.05)


def test_estimates_csv(tmp_path):
    rows = [(2, 0, estimate_F_nonparam(SNAP, 0)), (2, 3, estimate_F_nonparam(SNAP, 3))]
    write_estimates_csv(rows, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "n,k,value,se,lo,hi,support_count"
    assert lines[2] == "2,3,0.0,,,,0"


def test_level_validation():
    with pytest.raises(ValueError):
        EstimateWithCI.build(0.5, 0.1, 10, 1.5, 3)
