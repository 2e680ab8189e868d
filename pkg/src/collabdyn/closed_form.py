"""Exact distributional quantities of the collaboration model.

Everything here is computed from exact pmfs; infinite sums over the event
index are cut where the remaining Poisson mass drops below ``eps`` and the
dropped mass is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .collab_model import CoauthorshipLaw, check_linear_admissible
from .indices import PhiFunction
from .process import IntensityFunction

__all__ = [
    "ResourceError",
    "AuthorCountDistribution",
    "CoauthorSizeDistribution",
    "TheoryLimits",
    "per_author_pmf",
    "per_author_pmf_table",
    "coauthor_size_law",
    "coauthor_pair_law",
    "ht_gt",
    "theorem1_limits",
    "expected_coauthors_recursion",
    "expected_coauthors_closed_form",
    "poisson_window_weights",
    "poisson_window_weight",
    "expected_index",
    "index_rate_limit",
    "appendix_bounds",
    "exact_window_moments",
]

DEFAULT_EPS = 1e-12
DEFAULT_BUDGET = 10**9


class ResourceError(RuntimeError):
    """A requested table would exceed the configured compute budget."""


@dataclass(frozen=True)
class AuthorCountDistribution:
    """Law of m_{n,1}: pmf over ``k = 0, ..., n``."""

    n: int
    pmf: np.ndarray

    def moment(self, r: int) -> float:
        k = np.arange(self.pmf.size, dtype=float)
        return float(np.dot(k**r, self.pmf))

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def second_moment(self) -> float:
        return self.moment(2)


@dataclass(frozen=True)
class CoauthorSizeDistribution:
    n: int
    q: float
    marginal: np.ndarray
    joint: np.ndarray | None = None


@dataclass(frozen=True)
class TheoryLimits:
    t: float
    rate: float
    H: np.ndarray
    G: np.ndarray | None
    tail_mass: float
    n_terms: int


def _step(law: CoauthorshipLaw, n: int, prev: np.ndarray) -> np.ndarray:
    """Push a (possibly unnormalised) law of m_{n-1} through event n."""
    F = law.prob(n, np.arange(prev.size))
    nxt = np.zeros(prev.size + 1)
    nxt[:-1] += (1.0 - F) * prev
    nxt[1:] += F * prev
    return nxt


def per_author_pmf_table(law: CoauthorshipLaw, n_max: int) -> list[np.ndarray]:
    """``[p_0, p_1, ..., p_{n_max}]`` with ``p_n[k] = P(m_{n,1} = k)``."""
    table = [np.ones(1)]
    for n in range(1, n_max + 1):
        table.append(_step(law, n, table[-1]))
    return table


def per_author_pmf(law: CoauthorshipLaw, n: int) -> AuthorCountDistribution:
    if n < 0:
        raise ValueError("n must be non-negative")
    return AuthorCountDistribution(n, per_author_pmf_table(law, n)[-1])


def _inclusion_prob(law: CoauthorshipLaw, n: int, prev: np.ndarray) -> float:
    """q_n = sum_m p_{n-1,m} F_n(m)."""
    return float(np.dot(prev, law.prob(n, np.arange(prev.size))))


def _aggregate(pi11: float, pi10: float, pi01: float, pi00: float, L: int) -> np.ndarray:
    """Joint pmf of (sum of first flags, sum of second flags) over L iid authors."""
    joint = np.zeros((L + 1, L + 1))
    joint[0, 0] = 1.0
    for i in range(L):
        cur = joint[: i + 1, : i + 1].copy()
        joint[: i + 2, : i + 2] = 0.0
        joint[: i + 1, : i + 1] += pi00 * cur
        joint[1 : i + 2, : i + 1] += pi10 * cur
        joint[: i + 1, 1 : i + 2] += pi01 * cur
        joint[1 : i + 2, 1 : i + 2] += pi11 * cur
    return joint


def _check_budget(L: int, budget: float) -> None:
    if float(L) ** 3 > budget:
        raise ResourceError(f"joint law for L={L} needs ~L^3 = {L**3:.3g} operations > budget {budget:.3g}")


def _pair_flags(law: CoauthorshipLaw, n1: int, n2: int, prev: np.ndarray):
    """Per-author law of (1_{C_n1}(i), 1_{C_n2}(i)) given p_{n1-1} = prev."""
    F1 = law.prob(n1, np.arange(prev.size))
    incl = np.zeros(prev.size + 1)
    incl[1:] = F1 * prev          # m_{n1} after joining at n1
    excl = np.zeros(prev.size + 1)
    excl[:-1] = (1.0 - F1) * prev
    for n in range(n1 + 1, n2):
        incl = _step(law, n, incl)
        excl = _step(law, n, excl)
    F2 = law.prob(n2, np.arange(incl.size))
    pi11 = float(np.dot(incl, F2))
    pi10 = float(incl.sum()) - pi11
    pi01 = float(np.dot(excl, F2))
    pi00 = float(excl.sum()) - pi01
    return pi11, pi10, pi01, max(pi00, 0.0)


def coauthor_size_law(law: CoauthorshipLaw, n: int, want_joint: bool = False,
                      budget: float = DEFAULT_BUDGET, pmf_prev: np.ndarray | None = None
                      ) -> CoauthorSizeDistribution:
    """Law of #C_n, and optionally the joint law of (#C_n, #C_{n+1}).

    Authors are iid, so #C_n ~ Binomial(L, q_n); the joint law is the
    L-fold aggregation of one author's four-outcome law.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    prev = per_author_pmf_table(law, n - 1)[-1] if pmf_prev is None else pmf_prev
    q = min(max(_inclusion_prob(law, n, prev), 0.0), 1.0)
    marginal = stats.binom.pmf(np.arange(law.L + 1), law.L, q)
    joint = None
    if want_joint:
        _check_budget(law.L, budget)
        joint = _aggregate(*_pair_flags(law, n, n + 1, prev), law.L)
    return CoauthorSizeDistribution(n, q, marginal, joint)


def coauthor_pair_law(law: CoauthorshipLaw, n1: int, n2: int,
                      budget: float = DEFAULT_BUDGET) -> np.ndarray:
    """Joint pmf of (#C_n1, #C_n2) for any ``1 <= n1 < n2``."""
    if not 1 <= n1 < n2:
        raise ValueError("need 1 <= n1 < n2")
    _check_budget(law.L, budget)
    prev = per_author_pmf_table(law, n1 - 1)[-1]
    return _aggregate(*_pair_flags(law, n1, n2, prev), law.L)


def _poisson_cutoff(mean: float, eps: float) -> int:
    """Smallest N with P(Poisson(mean) >= N) < eps."""
    if mean <= 0:
        return 1
    N = int(stats.poisson.ppf(1.0 - eps, mean)) + 1
    while stats.poisson.sf(N - 1, mean) >= eps:
        N += 1
    return max(N, 1)


def ht_gt(law: CoauthorshipLaw, f: IntensityFunction, t: float, eps: float = DEFAULT_EPS,
          want_joint: bool = True, budget: float = DEFAULT_BUDGET) -> TheoryLimits:
    """H_t(k) = P(#C_{U+1} = k) and G_t(k, k') with U = N[0, t] ~ Poisson(Lambda(t))."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    Lam = f.cumulative(t)
    N = _poisson_cutoff(Lam, eps)
    weights = stats.poisson.pmf(np.arange(N), Lam)      # P(U = n - 1), n = 1..N
    tail = float(stats.poisson.sf(N - 1, Lam)) if Lam > 0 else 0.0
    L = law.L
    if want_joint:
        _check_budget(L, budget)
    H = np.zeros(L + 1)
    G = np.zeros((L + 1, L + 1)) if want_joint else None
    prev = np.ones(1)
    for n in range(1, N + 1):
        w = weights[n - 1]
        dist = coauthor_size_law(law, n, want_joint, budget, pmf_prev=prev)
        H += w * dist.marginal
        if want_joint:
            G += w * dist.joint
        prev = _step(law, n, prev)
    return TheoryLimits(float(t), float(f.rate(t)), H, G, tail, N)


def theorem1_limits(limits: TheoryLimits, k: int, k2: int):
    """Small-h limits at time t for paper sizes k+1 and k2+1.

    Returns ``(mean_var_rate, cov_coeff, corr_coeff)``:
    ``lim E X_{k+1}/h = lim Var X_{k+1}/h``, ``lim Cov/h^2`` and
    ``lim Cor/h``.  The correlation is ``None`` when H(k) H(k2) = 0.
    """
    if k == k2:
        raise ValueError("covariance and correlation need k != k2")
    if limits.G is None:
        raise ValueError("limits were computed without the joint law")
    H, G, lam = limits.H, limits.G, limits.rate
    mean_rate = lam * H[k]
    sym = 0.5 * (G[k, k2] + G[k2, k]) - H[k] * H[k2]
    cov = lam**2 * sym
    denom = H[k] * H[k2]
    corr = None if denom <= 0 else lam * sym / math.sqrt(denom)
    return float(mean_rate), float(cov), None if corr is None else float(corr)


def _linear_params(a, b, n_max: int):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < n_max or b.size < n_max:
        raise ValueError(f"need a_n, b_n for n <= {n_max}")
    a, b = a[:n_max], b[:n_max]
    check_linear_admissible(a, b)
    return a, b


def expected_coauthors_recursion(a: Sequence[float], b: Sequence[float], L: int, n_max: int) -> np.ndarray:
    """E#C_n for n = 1..n_max from E#C_n = a_n sum_{l<n} E#C_l + L b_n."""
    a, b = _linear_params(a, b, n_max)
    out = np.zeros(n_max)
    running = 0.0
    for i in range(n_max):
        out[i] = a[i] * running + L * b[i]
        running += out[i]
    return out


def expected_coauthors_closed_form(a: Sequence[float], b: Sequence[float], L: int, n: int) -> float:
    """Solved form of the recursion for a single n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = _linear_params(a, b, n)
    if n == 1:
        return float(L * b[0])
    if n == 2:
        return float(L * (b[1] + a[1] * b[0]))
    # prod_{l=j+1}^{n-1} (1 + a_l) for j = 1..n-2 (1-based)
    factors = 1.0 + a[1 : n - 1]                        # l = 2..n-1
    tail_prods = np.cumprod(factors[::-1])[::-1]        # index j-1 -> prod_{l=j+1}^{n-1}
    total = b[n - 1] + a[n - 1] * b[n - 2] + a[n - 1] * float(np.dot(b[: n - 2], tail_prods))
    return float(L * total)


def _inverse_tail(mean: float, eps: float) -> np.ndarray:
    """T[j] = E[I(V >= j) / V] for V ~ Poisson(mean), j = 0..vmax (T[0] unused)."""
    if mean <= 0:
        return np.zeros(1)
    vmax = _poisson_cutoff(mean, eps)
    v = np.arange(1, vmax + 1)
    terms = stats.poisson.pmf(v, mean) / v
    T = np.zeros(vmax + 1)
    T[1:] = np.cumsum(terms[::-1])[::-1]
    return T


def poisson_window_weights(f: IntensityFunction, s: float, t: float, eps: float = DEFAULT_EPS) -> np.ndarray:
    """``w[n-1] = E[1_{[s,t]}(E_n) / N[s,t]]`` for n = 1, 2, ...

    ``w(n) = sum_{k<n} P(U = k) E[I(V >= n-k) / V]`` with U = N[0, s] and
    V = N[s, t]; the array stops where both Poisson tails are below eps.
    """
    if s > t:
        raise ValueError("window start after end")
    U_mean = f.cumulative(s)
    V_mean = f.integrate(s, t)
    T = _inverse_tail(V_mean, eps)
    if T.size == 1:
        return np.zeros(1)
    pu = stats.poisson.pmf(np.arange(_poisson_cutoff(U_mean, eps)), U_mean) if U_mean > 0 else np.ones(1)
    # w(n) = sum_k pu[k] T[n-k], n = 1..len(pu)+len(T)-2
    return np.convolve(pu, T[1:])


def poisson_window_weight(f: IntensityFunction, s: float, t: float, n: int,
                          eps: float = DEFAULT_EPS) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    w = poisson_window_weights(f, s, t, eps)
    return float(w[n - 1]) if n <= w.size else 0.0


def _expected_phi_by_event(law: CoauthorshipLaw, phi: PhiFunction, n_max: int) -> np.ndarray:
    """E phi(#C_n + 1) for n = 1..n_max, from the exact binomial laws."""
    vals = phi(np.arange(1, law.L + 2))
    out = np.zeros(n_max)
    prev = np.ones(1)
    for n in range(1, n_max + 1):
        q = min(max(_inclusion_prob(law, n, prev), 0.0), 1.0)
        out[n - 1] = float(np.dot(vals, stats.binom.pmf(np.arange(law.L + 1), law.L, q)))
        prev = _step(law, n, prev)
    return out


def expected_index(f: IntensityFunction, law: CoauthorshipLaw, phi: PhiFunction, s: float, t: float,
                   eps: float = DEFAULT_EPS, conditional: bool = True) -> float | None:
    """Expected generalised index on [s, t].

    ``conditional=True`` (default) gives E[I_phi | N[s,t] > 0], the mean
    over windows that contain papers; empty windows have no index value and
    are skipped, the same convention Monte Carlo averages use.  With
    ``conditional=False`` an empty window contributes 0, which is the raw
    decoupled series sum_n E[1(E_n in [s,t]) / N] E phi(#C_n + 1).
    Returns None when the window has zero mass and ``conditional`` is set.
    """
    w = poisson_window_weights(f, s, t, eps)
    raw = float(np.dot(w, _expected_phi_by_event(law, phi, w.size)))
    if not conditional:
        return raw
    p_nonempty = -math.expm1(-f.integrate(s, t))
    if p_nonempty <= 0:
        return None
    return raw / p_nonempty


def index_rate_limit(f: IntensityFunction, law: CoauthorshipLaw, phi: PhiFunction, t: float,
                     eps: float = DEFAULT_EPS) -> float:
    """lim_{h->0} E I_phi[t, t+h] / h = lambda(t) E phi(#C_{U+1} + 1)."""
    lim = ht_gt(law, f, t, eps, want_joint=False)
    return float(lim.rate * np.dot(phi(np.arange(1, law.L + 2)), lim.H))


def appendix_bounds(mass: float):
    """Remainder bounds (R1, R2, R3, R4) for window mass m = Lambda(t+h) - Lambda(t) < 1."""
    m = float(mass)
    if not 0.0 <= m < 1.0:
        raise ValueError("bounds need 0 <= mass < 1")
    g1 = 1.0 + 1.0 / (1.0 - m)
    g2 = g1 + 1.0 / (1.0 - m) ** 2
    r1 = m * m * g1
    r2 = m * g1 + 2.0 * m * m * g2
    r3 = 2.0 * m**3 * g2
    r4 = m * m * g1
    return r1, r2, r3, r4


def exact_window_moments(law: CoauthorshipLaw, f: IntensityFunction, t: float, h: float,
                         k: int, k2: int, eps: float = DEFAULT_EPS) -> dict:
    """Exact E X_{k+1}, E X_{k2+1}, E X_{k+1}^2 and E X_{k+1} X_{k2+1} on [t, t+h].

    Truncated series over event indices using
    P(E_n in W) = sum_{j<n} P(U=j) P(V >= n-j) and
    P(E_n1, E_n2 in W) = sum_{j<n1} P(U=j) P(V >= n2-j), n1 < n2.
    Cost grows like (number of terms)^2 * L^3, so keep L small.
    """
    if k == k2:
        raise ValueError("need k != k2")
    U_mean = f.cumulative(t)
    V_mean = f.integrate(t, t + h)
    nu = _poisson_cutoff(U_mean, eps)
    nv = _poisson_cutoff(V_mean, eps)
    pu = stats.poisson.pmf(np.arange(nu), U_mean) if U_mean > 0 else np.ones(1)
    nu = pu.size
    sfv = stats.poisson.sf(np.arange(-1, nv + nu + 1), V_mean)   # sfv[d] = P(V >= d)

    def p_v_ge(d):
        return 1.0 if d <= 0 else float(sfv[d]) if d < sfv.size else 0.0
    N = nu + nv
    L = law.L
    table = per_author_pmf_table(law, N)
    marg = np.zeros((N + 1, L + 1))
    for n in range(1, N + 1):
        q = _inclusion_prob(law, n, table[n - 1])
        marg[n] = stats.binom.pmf(np.arange(L + 1), L, min(max(q, 0.0), 1.0))

    def both_in(n1, n2):
        js = np.arange(min(n1, nu))
        return float(sum(pu[j] * p_v_ge(n2 - j) for j in js))

    ex = exk2 = exy = 0.0
    for n in range(1, N + 1):
        pin = both_in(n, n)
        ex += marg[n, k] * pin
        exk2 += marg[n, k2] * pin
    ex2 = ex
    for n1 in range(1, N + 1):
        prev = table[n1 - 1]
        for n2 in range(n1 + 1, min(N, n1 + nv) + 1):
            pw = both_in(n1, n2)
            if pw < eps * 1e-3:
                break
            joint = _aggregate(*_pair_flags(law, n1, n2, prev), L)
            ex2 += 2.0 * joint[k, k] * pw
            exy += (joint[k, k2] + joint[k2, k]) * pw
    return {"E_Xk": ex, "E_Xk2": exk2, "E_Xk_sq": ex2, "E_XkXk2": exy,
            "mass": V_mean, "n_terms": N}
