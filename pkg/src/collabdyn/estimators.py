"""Conditional maximum-likelihood estimators of F_n(k) and (a_n, b_n).

All estimators read an :class:`EventSnapshot`: the counts m_{n-1,i} before
event n and the inclusion flags 1_{C_n}(i), for every author i in the pool.
Standard errors are asymptotic: ``se`` is the plug-in sigma-hat, so the
interval is ``value +/- z * se / sqrt(L)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .closed_form import per_author_pmf_table
from .collab_model import CoauthorshipLaw, LinearLaw, SimulationRun

__all__ = [
    "EventSnapshot",
    "EstimateWithCI",
    "DeltaMethodContext",
    "snapshot_at",
    "estimate_F_nonparam",
    "estimate_linear",
    "estimate_F_series",
    "ratio_asymptotics",
    "slope_gradient",
    "intercept_gradient",
    "delta_method_context",
    "write_estimates_csv",
]


@dataclass(frozen=True)
class EventSnapshot:
    n: int
    prev_counts: np.ndarray
    inclusions: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.prev_counts)
        x = np.asarray(self.inclusions)
        if m.shape != x.shape or m.ndim != 1:
            raise ValueError("prev_counts and inclusions must be 1-d and aligned")
        if m.size and (m.min() < 0 or m.max() > self.n - 1):
            raise ValueError(f"prev_counts must lie in 0..{self.n - 1}")
        if not np.all((x == 0) | (x == 1)):
            raise ValueError("inclusions must be 0/1")
        object.__setattr__(self, "prev_counts", m.astype(np.int64))
        object.__setattr__(self, "inclusions", x.astype(np.int64))

    @property
    def L(self) -> int:
        return int(self.prev_counts.size)


@dataclass(frozen=True)
class EstimateWithCI:
    """Point estimate with a Wald interval; ``se`` is None when unavailable."""

    value: float
    se: float | None
    lo: float | None
    hi: float | None
    level: float
    support_count: int
    L: int

    @classmethod
    def build(cls, value: float, sigma: float | None, L: int, level: float, support: int):
        if sigma is None or not np.isfinite(sigma):
            return cls(float(value), None, None, None, level, int(support), int(L))
        half = _z(level) * sigma / math.sqrt(L)
        return cls(float(value), float(sigma), value - half, value + half, level, int(support), int(L))

    def covers(self, truth: float) -> bool:
        return self.lo is not None and self.lo <= truth <= self.hi


def _z(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError("confidence level must lie in (0, 1)")
    return float(stats.norm.ppf(0.5 + level / 2.0))


def snapshot_at(run: SimulationRun, n: int) -> EventSnapshot:
    if not 1 <= n <= run.num_events:
        raise IndexError(f"event {n} outside 1..{run.num_events}")
    return EventSnapshot(n, run.history[n - 1], run.inclusions[n - 1])


def estimate_F_nonparam(snap: EventSnapshot, k: int, level: float = 0.95) -> EstimateWithCI:
    """Share of authors with m_{n-1,i} = k who join paper n.

    With nobody at count k the estimate is 0 and no interval is given.
    """
    at_k = snap.prev_counts == k
    support = int(np.count_nonzero(at_k))
    if support == 0:
        return EstimateWithCI.build(0.0, None, snap.L, level, 0)
    F = float(snap.inclusions[at_k].sum() / support)
    sigma2 = F * (1.0 - F) / (support / snap.L)
    return EstimateWithCI.build(F, math.sqrt(sigma2), snap.L, level, support)


def slope_gradient(z: np.ndarray) -> np.ndarray:
    """Gradient of (z4 - z1 z2) / (z3 - z2^2) at z = (E X, E Y, E Y^2, E XY)."""
    x1, x2, x3, x4 = z
    d = x3 - x2 * x2
    beta = (x4 - x1 * x2) / d
    return np.array([-x2 / d, (2.0 * x2 * beta - x1) / d, -beta / d, 1.0 / d])


def intercept_gradient(z: np.ndarray) -> np.ndarray:
    """Gradient of z1 - z2 (z4 - z1 z2) / (z3 - z2^2)."""
    x1, x2, x3, x4 = z
    d = x3 - x2 * x2
    beta = (x4 - x1 * x2) / d
    g1 = slope_gradient(z)
    grad = -x2 * g1
    grad[0] += 1.0
    grad[1] -= beta
    return grad


def estimate_linear(snap: EventSnapshot, level: float = 0.95) -> tuple[EstimateWithCI, EstimateWithCI]:
    """Least-squares / conditional-MLE estimates of (a_n, b_n).

    Variances are delta-method plug-ins grad^T Sigma-hat grad with
    Sigma-hat the empirical covariance of (X, Y, Y^2, XY), X = inclusion,
    Y = previous count.  If the counts have no spread, a_n is set to 0,
    b_n to the inclusion rate, and no intervals are reported.
    """
    x = snap.inclusions.astype(float)
    y = snap.prev_counts.astype(float)
    L = snap.L
    Z = np.column_stack([x, y, y * y, x * y])
    zbar = Z.mean(axis=0)
    var_y = zbar[2] - zbar[1] ** 2
    if L == 0 or var_y <= 1e-12 * max(1.0, zbar[2]):
        b = float(zbar[0]) if L else 0.0
        return (EstimateWithCI.build(0.0, None, L, level, L),
                EstimateWithCI.build(b, None, L, level, L))
    a_hat = (zbar[3] - zbar[0] * zbar[1]) / var_y
    b_hat = zbar[0] - a_hat * zbar[1]
    centred = Z - zbar
    sigma = centred.T @ centred / L
    ga, gb = slope_gradient(zbar), intercept_gradient(zbar)
    va = max(float(ga @ sigma @ ga), 0.0)
    vb = max(float(gb @ sigma @ gb), 0.0)
    return (EstimateWithCI.build(a_hat, math.sqrt(va), L, level, L),
            EstimateWithCI.build(b_hat, math.sqrt(vb), L, level, L))


def estimate_F_series(run: SimulationRun, k: int, level: float = 0.95) -> list[EstimateWithCI]:
    if run.num_events == 0:
        raise ValueError("run has no events")
    return [estimate_F_nonparam(snapshot_at(run, n), k, level) for n in range(1, run.num_events + 1)]


def ratio_asymptotics(mu_x: float, mu_y: float, var_x: float, var_y: float, rho: float) -> float:
    """Asymptotic variance of sqrt(n) (sum X / sum Y - mu_x / mu_y)."""
    if mu_y == 0:
        raise ValueError("mu_y must be non-zero")
    sx, sy = math.sqrt(var_x), math.sqrt(var_y)
    return (mu_y**2 * var_x + mu_x**2 * var_y - 2.0 * rho * mu_x * mu_y * sx * sy) / mu_y**4


@dataclass(frozen=True)
class DeltaMethodContext:
    """Population quantities behind the (a_n, b_n) delta method at event n.

    ``s[g, l] = E(X^g Y^l)`` with X the inclusion flag and Y = m_{n-1,1}.
    """

    n: int
    s: np.ndarray
    mu_x: float
    mu_y: float
    var_x: float
    var_y: float
    rho: float
    sigma: np.ndarray
    grad_a: np.ndarray
    grad_b: np.ndarray
    beta: float
    alpha: float

    @property
    def sigma_a2(self) -> float:
        return float(self.grad_a @ self.sigma @ self.grad_a)

    @property
    def sigma_b2(self) -> float:
        return float(self.grad_b @ self.sigma @ self.grad_b)

    def sigma_a2_expanded(self) -> float:
        """sigma_a^2 written out term by term."""
        S, my, vy = self.sigma, self.mu_y, self.var_y
        al, be = self.alpha, self.beta
        c2 = al - be * my          # = mu_x - 2 beta mu_y
        return float(
            my**2 * S[0, 0] + 2 * c2 * my * S[0, 1] + 2 * be * my * S[0, 2] - 2 * my * S[0, 3]
            + c2**2 * S[1, 1] + 2 * c2 * be * S[1, 2] - 2 * c2 * S[1, 3]
            + be**2 * S[2, 2] - 2 * be * S[2, 3] + S[3, 3]
        ) / vy**2

    def sigma_b2_expanded(self) -> float:
        """sigma_b^2 written out term by term."""
        S, my, mx, vy, be = self.sigma, self.mu_y, self.mu_x, self.var_y, self.beta
        c1 = 1 + my**2 / vy
        c2 = (be * vy + 2 * be * my**2 - mx * my) / vy
        return float(
            c1**2 * S[0, 0] - 2 * c1 * c2 * S[0, 1] + 2 * c1 * be * my * S[0, 2] / vy
            - 2 * c1 * my * S[0, 3] / vy + c2**2 * S[1, 1] - 2 * c2 * be * my * S[1, 2] / vy
            + 2 * c2 * my * S[1, 3] / vy + be**2 * my**2 * S[2, 2] / vy**2
            - 2 * be * my**2 * S[2, 3] / vy**2 + my**2 * S[3, 3] / vy**2
        )


def delta_method_context(law: CoauthorshipLaw, n: int) -> DeltaMethodContext:
    """Exact population moments for a linear law at event ``n >= 2``."""
    if not isinstance(law, LinearLaw):
        raise TypeError("delta-method variances are defined for linear laws")
    if n < 2:
        raise ValueError("need n >= 2 so that m_{n-1} can vary")
    p = per_author_pmf_table(law, n - 1)[-1]
    k = np.arange(p.size, dtype=float)
    F = law.prob(n, np.arange(p.size))
    s = np.zeros((3, 5))
    for lam in range(5):
        s[0, lam] = np.dot(k**lam, p)
        s[1, lam] = s[2, lam] = np.dot(k**lam * F, p)   # X is 0/1 so X^2 = X
    mu_x, mu_y = s[1, 0], s[0, 1]
    var_x = mu_x * (1 - mu_x)
    var_y = s[0, 2] - mu_y**2
    if var_y <= 0:
        raise ValueError("m_{n-1} has no spread; the slope is not identified")
    cov_xy = s[1, 1] - mu_x * mu_y
    rho = cov_xy / math.sqrt(var_x * var_y) if var_x > 0 else 0.0
    # Z = (X, Y, Y^2, XY): E[Z_a Z_b] from the moment table
    EZ = np.array([s[1, 0], s[0, 1], s[0, 2], s[1, 1]])
    # (x-power, y-power) of each coordinate
    powers = [(1, 0), (0, 1), (0, 2), (1, 1)]
    M = np.empty((4, 4))
    for i, (gi, li) in enumerate(powers):
        for j, (gj, lj) in enumerate(powers):
            M[i, j] = s[min(gi + gj, 1), li + lj]
    sigma = M - np.outer(EZ, EZ)
    beta = cov_xy / var_y
    alpha = mu_x - beta * mu_y
    return DeltaMethodContext(n, s, mu_x, mu_y, var_x, var_y, rho, sigma,
                              slope_gradient(EZ), intercept_gradient(EZ), beta, alpha)


def write_estimates_csv(rows, path) -> None:
    """Rows are ``(n, k, EstimateWithCI)``; missing values are written empty."""
    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "k", "value", "se", "lo", "hi", "support_count"])
        for n, k, est in rows:
            w.writerow([n, k, fmt(est.value), fmt(est.se), fmt(est.lo), fmt(est.hi), est.support_count])
