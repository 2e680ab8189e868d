"""Window counts X_k[s, t] and the generalised collaboration index I_phi.

A paper with ``k`` authors has ``k - 1`` co-authors of the ego.  Index
values are ``None`` for windows with no papers: the ratio is undefined
there and callers averaging over replicates skip those entries.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .collab_model import SimulationRun

__all__ = [
    "WindowCounts",
    "PhiFunction",
    "PHI_CI",
    "PHI_DC",
    "PHI_CC",
    "window_counts",
    "counts_from_sizes",
    "index_value",
    "yearly_index_series",
]


@dataclass(frozen=True)
class WindowCounts:
    window: tuple[float, float]
    n_total: int
    by_size: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if sum(self.by_size.values()) != self.n_total:
            raise ValueError("by_size counts must add up to n_total")
        if any(v < 0 for v in self.by_size.values()) or any(k < 1 for k in self.by_size):
            raise ValueError("paper sizes start at 1 and counts are non-negative")

    def X(self, k: int) -> int:
        return self.by_size.get(k, 0)


class PhiFunction:
    """Weight phi(k) on the number of authors k >= 1, with phi(1) = 0."""

    def __init__(self, kind: str, values: Sequence[float] | None = None):
        kind = kind.upper()
        if kind not in ("CI", "DC", "CC", "CUSTOM"):
            raise ValueError(f"unknown phi kind {kind!r}")
        self.kind = kind
        self.values = None
        if kind == "CUSTOM":
            vals = np.asarray(values, dtype=float)
            if vals.ndim != 1 or vals.size == 0:
                raise ValueError("custom phi needs values for k = 1, 2, ...")
            if vals[0] != 0:
                raise ValueError("phi(1) must be 0")
            if np.any(np.diff(vals) < 0):
                raise ValueError("phi must be non-decreasing")
            self.values = vals

    @classmethod
    def custom(cls, values: Sequence[float]) -> "PhiFunction":
        return cls("CUSTOM", values)

    def __call__(self, k):
        k = np.asarray(k)
        if np.any(k < 1):
            raise ValueError("phi is defined for k >= 1")
        if self.kind == "CI":
            out = k - 1.0
        elif self.kind == "DC":
            out = (k >= 2).astype(float)
        elif self.kind == "CC":
            out = 1.0 - 1.0 / k
        else:
            if np.any(k > self.values.size):
                raise ValueError(f"custom phi only defined for k <= {self.values.size}")
            out = self.values[k - 1]
        return out if np.ndim(out) else float(out)

    def __repr__(self):
        return f"PhiFunction({self.kind!r})"


PHI_CI = PhiFunction("CI")
PHI_DC = PhiFunction("DC")
PHI_CC = PhiFunction("CC")


def counts_from_sizes(author_counts, window=(0.0, 0.0)) -> WindowCounts:
    """WindowCounts from a list of per-paper author counts (k >= 1)."""
    tally = Counter(int(k) for k in author_counts)
    return WindowCounts(tuple(window), sum(tally.values()), dict(sorted(tally.items())))


def window_counts(run: SimulationRun, s: float, t: float, closed: bool = True) -> WindowCounts:
    """Counts of k-author papers with E_n in [s, t] (or [s, t) if not closed)."""
    if run.event_times is None:
        raise ValueError("run has no event times; attach a timeline first")
    if s > t:
        raise ValueError("window start after end")
    times = run.event_times.event_times
    lo = np.searchsorted(times, s, side="left")
    hi = np.searchsorted(times, t, side="right" if closed else "left")
    return counts_from_sizes(run.sizes[lo:hi] + 1, (s, t))


def index_value(counts: WindowCounts, phi: PhiFunction) -> float | None:
    """sum_k phi(k) X_k / N, or None when the window holds no papers."""
    if counts.n_total == 0:
        return None
    ks = np.fromiter(counts.by_size.keys(), dtype=int)
    xs = np.fromiter(counts.by_size.values(), dtype=float)
    return float(np.dot(phi(ks), xs) / counts.n_total)


def yearly_index_series(run: SimulationRun, phi: PhiFunction, year_length: float = 12.0,
                        horizon: float | None = None) -> list[tuple[int, float | None]]:
    """Index per consecutive window ``[j*y, (j+1)*y)``, partial last year kept.

    Windows are left-closed/right-open so they partition the time axis; the
    final window also keeps an event lying exactly on the horizon.
    """
    if not year_length > 0:
        raise ValueError("year_length must be positive")
    if run.event_times is None:
        raise ValueError("run has no event times; attach a timeline first")
    horizon = run.event_times.horizon if horizon is None else horizon
    n_years = max(1, math.ceil(horizon / year_length - 1e-12))
    out = []
    for j in range(n_years):
        s, t = j * year_length, (j + 1) * year_length
        last = j == n_years - 1
        counts = window_counts(run, s, min(t, horizon) if last else t, closed=last)
        out.append((j, index_value(counts, phi)))
    return out
