"""Inhomogeneous Poisson paper-writing process.

Time is measured in months.  An :class:`IntensityFunction` is a list of
contiguous segments, each either constant or linear with an optional cap,
so integrals are exact and sampling needs no discretisation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DomainError",
    "Segment",
    "IntensityFunction",
    "EventTimeline",
    "KERNELS",
    "as_generator",
    "replicate_seed",
    "integrate_intensity",
    "sample_event_times",
    "estimate_intensity_kernel",
]


class DomainError(ValueError):
    """Raised when a time window falls outside an intensity's domain."""


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def replicate_seed(master_seed: int, replicate: int) -> np.random.SeedSequence:
    """Seed for replicate ``replicate`` under master seed ``master_seed``.

    The rule is ``SeedSequence(master_seed, spawn_key=(replicate,))``, which
    is what ``SeedSequence(master_seed).spawn(R)[replicate]`` returns for any
    ``R > replicate``.  Streams therefore do not depend on how many
    replicates are requested or on the order they are run in.
    """
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(replicate),))


@dataclass(frozen=True)
class Segment:
    """Rate ``min(slope * t + intercept, cap)`` on ``[start, end)``."""

    start: float
    end: float
    slope: float = 0.0
    intercept: float = 0.0
    cap: float | None = None

    @classmethod
    def constant(cls, start: float, end: float, rate: float) -> "Segment":
        return cls(start, end, 0.0, float(rate))

    @property
    def is_constant(self) -> bool:
        return self.slope == 0.0

    def rate(self, t):
        r = self.slope * np.asarray(t, dtype=float) + self.intercept
        if self.cap is not None:
            r = np.minimum(r, self.cap)
        return r

    def _linear_integral(self, s: float, t: float) -> float:
        return 0.5 * self.slope * (t * t - s * s) + self.intercept * (t - s)

    def integrate(self, s: float, t: float) -> float:
        if t <= s:
            return 0.0
        if self.slope == 0.0:
            level = self.intercept if self.cap is None else min(self.intercept, self.cap)
            return level * (t - s)
        if self.cap is None:
            return self._linear_integral(s, t)
        cross = (self.cap - self.intercept) / self.slope
        if self.slope > 0:
            lo, hi = s, min(t, max(s, cross))
            return self._linear_integral(lo, hi) + self.cap * (t - hi)
        lo = max(s, min(t, cross))
        return self.cap * (lo - s) + self._linear_integral(lo, t)

    def sup(self, s: float, t: float) -> float:
        return float(max(self.rate(s), self.rate(t)))


class IntensityFunction:
    """Piecewise constant / capped-linear intensity on ``[0, end)``.

    The last segment may be open-ended (``end = inf``); sampling then needs
    an explicit finite horizon.
    """

    def __init__(self, segments: Sequence[Segment]):
        segments = tuple(segments)
        if not segments:
            raise ValueError("an intensity needs at least one segment")
        if segments[0].start != 0.0:
            raise ValueError("the first segment must start at time 0")
        for prev, nxt in zip(segments, segments[1:]):
            if prev.end != nxt.start:
                raise ValueError(f"segments not contiguous at {prev.end} / {nxt.start}")
        for seg in segments:
            if not seg.end > seg.start:
                raise ValueError(f"empty segment [{seg.start}, {seg.end})")
            if seg.cap is not None and seg.cap < 0:
                raise ValueError("cap must be non-negative")
            if math.isinf(seg.end) and seg.slope < 0 and (seg.cap is None or seg.cap > 0):
                raise ValueError("a decreasing open-ended segment eventually turns negative")
            ends = [seg.start] if math.isinf(seg.end) else [seg.start, seg.end]
            if min(float(seg.rate(x)) for x in ends) < -1e-12:
                raise ValueError(f"negative rate on segment [{seg.start}, {seg.end})")
        self.segments = segments

    @classmethod
    def constant(cls, rate: float, end: float = math.inf) -> "IntensityFunction":
        return cls([Segment.constant(0.0, end, rate)])

    @classmethod
    def piecewise_constant(cls, breaks: Sequence[float], rates: Sequence[float]) -> "IntensityFunction":
        """``breaks`` are interior change points; ``len(rates) == len(breaks) + 1``."""
        if len(rates) != len(breaks) + 1:
            raise ValueError("need one more rate than break point")
        edges = [0.0, *map(float, breaks), math.inf]
        return cls([Segment.constant(a, b, r) for a, b, r in zip(edges, edges[1:], rates)])

    @property
    def end(self) -> float:
        return self.segments[-1].end

    def __repr__(self) -> str:
        return f"IntensityFunction({list(self.segments)!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, IntensityFunction) and self.segments == other.segments

    def _check(self, s: float, t: float) -> None:
        if not (0.0 <= s <= t <= self.end):
            raise DomainError(f"window [{s}, {t}] outside [0, {self.end}]")

    def rate(self, t):
        """Right-continuous rate at ``t`` (vectorised)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for seg in self.segments:
            mask = (t >= seg.start) & (t < seg.end)
            out = np.where(mask, seg.rate(t), out)
        return out if out.ndim else float(out)

    def integrate(self, s: float, t: float) -> float:
        self._check(s, t)
        total = 0.0
        for seg in self.segments:
            lo, hi = max(s, seg.start), min(t, seg.end)
            if hi > lo:
                total += seg.integrate(lo, hi)
        return total

    def cumulative(self, t: float) -> float:
        return self.integrate(0.0, t)


def integrate_intensity(f: IntensityFunction, s: float, t: float) -> float:
    """Exact integral of ``f`` over ``[s, t]``."""
    return f.integrate(s, t)


@dataclass(frozen=True)
class EventTimeline:
    event_times: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.array(self.event_times, dtype=float)
        if times.ndim != 1:
            raise ValueError("event times must be one-dimensional")
        if times.size and (times[0] < 0 or times[-1] > self.horizon):
            raise ValueError("event times must lie in [0, horizon]")
        if np.any(np.diff(times) <= 0):
            raise ValueError("event times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "event_times", times)

    def __len__(self) -> int:
        return int(self.event_times.size)

    def count(self, s: float, t: float) -> int:
        """N[s, t] on the closed window."""
        lo = np.searchsorted(self.event_times, s, side="left")
        hi = np.searchsorted(self.event_times, t, side="right")
        return int(hi - lo)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# horizon={self.horizon!r}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["event_time"])
            for x in self.event_times:
                w.writerow([repr(float(x))])

    @classmethod
    def from_csv(cls, path) -> "EventTimeline":
        horizon = None
        times = []
        for line in Path(path).read_text().splitlines():
            if line.startswith("# horizon="):
                horizon = float(line.split("=", 1)[1])
            elif line and not line.startswith("#") and line != "event_time":
                times.append(float(line))
        if horizon is None:
            horizon = times[-1] if times else 0.0
        return cls(np.array(times), horizon)


def _sample_segment(seg: Segment, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    if seg.is_constant:
        rate = float(seg.rate(lo))
        if rate <= 0:
            return np.empty(0)
        # conditional on the count, points are iid uniform: exact inversion
        count = rng.poisson(rate * (hi - lo))
        return np.sort(rng.uniform(lo, hi, size=count))
    bound = seg.sup(lo, hi)
    if bound <= 0:
        return np.empty(0)
    count = rng.poisson(bound * (hi - lo))
    cand = np.sort(rng.uniform(lo, hi, size=count))
    keep = rng.uniform(0.0, bound, size=count) < seg.rate(cand)
    return cand[keep]


def sample_event_times(f: IntensityFunction, horizon: float, seed=None) -> EventTimeline:
    """One realisation of the process on ``[0, horizon]``.

    Constant segments are sampled exactly (Poisson count, uniform order
    statistics); linear segments by thinning against the segment maximum.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if horizon > f.end:
        raise DomainError(f"horizon {horizon} beyond intensity domain {f.end}")
    rng = as_generator(seed)
    parts = []
    for seg in f.segments:
        lo, hi = seg.start, min(seg.end, horizon)
        if hi <= lo:
            break
        parts.append(_sample_segment(seg, lo, hi, rng))
    times = np.concatenate(parts) if parts else np.empty(0)
    return EventTimeline(times, float(horizon))


def _box(u):
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def _triangular(u):
    return np.clip(1.0 - np.abs(u), 0.0, None)


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


KERNELS = {"box": _box, "triangular": _triangular, "epanechnikov": _epanechnikov}


def estimate_intensity_kernel(events, t: float, bandwidth: float, kernel: str = "box") -> float:
    """Kernel estimate ``(1/h) * sum_n K((E_n - t) / h)``.

    No boundary correction: near 0 and the horizon part of the kernel mass
    falls outside the observation window and the estimate is biased low.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    try:
        K = KERNELS[kernel.lower()]
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}") from None
    times = events.event_times if isinstance(events, EventTimeline) else np.asarray(events, float)
    if times.size == 0:
        return 0.0
    if K is _box:
        # count on the closed window directly so the estimate is exactly N/(2h)
        inside = (times >= t - bandwidth) & (times <= t + bandwidth)
        return float(np.count_nonzero(inside) / (2.0 * bandwidth))
    return float(np.sum(K((times - t) / bandwidth)) / bandwidth)
