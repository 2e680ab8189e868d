"""Co-authorship laws F_n(k) and event-by-event simulation of co-author sets.

At event ``n`` (1-based) each of the ``L`` authors in the pool joins the
paper independently with probability ``F_n(m)``, where ``m`` is the number
of earlier papers they co-wrote with the ego.  ``F_n`` is supported on
``k in {0, ..., n-1}`` and is zero elsewhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._expr import compile_expr
from .process import EventTimeline, as_generator

__all__ = [
    "CoauthorshipLaw",
    "ConstantLaw",
    "LinearLaw",
    "TabulatedLaw",
    "SimulationRun",
    "evaluate_F",
    "simulate_coauthor_sets",
    "simulate_sizes",
    "attach_event_times",
    "write_run_csv",
    "read_run_csv",
]


class CoauthorshipLaw:
    """Base class: subclasses implement ``_values(n, k)`` on the support."""

    kind = "abstract"

    def __init__(self, L: int):
        if int(L) != L or L < 1:
            raise ValueError("author pool size L must be a positive integer")
        self.L = int(L)

    def _values(self, n: int, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def prob(self, n: int, k):
        """F_n(k), vectorised over ``k``; zero outside ``{0, ..., n-1}``."""
        if n < 1:
            raise ValueError("event index n starts at 1")
        k = np.asarray(k)
        inside = (k >= 0) & (k <= n - 1)
        kk = np.where(inside, k, 0)
        vals = np.broadcast_to(self._values(n, kk), kk.shape)
        out = np.where(inside, vals, 0.0)
        return out if out.ndim else float(out)

    def is_constant_in_k(self) -> bool:
        return False

    def to_spec(self) -> dict:
        raise NotImplementedError


class ConstantLaw(CoauthorshipLaw):
    kind = "constant"

    def __init__(self, p: float, L: int):
        super().__init__(L)
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        self.p = float(p)

    def _values(self, n, k):
        return np.full(k.shape, self.p)

    def is_constant_in_k(self) -> bool:
        return True

    def to_spec(self) -> dict:
        return {"kind": "constant", "p": self.p, "L": self.L}

    def __repr__(self):
        return f"ConstantLaw(p={self.p}, L={self.L})"


def check_linear_admissible(a: Sequence[float], b: Sequence[float], atol: float = 1e-12) -> None:
    """Raise ValueError unless every F_n(k) = a_n k + b_n lies in [0, 1].

    ``a[0]`` and ``b[0]`` hold ``a_1`` and ``b_1``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1-d sequences of equal length")
    bad_b = np.flatnonzero((b < -atol) | (b > 1 + atol))
    if bad_b.size:
        n = int(bad_b[0]) + 1
        raise ValueError(f"b_{n} = {float(b[n - 1])!r} outside [0, 1]")
    n = np.arange(1, a.size + 1)
    span = np.maximum(n - 1, 1)
    lo, hi = -b / span, (1 - b) / span
    bad = np.flatnonzero((n >= 2) & ((a < lo - atol) | (a > hi + atol)))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"a_{i + 1} = {float(a[i])!r} outside [{float(lo[i])!r}, {float(hi[i])!r}]")


class LinearLaw(CoauthorshipLaw):
    """F_n(k) = a_n k + b_n on the support, for n up to ``len(a)``."""

    kind = "linear"

    def __init__(self, a: Sequence[float], b: Sequence[float], L: int):
        super().__init__(L)
        check_linear_admissible(a, b)
        self.a = np.array(a, dtype=float)
        self.b = np.array(b, dtype=float)
        self.a.setflags(write=False)
        self.b.setflags(write=False)
        self._source = None

    @property
    def n_max(self) -> int:
        return int(self.a.size)

    @classmethod
    def from_expressions(cls, a_expr: str, b_expr: str, n_max: int, L: int) -> "LinearLaw":
        n = np.arange(1, n_max + 1, dtype=float)
        a = np.broadcast_to(compile_expr(a_expr, ("n",))(n), n.shape)
        b = np.broadcast_to(compile_expr(b_expr, ("n",))(n), n.shape)
        law = cls(a, b, L)
        law._source = (str(a_expr), str(b_expr))
        return law

    def _values(self, n, k):
        if n > self.n_max:
            raise IndexError(f"linear law defined for n <= {self.n_max}, got n = {n}")
        return self.a[n - 1] * k + self.b[n - 1]

    def is_constant_in_k(self) -> bool:
        return bool(np.all(self.a[1:] == 0))

    def to_spec(self) -> dict:
        if self._source is None:
            return {"kind": "linear", "a": self.a.tolist(), "b": self.b.tolist(), "L": self.L}
        return {"kind": "linear", "a": self._source[0], "b": self._source[1],
                "n_max": self.n_max, "L": self.L}

    def __repr__(self):
        return f"LinearLaw(n_max={self.n_max}, L={self.L})"


class TabulatedLaw(CoauthorshipLaw):
    """F_n(k) given by a rule ``rule(n, k)`` (vectorised in ``k``) or a table.

    With ``clamp=True`` values are clipped into [0, 1]; this is how capped
    laws such as ``(0.05k + 0.005) ^ 1`` are represented.  Without it any
    value outside [0, 1] raises at evaluation time.
    """

    kind = "tabulated"

    def __init__(self, rule: Callable | np.ndarray | str, L: int, clamp: bool = False):
        super().__init__(L)
        self._source = None
        if isinstance(rule, str):
            self._source = rule
            rule = compile_expr(rule, ("n", "k"))
        elif not callable(rule):
            table = np.asarray(rule, dtype=float)
            if table.ndim != 2:
                raise ValueError("a table must be 2-d with rows n = 1, 2, ...")
            self._table = table
            rule = self._lookup
        self.rule = rule
        self.clamp = bool(clamp)

    def _lookup(self, n, k):
        if n > self._table.shape[0]:
            raise IndexError(f"table covers n <= {self._table.shape[0]}")
        return self._table[n - 1, np.asarray(k, dtype=int)]

    def _values(self, n, k):
        vals = np.asarray(self.rule(n, k), dtype=float)
        if self.clamp:
            return np.clip(vals, 0.0, 1.0)
        if np.any((vals < 0) | (vals > 1)):
            raise ValueError(f"F_{n} leaves [0, 1]; pass clamp=True to clip")
        return vals

    def to_spec(self) -> dict:
        if self._source is None:
            raise ValueError("only expression-defined tabulated laws serialise")
        return {"kind": "tabulated", "expr": self._source, "clamp": self.clamp, "L": self.L}

    def __repr__(self):
        src = self._source or getattr(self.rule, "__name__", "rule")
        return f"TabulatedLaw({src!r}, L={self.L}, clamp={self.clamp})"


def evaluate_F(law: CoauthorshipLaw, n: int, k):
    return law.prob(n, k)


@dataclass(frozen=True)
class SimulationRun:
    """Realised co-author sets for ``num_events`` events.

    ``inclusions[n-1, i]`` is True when author ``i`` (0-based) is on the
    ego's ``n``-th paper.  ``history[n, i]`` is m_{n,i}; row 0 is zeros.
    """

    inclusions: np.ndarray
    L: int
    law: CoauthorshipLaw | None = None
    event_times: EventTimeline | None = None
    history: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        inc = np.array(self.inclusions, dtype=bool).reshape(-1, self.L)
        inc.setflags(write=False)
        object.__setattr__(self, "inclusions", inc)
        hist = np.zeros((inc.shape[0] + 1, self.L), dtype=np.int32)
        np.cumsum(inc, axis=0, out=hist[1:])
        hist.setflags(write=False)
        object.__setattr__(self, "history", hist)
        if self.event_times is not None and len(self.event_times) != inc.shape[0]:
            raise ValueError("event_times must align one-to-one with events")

    @property
    def num_events(self) -> int:
        return int(self.inclusions.shape[0])

    @property
    def sizes(self) -> np.ndarray:
        """#C_n for n = 1, ..., num_events."""
        return self.inclusions.sum(axis=1)

    def coauthor_set(self, n: int) -> np.ndarray:
        """Author ids (1-based) in C_n."""
        return np.flatnonzero(self.inclusions[n - 1]) + 1

    def authors_with_count(self, n: int, k: int) -> np.ndarray:
        """0-based authors i with m_{n,i} == k."""
        return np.flatnonzero(self.history[n] == k)

    @property
    def times(self) -> np.ndarray | None:
        return None if self.event_times is None else self.event_times.event_times


def simulate_coauthor_sets(law: CoauthorshipLaw, num_events: int, seed=None) -> SimulationRun:
    if num_events < 0:
        raise ValueError("num_events must be non-negative")
    rng = as_generator(seed)
    L = law.L
    m = np.zeros(L, dtype=np.int64)
    inc = np.zeros((num_events, L), dtype=bool)
    for n in range(1, num_events + 1):
        row = rng.random(L) < law.prob(n, m)
        inc[n - 1] = row
        m += row
    return SimulationRun(inc, L, law)


def simulate_sizes(law: CoauthorshipLaw, num_events: int, replicates: int, seed=None,
                   dtype=np.int16) -> np.ndarray:
    """#C_n for many independent runs at once, shape ``(replicates, num_events)``.

    Equivalent in law to calling :func:`simulate_coauthor_sets` per run but
    vectorised across replicates; only sizes are kept.
    """
    rng = as_generator(seed)
    L = law.L
    m = np.zeros((replicates, L), dtype=dtype)
    sizes = np.zeros((replicates, num_events), dtype=dtype)
    for n in range(1, num_events + 1):
        probs = _prob_table(law, n)[m]
        row = rng.random((replicates, L)) < probs
        sizes[:, n - 1] = row.sum(axis=1)
        m += row
    return sizes


def _prob_table(law: CoauthorshipLaw, n: int) -> np.ndarray:
    # F_n(k) for k = 0..n-1 plus a trailing zero, indexable by m <= n-1
    return np.append(law.prob(n, np.arange(n)), 0.0)


def attach_event_times(run: SimulationRun, timeline: EventTimeline) -> SimulationRun:
    """Align event ``n`` with ``E_n``; events beyond the timeline are dropped."""
    keep = min(run.num_events, len(timeline))
    times = EventTimeline(timeline.event_times[:keep], timeline.horizon)
    return SimulationRun(run.inclusions[:keep], run.L, run.law, times)


def write_run_csv(run: SimulationRun, path) -> None:
    times = run.times
    with open(path, "w", newline="") as fh:
        fh.write(f"# L={run.L}\n")
        if run.event_times is not None:
            fh.write(f"# horizon={run.event_times.horizon!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event_index", "event_time", "coauthor_ids"])
        for n in range(1, run.num_events + 1):
            t = "" if times is None else repr(float(times[n - 1]))
            ids = ";".join(str(i) for i in run.coauthor_set(n))
            w.writerow([n, t, ids])


def read_run_csv(path, law: CoauthorshipLaw | None = None) -> SimulationRun:
    L = law.L if law is not None else None
    horizon = None
    rows = []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("# L="):
                L = int(line.split("=", 1)[1])
            elif line.startswith("# horizon="):
                horizon = float(line.split("=", 1)[1])
            else:
                lines.append(line)
        for rec in csv.DictReader(lines):
            rows.append(rec)
    if L is None:
        raise ValueError("run file lacks the '# L=' header and no law was given")
    inc = np.zeros((len(rows), L), dtype=bool)
    times = []
    for j, rec in enumerate(rows):
        if int(rec["event_index"]) != j + 1:
            raise ValueError("event indices must be 1, 2, ... in order")
        ids = [int(x) for x in rec["coauthor_ids"].split(";") if x]
        inc[j, np.asarray(ids, dtype=int) - 1] = True
        if rec["event_time"]:
            times.append(float(rec["event_time"]))
    timeline = None
    if times:
        if len(times) != len(rows):
            raise ValueError("either all or no events carry times")
        timeline = EventTimeline(np.array(times), horizon if horizon is not None else times[-1])
    return SimulationRun(inc, L, law, timeline)
