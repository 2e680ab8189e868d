"""Config-driven Monte Carlo harness for the yearly-index simulation studies.

A config is a TOML document::

    name = "fig3"
    L = 100                 # author pool size
    horizon = 360           # months
    replicates = 10
    seed = 20230101
    year_length = 12
    outputs = ["indices", "theory"]      # also: "estimators"

    [intensity]
    segments = [{start = 0, end = "inf", rate = 0.5}]
    # linear pieces: {start, end, slope, intercept, cap}

    [law]
    kind = "constant"       # constant | linear | tabulated
    p = 0.01
    # linear:    a = "0.4/n", b = "0.05*(1 - 1/log(n + 2))", n_max = 2000
    # tabulated: expr = "0.05*k + 0.005", clamp = true

Numbers may be given as expression strings ("1/6", "inf").  Replicate ``r``
draws from ``SeedSequence(seed, spawn_key=(r,))``; its first child stream
samples event times and its second the co-author sets.
"""

from __future__ import annotations

import copy
import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import closed_form
from ._expr import number
from .collab_model import (
    CoauthorshipLaw,
    ConstantLaw,
    LinearLaw,
    TabulatedLaw,
    attach_event_times,
    simulate_coauthor_sets,
)
from .estimators import EventSnapshot, estimate_F_nonparam, estimate_linear
from .indices import PHI_CC, PHI_CI, PHI_DC, yearly_index_series
from .process import IntensityFunction, Segment, replicate_seed, sample_event_times

__all__ = [
    "ConfigError",
    "UnknownConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "build_intensity",
    "build_law",
    "load_config",
    "parse_config",
    "builtin_configs",
    "get_builtin",
    "run_experiment",
    "run_estimator_study",
    "simulate_event_snapshots",
    "simulate_replicate",
    "builtin_law_fig2",
    "with_pool_size",
    "estimator_study_csv",
]

PHIS = {"ci": PHI_CI, "dc": PHI_DC, "cc": PHI_CC}
OUTPUTS = {"indices", "theory", "estimators"}
_TOP_KEYS = {"name", "L", "horizon", "replicates", "seed", "year_length", "outputs",
             "intensity", "law", "estimator_ks", "epsilon"}
_SEGMENT_KEYS = {"start", "end", "rate", "slope", "intercept", "cap"}
_LAW_KEYS = {"kind", "p", "a", "b", "n_max", "expr", "clamp"}
DEFAULT_SEED = 20230101


class ConfigError(ValueError):
    pass


class UnknownConfigError(ConfigError, KeyError):
    """No builtin config under the requested name."""

    def __str__(self):
        return str(self.args[0])


@dataclass
class ExperimentConfig:
    name: str
    intensity: dict
    law: dict
    L: int = 100
    horizon: float = 360.0
    replicates: int = 10
    seed: int = DEFAULT_SEED
    year_length: float = 12.0
    outputs: list = field(default_factory=lambda: ["indices"])
    estimator_ks: list = field(default_factory=lambda: [0, 1, 2, 3])
    epsilon: float = 1e-12

    def validate(self) -> "ExperimentConfig":
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be >= 1")
        if not float(self.horizon) > 0:
            raise ConfigError("horizon must be positive")
        if not float(self.year_length) > 0:
            raise ConfigError("year_length must be positive")
        bad = set(self.outputs) - OUTPUTS
        if bad:
            raise ConfigError(f"unknown outputs {sorted(bad)}; choose from {sorted(OUTPUTS)}")
        self.intensity_function()
        self.coauthorship_law()
        return self

    def intensity_function(self) -> IntensityFunction:
        return build_intensity(self.intensity)

    def coauthorship_law(self) -> CoauthorshipLaw:
        return build_law(self.law, int(self.L))

    def to_dict(self) -> dict:
        return {
            "name": self.name, "L": self.L, "horizon": self.horizon,
            "replicates": self.replicates, "seed": self.seed,
            "year_length": self.year_length, "outputs": list(self.outputs),
            "estimator_ks": list(self.estimator_ks), "epsilon": self.epsilon,
            "intensity": copy.deepcopy(self.intensity), "law": copy.deepcopy(self.law),
        }


def build_intensity(spec: dict) -> IntensityFunction:
    if set(spec) - {"segments"}:
        raise ConfigError(f"unknown intensity keys {sorted(set(spec) - {'segments'})}")
    segs = []
    try:
        for raw in spec["segments"]:
            unknown = set(raw) - _SEGMENT_KEYS
            if unknown:
                raise ConfigError(f"unknown segment keys {sorted(unknown)}")
            start, end = number(raw["start"]), number(raw.get("end", "inf"))
            cap = number(raw["cap"]) if "cap" in raw else None
            if "rate" in raw:
                if "slope" in raw or "intercept" in raw:
                    raise ConfigError("a segment has either rate or slope/intercept")
                segs.append(Segment(start, end, 0.0, number(raw["rate"]), cap))
            else:
                segs.append(Segment(start, end, number(raw.get("slope", 0)),
                                    number(raw.get("intercept", 0)), cap))
        return IntensityFunction(segs)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad intensity spec: {exc}") from exc


def build_law(spec: dict, L: int) -> CoauthorshipLaw:
    unknown = set(spec) - _LAW_KEYS
    if unknown:
        raise ConfigError(f"unknown law keys {sorted(unknown)}")
    kind = spec.get("kind")
    try:
        if kind == "constant":
            return ConstantLaw(number(spec["p"]), L)
        if kind == "linear":
            a, b = spec["a"], spec["b"]
            n_max = int(spec.get("n_max", 2000))
            if isinstance(a, list):
                return LinearLaw([number(x) for x in a], [number(x) for x in b], L)
            return LinearLaw.from_expressions(str(a), str(b), n_max, L)
        if kind == "tabulated":
            return TabulatedLaw(str(spec["expr"]), L, clamp=bool(spec.get("clamp", False)))
    except KeyError as exc:
        raise ConfigError(f"law of kind {kind!r} needs key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid law: {exc}") from exc
    raise ConfigError(f"unknown law kind {kind!r}")


def parse_config(data: dict) -> ExperimentConfig:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for key in ("intensity", "law"):
        if key not in data:
            raise ConfigError(f"config needs a [{key}] table")
    kw = dict(data)
    kw.setdefault("name", "experiment")
    try:
        for key, cast in (("L", int), ("replicates", int), ("seed", int),
                          ("horizon", number), ("year_length", number), ("epsilon", number)):
            if key in kw:
                kw[key] = cast(kw[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(**kw).validate()


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


_CONST = {"segments": [{"start": 0, "end": "inf", "rate": 0.5}]}
_PIECEWISE = {"segments": [
    {"start": 0, "end": 100, "rate": "1/6"},
    {"start": 100, "end": 200, "rate": "1/3"},
    {"start": 200, "end": "inf", "rate": "1/2"},
]}


def _ramp(third_cap: str) -> dict:
    return {"segments": [
        {"start": 0, "end": 100, "slope": "1/200", "intercept": 0},
        {"start": 100, "end": 200, "slope": "1/400", "intercept": 0},
        {"start": 200, "end": "inf", "slope": "1/720", "intercept": 0, "cap": third_cap},
    ]}


_LAW_CONST = {"kind": "constant", "p": 0.01}
_LAW_K = {"kind": "tabulated", "expr": "min(0.05*k + 0.005, 1)"}
_LAW_N = {"kind": "tabulated", "expr": "min(n/180, 1)"}


def builtin_configs() -> dict[str, ExperimentConfig]:
    """Builtin simulation studies keyed fig2..fig11.

    fig2 is the linear-law example with a natural log in b_n (see
    :func:`builtin_law_fig2` for the base-10 reading).  The ramp intensity
    caps its third piece at 1 in fig9 and fig10 and at 1/2 in fig11.
    """
    raw = {
        "fig2": (_CONST, {"kind": "linear", "a": "0.4/n", "b": "0.05*(1 - 1/log(n + 2))", "n_max": 2000}),
        "fig3": (_CONST, _LAW_CONST),
        "fig4": (_CONST, _LAW_K),
        "fig5": (_CONST, _LAW_N),
        "fig6": (_PIECEWISE, _LAW_CONST),
        "fig7": (_PIECEWISE, _LAW_K),
        "fig8": (_PIECEWISE, _LAW_N),
        "fig9": (_ramp("1"), _LAW_CONST),
        "fig10": (_ramp("1"), _LAW_K),
        "fig11": (_ramp("1/2"), _LAW_N),
    }
    out = {}
    for name, (intensity, law) in raw.items():
        out[name] = ExperimentConfig(name=name, intensity=copy.deepcopy(intensity), law=dict(law),
                                     outputs=["indices", "theory"])
    return out


def builtin_law_fig2(L: int = 100, log_base: str = "e", n_max: int = 2000) -> CoauthorshipLaw:
    """a_n = 0.4/n, b_n = 0.05 (1 - 1/log(n+2)) with the chosen log base."""
    log = {"e": "log", "10": "log10"}[str(log_base)]
    return LinearLaw.from_expressions("0.4/n", f"0.05*(1 - 1/{log}(n + 2))", n_max, L)


def get_builtin(name: str) -> ExperimentConfig:
    configs = builtin_configs()
    if name not in configs:
        raise UnknownConfigError(f"no builtin config {name!r}; known: {', '.join(configs)}")
    return configs[name]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    years: list
    per_replicate: dict                 # index name -> array (replicates, years), nan = no papers
    mean: dict
    se: dict
    runs: np.ndarray
    theory: dict = field(default_factory=dict)
    estimator_rows: list = field(default_factory=list)

    def yearly_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# mean/se over replicates with papers in that year; "
                  "se = sample sd (ddof=1) / sqrt(runs)\n")
        w = csv.writer(buf, lineterminator="\n")
        names = list(PHIS)
        header = ["year", "runs"]
        for nm in names:
            header += [f"mean_{nm}", f"se_{nm}"]
        header += [f"theory_{nm}" for nm in names if nm in self.theory]
        w.writerow(header)
        for j, year in enumerate(self.years):
            row = [year, int(self.runs[j])]
            for nm in names:
                row += [_fmt(self.mean[nm][j]), _fmt(self.se[nm][j])]
            row += [_fmt(self.theory[nm][j]) for nm in names if nm in self.theory]
            w.writerow(row)
        return buf.getvalue()

    def replicate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "year", *(f"value_{nm}" for nm in PHIS)])
        R = next(iter(self.per_replicate.values())).shape[0]
        for r in range(R):
            for j, year in enumerate(self.years):
                w.writerow([r, year, *(_fmt(self.per_replicate[nm][r, j]) for nm in PHIS)])
        return buf.getvalue()

    def estimator_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "k", "truth", "mean", "se", "runs"])
        for row in self.estimator_rows:
            w.writerow([row[0], row[1], *(_fmt(v) for v in row[2:5]), row[5]])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def simulate_replicate(cfg: ExperimentConfig, f: IntensityFunction, law: CoauthorshipLaw, r: int):
    """Run replicate ``r``; returns the run and its yearly CI/DC/CC (nan = no papers)."""
    t_seed, c_seed = replicate_seed(cfg.seed, r).spawn(2)
    timeline = sample_event_times(f, cfg.horizon, np.random.default_rng(t_seed))
    run = simulate_coauthor_sets(law, len(timeline), np.random.default_rng(c_seed))
    run = attach_event_times(run, timeline)
    series = {}
    for nm, phi in PHIS.items():
        vals = yearly_index_series(run, phi, cfg.year_length)
        series[nm] = np.array([np.nan if v is None else v for _, v in vals])
    return run, series


def _mean_se(values: np.ndarray):
    """Column mean / SE skipping nan (years without papers)."""
    ok = ~np.isnan(values)
    runs = ok.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(runs > 0, np.nansum(values, axis=0) / np.maximum(runs, 1), np.nan)
        dev = np.where(ok, values - mean, 0.0)
        var = (dev**2).sum(axis=0) / (runs - 1)
        se = np.where(runs > 1, np.sqrt(var) / np.sqrt(runs), np.nan)
    return mean, se, runs


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Simulate ``cfg.replicates`` independent runs and aggregate yearly indices."""
    cfg.validate()
    f = cfg.intensity_function()
    law = cfg.coauthorship_law()
    reps = range(int(cfg.replicates))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: simulate_replicate(cfg, f, law, r), reps))
    else:
        results = [simulate_replicate(cfg, f, law, r) for r in reps]
    n_years = max(1, math.ceil(cfg.horizon / cfg.year_length - 1e-12))
    years = list(range(n_years))
    per_rep, mean, se = {}, {}, {}
    runs = None
    for nm in PHIS:
        vals = np.vstack([s[nm] for _, s in results])
        per_rep[nm] = vals
        mean[nm], se[nm], runs = _mean_se(vals)
    res = ExperimentResult(cfg, years, per_rep, mean, se, runs)
    if "theory" in cfg.outputs:
        for nm, phi in PHIS.items():
            res.theory[nm] = np.array([
                _none_nan(closed_form.expected_index(
                    f, law, phi, j * cfg.year_length, min((j + 1) * cfg.year_length, cfg.horizon),
                    cfg.epsilon))
                for j in years
            ])
    if "estimators" in cfg.outputs:
        res.estimator_rows = _estimator_table([run for run, _ in results], law, cfg.estimator_ks)
    return res


def _none_nan(v):
    return np.nan if v is None else v


def _estimator_table(runs, law, ks):
    rows = []
    n_max = min(run.num_events for run in runs)
    for n in range(1, n_max + 1):
        for k in ks:
            if k > n - 1:
                continue
            vals = []
            for run in runs:
                snap = EventSnapshot(n, run.history[n - 1], run.inclusions[n - 1])
                est = estimate_F_nonparam(snap, k)
                if est.support_count:
                    vals.append(est.value)
            vals = np.array(vals)
            m = float(vals.mean()) if vals.size else np.nan
            s = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else np.nan
            rows.append((n, k, float(law.prob(n, k)), m, s, int(vals.size)))
    return rows


def simulate_event_snapshots(law: CoauthorshipLaw, n: int, replicates: int, seed=None):
    """(m_{n-1,i}, 1_{C_n}(i)) for ``replicates`` independent pools.

    Returns two ``(replicates, L)`` integer arrays.
    """
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    L = law.L
    m = np.zeros((replicates, L), dtype=np.int32)
    for step in range(1, n):
        table = np.append(law.prob(step, np.arange(step)), 0.0)
        m += rng.random((replicates, L)) < table[m]
    table = np.append(law.prob(n, np.arange(n)), 0.0)
    incl = (rng.random((replicates, L)) < table[m]).astype(np.int8)
    return m, incl


def run_estimator_study(law: CoauthorshipLaw, L_grid, replicates: int, seed: int = DEFAULT_SEED,
                        n: int = 4, ks=(0, 1, 2), level: float = 0.95, chunk: int = 100):
    """Coverage, RMSE and mean plug-in SE of the estimators at event ``n``.

    For every pool size in ``L_grid`` the law is re-instantiated with that
    ``L``.  Returns dict rows with keys ``L, n, target, truth, coverage,
    rmse, mean_se, replicates, low_replicate``; ``mean_se`` is the mean of
    sigma-hat / sqrt(L), i.e. the standard error of the estimate itself.
    """
    rows = []
    for L in L_grid:
        pool_law = with_pool_size(law, int(L))
        targets = {f"F({k})": float(pool_law.prob(n, k)) for k in ks}
        if isinstance(pool_law, LinearLaw):
            targets["a"] = float(pool_law.a[n - 1])
            targets["b"] = float(pool_law.b[n - 1])
        records = {name: [] for name in targets}
        rng = np.random.default_rng(replicate_seed(seed, int(L)))
        done = 0
        while done < replicates:
            size = min(chunk, replicates - done)
            m, incl = simulate_event_snapshots(pool_law, n, size, rng)
            for r in range(size):
                snap = EventSnapshot(n, m[r], incl[r])
                for k in ks:
                    records[f"F({k})"].append(estimate_F_nonparam(snap, k, level))
                if "a" in targets:
                    a_est, b_est = estimate_linear(snap, level)
                    records["a"].append(a_est)
                    records["b"].append(b_est)
            done += size
        for name, truth in targets.items():
            ests = records[name]
            vals = np.array([e.value for e in ests])
            covered = np.array([e.covers(truth) for e in ests])
            ses = np.array([e.se / math.sqrt(e.L) for e in ests if e.se is not None])
            rows.append({
                "L": int(L), "n": n, "target": name, "truth": truth,
                "coverage": float(covered.mean()),
                "rmse": float(np.sqrt(np.mean((vals - truth) ** 2))),
                "mean_se": float(ses.mean()) if ses.size else float("nan"),
                "replicates": len(ests),
                "low_replicate": len(ests) < 30,
            })
    return rows


def with_pool_size(law: CoauthorshipLaw, L: int) -> CoauthorshipLaw:
    clone = copy.copy(law)
    clone.L = int(L)
    return clone


def estimator_study_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = ["L", "n", "target", "truth", "coverage", "rmse", "mean_se", "replicates", "low_replicate"]
    w.writerow(keys)
    for row in rows:
        w.writerow([_fmt(row[k]) if isinstance(row[k], float) else row[k] for k in keys])
    return buf.getvalue()
