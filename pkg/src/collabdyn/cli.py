"""``collabdyn`` command line: simulate, theory, estimate, experiment, arxiv.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
failures while running.  Without ``--seed`` the config seed is used, and
builtin configs default to 20230101.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, arxiv, closed_form, estimators, experiments
from .collab_model import LinearLaw, read_run_csv, write_run_csv
from .indices import yearly_index_series
from .process import KERNELS, estimate_intensity_kernel

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return "" if np.isnan(v) else repr(v)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _apply_override(data: dict, item: str) -> None:
    if "=" not in item:
        raise UsageError(f"--set expects key=value, got {item!r}")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise UsageError(f"cannot set {key!r}: {p!r} is not a table")
    node[parts[-1]] = _parse_value(value.strip())


def load_cfg(args) -> experiments.ExperimentConfig:
    if args.config and args.name:
        raise UsageError("give either --config or --name, not both")
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise experiments.ConfigError(f"{args.config}: {exc}") from exc
    elif args.name:
        data = experiments.get_builtin(args.name).to_dict()
    else:
        raise UsageError("a config is required: pass --config FILE or --name BUILTIN")
    for item in args.set or []:
        _apply_override(data, item)
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "epsilon", None) is not None:
        data["epsilon"] = args.epsilon
    return experiments.parse_config(data)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> None:
    cfg = load_cfg(args)
    f, law = cfg.intensity_function(), cfg.coauthorship_law()
    run, _ = experiments.simulate_replicate(cfg, f, law, args.replicate)
    out = _out_dir(args)
    run.event_times.to_csv(out / "timeline.csv")
    write_run_csv(run, out / "run.csv")
    series = {nm: yearly_index_series(run, phi, cfg.year_length, cfg.horizon)
              for nm, phi in experiments.PHIS.items()}
    rows = [[j] + [_fmt(series[nm][i][1]) for nm in series] for i, (j, _) in enumerate(series["ci"])]
    _write_rows(out / "indices.csv", ["year", "ci", "dc", "cc"], rows)


def cmd_theory(args) -> None:
    cfg = load_cfg(args)
    f, law, eps = cfg.intensity_function(), cfg.coauthorship_law(), cfg.epsilon
    out = _out_dir(args)
    t = cfg.horizon / 2 if args.t is None else args.t
    lim = closed_form.ht_gt(law, f, t, eps, want_joint=True)
    with open(out / "ht_gt.csv", "w", newline="") as fh:
        fh.write(f"# t={t!r} rate={lim.rate!r} tail_mass={lim.tail_mass!r} "
                 f"n_terms={lim.n_terms} epsilon={eps!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "H", "G_diag"])
        for k in range(law.L + 1):
            w.writerow([k, _fmt(lim.H[k]), _fmt(lim.G[k, k])])
    rows = []
    for k in range(args.k_max + 1):
        for k2 in range(args.k_max + 1):
            if k != k2:
                rows.append([k, k2, *map(_fmt, closed_form.theorem1_limits(lim, k, k2))])
    _write_rows(out / "theorem1.csv", ["k", "k2", "mean_var_rate", "cov_coeff", "corr_coeff"], rows)
    if isinstance(law, LinearLaw):
        n_max = min(law.n_max, args.n_max)
        curve = closed_form.expected_coauthors_recursion(law.a, law.b, law.L, n_max)
        _write_rows(out / "expected_coauthors.csv", ["n", "expected_coauthors", "b_n"],
                    [[n, _fmt(curve[n - 1]), _fmt(law.b[n - 1])] for n in range(1, n_max + 1)])
    n_years = int(np.ceil(cfg.horizon / cfg.year_length - 1e-12))
    rows = []
    for j in range(n_years):
        s, e = j * cfg.year_length, min((j + 1) * cfg.year_length, cfg.horizon)
        rows.append([j] + [_fmt(closed_form.expected_index(f, law, phi, s, e, eps))
                           for phi in experiments.PHIS.values()])
    _write_rows(out / "expected_index.csv", ["year", "theory_ci", "theory_dc", "theory_cc"], rows)


def cmd_estimate(args) -> None:
    if args.input:
        run = read_run_csv(args.input)
    else:
        cfg = load_cfg(args)
        run, _ = experiments.simulate_replicate(cfg, cfg.intensity_function(), cfg.coauthorship_law(),
                                                args.replicate)
    if run.num_events == 0:
        raise RuntimeError("the run has no events to estimate from")
    out = _out_dir(args)
    rows = [(n, k, est) for k in args.k
            for n, est in enumerate(estimators.estimate_F_series(run, k, args.level), start=1)]
    estimators.write_estimates_csv(rows, out / "estimates.csv")
    lin = []
    for n in range(1, run.num_events + 1):
        a_est, b_est = estimators.estimate_linear(estimators.snapshot_at(run, n), args.level)
        lin.append([n, _fmt(a_est.value), _fmt(a_est.se), _fmt(a_est.lo), _fmt(a_est.hi),
                    _fmt(b_est.value), _fmt(b_est.se), _fmt(b_est.lo), _fmt(b_est.hi)])
    _write_rows(out / "linear_estimates.csv",
                ["n", "a", "a_se", "a_lo", "a_hi", "b", "b_se", "b_lo", "b_hi"], lin)
    if run.event_times is not None:
        tl = run.event_times
        grid = np.arange(0.0, tl.horizon + 1e-9, args.grid_step)
        _write_rows(out / "intensity.csv", ["t", "rate"],
                    [[_fmt(t), _fmt(estimate_intensity_kernel(tl, t, args.bandwidth, args.kernel))]
                     for t in grid])


def cmd_experiment(args) -> None:
    cfg = load_cfg(args)
    res = experiments.run_experiment(cfg, threads=args.threads)
    out = _out_dir(args)
    (out / f"{cfg.name}_yearly.csv").write_text(res.yearly_csv())
    (out / f"{cfg.name}_replicates.csv").write_text(res.replicate_csv())
    if res.estimator_rows:
        (out / f"{cfg.name}_estimators.csv").write_text(res.estimator_csv())


def cmd_arxiv(args) -> None:
    stats = arxiv.ParseStats()
    records = list(arxiv.parse_metadata(args.input, stats))
    if args.discipline:
        records = list(arxiv.discipline_filter(records, args.discipline))
    out = _out_dir(args)
    (out / "yearly_indices.csv").write_text(arxiv.yearly_csv(arxiv.yearly_indices(records)))
    if records:
        top, short = arxiv.top_productive_authors(records, args.top_k)
        if short:
            print(f"note: only {len(top)} authors, fewer than --top-k {args.top_k}", file=sys.stderr)
        names = [a for a, _ in top]
        (out / "top_authors.csv").write_text(arxiv.top_authors_csv(top))
        (out / "yearly_indices_top.csv").write_text(arxiv.yearly_csv(arxiv.yearly_indices(records, names)))
        (out / "coauthors_per_kth_paper.csv").write_text(
            arxiv.kth_paper_csv(arxiv.coauthors_per_kth_paper(records, names)))
        fhat = []
        for k in args.k:
            fhat += arxiv.estimate_F_empirical(records, k, names, M=args.m_override, m_rule=args.m_rule)
        (out / "fhat.csv").write_text(arxiv.fhat_csv(fhat))
        corr = arxiv.correlation_series(records, args.sample_size, args.delta, args.seed)
        (out / "correlation.csv").write_text(arxiv.correlation_csv(corr))
    print(f"parsed {stats.read} lines: kept {stats.kept}, skipped {stats.skipped}", file=sys.stderr)


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--name", help=f"builtin config ({', '.join(experiments.builtin_configs())})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry, e.g. law.p=0.02 (repeatable)")
    p.add_argument("--seed", type=int, help="master seed (default: config seed)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collabdyn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one replicate: timeline, co-author sets, yearly indices")
    _config_flags(p)
    p.add_argument("--replicate", type=int, default=0, help="replicate number (default 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("theory", help="closed-form quantities for a config")
    _config_flags(p)
    p.add_argument("--epsilon", type=float, help="Poisson tail tolerance (default 1e-12)")
    p.add_argument("--t", type=float, help="time for H_t, G_t (default horizon/2)")
    p.add_argument("--k-max", type=int, default=3, help="largest k in the limits table")
    p.add_argument("--n-max", type=int, default=200, help="events in the expected-co-author curve")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("estimate", help="estimators on a run CSV or a fresh simulation")
    _config_flags(p)
    p.add_argument("--input", help="run CSV written by 'simulate'")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--k", type=int, nargs="+", default=[0, 1, 2, 3], help="counts k for F-hat")
    p.add_argument("--level", type=float, default=0.95, help="confidence level")
    p.add_argument("--bandwidth", type=float, default=6.0, help="kernel bandwidth (months)")
    p.add_argument("--kernel", choices=sorted(KERNELS), default="box")
    p.add_argument("--grid-step", type=float, default=1.0, help="intensity grid spacing")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("experiment", help="Monte Carlo yearly-index study")
    _config_flags(p)
    p.add_argument("--epsilon", type=float, help="Poisson tail tolerance for theory columns")
    p.add_argument("--threads", type=int, default=1, help="worker threads for replicates")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("arxiv", help="analyse an arXiv metadata JSON-lines file")
    p.add_argument("--input", required=True, help="JSON-lines metadata file")
    p.add_argument("--discipline", help="archive, category, glob or bundle (e.g. physics-bundle)")
    p.add_argument("--top-k", type=int, default=100, help="number of most productive authors")
    p.add_argument("--k", type=int, nargs="+", default=[0, 1, 2, 3], help="counts k for F-hat")
    p.add_argument("--m-override", type=float, help="fixed M for the k = 0 denominator")
    p.add_argument("--m-rule", choices=["global-max", "event-month"], default="global-max")
    p.add_argument("--sample-size", type=int, default=1000, help="authors sampled for correlations")
    p.add_argument("--delta", type=int, default=12, help="correlation window in months")
    p.add_argument("--seed", type=int, default=experiments.DEFAULT_SEED)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_arxiv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)   # exits with 2 on usage errors
    try:
        args.func(args)
    except (UsageError, experiments.ConfigError) as exc:
        print(f"collabdyn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"collabdyn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
