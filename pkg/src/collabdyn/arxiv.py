"""Streaming analysis of arXiv metadata snapshots (JSON lines).

Each input line is one JSON object with at least ``id``, ``categories`` and
``authors`` (a string such as ``"A. One, B. Two and C. Three"``), optionally
``authors_parsed`` (``[[last, first, suffix], ...]``), which is preferred
when present.  The paper month is the one encoded in the identifier.

Author identity is the normalised name string: whitespace trimmed and
collapsed, ``"Last, First"`` list entries turned into ``"First Last"``.
There is no disambiguation, so homonyms merge and spelling variants split.
A collaboration name counts as one author.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from typing import Iterable, Iterator, Sequence

import numpy as np

from .collab_model import SimulationRun
from .indices import PHI_CC, PHI_CI, PHI_DC, counts_from_sizes, index_value

__all__ = [
    "PaperRecord",
    "ParseStats",
    "AuthorTimeline",
    "CATEGORY_MAP",
    "parse_id",
    "normalize_author",
    "split_authors",
    "parse_record",
    "parse_metadata",
    "serialize_record",
    "discipline_filter",
    "yearly_indices",
    "top_productive_authors",
    "author_timelines",
    "coauthors_per_kth_paper",
    "correlation_series",
    "monthly_productive_counts",
    "estimate_F_empirical",
    "simulated_corpus",
    "YearRow",
    "FHatRow",
    "yearly_csv",
    "top_authors_csv",
    "kth_paper_csv",
    "fhat_csv",
    "correlation_csv",
]

# Named bundles of archive patterns.  Any other prefix matches an archive
# ("cs") or a full category ("cs.LG") directly.
CATEGORY_MAP = {
    "physics-bundle": ("astro-ph", "cond-mat", "gr-qc", "hep-*", "nucl-*", "physics", "quant-ph"),
}

_OLD_ID = re.compile(r"^[a-z][a-z\-]*(?:\.[A-Za-z\-]+)?/(\d{2})(\d{2})\d{3}(?:v\d+)?$")
_NEW_ID = re.compile(r"^(\d{2})(\d{2})\.\d{4,5}(?:v\d+)?$")
_AUTHOR_SEP = re.compile(r"\s*,\s*and\s+|\s*,\s*|\s+and\s+|\s*;\s*")
_PARENS = re.compile(r"\([^()]*\)")


def parse_id(paper_id: str) -> tuple[int, int]:
    """(year, month) encoded in an old-style or new-style identifier."""
    pid = paper_id.strip()
    m = _NEW_ID.match(pid)
    if m:
        year = 2000 + int(m.group(1))
    else:
        m = _OLD_ID.match(pid)
        if not m:
            raise ValueError(f"unrecognised arXiv identifier {paper_id!r}")
        yy = int(m.group(1))
        year = 1900 + yy if yy >= 91 else 2000 + yy
    month = int(m.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"identifier {paper_id!r} encodes month {month}")
    return year, month


def normalize_author(name: str) -> str:
    name = " ".join(unicodedata.normalize("NFC", name).split())
    if name.count(",") == 1:
        last, first = (part.strip() for part in name.split(","))
        name = f"{first} {last}".strip()
    return name


def split_authors(text: str) -> list[str]:
    """Split an authors string on commas, semicolons and "and"."""
    prev = None
    while prev != text:   # drop (possibly nested) affiliations
        prev, text = text, _PARENS.sub(" ", text)
    parts = (" ".join(p.split()) for p in _AUTHOR_SEP.split(text.replace("\n", " ")))
    return [p for p in parts if p]


@dataclass(frozen=True)
class PaperRecord:
    id: str
    year_month: tuple[int, int]
    categories: tuple[str, ...]
    authors: tuple[str, ...]

    def __post_init__(self):
        if not self.authors:
            raise ValueError(f"paper {self.id} has no authors")

    @property
    def month_index(self) -> int:
        return self.year_month[0] * 12 + self.year_month[1] - 1

    @property
    def sort_key(self):
        return (self.year_month, self.id)


@dataclass
class ParseStats:
    read: int = 0
    kept: int = 0
    skipped: int = 0
    errors: Counter = field(default_factory=Counter)


def parse_record(obj: dict) -> PaperRecord:
    pid = obj["id"]
    if not isinstance(pid, str):
        raise ValueError("id must be a string")
    cats = obj.get("categories", "")
    cats = tuple(cats.split() if isinstance(cats, str) else (str(c) for c in cats))
    parsed = obj.get("authors_parsed")
    if parsed:
        names = [" ".join(p for p in (e[1] if len(e) > 1 else "", e[0], *e[2:]) if p) for e in parsed]
    else:
        raw = obj.get("authors", "")
        names = split_authors(raw) if isinstance(raw, str) else [str(a) for a in raw]
    authors = []
    for name in map(normalize_author, names):
        if name and name not in authors:
            authors.append(name)
    return PaperRecord(pid.strip(), parse_id(pid), cats, tuple(authors))


def parse_metadata(source, stats: ParseStats | None = None) -> Iterator[PaperRecord]:
    """Yield records from a path or an iterable of lines.

    Malformed lines are skipped and tallied in ``stats`` (by error type).
    An unreadable path raises ``OSError`` on the first ``next()``.
    """
    stats = stats if stats is not None else ParseStats()
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8") as fh:
            yield from _parse_lines(fh, stats)
    else:
        yield from _parse_lines(source, stats)


def _parse_lines(lines, stats: ParseStats) -> Iterator[PaperRecord]:
    for line in lines:
        if not line.strip():
            continue
        stats.read += 1
        try:
            rec = parse_record(json.loads(line))
        except (ValueError, KeyError, TypeError, IndexError, AttributeError) as exc:
            stats.skipped += 1
            stats.errors[type(exc).__name__] += 1
            continue
        stats.kept += 1
        yield rec


def serialize_record(rec: PaperRecord) -> str:
    """One JSON line that :func:`parse_metadata` maps back to ``rec``."""
    return json.dumps({"id": rec.id, "categories": " ".join(rec.categories),
                       "authors": ", ".join(rec.authors)}, ensure_ascii=False)


def _matches(category: str, pattern: str) -> bool:
    archive = category.split(".", 1)[0]
    return category == pattern or fnmatchcase(archive, pattern)


def discipline_filter(records: Iterable[PaperRecord], prefix: str,
                      category_map: dict | None = None) -> Iterator[PaperRecord]:
    """Keep records with any category in the discipline ``prefix``.

    ``prefix`` is an archive ("cs"), a category ("math.PR"), an archive
    glob ("hep-*") or a key of ``category_map`` (default
    :data:`CATEGORY_MAP`).
    """
    cmap = CATEGORY_MAP if category_map is None else category_map
    patterns = tuple(cmap.get(prefix, (prefix,)))
    for rec in records:
        if any(_matches(c, p) for c in rec.categories for p in patterns):
            yield rec


@dataclass(frozen=True)
class YearRow:
    year: int
    papers: int
    ci: float
    dc: float
    cc: float


def yearly_indices(records: Iterable[PaperRecord], authors: Iterable[str] | None = None) -> list[YearRow]:
    """Pooled CI/DC/CC per year from paper author counts.

    With ``authors`` given only papers having one of them are counted.
    Years without papers are absent.
    """
    keep = None if authors is None else set(authors)
    sizes: dict[int, Counter] = defaultdict(Counter)
    for rec in records:
        if keep is not None and keep.isdisjoint(rec.authors):
            continue
        sizes[rec.year_month[0]][len(rec.authors)] += 1
    rows = []
    for year in sorted(sizes):
        tally = sizes[year]
        counts = counts_from_sizes(tally.elements())
        rows.append(YearRow(year, counts.n_total, index_value(counts, PHI_CI),
                            index_value(counts, PHI_DC), index_value(counts, PHI_CC)))
    return rows


def top_productive_authors(records: Iterable[PaperRecord], K: int) -> tuple[list[tuple[str, int]], bool]:
    """The ``K`` authors with most papers, ties broken by name.

    Returns ``(rows, short)`` where rows are ``(author, papers)`` and
    ``short`` flags that fewer than ``K`` authors exist.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    tally = Counter(a for rec in records for a in rec.authors)
    ranked = sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:K], len(ranked) < K


@dataclass
class AuthorTimeline:
    author: str
    entries: list = field(default_factory=list)   # (year_month, id, coauthors)

    def sort(self) -> "AuthorTimeline":
        self.entries.sort(key=lambda e: (e[0], e[1]))
        return self


def author_timelines(records: Iterable[PaperRecord], authors: Iterable[str]) -> dict[str, AuthorTimeline]:
    """Chronological paper lists for the given authors (ties by id)."""
    wanted = set(authors)
    out = {a: AuthorTimeline(a) for a in wanted}
    for rec in records:
        for a in wanted.intersection(rec.authors):
            out[a].entries.append((rec.year_month, rec.id, tuple(x for x in rec.authors if x != a)))
    for tl in out.values():
        tl.sort()
    return out


def coauthors_per_kth_paper(records: Iterable[PaperRecord], authors: Iterable[str]) -> list[tuple[int, float, int]]:
    """``(k, mean co-authors on the k-th paper, authors with >= k papers)``."""
    authors = list(authors)
    if not authors:
        raise ValueError("need at least one author")
    series = [[len(e[2]) for e in tl.entries] for tl in author_timelines(records, authors).values()]
    longest = max((len(s) for s in series), default=0)
    rows = []
    for k in range(1, longest + 1):
        vals = [s[k - 1] for s in series if len(s) >= k]
        rows.append((k, sum(vals) / len(vals), len(vals)))
    return rows


def correlation_series(records: Iterable[PaperRecord], sample_size: int, delta: int = 12, seed=None,
                       ks: Sequence[int] = (2, 3, 4, 5), authors: Iterable[str] | None = None):
    """Pearson Cor(X_1, X_k) over sampled authors per window.

    Windows are ``[t, t + delta)`` in months, starting at the first month
    of the corpus and stepping by ``delta``.  ``X_k`` of an author is the
    number of their papers with ``k`` authors in the window.  The sample
    is drawn without replacement from ``authors`` (default: everyone),
    after sorting, with ``numpy.random.default_rng(seed)``.  Rows are
    ``(year, month, k, corr or None)``; None marks a zero variance.
    """
    if sample_size < 2:
        raise ValueError("sample_size must be >= 2")
    records = list(records)
    if not records:
        return []
    pool = sorted(set(authors) if authors is not None else {a for r in records for a in r.authors})
    rng = np.random.default_rng(seed)
    chosen = pool if len(pool) <= sample_size else sorted(rng.choice(pool, sample_size, replace=False))
    col = {a: i for i, a in enumerate(chosen)}
    first = min(r.month_index for r in records)
    last = max(r.month_index for r in records)
    n_windows = (last - first) // delta + 1
    kmax = max(max(ks), 1)
    X = np.zeros((n_windows, kmax + 1, len(chosen)))
    for r in records:
        k = len(r.authors)
        if k > kmax:
            continue
        w = (r.month_index - first) // delta
        for a in r.authors:
            if a in col:
                X[w, k, col[a]] += 1
    rows = []
    for w in range(n_windows):
        start = first + w * delta
        for k in ks:
            rows.append((start // 12, start % 12 + 1, k, _pearson(X[w, 1], X[w, k])))
    return rows


def _pearson(x: np.ndarray, y: np.ndarray):
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        return None
    return float(dx @ dy) / math.sqrt(sxx * syy)


def monthly_productive_counts(records: Iterable[PaperRecord]) -> dict[tuple[int, int], int]:
    """Number of distinct authors with a paper in each month."""
    seen: dict[tuple[int, int], set] = defaultdict(set)
    for rec in records:
        seen[rec.year_month].update(rec.authors)
    return {ym: len(s) for ym, s in sorted(seen.items())}


@dataclass(frozen=True)
class FHatRow:
    n: int
    k: int
    value: float | None
    numerator: int
    denominator: float
    egos: int


def estimate_F_empirical(records: Iterable[PaperRecord], k: int, egos: Iterable[str],
                         M: float | None = None, m_rule: str = "global-max") -> list[FHatRow]:
    """F-hat_n(k) pooled over ``egos``, for n = 1 .. longest ego history.

    For each ego, the pool L_1 is everyone who ever co-wrote with them.
    Authors outside L_1 have m = 0, so for ``k = 0`` their number L_2 is
    estimated by ``max(M - #{i in L_1: m = 0}, 0)`` and added to the
    denominator; for ``k >= 1`` nothing is added.  M is the given override,
    else the maximum monthly count of productive authors (``m_rule =
    "global-max"``) or the count in the month of the ego's n-th paper
    (``"event-month"``).  Numerators and denominators are summed over the
    egos having an n-th paper.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if m_rule not in ("global-max", "event-month"):
        raise ValueError(f"unknown m_rule {m_rule!r}")
    records = list(records)
    monthly = monthly_productive_counts(records) if M is None else {}
    global_m = max(monthly.values(), default=0) if M is None else float(M)
    timelines = author_timelines(records, egos)
    num: Counter = Counter()
    den: Counter = Counter()
    users: Counter = Counter()
    for tl in timelines.values():
        pool = sorted({a for e in tl.entries for a in e[2]})
        m = dict.fromkeys(pool, 0)
        for n, (ym, _, coauthors) in enumerate(tl.entries, start=1):
            at_k = sum(1 for c in m.values() if c == k)
            hits = sum(1 for a in coauthors if m[a] == k)
            extra = 0.0
            if k == 0:
                mm = monthly[ym] if (M is None and m_rule == "event-month") else global_m
                extra = max(mm - at_k, 0)
            num[n] += hits
            den[n] += at_k + extra
            users[n] += 1
            for a in coauthors:
                m[a] += 1
    rows = []
    for n in sorted(users):
        value = num[n] / den[n] if den[n] > 0 else None
        rows.append(FHatRow(n, k, value, num[n], den[n], users[n]))
    return rows


def simulated_corpus(runs: Sequence[SimulationRun], base_year: int = 2000,
                     category: str = "cs.SI") -> list[PaperRecord]:
    """Render simulated runs as arXiv records, one ego per run.

    Run ``j`` has ego ``"Ego j"`` and pool authors ``"Ego j Coauthor i"``.
    Event time ``t`` (months) lands in month ``floor(t)`` after January of
    ``base_year``; an event exactly at the horizon stays in the last month
    so years line up with the closed last window of the indices module.
    New-style ids number papers within a month in time order.
    """
    events = []
    for j, run in enumerate(runs):
        if run.times is None:
            raise ValueError("runs need event times")
        last_month = math.ceil(run.event_times.horizon) - 1
        for n, t in enumerate(run.times, start=1):
            month = min(int(math.floor(t)), last_month)
            names = [f"Ego {j}"] + [f"Ego {j} Coauthor {i}" for i in run.coauthor_set(n)]
            events.append((float(t), j, month, names))
    events.sort(key=lambda e: (e[0], e[1]))
    seq: Counter = Counter()
    out = []
    for _, _, month, names in events:
        year, mo = base_year + month // 12, month % 12 + 1
        if not 2000 <= year <= 2099:
            raise ValueError("new-style identifiers need years 2000..2099")
        seq[month] += 1
        pid = f"{year % 100:02d}{mo:02d}.{seq[month]:05d}"
        out.append(PaperRecord(pid, (year, mo), (category,), tuple(names)))
    return out


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def yearly_csv(rows: Sequence[YearRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["year", "papers", "ci", "dc", "cc"])
    for r in rows:
        w.writerow([r.year, r.papers, _fmt(r.ci), _fmt(r.dc), _fmt(r.cc)])
    return buf.getvalue()


def top_authors_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "author", "papers"])
    for i, (a, c) in enumerate(rows, start=1):
        w.writerow([i, a, c])
    return buf.getvalue()


def kth_paper_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "mean_coauthors", "authors"])
    for k, mean, cnt in rows:
        w.writerow([k, _fmt(mean), cnt])
    return buf.getvalue()


def fhat_csv(rows: Iterable[FHatRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "k", "value", "numerator", "denominator", "egos"])
    for r in rows:
        w.writerow([r.n, r.k, _fmt(r.value), r.numerator, _fmt(r.denominator), r.egos])
    return buf.getvalue()


def correlation_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["year", "month", "k", "corr"])
    for y, m, k, c in rows:
        w.writerow([y, m, k, _fmt(c)])
    return buf.getvalue()
