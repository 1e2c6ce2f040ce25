"""From raw per-period samples to transport series, and back out to files.

A panel is a long table of ``(period, value)`` rows.  Each period becomes an
empirical quantile curve on the probability grid, the barycenter is their
node-wise mean, and period ``i`` is represented by the transport
``T_i = Q_i o F_bar`` on the padded data hull ``omega``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .diagnostics import AcfVector, DiagnosticReport, mcleod_tests, split_tests
from .errors import (
    AtmError,
    DegenerateData,
    DegenerateSeries,
    IoError,
    ParamError,
    ParseError,
    RangeError,
    SchemaError,
)
from .estimation import AlphaFit, fit_alpha
from .grid_transport import (
    UNIT,
    AtmSeries,
    Grid,
    Interval,
    MonotoneCurve,
    alpha_contract,
    barycenter,
    compose,
    eval_rows,
    invert,
    project_rows,
    wasserstein_distance,
)

DEFAULT_PADDING = 0.01
MIN_ANALYZE_N = 20
MIN_TRAIN_LEN = 20


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RawPanel:
    """Samples grouped by period, periods in ascending label order."""

    periods: tuple[str, ...]
    samples: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.periods) != len(self.samples):
            raise SchemaError("one sample array per period is required")
        if len(set(self.periods)) != len(self.periods):
            raise SchemaError("period labels must be distinct")
        for p, s in zip(self.periods, self.samples):
            if np.asarray(s).size < 2:
                raise SchemaError(f"period {p!r} has fewer than two observations")
            if not np.all(np.isfinite(s)):
                raise SchemaError(f"period {p!r} has non-finite values")

    @property
    def n(self) -> int:
        return len(self.periods)

    @property
    def records(self) -> list[tuple[str, float]]:
        return [(p, float(v)) for p, s in zip(self.periods, self.samples) for v in s]

    @classmethod
    def from_records(cls, records) -> "RawPanel":
        groups: dict[str, list[float]] = {}
        for period, value in records:
            groups.setdefault(str(period), []).append(float(value))
        order = sort_periods(groups)
        return cls(tuple(order), tuple(np.asarray(groups[p]) for p in order))


def _numeric(label: str) -> float | None:
    try:
        v = float(label)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def sort_periods(labels) -> list[str]:
    """Ascending order; numerically when every label parses as a number."""
    labels = list(labels)
    keys = [_numeric(s) for s in labels]
    if all(k is not None for k in keys):
        return [s for _, s in sorted(zip(keys, labels))]
    return sorted(labels)


def ingest_csv(path: str | Path, period_column: str = "period", value_column: str = "value",
               delimiter: str = ",") -> RawPanel:
    """Read a long-format panel with one observation per row."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        missing = [c for c in (period_column, value_column) if c not in header]
        if missing:
            raise SchemaError(f"missing column(s) {missing}; header is {header}")
        ip, iv = header.index(period_column), header.index(value_column)
        records = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            label, raw = row[ip].strip(), row[iv].strip()
            if not label:
                raise ParseError("empty period label", line)
            try:
                value = float(raw)
            except ValueError:
                raise ParseError(f"value {raw!r} is not numeric", line) from None
            if not math.isfinite(value):
                raise ParseError(f"value {raw!r} is not finite", line)
            records.append((label, value))
    panel = RawPanel.from_records(records)
    if panel.n < 2:
        raise SchemaError(f"need at least two periods, found {panel.n}")
    return panel


# ---------------------------------------------------------------------------
# distribution series
# ---------------------------------------------------------------------------

class TransportMode(str, Enum):
    BARYCENTRIC = "barycentric"
    INCREMENTAL = "incremental"


def empirical_quantile(sample, grid: Grid, omega: Interval) -> MonotoneCurve:
    """Linear interpolation of order statistics at positions ``(i - 0.5) / N``."""
    xs = np.sort(np.asarray(sample, dtype=float))
    pos = (np.arange(1, xs.size + 1) - 0.5) / xs.size
    return MonotoneCurve.from_values(grid, np.interp(grid.nodes, pos, xs), omega, pinned=False)


def data_hull(panel: RawPanel, padding: float) -> Interval:
    lo = min(float(np.min(s)) for s in panel.samples)
    hi = max(float(np.max(s)) for s in panel.samples)
    if not hi > lo:
        raise DegenerateData("all observations are equal; the data hull is a point")
    pad = padding * (hi - lo)
    return Interval(lo - pad, hi + pad)


def transport_to(q: MonotoneCurve, reference: MonotoneCurve) -> MonotoneCurve:
    """``Q o F_ref`` on ``reference``'s range, pinned to its endpoints."""
    cdf = invert(reference)
    return MonotoneCurve(cdf.grid, _pull_back(np.atleast_2d(q.values), reference, cdf)[0])


def _pull_back(rows: np.ndarray, reference: MonotoneCurve, cdf: MonotoneCurve) -> np.ndarray:
    omega = cdf.grid.domain
    return project_rows(eval_rows(rows, reference.grid.domain, cdf.values), omega.lo, omega.hi)


def transports_to(quantiles, reference: MonotoneCurve) -> AtmSeries:
    """``Q_i o F_ref`` for every quantile curve, sharing one inversion of ``reference``."""
    cdf = invert(reference)
    rows = np.array([q.values for q in quantiles])
    return AtmSeries(cdf.grid, _pull_back(rows, reference, cdf))


@dataclass(frozen=True, eq=False)
class DistributionSeries:
    grid: Grid
    quantiles: tuple[MonotoneCurve, ...]
    omega: Interval
    barycenter_q: MonotoneCurve
    transports: AtmSeries
    periods: tuple[str, ...] = ()
    mode: TransportMode = TransportMode.BARYCENTRIC

    @property
    def n(self) -> int:
        return self.transports.n


def build_distribution_series(panel: RawPanel, m: int = 1000, padding: float = DEFAULT_PADDING,
                              mode: TransportMode | str = TransportMode.BARYCENTRIC
                              ) -> DistributionSeries:
    """Quantile curves, barycenter and transport maps for every period.

    In ``incremental`` mode map ``i`` carries period ``i - 1`` to period
    ``i``, so there is one map fewer than periods.
    """
    mode = TransportMode(mode)
    if m < 2:
        raise ParamError(f"grid size must be at least 2, got {m}")
    if not padding >= 0:
        raise ParamError(f"padding must be nonnegative, got {padding}")
    omega = data_hull(panel, padding)
    grid = Grid(UNIT, m)
    for p, s in zip(panel.periods, panel.samples):
        if np.ptp(s) == 0:
            warnings.warn(DegenerateData(f"period {p!r} has zero spread"), stacklevel=2)
    qs = tuple(empirical_quantile(s, grid, omega) for s in panel.samples)
    bary = barycenter(qs)
    if mode is TransportMode.BARYCENTRIC:
        series = transports_to(qs, bary)
    else:
        series = AtmSeries.from_maps([transport_to(q, prev) for prev, q in zip(qs[:-1], qs[1:])])
    return DistributionSeries(grid, qs, omega, bary, series, tuple(panel.periods), mode)


# ---------------------------------------------------------------------------
# analysis and forecasting
# ---------------------------------------------------------------------------

@dataclass
class AnalysisReport:
    fit: AlphaFit
    mcleod: dict[int, DiagnosticReport | AtmError]
    split: dict[int, DiagnosticReport | AtmError]
    beta: float

    def non_rejects(self) -> bool:
        """No test at any lag order rejects; failed tests count as non-rejections."""
        reports = [r for r in (*self.mcleod.values(), *self.split.values())
                   if isinstance(r, DiagnosticReport)]
        return not any(r.rejects(self.beta) for r in reports)

    def to_dict(self) -> dict:
        def one(r):
            if isinstance(r, DiagnosticReport):
                d = r.to_dict()
                d["rejects"] = r.rejects(self.beta)
                return d
            return {"error": type(r).__name__, "message": str(r)}
        return {
            "fit": self.fit.to_dict(),
            "beta": self.beta,
            "mcleod": {str(k): one(r) for k, r in self.mcleod.items()},
            "split": {str(k): one(r) for k, r in self.split.items()},
        }

    def summary(self) -> str:
        f = self.fit
        lines = [f"alpha_hat = {f.alpha_hat:.4f} ({f.branch.value} branch, n = {f.n}, "
                 f"avar = {f.avar_hat:.4g})"]
        for name, reps in (("McLeod", self.mcleod), ("split", self.split)):
            for k, r in reps.items():
                if isinstance(r, DiagnosticReport):
                    verdict = "reject" if r.rejects(self.beta) else "do not reject"
                    lines.append(f"{name:>7} K={k:<3} Q={r.statistic:10.4f}  p={r.p_value:.4f}  "
                                 f"{verdict} at {self.beta:g}")
                else:
                    lines.append(f"{name:>7} K={k:<3} unavailable: {r}")
        return "\n".join(lines)


def analyze(ds: DistributionSeries | AtmSeries, Ks=(3, 6, 9), beta: float = 0.05) -> AnalysisReport:
    """Fit ATM(1) and run both portmanteau tests at each lag order."""
    series = ds.transports if isinstance(ds, DistributionSeries) else ds
    if series.n < MIN_ANALYZE_N:
        raise RangeError(f"analysis needs at least {MIN_ANALYZE_N} maps, got {series.n}")
    if not 0.0 < beta < 1.0:
        raise ParamError(f"beta must lie in (0, 1), got {beta}")
    fit = fit_alpha(series)
    mc = mcleod_tests(series, Ks, fit)
    try:
        sp: dict = split_tests(series, Ks, components=False)
    except AtmError as exc:
        sp = {int(k): exc for k in Ks}
    return AnalysisReport(fit, mc, sp, beta)


@dataclass(frozen=True, eq=False)
class ForecastRecord:
    period: str
    index: int
    alpha_hat: float
    predicted_q: MonotoneCurve
    observed_q: MonotoneCurve
    wasserstein_error: float
    baseline_error: float


@dataclass(frozen=True, eq=False)
class ForecastResult:
    records: tuple[ForecastRecord, ...]
    average_error: float
    baseline_average_error: float

    def to_dict(self) -> dict:
        return {
            "average_error": self.average_error,
            "baseline_average_error": self.baseline_average_error,
            "records": [{"period": r.period, "index": r.index, "alpha_hat": r.alpha_hat,
                         "wasserstein_error": r.wasserstein_error,
                         "baseline_error": r.baseline_error} for r in self.records],
        }


def _window_fit(quantiles) -> tuple[float, MonotoneCurve, MonotoneCurve]:
    bary = barycenter(quantiles)
    series = transports_to(quantiles, bary)
    try:
        alpha = fit_alpha(series).alpha_hat
    except DegenerateSeries:
        alpha = 0.0
    return alpha, bary, series[series.n - 1]


def rolling_forecast(ds: DistributionSeries, train_len: int, start: int | None = None,
                     end: int | None = None) -> ForecastResult:
    """One-step forecasts of periods ``start .. end - 1`` from rolling windows.

    The window before target ``t`` is periods ``t - train_len .. t - 1``.
    Each window gets its own barycenter and fit; the forecast quantile is
    ``[alpha_hat . T_last] o Q_bar`` and the baseline forecast is ``Q_bar``.
    """
    if ds.mode is not TransportMode.BARYCENTRIC:
        raise ParamError("forecasting is defined for barycentric transports only")
    n = len(ds.quantiles)
    if train_len < MIN_TRAIN_LEN:
        raise RangeError(f"train_len must be at least {MIN_TRAIN_LEN}, got {train_len}")
    start = train_len if start is None else int(start)
    end = n if end is None else int(end)
    if not train_len <= start < end <= n:
        raise RangeError(f"need {train_len} <= start < end <= {n}, got start={start}, end={end}")
    records = []
    for t in range(start, end):
        alpha, bary, last = _window_fit(ds.quantiles[t - train_len:t])
        pred = compose(alpha_contract(alpha, last), bary)
        obs = ds.quantiles[t]
        label = ds.periods[t] if ds.periods else str(t)
        records.append(ForecastRecord(label, t, alpha, pred, obs,
                                      wasserstein_distance(pred, obs),
                                      wasserstein_distance(bary, obs)))
    avg = float(np.mean([r.wasserstein_error for r in records]))
    base = float(np.mean([r.baseline_error for r in records]))
    return ForecastResult(tuple(records), avg, base)


# ---------------------------------------------------------------------------
# file output
# ---------------------------------------------------------------------------

def atomic_write(path: str | Path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _fmt(v) -> str:
    return repr(float(v))


CURVE_FIELDS = ("object_id", "field", "node", "value")


def _export_rows(oid: str, obj) -> list[tuple]:
    if isinstance(obj, MonotoneCurve):
        return [(oid, "curve", _fmt(x), _fmt(v)) for x, v in zip(obj.grid.nodes, obj.values)]
    if isinstance(obj, DiagnosticReport):
        head = [(oid, "statistic_p", _fmt(obj.statistic), _fmt(obj.p_value))]
        return head + _export_rows(oid, obj.acf)
    if isinstance(obj, AcfVector):
        return [(oid, "rho", str(k), _fmt(r)) for k, r in enumerate(obj.rho, start=1)]
    raise ParamError(f"cannot export object of type {type(obj).__name__}")


def _export_json(oid: str, obj) -> dict:
    if isinstance(obj, MonotoneCurve):
        return {"id": oid, "type": "curve", "nodes": [float(x) for x in obj.grid.nodes],
                "values": [float(v) for v in obj.values]}
    if isinstance(obj, DiagnosticReport):
        d = _export_json(oid, obj.acf)
        d.update(type="report", kind=obj.kind.value, statistic=obj.statistic,
                 p_value=obj.p_value, dof=obj.dof)
        return d
    if isinstance(obj, AcfVector):
        return {"id": oid, "type": "acf", "lags": list(range(1, obj.K + 1)),
                "rho": [float(r) for r in obj.rho]}
    raise ParamError(f"cannot export object of type {type(obj).__name__}")


def render_curves(objects: Mapping[str, object], fmt: str = "csv") -> str:
    """Long-format text for curves, ACF vectors and diagnostic reports.

    CSV rows are ``(object_id, field, node, value)``: a curve gives one
    ``curve`` row per node; a report gives a ``statistic_p`` row holding the
    statistic and p-value, then one ``rho`` row per lag.
    """
    if fmt == "csv":
        lines = [",".join(CURVE_FIELDS)]
        for oid, obj in objects.items():
            lines.extend(",".join(_csv_cell(c) for c in row) for row in _export_rows(str(oid), obj))
        return "\n".join(lines) + "\n"
    if fmt == "json":
        return json.dumps({"objects": [_export_json(str(k), v) for k, v in objects.items()]},
                          indent=1) + "\n"
    raise ParamError(f"unknown format {fmt!r}")


def _csv_cell(s: str) -> str:
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def export_curves(objects: Mapping[str, object], path: str | Path, fmt: str = "csv") -> None:
    atomic_write(path, render_curves(objects, fmt))


def read_curves(path: str | Path) -> dict[str, dict]:
    """Parse an exported file back into ``{id: {field: (nodes, values)}}``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    out: dict[str, dict] = {}
    if text.lstrip().startswith("{"):
        for obj in json.loads(text)["objects"]:
            if obj["type"] == "curve":
                out[obj["id"]] = {"curve": (np.array(obj["nodes"]), np.array(obj["values"]))}
            else:
                out[obj["id"]] = {"rho": (np.array(obj["lags"], dtype=float), np.array(obj["rho"]))}
        return out
    reader = csv.reader(text.splitlines())
    if tuple(next(reader, ())) != CURVE_FIELDS:
        raise SchemaError(f"{path} is not a curve export")
    acc: dict[str, dict[str, tuple[list, list]]] = {}
    for row in reader:
        oid, fld, node, value = row
        xs, vs = acc.setdefault(oid, {}).setdefault(fld, ([], []))
        xs.append(float(node))
        vs.append(float(value))
    return {oid: {f: (np.array(x), np.array(v)) for f, (x, v) in d.items()}
            for oid, d in acc.items()}


# ---------------------------------------------------------------------------
# transport series files
# ---------------------------------------------------------------------------

@dataclass
class SeriesFile:
    series: AtmSeries
    meta: dict = field(default_factory=dict)


def render_series(series: AtmSeries, fmt: str = "json", meta: dict | None = None) -> str:
    dom = series.grid.domain
    if fmt == "json":
        return json.dumps({"domain": [dom.lo, dom.hi], "m": series.grid.m, "meta": meta or {},
                           "maps": series.values.tolist()}) + "\n"
    if fmt == "csv":
        lines = ["map,node,value"]
        nodes = series.grid.nodes
        for i, row in enumerate(series.values):
            lines.extend(f"{i},{_fmt(x)},{_fmt(v)}" for x, v in zip(nodes, row))
        return "\n".join(lines) + "\n"
    raise ParamError(f"unknown format {fmt!r}")


def save_series(series: AtmSeries, path: str | Path, fmt: str = "json",
                meta: dict | None = None) -> None:
    atomic_write(path, render_series(series, fmt, meta))


def load_series(path: str | Path) -> SeriesFile:
    """Read a series written by :func:`save_series` (format sniffed from content)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            d = json.loads(text)
            grid = Grid(Interval(*d["domain"]), int(d["m"]))
            return SeriesFile(AtmSeries(grid, np.array(d["maps"], dtype=float)), d.get("meta", {}))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, AtmError):
                raise
            raise SchemaError(f"{path} is not a series file: {exc}") from exc
    reader = csv.reader(text.splitlines())
    if next(reader, None) != ["map", "node", "value"]:
        raise SchemaError(f"{path} is not a series file")
    rows: dict[int, tuple[list, list]] = {}
    for row in reader:
        try:
            i, x, v = int(row[0]), float(row[1]), float(row[2])
        except (ValueError, IndexError):
            raise ParseError(f"malformed series row {row!r}", reader.line_num) from None
        xs, vs = rows.setdefault(i, ([], []))
        xs.append(x)
        vs.append(v)
    if not rows:
        raise SchemaError(f"{path} holds no maps")
    nodes = np.array(rows[min(rows)][0])
    grid = Grid(Interval(float(nodes[0]), float(nodes[-1])), nodes.size - 1)
    return SeriesFile(AtmSeries(grid, np.array([rows[i][1] for i in sorted(rows)])))
