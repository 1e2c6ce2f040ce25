"""Piecewise-linear monotone maps on a uniform grid.

A transport map ``T: [lo, hi] -> [lo, hi]`` (nondecreasing, endpoints fixed)
and a quantile function ``F^{-1}: [0, 1] -> [a, b]`` are both stored as node
values on a uniform grid and evaluated by linear interpolation.

The module has two layers.  The per-curve functions (``evaluate``,
``invert``, ``compose``, ...) validate their inputs and return
``MonotoneCurve`` objects.  The ``*_rows`` kernels operate on stacked node
arrays of shape ``(n, m + 1)`` and are what the estimation and diagnostic
code calls in its inner loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, EmptyInput, GridMismatch, ParamError, RangeError

DOMAIN_CLAMP = 1e-12
RANGE_SLACK = 1e-9
DEFAULT_M = 1000


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise ParamError(f"invalid interval [{self.lo}, {self.hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, other: "Interval", slack: float = 0.0) -> bool:
        return other.lo >= self.lo - slack and other.hi <= self.hi + slack


UNIT = Interval(0.0, 1.0)


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``m`` cells (``m + 1`` nodes) over ``domain``."""

    domain: Interval = UNIT
    m: int = DEFAULT_M

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ParamError(f"grid needs an integer m >= 2, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def step(self) -> float:
        return self.domain.width / self.m

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.domain.lo + np.arange(self.m + 1) * self.step
        x[-1] = self.domain.hi
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid-rule quadrature weights."""
        w = np.full(self.m + 1, self.step)
        w[0] = w[-1] = 0.5 * self.step
        w.flags.writeable = False
        return w


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class MonotoneCurve:
    """Nondecreasing piecewise-linear curve sampled at the nodes of ``grid``.

    Values must lie in ``range``.  When ``pinned`` is set (the default, and
    the only valid state for transport maps) the first and last node values
    must equal ``range.lo`` and ``range.hi``.  Empirical quantile functions
    are built unpinned because sample extremes need not reach the support
    endpoints.
    """

    grid: Grid
    values: np.ndarray
    range: Interval = None  # type: ignore[assignment]
    pinned: bool = True

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.grid.m + 1,):
            raise GridMismatch(f"expected {self.grid.m + 1} node values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ParamError("curve values must be finite")
        rng = self.range if self.range is not None else self.grid.domain
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "range", rng)
        if np.any(np.diff(v) < 0):
            raise ParamError("curve values are not nondecreasing")
        if v[0] < rng.lo or v[-1] > rng.hi:
            raise ParamError("curve values leave the declared range")
        if self.pinned and (v[0] != rng.lo or v[-1] != rng.hi):
            raise ParamError("pinned curve does not hit the range endpoints")

    @classmethod
    def from_values(cls, grid: Grid, values, range: Interval | None = None,
                    pinned: bool = True) -> "MonotoneCurve":
        """Build a curve after monotone projection (and pinning if requested)."""
        rng = range if range is not None else grid.domain
        v = np.maximum.accumulate(np.asarray(values, dtype=float))
        np.clip(v, rng.lo, rng.hi, out=v)
        if pinned:
            v[0], v[-1] = rng.lo, rng.hi
        return cls(grid, v, rng, pinned)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray],
                      range: Interval | None = None, pinned: bool = True) -> "MonotoneCurve":
        return cls.from_values(grid, fn(np.asarray(grid.nodes)), range, pinned)

    @property
    def is_transport(self) -> bool:
        return self.pinned and self.range == self.grid.domain

    def __call__(self, x):
        return evaluate(self, x)


def identity(grid: Grid) -> MonotoneCurve:
    return MonotoneCurve(grid, grid.nodes, grid.domain)


@dataclass(frozen=True, eq=False)
class AtmSeries:
    """Ordered transport maps ``T_1, ..., T_n`` stacked as an ``(n, m + 1)`` array."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[1] != self.grid.m + 1:
            raise GridMismatch(f"series array has shape {v.shape}, grid has {self.grid.m + 1} nodes")
        if v.shape[0] < 2:
            raise RangeError("a series needs at least two maps")
        dom = self.grid.domain
        if np.any(np.diff(v, axis=1) < 0) or np.any(v[:, 0] != dom.lo) or np.any(v[:, -1] != dom.hi):
            raise ParamError("series rows must be pinned nondecreasing transport maps")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_maps(cls, maps: Sequence[MonotoneCurve]) -> "AtmSeries":
        maps = list(maps)
        if not maps:
            raise EmptyInput("no maps given")
        grid = _same_grid(*maps)
        for t in maps:
            _require_transport(t)
        return cls(grid, np.stack([t.values for t in maps]))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i):
        if isinstance(i, slice):
            return AtmSeries(self.grid, self.values[i])
        return MonotoneCurve(self.grid, self.values[i], self.grid.domain)

    @property
    def maps(self) -> list[MonotoneCurve]:
        return [self[i] for i in range(self.n)]

    @cached_property
    def inverses(self) -> np.ndarray:
        """Node values of every generalized inverse, computed once."""
        inv = invert_rows(self.values, self.grid.domain, self.grid.domain)
        inv.flags.writeable = False
        return inv


# ---------------------------------------------------------------------------
# Row kernels.  ``values`` is (n, m + 1); every function returns a new array.
# ---------------------------------------------------------------------------

def nodes_on(interval: Interval, m: int) -> np.ndarray:
    x = interval.lo + np.arange(m + 1) * (interval.width / m)
    x[-1] = interval.hi
    return x


def project_rows(values: np.ndarray, lo: float, hi: float, pin: bool = True) -> np.ndarray:
    """Running maximum, clip to ``[lo, hi]``, then pin the endpoints."""
    out = np.maximum.accumulate(values, axis=-1)
    np.clip(out, lo, hi, out=out)
    if pin:
        out[..., 0] = lo
        out[..., -1] = hi
    return out


def eval_rows(values: np.ndarray, domain: Interval, y: np.ndarray) -> np.ndarray:
    """Evaluate row ``r`` of ``values`` at the points ``y[r]``.

    Points outside the domain are clamped; callers check tolerances first.
    A row loop over ``np.interp`` beats fancy indexing at these sizes.
    """
    values = np.asarray(values, dtype=float)
    y = np.asarray(y, dtype=float)
    x = nodes_on(domain, values.shape[-1] - 1)
    if values.ndim == 1:
        return np.interp(y, x, values)
    y = np.broadcast_to(y, values.shape[:1] + y.shape[-1:])
    out = np.empty(y.shape)
    for r in range(values.shape[0]):
        out[r] = np.interp(y[r], x, values[r])
    return out


def slope_rows(values: np.ndarray, domain: Interval, y: np.ndarray) -> np.ndarray:
    """Derivative of the piecewise-linear interpolant at ``y`` (segment slope).

    At a node the slope of the segment to its right is used, except at the
    last node.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    y = np.asarray(y, dtype=float).reshape(values.shape[0], -1)
    m = values.shape[-1] - 1
    s = (y - domain.lo) * (m / domain.width)
    idx = np.clip(s.astype(np.intp), 0, m - 1)
    left = np.take_along_axis(values, idx, axis=-1)
    right = np.take_along_axis(values, idx + 1, axis=-1)
    return (right - left) * (m / domain.width)


def _invert_row(row: np.ndarray, y: np.ndarray, x: np.ndarray, step: float) -> np.ndarray:
    m = row.shape[0] - 1
    j = np.searchsorted(row, y, side="left")
    below = j == 0
    np.clip(j, 1, m, out=j)
    v0 = row[j - 1]
    dv = row[j] - v0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dv > 0, (y - v0) / dv, 1.0)
    np.clip(t, 0.0, 1.0, out=t)
    res = x[j - 1] + t * step
    res[below] = x[0]
    return res


def invert_rows(values: np.ndarray, domain: Interval, codomain: Interval) -> np.ndarray:
    """Generalized inverse ``inf{x : T(x) >= y}`` sampled on the ``codomain`` grid.

    Within a segment with ``T(x_{j-1}) < y <= T(x_j)`` the inverse is the
    linear solve on that segment, so flat stretches resolve to their left
    end.  The result is projected and pinned to ``domain``.
    """
    values = np.asarray(values, dtype=float)
    squeeze = values.ndim == 1
    values = np.atleast_2d(values)
    m = values.shape[-1] - 1
    y = nodes_on(codomain, m)
    x = nodes_on(domain, m)
    step = domain.width / m
    strict = np.all(np.diff(values, axis=1) > 0, axis=1)
    out = np.empty_like(values)
    for r in range(values.shape[0]):
        if strict[r]:
            # no flat stretches: plain interpolation is the same linear solve
            out[r] = np.interp(y, values[r], x)
        else:
            out[r] = _invert_row(values[r], y, x, step)
    out = project_rows(out, domain.lo, domain.hi)
    return out[0] if squeeze else out


def contract_rows(alpha: float, values: np.ndarray, domain: Interval,
                  inverse: np.ndarray | None = None) -> np.ndarray:
    """Apply the alpha-contraction to each row of transport maps.

    ``inverse`` may carry precomputed inverses for ``alpha < 0``.
    """
    values = np.asarray(values, dtype=float)
    x = nodes_on(domain, values.shape[-1] - 1)
    if alpha == 1:
        # x + (T - x) is not bit-exact
        out = values.copy()
    elif alpha > 0:
        out = x + alpha * (values - x)
    elif alpha == 0:
        out = np.broadcast_to(x, values.shape).copy()
    else:
        if inverse is None:
            inverse = invert_rows(values, domain, domain)
        out = x + alpha * (x - inverse)
    return project_rows(out, domain.lo, domain.hi)


def compose_rows(outer: np.ndarray, inner: np.ndarray, domain: Interval) -> np.ndarray:
    """Row-wise ``outer[r](inner[r](x_j))`` for transport maps on ``domain``."""
    return project_rows(eval_rows(outer, domain, inner), domain.lo, domain.hi)


def derivative_rows(values: np.ndarray, domain: Interval) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    d = np.gradient(values, domain.width / (values.shape[-1] - 1), axis=-1, edge_order=1)
    return np.maximum(d, 0.0)


def inner_rows(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    """Trapezoid integrals of ``a * b`` along the last axis."""
    return (np.asarray(a) * np.asarray(b)) @ grid.weights


# ---------------------------------------------------------------------------
# Curve-level operations.
# ---------------------------------------------------------------------------

def _same_grid(*curves: MonotoneCurve) -> Grid:
    g = curves[0].grid
    for c in curves[1:]:
        if c.grid != g:
            raise GridMismatch("curves are defined on different grids")
    return g


def _require_transport(t: MonotoneCurve) -> None:
    if t.range != t.grid.domain:
        raise GridMismatch("expected a transport map (domain == range)")


def evaluate(curve: MonotoneCurve, x):
    """Linear interpolation of ``curve`` at ``x`` (scalar or array)."""
    dom = curve.grid.domain
    xa = np.asarray(x, dtype=float)
    if np.any(xa < dom.lo - DOMAIN_CLAMP) or np.any(xa > dom.hi + DOMAIN_CLAMP):
        raise DomainError(f"point outside [{dom.lo}, {dom.hi}]")
    out = np.interp(np.clip(xa, dom.lo, dom.hi), curve.grid.nodes, curve.values)
    return float(out) if out.ndim == 0 else out


def invert(curve: MonotoneCurve) -> MonotoneCurve:
    """Generalized inverse; domain and range swap roles."""
    grid = Grid(curve.range, curve.grid.m)
    vals = invert_rows(curve.values, curve.grid.domain, curve.range)
    return MonotoneCurve(grid, vals, curve.grid.domain)


def compose(f: MonotoneCurve, g: MonotoneCurve) -> MonotoneCurve:
    """``(f o g)(x) = f(g(x))`` sampled on ``g``'s grid."""
    fd = f.grid.domain
    if not fd.contains(g.range, RANGE_SLACK):
        raise DomainError("range of inner map is not inside the outer map's domain")
    inner = np.clip(g.values, fd.lo, fd.hi)
    vals = np.interp(inner, f.grid.nodes, f.values)
    return MonotoneCurve.from_values(g.grid, vals, f.range, pinned=f.pinned and g.pinned)


def alpha_contract(alpha: float, t: MonotoneCurve) -> MonotoneCurve:
    """The alpha-contraction of a transport map, ``alpha`` in [-1, 1]."""
    if not -1.0 <= alpha <= 1.0:
        raise ParamError(f"alpha must lie in [-1, 1], got {alpha}")
    _require_transport(t)
    vals = contract_rows(float(alpha), t.values, t.grid.domain)
    return MonotoneCurve(t.grid, vals, t.range)


def centered_inner(f: MonotoneCurve, g: MonotoneCurve) -> float:
    """Trapezoid value of the integral of ``(f(x) - x)(g(x) - x)``."""
    grid = _same_grid(f, g)
    x = grid.nodes
    return float(inner_rows(f.values - x, g.values - x, grid))


def d1_distance(f: MonotoneCurve, g: MonotoneCurve) -> float:
    grid = _same_grid(f, g)
    return float(np.abs(f.values - g.values) @ grid.weights)


def wasserstein_distance(q1: MonotoneCurve, q2: MonotoneCurve) -> float:
    """2-Wasserstein distance between two measures given by quantile curves."""
    grid = _same_grid(q1, q2)
    d = q1.values - q2.values
    return math.sqrt(max(float((d * d) @ grid.weights), 0.0))


def barycenter(quantiles: Sequence[MonotoneCurve]) -> MonotoneCurve:
    """Wasserstein barycenter of 1-D measures: the node-wise mean quantile."""
    quantiles = list(quantiles)
    if not quantiles:
        raise EmptyInput("barycenter of an empty collection")
    grid = _same_grid(*quantiles)
    vals = np.mean([q.values for q in quantiles], axis=0)
    rng = Interval(min(q.range.lo for q in quantiles), max(q.range.hi for q in quantiles))
    pinned = all(q.pinned for q in quantiles) and all(q.range == rng for q in quantiles)
    return MonotoneCurve.from_values(grid, vals, rng, pinned=pinned)


def derivative(curve: MonotoneCurve) -> np.ndarray:
    """Central differences inside, one-sided at the ends, floored at zero."""
    return derivative_rows(curve.values, curve.grid.domain)
