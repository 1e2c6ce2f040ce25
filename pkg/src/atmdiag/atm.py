"""Simulation of autoregressive transport-map processes.

The innovation ("distortion") maps come from three one-parameter families
that fix both ends of the unit interval and have pointwise mean equal to
the identity:

* ``trig``:  x + sin(Y pi x) / (|Y| pi),  Y uniform on {+-5, ..., +-15}
* ``power``: x + Y (x^2 - x),             Y ~ U[-1, 1]
* ``poly``:  x + Y x^2 (1 - x)^2,         Y ~ U[-1, 1]

On a domain other than [0, 1] the families are transported affinely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ParamError
from .grid_transport import (
    UNIT,
    AtmSeries,
    Grid,
    Interval,
    MonotoneCurve,
    contract_rows,
    project_rows,
)

DEFAULT_BURN_IN = 200


class FamilyKind(str, Enum):
    TRIG = "trig"
    POWER = "power"
    POLY = "poly"


@dataclass(frozen=True)
class InnovationFamily:
    kind: FamilyKind = FamilyKind.TRIG
    trig_support: tuple[int, int] = (5, 15)

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))
        lo, hi = self.trig_support
        if not 1 <= lo <= hi:
            raise ParamError(f"bad trig support {self.trig_support}")

    def draw(self, rng: np.random.Generator, size: int | None = None):
        """Draw the random family parameter ``Y``."""
        if self.kind is FamilyKind.TRIG:
            lo, hi = self.trig_support
            mag = rng.integers(lo, hi + 1, size=size)
            sign = np.where(rng.integers(0, 2, size=size) == 0, -1, 1)
            return mag * sign
        return rng.uniform(-1.0, 1.0, size=size)

    def node_values(self, y, grid: Grid) -> np.ndarray:
        """Node values of the innovation map(s) with parameter(s) ``y``.

        ``y`` may be a scalar or a 1-D array; the result has one row per value.
        """
        dom = grid.domain
        u = (np.asarray(grid.nodes) - dom.lo) / dom.width
        yy = np.atleast_1d(np.asarray(y, dtype=float))[:, None]
        if self.kind is FamilyKind.TRIG:
            e = u + np.sin(yy * np.pi * u) / (np.abs(yy) * np.pi)
        elif self.kind is FamilyKind.POWER:
            e = u + yy * (u * u - u)
        else:
            e = u + yy * u * u * (1.0 - u) ** 2
        return project_rows(dom.lo + dom.width * e, dom.lo, dom.hi)


TRIG = InnovationFamily(FamilyKind.TRIG)
POWER = InnovationFamily(FamilyKind.POWER)
POLY = InnovationFamily(FamilyKind.POLY)


def sample_innovation(family: InnovationFamily, rng: np.random.Generator,
                      grid: Grid | None = None) -> MonotoneCurve:
    grid = grid or Grid()
    return MonotoneCurve(grid, family.node_values(family.draw(rng), grid)[0], grid.domain)


@dataclass(frozen=True)
class AtmConfig:
    coefficients: tuple[float, ...]
    n: int
    family: InnovationFamily = field(default_factory=InnovationFamily)
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 0
    m: int = 1000
    domain: Interval = UNIT

    def __post_init__(self):
        coefs = tuple(float(a) for a in np.atleast_1d(self.coefficients))
        object.__setattr__(self, "coefficients", coefs)
        if not coefs or any(not abs(a) < 1 for a in coefs):
            raise ParamError(f"coefficients must lie in (-1, 1), got {coefs}")
        if self.burn_in < 0 or self.n < 2:
            raise ParamError("need burn_in >= 0 and n >= 2")

    @property
    def order(self) -> int:
        return len(self.coefficients)

    @property
    def grid(self) -> Grid:
        return Grid(self.domain, self.m)


def simulate_with_innovations(config: AtmConfig, rng: np.random.Generator | None = None):
    """Run the recursion and return ``(series, innovations)``.

    ``innovations[i]`` holds the node values of the distortion map that
    produced ``series[i]``.  The recursion starts from identity maps and
    discards the first ``burn_in`` steps.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    grid = config.grid
    dom = grid.domain
    x = np.asarray(grid.nodes)
    p = config.order
    total = config.burn_in + config.n
    eps = config.family.node_values(config.family.draw(rng, size=total), grid)

    # history[k] is T_{i-1-k}; lag terms compose innermost-first from the oldest
    history = [x.copy() for _ in range(p)]
    out = np.empty((config.n, x.size))
    for step in range(total):
        cur = x
        for k in range(p - 1, -1, -1):
            contracted = contract_rows(config.coefficients[k], history[k], dom)
            cur = np.interp(cur, x, contracted)
        new = project_rows(np.interp(cur, x, eps[step]), dom.lo, dom.hi)
        history = [new] + history[:-1]
        if step >= config.burn_in:
            out[step - config.burn_in] = new
    return AtmSeries(grid, out), eps[config.burn_in:]


def simulate(config: AtmConfig, rng: np.random.Generator | None = None) -> AtmSeries:
    return simulate_with_innovations(config, rng)[0]
