"""Least-squares estimation of the ATM(1) contraction parameter.

Both branch losses are quadratics in ``alpha``, so each branch minimizer is
a ratio of integrated cross products.  The estimate is the branch minimizer
with the smaller loss.  The minimizers are clamped into the branch's sign
domain, with the open endpoint pulled in by ``CLAMP_EPS``, so the fitted
value can always be used in a contraction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateSeries, ParamError, RangeError
from .grid_transport import AtmSeries, inner_rows

CLAMP_EPS = 1e-6
DEGENERACY_GUARD = 1e-10


class Branch(str, Enum):
    PLUS = "plus"
    MINUS = "minus"


@dataclass(frozen=True)
class AlphaFit:
    alpha_hat: float
    branch: Branch
    loss_plus: float
    loss_minus: float
    xi_hat: float
    xi_tilde_hat: float
    avar_hat: float
    n: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branch"] = self.branch.value
        return d


def _deviations(series: AtmSeries) -> np.ndarray:
    return series.values - series.grid.nodes


def _reflections(series: AtmSeries) -> np.ndarray:
    """Rows of ``x - T_i^{-1}(x)``."""
    return series.grid.nodes - series.inverses


def _check_alpha(alpha: float) -> None:
    if not -1.0 <= alpha <= 1.0:
        raise ParamError(f"alpha must lie in [-1, 1], got {alpha}")


def _loss(dev: np.ndarray, reg: np.ndarray, alpha: float, series: AtmSeries) -> float:
    r = dev[1:] - alpha * reg[:-1]
    return float(inner_rows(r, r, series.grid).sum())


def loss_plus(alpha: float, series: AtmSeries) -> float:
    _check_alpha(alpha)
    dev = _deviations(series)
    return _loss(dev, dev, alpha, series)


def loss_minus(alpha: float, series: AtmSeries) -> float:
    _check_alpha(alpha)
    return _loss(_deviations(series), _reflections(series), alpha, series)


def _ratio(dev: np.ndarray, reg: np.ndarray, series: AtmSeries) -> float:
    num = inner_rows(dev[1:], reg[:-1], series.grid).sum()
    den = inner_rows(reg[:-1], reg[:-1], series.grid).sum()
    if den < DEGENERACY_GUARD:
        return 0.0
    return float(num / den)


def xi_hat(series: AtmSeries) -> float:
    dev = _deviations(series)
    return float(inner_rows(dev, dev, series.grid).mean())


def xi_tilde_hat(series: AtmSeries) -> float:
    ref = _reflections(series)
    return float(inner_rows(ref, ref, series.grid).mean())


def m_hat_all(alpha: float, series: AtmSeries, guard: bool = True) -> np.ndarray:
    """Martingale summands ``m_i(alpha)`` for ``i = 0, ..., n - 2``.

    Entry ``i`` pairs the one-step error ``T_{i+1} - [alpha . T_i]`` with the
    regressor built from ``T_i``.  Scales use the whole-series averages.
    """
    _check_alpha(alpha)
    dev = _deviations(series)
    reg = dev if alpha >= 0 else _reflections(series)
    scale = float(inner_rows(reg, reg, series.grid).mean())
    if guard and scale < DEGENERACY_GUARD:
        raise DegenerateSeries(f"series is numerically static (scale {scale:.3g})")
    # [alpha . T_i](x) - x equals alpha * reg_i node-wise for a valid map
    num = inner_rows(dev[1:] - alpha * reg[:-1], reg[:-1], series.grid)
    return num / scale if scale > 0 else np.zeros_like(num)


def m_hat(alpha: float, series: AtmSeries, i: int, guard: bool = True) -> float:
    """Single summand; ``i`` is the 0-based index of the lagged map."""
    if not 0 <= i <= series.n - 2:
        raise RangeError(f"summand index {i} outside 0..{series.n - 2}")
    return float(m_hat_all(alpha, series, guard)[i])


def fit_alpha(series: AtmSeries) -> AlphaFit:
    """Fit ATM(1) by branch-wise least squares and pick the better branch."""
    if series.n < 2:
        raise RangeError("need at least two maps")
    dev = _deviations(series)
    xi = float(inner_rows(dev, dev, series.grid).mean())
    if xi < DEGENERACY_GUARD:
        raise DegenerateSeries(f"mean squared deviation from identity is {xi:.3g}")
    ref = _reflections(series)
    xi_t = float(inner_rows(ref, ref, series.grid).mean())

    a_plus = min(max(_ratio(dev, dev, series), 0.0), 1.0 - CLAMP_EPS)
    a_minus = max(min(_ratio(dev, ref, series), 0.0), -1.0 + CLAMP_EPS)
    l_plus = _loss(dev, dev, a_plus, series)
    l_minus = _loss(dev, ref, a_minus, series)
    if l_plus <= l_minus:
        branch, alpha = Branch.PLUS, a_plus
    else:
        if xi_t < DEGENERACY_GUARD:
            raise DegenerateSeries(f"mean squared inverse deviation is {xi_t:.3g}")
        branch, alpha = Branch.MINUS, a_minus
    avar = float(np.mean(m_hat_all(alpha, series) ** 2))
    return AlphaFit(alpha, branch, l_plus, l_minus, xi, xi_t, avar, series.n)
