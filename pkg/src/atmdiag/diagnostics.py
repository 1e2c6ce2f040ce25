"""Residual maps, residual autocorrelations and the two portmanteau tests.

Indexing is 0-based throughout.  Residual ``j`` (``1 <= j < n``) is
``T_j o [alpha . T_{j-1}]^{-1}`` and is paired with the martingale summand
that involves the same one-step error, ``m_hat_all(...)[j - 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .atm import AtmConfig, InnovationFamily, simulate
from .chisquare import chi_square_sf
from .errors import AtmError, DegenerateSeries, ParamError, RangeError, SingularCovariance
from .estimation import AlphaFit, fit_alpha, m_hat_all
from .grid_transport import (
    AtmSeries,
    Grid,
    MonotoneCurve,
    compose_rows,
    contract_rows,
    derivative_rows,
    eval_rows,
    inner_rows,
    invert_rows,
    slope_rows,
)
from .streams import child_rng, run_replications
from .table import Cell, ExperimentTable

ACF_GUARD = 1e-12
DENOM_FLOOR = 1e-6
MAX_CONDITION = 1e12
MIN_SPLIT = 8


class TestKind(str, Enum):
    MCLEOD = "mcleod"
    SPLIT = "split"


@dataclass(frozen=True, eq=False)
class ResidualSet:
    """Residual maps for series indices ``start .. stop - 1``."""

    grid: Grid
    values: np.ndarray
    start: int
    stop: int
    alpha: float
    split: tuple[int, int] | None = None
    # node values of [alpha . T_{j-1}]^{-1}, kept for the derivative terms
    preimages: np.ndarray | None = None

    @property
    def residuals(self) -> list[MonotoneCurve]:
        return [MonotoneCurve(self.grid, v, self.grid.domain) for v in self.values]

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AcfVector:
    K: int
    rho: np.ndarray
    n_eff: int


@dataclass(frozen=True)
class CovarianceEstimate:
    K: int
    sigma1_sq: float
    sigma2_4: float
    M1_hat: np.ndarray | None
    M2_hat: np.ndarray | None
    avar_hat: float | None
    matrix: np.ndarray


@dataclass(frozen=True)
class DiagnosticReport:
    kind: TestKind
    statistic: float
    dof: int
    p_value: float
    acf: AcfVector
    cov: CovarianceEstimate
    alpha: float
    f_n: int
    l_n: int

    def rejects(self, beta: float) -> bool:
        return self.p_value < beta

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "K": self.dof,
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "rho": [float(r) for r in self.acf.rho],
            "f_n": self.f_n,
            "l_n": self.l_n,
            "alpha": self.alpha,
            "sigma1_sq": self.cov.sigma1_sq,
            "sigma2_4": self.cov.sigma2_4,
        }


# ---------------------------------------------------------------------------
# residuals and their autocorrelations
# ---------------------------------------------------------------------------

def _contracted(series: AtmSeries, alpha: float, rows: slice) -> np.ndarray:
    dom = series.grid.domain
    inv = series.inverses[rows] if alpha < 0 else None
    return contract_rows(alpha, series.values[rows], dom, inverse=inv)


def residuals(series: AtmSeries, alpha: float, f_n: int | None = None,
              l_n: int | None = None) -> ResidualSet:
    """Residual maps at ``alpha`` over the last ``l_n`` indices (all by default).

    The first index has no predecessor, so a window reaching it starts one
    later.  ``f_n`` is recorded but the caller supplies the matching alpha.
    """
    n = series.n
    if not -1.0 < alpha < 1.0:
        raise ParamError(f"alpha must lie in (-1, 1), got {alpha}")
    l_n = n if l_n is None else int(l_n)
    f_n = n if f_n is None else int(f_n)
    if not 2 <= l_n <= n or not 1 <= f_n <= n:
        raise RangeError(f"split (f_n={f_n}, l_n={l_n}) inconsistent with n={n}")
    start = max(n - l_n, 1)
    dom = series.grid.domain
    pre = invert_rows(_contracted(series, alpha, slice(start - 1, n - 1)), dom, dom)
    vals = compose_rows(series.values[start:n], pre, dom)
    split = None if (f_n, l_n) == (n, n) else (f_n, l_n)
    return ResidualSet(series.grid, vals, start, n, float(alpha), split, pre)


def sample_acf(res: ResidualSet, K: int) -> AcfVector:
    L = len(res)
    if not 1 <= K < L:
        raise RangeError(f"need 1 <= K < {L} residuals, got K={K}")
    dev = res.values - res.grid.nodes
    denom = float(inner_rows(dev, dev, res.grid).sum())
    if denom < ACF_GUARD:
        raise DegenerateSeries("residual maps are numerically the identity")
    rho = np.array([inner_rows(dev[:-k], dev[k:], res.grid).sum() / denom
                    for k in range(1, K + 1)])
    return AcfVector(K, rho, L)


# ---------------------------------------------------------------------------
# derivative of the residual map in alpha
# ---------------------------------------------------------------------------

def _derivative_at(values: np.ndarray, grid: Grid, z: np.ndarray, method: str) -> np.ndarray:
    if method == "slope":
        return slope_rows(values, grid.domain, z)
    return eval_rows(derivative_rows(values, grid.domain), grid.domain, z)


def g_rows(series: AtmSeries, alpha: float, start: int, stop: int,
           preimages: np.ndarray | None = None, method: str = "slope") -> np.ndarray:
    """Node values of ``dG_j/dalpha`` for ``j = start .. stop - 1``.

    ``G_j(alpha, x) = T_j([alpha . T_{j-1}]^{-1}(x))``.  With
    ``z = [alpha . T_{j-1}]^{-1}(x)`` the implicit-function derivative is
    ``T_j'(z) (z - T_{j-1}(z)) / (alpha (T_{j-1}'(z) - 1) + 1)`` for
    ``alpha >= 0`` and ``T_j'(z) (P(z) - z) / (alpha (1 - P'(z)) + 1)`` with
    ``P = T_{j-1}^{-1}`` otherwise.  Denominators are floored at 1e-6.

    ``method="slope"`` differentiates the piecewise-linear interpolant
    exactly (segment slopes); ``"central"`` interpolates central
    differences taken at the nodes.
    """
    if start < 1 or stop > series.n or start >= stop:
        raise RangeError(f"derivative rows {start}..{stop - 1} need a predecessor map")
    grid = series.grid
    dom = grid.domain
    prev_rows = slice(start - 1, stop - 1)
    if preimages is None:
        preimages = invert_rows(_contracted(series, alpha, prev_rows), dom, dom)
    z = preimages
    if alpha >= 0:
        prev = series.values[prev_rows]
        shift = z - eval_rows(prev, dom, z)
        den = alpha * (_derivative_at(prev, grid, z, method) - 1.0) + 1.0
    else:
        inv = series.inverses[prev_rows]
        shift = eval_rows(inv, dom, z) - z
        den = alpha * (1.0 - _derivative_at(inv, grid, z, method)) + 1.0
    slope = _derivative_at(series.values[start:stop], grid, z, method)
    return slope * shift / np.maximum(den, DENOM_FLOOR)


def g_derivative(series: AtmSeries, alpha: float, i: int, method: str = "slope") -> np.ndarray:
    """Derivative in alpha of residual ``i`` (0-based, ``i >= 1``) at the nodes."""
    if not -1.0 < alpha < 1.0:
        raise ParamError(f"alpha must lie in (-1, 1), got {alpha}")
    return g_rows(series, alpha, i, i + 1, method=method)[0]


def residual_map(series: AtmSeries, alpha: float, i: int) -> np.ndarray:
    """Node values of ``G_i(alpha, .)``; the oracle side of the derivative check."""
    if not 1 <= i < series.n:
        raise RangeError(f"residual index {i} outside 1..{series.n - 1}")
    dom = series.grid.domain
    pre = invert_rows(_contracted(series, alpha, slice(i - 1, i)), dom, dom)
    return compose_rows(series.values[i:i + 1], pre, dom)[0]


# ---------------------------------------------------------------------------
# covariance of the residual autocorrelations
# ---------------------------------------------------------------------------

def assemble_covariance(sigma1_sq: float, sigma2_4: float, M1: np.ndarray, M2: np.ndarray,
                        avar: float) -> np.ndarray:
    M1 = np.asarray(M1, dtype=float)
    M2 = np.asarray(M2, dtype=float)
    K = M1.size
    inner = (sigma2_4 * np.eye(K) + np.outer(M1, M2) + np.outer(M2, M1)
             + avar * np.outer(M1, M1))
    return inner / sigma1_sq ** 2


def _scales(dev: np.ndarray, grid: Grid) -> tuple[float, float]:
    L = dev.shape[0]
    s1 = float(inner_rows(dev, dev, grid).sum() / L)
    lag1 = inner_rows(dev[:-1], dev[1:], grid)
    # mean of squares: the square of the mean vanishes under the null
    s2 = float((lag1 ** 2).sum() / L)
    return s1, s2


def estimation_terms(series: AtmSeries, res: ResidualSet, K: int,
                     method: str = "slope") -> tuple[np.ndarray, np.ndarray, float]:
    """Plug-in ``(M1, M2, mean m_hat^2)`` at the residual set's alpha."""
    L = len(res)
    if not 1 <= K < L:
        raise RangeError(f"need 1 <= K < {L} residuals, got K={K}")
    grid = series.grid
    dev = res.values - grid.nodes
    g = g_rows(series, res.alpha, res.start, res.stop, res.preimages, method)
    m_all = m_hat_all(res.alpha, series)
    u = m_all[res.start - 1:res.stop - 1]
    M1 = np.empty(K)
    M2 = np.empty(K)
    for k in range(1, K + 1):
        M1[k - 1] = inner_rows(dev[:-k], g[k:], grid).mean()
        M2[k - 1] = (inner_rows(dev[:-k], dev[k:], grid) * u[k:]).mean()
    return M1, M2, float(np.mean(m_all ** 2))


def covariance_mcleod(series: AtmSeries, res: ResidualSet, fit: AlphaFit | None, K: int,
                      method: str = "slope") -> CovarianceEstimate:
    """Plug-in covariance of ``sqrt(n) * rho_hat`` corrected for estimating alpha.

    ``fit`` is accepted for symmetry with the test functions; every term is
    evaluated at ``res.alpha`` so that a split residual set gets the
    matching plug-ins.
    """
    if fit is not None and fit.alpha_hat != res.alpha:
        raise ParamError("fit and residual set use different alpha values")
    M1, M2, avar = estimation_terms(series, res, K, method)
    s1, s2 = _scales(res.values - series.grid.nodes, series.grid)
    mat = assemble_covariance(s1, s2, M1, M2, avar)
    return CovarianceEstimate(K, s1, s2, M1, M2, avar, mat)


def _quadratic_form(mat: np.ndarray, rho: np.ndarray) -> float:
    if not np.all(np.isfinite(mat)):
        raise SingularCovariance("covariance estimate is not finite")
    cond = np.linalg.cond(mat)
    if not cond < MAX_CONDITION:
        raise SingularCovariance(f"covariance condition number {cond:.3g}")
    # an indefinite estimate can give a negative quadratic form
    low = float(np.linalg.eigvalsh(mat)[0])
    if not low > 0:
        raise SingularCovariance(f"covariance estimate is not positive definite (eigenvalue {low:.3g})")
    return float(rho @ np.linalg.solve(mat, rho))


def _report(kind, stat, acf, cov, alpha, f_n, l_n) -> DiagnosticReport:
    p = chi_square_sf(stat, acf.K)
    return DiagnosticReport(kind, stat, acf.K, p, acf, cov, alpha, f_n, l_n)


def _slice_acf(acf: AcfVector, K: int) -> AcfVector:
    return AcfVector(K, acf.rho[:K].copy(), acf.n_eff)


def _slice_cov(cov: CovarianceEstimate, K: int) -> CovarianceEstimate:
    cut = (lambda v: None if v is None else v[:K].copy())
    return CovarianceEstimate(K, cov.sigma1_sq, cov.sigma2_4, cut(cov.M1_hat), cut(cov.M2_hat),
                              cov.avar_hat, cov.matrix[:K, :K].copy())


def _lags(Ks) -> list[int]:
    Ks = sorted({int(k) for k in np.atleast_1d(Ks)})
    if not Ks or Ks[0] < 1:
        raise RangeError(f"lag orders must be positive, got {Ks}")
    return Ks


def mcleod_tests(series: AtmSeries, Ks, fit: AlphaFit | None = None,
                 method: str = "slope") -> dict[int, DiagnosticReport | AtmError]:
    """McLeod-type tests at several lag orders from one pass over the residuals.

    The statistic at order K uses the leading K entries of the ACF and the
    leading K x K block of the covariance.  A lag order whose covariance is
    numerically singular maps to the exception instead of a report.
    """
    Ks = _lags(Ks)
    if fit is None:
        fit = fit_alpha(series)
    res = residuals(series, fit.alpha_hat)
    acf = sample_acf(res, Ks[-1])
    cov = covariance_mcleod(series, res, fit, Ks[-1], method)
    out: dict[int, DiagnosticReport | AtmError] = {}
    for K in Ks:
        a, c = _slice_acf(acf, K), _slice_cov(cov, K)
        try:
            stat = series.n * _quadratic_form(c.matrix, a.rho)
        except SingularCovariance as exc:
            out[K] = exc
            continue
        out[K] = _report(TestKind.MCLEOD, stat, a, c, fit.alpha_hat, series.n, series.n)
    return out


def mcleod_test(series: AtmSeries, fit: AlphaFit | None = None, K: int = 3,
                method: str = "slope") -> DiagnosticReport:
    """McLeod-type portmanteau test ``n rho' Sigma^{-1} rho`` against chi-square(K)."""
    out = mcleod_tests(series, [K], fit, method)[K]
    if isinstance(out, Exception):
        raise out
    return out


def split_tests(series: AtmSeries, Ks, f_n: int | None = None, l_n: int | None = None,
                components: bool = True, method: str = "slope") -> dict[int, DiagnosticReport]:
    """Sample-splitting portmanteau tests at several lag orders.

    Alpha is fitted on the first ``f_n`` maps (default ``n // 2``) and the
    residual ACF is taken over the last ``l_n`` (default all).  With the
    default split the estimation terms cancel and the statistic is
    ``l_n (sigma1^4 / sigma2^4) rho' rho``.  ``components`` also reports the
    plug-in ``M1``/``M2``, which the statistic does not use.
    """
    Ks = _lags(Ks)
    n = series.n
    f_n = n // 2 if f_n is None else int(f_n)
    l_n = n if l_n is None else int(l_n)
    if min(f_n, l_n) < MIN_SPLIT or f_n > n or l_n > n:
        raise RangeError(f"split (f_n={f_n}, l_n={l_n}) invalid for n={n}")
    fit = fit_alpha(series[:f_n])
    res = residuals(series, fit.alpha_hat, f_n, l_n)
    acf = sample_acf(res, Ks[-1])
    s1, s2 = _scales(res.values - series.grid.nodes, series.grid)
    if s2 <= 0:
        raise SingularCovariance("lag-one residual products vanish")
    M1 = M2 = avar = None
    if components:
        M1, M2, avar = estimation_terms(series, res, Ks[-1], method)
    cov = CovarianceEstimate(Ks[-1], s1, s2, M1, M2, avar, (s2 / s1 ** 2) * np.eye(Ks[-1]))
    out = {}
    for K in Ks:
        a, c = _slice_acf(acf, K), _slice_cov(cov, K)
        stat = l_n * (s1 ** 2 / s2) * float(a.rho @ a.rho)
        out[K] = _report(TestKind.SPLIT, stat, a, c, fit.alpha_hat, f_n, l_n)
    return out


def split_test(series: AtmSeries, K: int = 3, f_n: int | None = None, l_n: int | None = None,
               components: bool = True, method: str = "slope") -> DiagnosticReport:
    """Sample-splitting portmanteau test at a single lag order."""
    return split_tests(series, [K], f_n, l_n, components, method)[K]


# ---------------------------------------------------------------------------
# numerical check of M2 = -M1 E[m^2]
# ---------------------------------------------------------------------------

def condition_discrepancy(series: AtmSeries, alpha0: float, K: int) -> tuple[float, float]:
    """L1 and L2 norms of ``M2 + M1 * mean(m^2)`` at the true parameter."""
    res = residuals(series, alpha0)
    M1, M2, avar = estimation_terms(series, res, K)
    diff = M2 + M1 * avar
    return float(np.abs(diff).sum()), float(math.sqrt((diff ** 2).sum()))


@dataclass(frozen=True)
class _ConditionJob:
    family: InnovationFamily
    alpha0: float
    n: int
    K: int
    m: int
    burn_in: int
    master_seed: int
    rep: int

    def __call__(self, _=None):
        rng = child_rng(self.master_seed, ("condition", self.family.kind.value, self.alpha0, self.n),
                        self.rep)
        cfg = AtmConfig((self.alpha0,), self.n, self.family, self.burn_in, m=self.m)
        return condition_discrepancy(simulate(cfg, rng), self.alpha0, self.K)


def _run_job(job):
    return job()


def condition_check(family: InnovationFamily, alpha0: float, n: int = 5000, reps: int = 100,
                    K: int = 12, m: int = 1000, burn_in: int = 200, master_seed: int = 0,
                    workers: int = 1) -> ExperimentTable:
    """Mean and std over replications of the L1/L2 condition discrepancies."""
    if reps < 1:
        raise ParamError("need at least one replication")
    if not abs(alpha0) < 1:
        raise ParamError(f"alpha0 must lie in (-1, 1), got {alpha0}")
    jobs = [_ConditionJob(family, float(alpha0), n, K, m, burn_in, master_seed, r)
            for r in range(reps)]
    out = run_replications(_run_job, jobs, workers)
    table = ExperimentTable("condition", metadata={
        "family": family.kind.value, "m": m, "burn_in": burn_in, "master_seed": master_seed})
    table.cells[(float(alpha0), n, K, "L1")] = Cell.summary(o[0] for o in out)
    table.cells[(float(alpha0), n, K, "L2")] = Cell.summary(o[1] for o in out)
    return table
