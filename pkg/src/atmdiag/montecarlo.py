"""Seeded size, power and condition studies.

A study is described by a :class:`StudySpec`, which can be read from an
INI-style file with a single ``[study]`` section::

    [study]
    kind = size                 # size | power | condition
    parameters = 0.2, 0.5       # power: pairs written a1:a2, e.g. 0.5:0.2, 0.2:0.1
    ns = 100, 400
    ks = 3, 6, 9
    reps = 1000
    beta = 0.05
    family = trig               # trig | power | poly
    master_seed = 0
    grid_m = 1000
    burn_in = 200

Only ``kind`` and ``parameters`` are required.  Condition studies default to
``ns = 5000`` and ``ks = 12``.

Replication ``r`` of the cell ``(kind, parameter, n)`` draws from
``child_rng(master_seed, (kind, parameter, n), r)``; every lag order and
both tests of that replication share the simulated series.  Output tables
are therefore identical for any worker count.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .atm import DEFAULT_BURN_IN, TRIG, AtmConfig, FamilyKind, InnovationFamily, simulate
from .diagnostics import TestKind, condition_check, mcleod_tests, split_tests
from .errors import AtmError, ParamError, SchemaError
from .estimation import fit_alpha
from .grid_transport import DEFAULT_M
from .streams import child_rng, run_replications
from .table import Cell, ExperimentTable

MIN_STUDY_N = 20
CONDITION_N = 5000
CONDITION_K = 12
METHODS = (TestKind.MCLEOD.value, TestKind.SPLIT.value)

# per-test replication outcomes
ACCEPT, REJECT, FAILED = 0, 1, -1


class StudyKind(str, Enum):
    SIZE = "size"
    POWER = "power"
    CONDITION = "condition"


def _as_param(kind: StudyKind, p):
    if kind is StudyKind.POWER:
        if not isinstance(p, (tuple, list)) or len(p) != 2:
            raise ParamError(f"power parameters are coefficient pairs, got {p!r}")
        return tuple(float(v) for v in p)
    if isinstance(p, (tuple, list)):
        raise ParamError(f"{kind.value} parameters are single coefficients, got {p!r}")
    return float(p)


@dataclass(frozen=True)
class StudySpec:
    kind: StudyKind
    parameters: tuple
    ns: tuple[int, ...] = (100, 200, 400)
    ks: tuple[int, ...] = (3, 6, 9)
    reps: int = 1000
    beta: float = 0.05
    family: InnovationFamily = TRIG
    master_seed: int = 0
    grid_m: int = DEFAULT_M
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        kind = StudyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "parameters", tuple(_as_param(kind, p) for p in self.parameters))
        object.__setattr__(self, "ns", tuple(int(n) for n in self.ns))
        object.__setattr__(self, "ks", tuple(sorted({int(k) for k in self.ks})))
        if not self.parameters:
            raise ParamError("study needs at least one parameter")
        if self.reps < 1:
            raise ParamError(f"reps must be at least 1, got {self.reps}")
        if not 0.0 < self.beta < 1.0:
            raise ParamError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.ns or min(self.ns) < MIN_STUDY_N:
            raise ParamError(f"every sample size must be at least {MIN_STUDY_N}")
        if not self.ks or self.ks[0] < 1:
            raise ParamError("lag orders must be positive")
        if self.grid_m < 2 or self.burn_in < 0:
            raise ParamError("grid_m must be >= 2 and burn_in >= 0")
        for p in self.parameters:
            coeffs = p if isinstance(p, tuple) else (p,)
            if any(not abs(a) < 1 for a in coeffs):
                raise ParamError(f"coefficients must lie in (-1, 1), got {p}")

    @classmethod
    def from_config(cls, text: str) -> "StudySpec":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise SchemaError(f"unreadable study config: {exc}") from exc
        if not cp.has_section("study"):
            raise SchemaError("study config needs a [study] section")
        sec = cp["study"]
        known = {"kind", "parameters", "ns", "ks", "reps", "beta", "family", "master_seed",
                 "grid_m", "burn_in"}
        unknown = set(sec) - known
        if unknown:
            raise SchemaError(f"unknown study keys: {sorted(unknown)}")
        for key in ("kind", "parameters"):
            if key not in sec:
                raise SchemaError(f"study config is missing '{key}'")
        try:
            kind = StudyKind(sec["kind"].strip().lower())
            params = [p.strip() for p in sec["parameters"].split(",") if p.strip()]
            if kind is StudyKind.POWER:
                params = [tuple(float(v) for v in p.split(":")) for p in params]
            else:
                params = [float(p) for p in params]
            kw = {}
            if kind is StudyKind.CONDITION:
                kw.update(ns=(CONDITION_N,), ks=(CONDITION_K,), reps=100)
            if "ns" in sec:
                kw["ns"] = tuple(int(v) for v in sec["ns"].split(","))
            if "ks" in sec:
                kw["ks"] = tuple(int(v) for v in sec["ks"].split(","))
            for key in ("reps", "master_seed", "grid_m", "burn_in"):
                if key in sec:
                    kw[key] = sec.getint(key)
            if "beta" in sec:
                kw["beta"] = sec.getfloat("beta")
            if "family" in sec:
                kw["family"] = InnovationFamily(FamilyKind(sec["family"].strip().lower()))
        except ValueError as exc:
            if isinstance(exc, AtmError):
                raise
            raise SchemaError(f"bad study config value: {exc}") from exc
        return cls(kind, tuple(params), **kw)

    @classmethod
    def load(cls, path: str | Path) -> "StudySpec":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise SchemaError(f"cannot read study config {path}: {exc}") from exc
        return cls.from_config(text)

    def metadata(self) -> dict:
        return {
            "kind": self.kind.value,
            "family": self.family.kind.value,
            "reps": self.reps,
            "beta": self.beta,
            "master_seed": self.master_seed,
            "m": self.grid_m,
            "burn_in": self.burn_in,
        }


@dataclass(frozen=True)
class _TestJob:
    """One replication of a rejection-rate cell: simulate, fit ATM(1), test."""

    kind: str
    coefficients: tuple[float, ...]
    n: int
    ks: tuple[int, ...]
    beta: float
    family: InnovationFamily
    m: int
    burn_in: int
    master_seed: int
    rep: int

    def __call__(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        key = (self.kind, self.coefficients, self.n)
        rng = child_rng(self.master_seed, key, self.rep)
        cfg = AtmConfig(self.coefficients, self.n, self.family, self.burn_in, m=self.m)
        series = simulate(cfg, rng)
        return self._mcleod(series), self._split(series)

    def _mcleod(self, series) -> tuple[int, ...]:
        try:
            out = mcleod_tests(series, self.ks, fit_alpha(series))
        except AtmError:
            return (FAILED,) * len(self.ks)
        return tuple(FAILED if isinstance(out[k], Exception) else int(out[k].rejects(self.beta))
                     for k in self.ks)

    def _split(self, series) -> tuple[int, ...]:
        try:
            out = split_tests(series, self.ks, components=False)
        except AtmError:
            return (FAILED,) * len(self.ks)
        return tuple(int(out[k].rejects(self.beta)) for k in self.ks)


def _run(job):
    return job()


def _rate_cell(outcomes) -> Cell:
    arr = np.asarray(outcomes)
    failures = int((arr == FAILED).sum())
    return Cell.rate(int((arr == REJECT).sum()), arr.size - failures, failures)


def _rejection_study(spec: StudySpec, kind: StudyKind, workers: int) -> ExperimentTable:
    jobs, cells = [], []
    for p in spec.parameters:
        coeffs = p if isinstance(p, tuple) else (p,)
        for n in spec.ns:
            cells.append((p, n))
            jobs.extend(_TestJob(kind.value, coeffs, n, spec.ks, spec.beta, spec.family,
                                 spec.grid_m, spec.burn_in, spec.master_seed, r)
                        for r in range(spec.reps))
    results = run_replications(_run, jobs, workers)
    table = ExperimentTable(kind.value, metadata=spec.metadata())
    for c, (p, n) in enumerate(cells):
        block = results[c * spec.reps:(c + 1) * spec.reps]
        for j, K in enumerate(spec.ks):
            for i, method in enumerate(METHODS):
                table.cells[(p, n, K, method)] = _rate_cell([r[i][j] for r in block])
    return table


def run_size_study(spec: StudySpec, workers: int = 1) -> ExperimentTable:
    """Rejection rates of both tests under simulated ATM(1) data."""
    if spec.kind is not StudyKind.SIZE:
        raise ParamError(f"expected a size study, got {spec.kind.value}")
    return _rejection_study(spec, StudyKind.SIZE, workers)


def run_power_study(spec: StudySpec, workers: int = 1) -> ExperimentTable:
    """Rejection rates of both tests when ATM(2) data are fitted as ATM(1)."""
    if spec.kind is not StudyKind.POWER:
        raise ParamError(f"expected a power study, got {spec.kind.value}")
    return _rejection_study(spec, StudyKind.POWER, workers)


def run_condition_study(spec: StudySpec, workers: int = 1) -> ExperimentTable:
    """L1/L2 discrepancies of ``M2 + M1 E[m^2]`` at the true coefficient."""
    if spec.kind is not StudyKind.CONDITION:
        raise ParamError(f"expected a condition study, got {spec.kind.value}")
    table = ExperimentTable(StudyKind.CONDITION.value, metadata=spec.metadata())
    for p in spec.parameters:
        for n in spec.ns:
            for K in spec.ks:
                sub = condition_check(spec.family, p, n, spec.reps, K, spec.grid_m,
                                      spec.burn_in, spec.master_seed, workers)
                table.cells.update(sub.cells)
    return table


def run_study(spec: StudySpec, workers: int = 1) -> ExperimentTable:
    runner = {
        StudyKind.SIZE: run_size_study,
        StudyKind.POWER: run_power_study,
        StudyKind.CONDITION: run_condition_study,
    }[spec.kind]
    return runner(spec, workers)
