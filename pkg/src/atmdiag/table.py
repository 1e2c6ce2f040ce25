"""Tabular results of Monte Carlo studies, with CSV/JSON/text output."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

FAILURE_FLAG_SHARE = 0.01


@dataclass
class Cell:
    value: float
    reps: int
    mc_stderr: float
    std: float | None = None
    failures: int = 0

    @property
    def flagged(self) -> bool:
        total = self.reps + self.failures
        return total > 0 and self.failures > FAILURE_FLAG_SHARE * total

    @classmethod
    def rate(cls, rejections: int, valid: int, failures: int = 0) -> "Cell":
        if valid == 0:
            return cls(math.nan, 0, math.nan, None, failures)
        r = rejections / valid
        return cls(r, valid, math.sqrt(r * (1.0 - r) / valid), None, failures)

    @classmethod
    def summary(cls, samples) -> "Cell":
        xs = [float(s) for s in samples]
        n = len(xs)
        mean = sum(xs) / n
        std = math.sqrt(sum((s - mean) ** 2 for s in xs) / (n - 1)) if n > 1 else 0.0
        return cls(mean, n, std / math.sqrt(n), std)


def _param_label(p: Any) -> str:
    if isinstance(p, (tuple, list)):
        return "(" + ",".join(f"{v:g}" for v in p) + ")"
    return f"{p:g}" if isinstance(p, float) else str(p)


@dataclass
class ExperimentTable:
    """Cells keyed by ``(parameter, n, K, method)``."""

    kind: str
    cells: dict[tuple, Cell] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, key: tuple) -> Cell:
        return self.cells[key]

    def rows(self) -> list[dict]:
        out = []
        for (param, n, k, method), c in self.cells.items():
            out.append({
                "kind": self.kind,
                "parameter": _param_label(param),
                "n": n,
                "K": k,
                "method": method,
                "value": c.value,
                "std": c.std,
                "reps": c.reps,
                "mc_stderr": c.mc_stderr,
                "failures": c.failures,
                "flagged": c.flagged,
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.rows()
        fields = ["kind", "parameter", "n", "K", "method", "value", "std", "reps",
                  "mc_stderr", "failures", "flagged"]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                        for k, v in r.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "metadata": self.metadata, "cells": self.rows()},
                          indent=2, sort_keys=True)

    def render_text(self) -> str:
        """Layout like the printed tables: one row per (K, method), one column per (parameter, n)."""
        cols = sorted({(p, n) for p, n, _, _ in self.cells}, key=lambda c: (str(c[0]), c[1]))
        rows = sorted({(k, meth) for _, _, k, meth in self.cells})
        head = ["K", "method"] + [f"{_param_label(p)}/n={n}" for p, n in cols]
        lines = ["  ".join(f"{h:>14}" for h in head)]
        for k, meth in rows:
            vals = []
            for p, n in cols:
                c = self.cells.get((p, n, k, meth))
                vals.append("" if c is None else f"{c.value:.4f}")
            lines.append("  ".join(f"{v:>14}" for v in [str(k), meth] + vals))
        return "\n".join(lines)

    def equals(self, other: "ExperimentTable") -> bool:
        """Bit-level equality of all cells (NaN equal to NaN)."""
        if self.cells.keys() != other.cells.keys():
            return False
        for key, c in self.cells.items():
            a, b = asdict(c), asdict(other.cells[key])
            for name in a:
                x, y = a[name], b[name]
                if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
                    continue
                if x != y:
                    return False
        return True
