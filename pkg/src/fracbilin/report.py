"""Inequality/identity check records and their aggregation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

__all__ = ["DiagnosticsRecord", "DiagnosticsReport", "le_record", "ANCHORS"]

# Every record names the theoretical statement it probes.
ANCHORS = frozenset({
    "nonnegativity",
    "linf-bound",
    "energy-estimate",
    "transformed-energy-estimate",
    "lipschitz-control-to-state",
    "adjoint-estimate",
    "gradient-formula",
    "hessian-formula",
    "transpose-identity",
    "transform-equivalence",
    "optimality-system",
    "second-order-conditions",
    "large-alpha-uniqueness",
})


@dataclass(frozen=True)
class DiagnosticsRecord:
    name: str
    anchor: str
    lhs: float
    rhs: float
    passed: bool
    margin: float
    seed: int | None = None

    def __post_init__(self):
        if self.anchor not in ANCHORS:
            raise ValueError(f"unknown anchor {self.anchor!r}")

    def to_json(self) -> dict:
        out = {"name": self.name, "anchor": self.anchor, "lhs": _num(self.lhs),
               "rhs": _num(self.rhs), "pass": bool(self.passed), "margin": _num(self.margin)}
        if self.seed is not None:
            out["seed"] = self.seed
        return out


def _num(x: float):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def le_record(name: str, anchor: str, lhs: float, rhs: float, seed: int | None = None,
              slack: float = 0.0) -> DiagnosticsRecord:
    """Record for ``lhs <= rhs + slack``; the margin is ``rhs - lhs``."""
    lhs, rhs = float(lhs), float(rhs)
    ok = math.isfinite(lhs) and lhs <= rhs + slack
    return DiagnosticsRecord(name, anchor, lhs, rhs, ok, rhs - lhs, seed)


@dataclass
class DiagnosticsReport:
    entries: list[DiagnosticsRecord] = field(default_factory=list)
    seed: int | None = None

    def add(self, *records: DiagnosticsRecord) -> None:
        self.entries.extend(records)

    def sorted(self) -> "DiagnosticsReport":
        return DiagnosticsReport(sorted(self.entries, key=lambda r: r.name), self.seed)

    @property
    def n_pass(self) -> int:
        return sum(r.passed for r in self.entries)

    @property
    def n_fail(self) -> int:
        return len(self.entries) - self.n_pass

    @property
    def all_passed(self) -> bool:
        return self.n_fail == 0

    def to_json(self) -> dict:
        return {"seed": self.seed,
                "entries": [r.to_json() for r in self.entries],
                "summary": {"n_pass": self.n_pass, "n_fail": self.n_fail}}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    def table(self) -> str:
        if not self.entries:
            return "(no entries)\n0 passed, 0 failed\n"
        width = max(len(r.name) for r in self.entries)
        lines = [f"{'check':<{width}}  {'lhs':>12}  {'rhs':>12}  {'margin':>12}  result"]
        for r in self.entries:
            lines.append(f"{r.name:<{width}}  {r.lhs:12.4e}  {r.rhs:12.4e}  {r.margin:12.4e}  "
                         f"{'PASS' if r.passed else 'FAIL'}")
        lines.append(f"{self.n_pass} passed, {self.n_fail} failed")
        return "\n".join(lines) + "\n"
