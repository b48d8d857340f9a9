"""Problem data, configuration loading and grid sampling.

A case file is TOML with the flat tables ``[domain]``, ``[cost]``, ``[data]``,
``[discretization]`` and ``[optimizer]``.  Data functions are named built-ins
with parameters, e.g.::

    [data]
    y0 = { kind = "bump", amplitude = 1.0, center = 0.0, radius = 1.0 }
    f = { kind = "separable", time = { kind = "constant", value = 1.0 },
          space = { kind = "gaussian", amplitude = 0.5, center = 0.0, width = 0.3 } }
    kappa = { kind = "exp_decay", amplitude = 0.5, rate = 1.0, sup_bound = 0.5 }

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import math
from importlib import resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import tomli
import tomli_w

from .errors import NonFiniteSample, ParseError, ValidationError

__all__ = [
    "Profile",
    "SourceFunction",
    "KernelSpec",
    "ProblemSpec",
    "OptimizerConfig",
    "Case",
    "Grid",
    "TimeGrid",
    "Field",
    "ControlField",
    "DirectionField",
    "make_grid",
    "make_time_grid",
    "load_case",
    "load_default_case",
    "load_spec",
    "parse_case",
    "case_to_dict",
    "dump_case",
    "sample_field",
    "project_control",
]


# ---------------------------------------------------------------------------
# built-in data functions

_PROFILE_PARAMS: dict[str, dict[str, Any]] = {
    "constant": {"value": None},
    "polynomial": {"coeffs": None},
    "gaussian": {"amplitude": None, "center": 0.0, "width": None},
    "bump": {"amplitude": 1.0, "center": 0.0, "radius": None, "power": 1.0},
    "sine": {"amplitude": 1.0, "frequency": None, "phase": 0.0},
}


def _fill_params(kind: str, raw: Mapping[str, Any], table: dict[str, Any], where: str) -> dict[str, Any]:
    params = {}
    for key in raw:
        if key not in table:
            raise ValidationError(f"{where}: unknown parameter {key!r} for kind {kind!r}")
    for key, default in table.items():
        if key in raw:
            params[key] = raw[key]
        elif default is None:
            raise ValidationError(f"{where}: kind {kind!r} requires parameter {key!r}")
        else:
            params[key] = default
    return params


@dataclass(frozen=True)
class Profile:
    """A scalar function of one variable chosen from the built-in families."""

    kind: str
    params: Mapping[str, Any]

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], where: str) -> "Profile":
        if not isinstance(raw, Mapping) or "kind" not in raw:
            raise ValidationError(f"{where}: expected a table with a 'kind' key")
        kind = raw["kind"]
        if kind not in _PROFILE_PARAMS:
            raise ValidationError(f"{where}: unknown kind {kind!r}")
        rest = {k: v for k, v in raw.items() if k != "kind"}
        params = _fill_params(kind, rest, _PROFILE_PARAMS[kind], where)
        if kind == "polynomial":
            coeffs = params["coeffs"]
            if not isinstance(coeffs, (list, tuple)) or not coeffs:
                raise ValidationError(f"{where}: 'coeffs' must be a non-empty list")
            params["coeffs"] = [float(c) for c in coeffs]
        else:
            params = {k: float(v) for k, v in params.items()}
        if kind == "gaussian" and params["width"] <= 0:
            raise ValidationError(f"{where}: gaussian width must be > 0")
        if kind == "bump" and (params["radius"] <= 0 or params["power"] < 0):
            raise ValidationError(f"{where}: bump needs radius > 0 and power >= 0")
        return cls(kind, params)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, **self.params}

    def scaled(self, c: float) -> "Profile":
        """The profile multiplied by the constant c."""
        if self.kind == "polynomial":
            return Profile(self.kind, {"coeffs": [c * a for a in self.params["coeffs"]]})
        key = "value" if self.kind == "constant" else "amplitude"
        return Profile(self.kind, {**self.params, key: c * self.params[key]})

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full(z.shape, p["value"])
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(z, p["coeffs"])
        if self.kind == "gaussian":
            return p["amplitude"] * np.exp(-(((z - p["center"]) / p["width"]) ** 2))
        if self.kind == "bump":
            base = np.maximum(0.0, 1.0 - ((z - p["center"]) / p["radius"]) ** 2)
            return p["amplitude"] * base ** p["power"]
        # sine
        return p["amplitude"] * np.sin(p["frequency"] * z + p["phase"])


@dataclass(frozen=True)
class SourceFunction:
    """f(t, x): either a profile in x alone or a separable product g(t) h(x)."""

    space: Profile
    time: Profile | None = None

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], where: str) -> "SourceFunction":
        if isinstance(raw, Mapping) and raw.get("kind") == "separable":
            extra = set(raw) - {"kind", "time", "space"}
            if extra:
                raise ValidationError(f"{where}: unknown parameter(s) {sorted(extra)}")
            if "time" not in raw or "space" not in raw:
                raise ValidationError(f"{where}: separable source needs 'time' and 'space'")
            return cls(Profile.from_dict(raw["space"], where + ".space"),
                       Profile.from_dict(raw["time"], where + ".time"))
        return cls(Profile.from_dict(raw, where))

    def to_dict(self) -> dict[str, Any]:
        if self.time is None:
            return self.space.to_dict()
        return {"kind": "separable", "time": self.time.to_dict(), "space": self.space.to_dict()}

    def __call__(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        t, x = np.broadcast_arrays(t, x)
        val = self.space(x)
        if self.time is not None:
            val = val * self.time(t)
        return val


_KERNEL_PARAMS: dict[str, dict[str, Any]] = {
    "constant": {"value": None},
    "exp_decay": {"amplitude": None, "rate": 0.0},
    "separable": {"amplitude": 1.0, "rate": 0.0},
}


@dataclass(frozen=True)
class KernelSpec:
    """Memory kernel kappa(t, tau, x) with its declared sup-norm bound.

    ``exp_decay`` is ``amplitude * exp(-rate (t - tau))``; ``separable`` multiplies
    that by a spatial profile.
    """

    kind: str
    params: Mapping[str, float]
    sup_bound: float
    space: Profile | None = None

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], where: str = "data.kappa") -> "KernelSpec":
        if not isinstance(raw, Mapping) or "kind" not in raw:
            raise ValidationError(f"{where}: expected a table with a 'kind' key")
        kind = raw["kind"]
        if kind not in _KERNEL_PARAMS:
            raise ValidationError(f"{where}: unknown kind {kind!r}")
        if "sup_bound" not in raw:
            raise ValidationError(f"{where}: 'sup_bound' is required")
        sup_bound = float(raw["sup_bound"])
        if not sup_bound >= 0:
            raise ValidationError(f"{where}.sup_bound must be >= 0")
        rest = {k: v for k, v in raw.items() if k not in ("kind", "sup_bound", "space")}
        if "space" in raw and kind != "separable":
            raise ValidationError(f"{where}: unknown parameter 'space' for kind {kind!r}")
        params = {k: float(v) for k, v in _fill_params(kind, rest, _KERNEL_PARAMS[kind], where).items()}
        space = None
        if kind == "separable":
            if "space" not in raw:
                raise ValidationError(f"{where}: separable kernel needs 'space'")
            space = Profile.from_dict(raw["space"], where + ".space")
        return cls(kind, params, sup_bound, space)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, **self.params, "sup_bound": self.sup_bound}
        if self.space is not None:
            out["space"] = self.space.to_dict()
        return out

    def __call__(self, t, tau, x):
        t, tau, x = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, tau, x)))
        p = self.params
        if self.kind == "constant":
            return np.full(t.shape, p["value"])
        val = p["amplitude"] * np.exp(-p["rate"] * (t - tau))
        if self.space is not None:
            val = val * self.space(x)
        return val

    @property
    def is_zero(self) -> bool:
        if self.kind == "constant":
            return self.params["value"] == 0.0
        return self.params["amplitude"] == 0.0


# ---------------------------------------------------------------------------
# problem and case


@dataclass(frozen=True)
class ProblemSpec:
    domain_lo: float
    domain_hi: float
    omega_lo: float
    omega_hi: float
    T: float
    s: float
    alpha: float
    m: float
    M: float
    y0: Profile
    yd: Profile
    f: SourceFunction
    kappa: KernelSpec

    def __post_init__(self):
        _validate_spec(self)

    @property
    def sigma(self) -> float:
        """Largest admissible control magnitude, max(|m|, |M|)."""
        return max(abs(self.m), abs(self.M))


@dataclass(frozen=True)
class OptimizerConfig:
    tol: float = 1e-8
    max_iters: int = 500
    step0: float = 1.0
    seed: int = 0
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5

    def __post_init__(self):
        if not self.tol > 0:
            raise ValidationError("optimizer.tol must be > 0")
        if self.max_iters < 0:
            raise ValidationError("optimizer.max_iters must be >= 0")
        if not self.step0 > 0:
            raise ValidationError("optimizer.step0 must be > 0")
        if not 0 < self.armijo_c < 1:
            raise ValidationError("optimizer.armijo_c must lie in (0, 1)")
        if not 0 < self.armijo_shrink < 1:
            raise ValidationError("optimizer.armijo_shrink must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("optimizer.seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class Case:
    """Everything a case file holds: the problem, its resolution and solver settings."""

    spec: ProblemSpec
    n_interior: int
    n_steps: int
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.n_interior < 2:
            raise ValidationError("discretization.n_interior must be >= 2")
        if self.n_steps < 1:
            raise ValidationError("discretization.n_steps must be >= 1")


_N_CHECK = 129


def _validate_spec(spec: ProblemSpec) -> None:
    lo, hi = spec.domain_lo, spec.domain_hi
    if not lo < spec.omega_lo < spec.omega_hi < hi:
        raise ValidationError("domain: need lo < omega_lo < omega_hi < hi")
    if not 0 < spec.s < 1:
        raise ValidationError("domain.s must satisfy 0 < s < 1")
    if not spec.T > 0:
        raise ValidationError("domain.T must be > 0")
    if not spec.alpha > 0:
        raise ValidationError("cost.alpha must be > 0")
    if not spec.M > spec.m:
        raise ValidationError("cost: need M > m")

    x = np.linspace(lo, hi, _N_CHECK)
    for name in ("y0", "yd"):
        vals = getattr(spec, name)(x)
        if not np.all(np.isfinite(vals)):
            raise ValidationError(f"data.{name} is not bounded on the domain")
    t = np.linspace(0.0, spec.T, 33)
    vals = spec.f(t[:, None], x[None, :])
    if not np.all(np.isfinite(vals)):
        raise ValidationError("data.f is not bounded on the space-time cylinder")

    tk = np.linspace(0.0, spec.T, 17)
    tt, ttau, xx = np.meshgrid(tk, tk, np.linspace(lo, hi, 33), indexing="ij")
    keep = ttau <= tt
    kv = spec.kappa(tt[keep], ttau[keep], xx[keep])
    if not np.all(np.isfinite(kv)):
        raise ValidationError("data.kappa is not finite")
    if np.any(kv < 0):
        raise ValidationError("data.kappa must be nonnegative")
    if np.any(np.abs(kv) > spec.kappa.sup_bound * (1 + 1e-12)):
        raise ValidationError("data.kappa exceeds its declared sup_bound")


# ---------------------------------------------------------------------------
# loading / saving

_SCHEMA = {
    "domain": {"lo", "hi", "omega_lo", "omega_hi", "T", "s"},
    "cost": {"alpha", "m", "M"},
    "data": {"y0", "yd", "f", "kappa"},
    "discretization": {"n_interior", "n_steps"},
    "optimizer": {"tol", "max_iters", "step0", "seed", "armijo_c", "armijo_shrink"},
}
_OPTIONAL = {("optimizer", "armijo_c"), ("optimizer", "armijo_shrink")}


def _number(table: str, key: str, value: Any, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{table}.{key} must be a number")
    if integer:
        if not isinstance(value, int):
            raise ValidationError(f"{table}.{key} must be an integer")
        return value
    if not math.isfinite(value):
        raise ValidationError(f"{table}.{key} must be finite")
    return float(value)


def parse_case(doc: Mapping[str, Any]) -> Case:
    """Validate a parsed configuration mapping and build a :class:`Case`."""
    unknown = set(doc) - set(_SCHEMA)
    if unknown:
        raise ValidationError(f"unknown table(s): {sorted(unknown)}")
    for table, keys in _SCHEMA.items():
        if table not in doc:
            raise ValidationError(f"missing table [{table}]")
        section = doc[table]
        if not isinstance(section, Mapping):
            raise ValidationError(f"[{table}] must be a table")
        extra = set(section) - keys
        if extra:
            raise ValidationError(f"[{table}]: unknown key(s) {sorted(extra)}")
        missing = {k for k in keys - set(section) if (table, k) not in _OPTIONAL}
        if missing:
            raise ValidationError(f"[{table}]: missing key(s) {sorted(missing)}")

    d, c, data = doc["domain"], doc["cost"], doc["data"]
    spec = ProblemSpec(
        domain_lo=_number("domain", "lo", d["lo"]),
        domain_hi=_number("domain", "hi", d["hi"]),
        omega_lo=_number("domain", "omega_lo", d["omega_lo"]),
        omega_hi=_number("domain", "omega_hi", d["omega_hi"]),
        T=_number("domain", "T", d["T"]),
        s=_number("domain", "s", d["s"]),
        alpha=_number("cost", "alpha", c["alpha"]),
        m=_number("cost", "m", c["m"]),
        M=_number("cost", "M", c["M"]),
        y0=Profile.from_dict(data["y0"], "data.y0"),
        yd=Profile.from_dict(data["yd"], "data.yd"),
        f=SourceFunction.from_dict(data["f"], "data.f"),
        kappa=KernelSpec.from_dict(data["kappa"]),
    )
    disc, opt = doc["discretization"], doc["optimizer"]
    optimizer = OptimizerConfig(
        tol=_number("optimizer", "tol", opt["tol"]),
        max_iters=_number("optimizer", "max_iters", opt["max_iters"], integer=True),
        step0=_number("optimizer", "step0", opt["step0"]),
        seed=_number("optimizer", "seed", opt["seed"], integer=True),
        armijo_c=_number("optimizer", "armijo_c", opt.get("armijo_c", 1e-4)),
        armijo_shrink=_number("optimizer", "armijo_shrink", opt.get("armijo_shrink", 0.5)),
    )
    return Case(
        spec=spec,
        n_interior=_number("discretization", "n_interior", disc["n_interior"], integer=True),
        n_steps=_number("discretization", "n_steps", disc["n_steps"], integer=True),
        optimizer=optimizer,
    )


def load_case(config_path: str | Path) -> Case:
    path = Path(config_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_case(doc)


def load_default_case() -> Case:
    """The case bundled with the package (``fracbilin/data/default.toml``)."""
    text = resources.files("fracbilin").joinpath("data/default.toml").read_text()
    return parse_case(tomli.loads(text))


def load_spec(config_path: str | Path) -> ProblemSpec:
    return load_case(config_path).spec


def case_to_dict(case: Case) -> dict[str, Any]:
    s = case.spec
    opt = case.optimizer
    return {
        "domain": {"lo": s.domain_lo, "hi": s.domain_hi, "omega_lo": s.omega_lo,
                   "omega_hi": s.omega_hi, "T": s.T, "s": s.s},
        "cost": {"alpha": s.alpha, "m": s.m, "M": s.M},
        "data": {"y0": s.y0.to_dict(), "yd": s.yd.to_dict(), "f": s.f.to_dict(),
                 "kappa": s.kappa.to_dict()},
        "discretization": {"n_interior": case.n_interior, "n_steps": case.n_steps},
        "optimizer": {"tol": opt.tol, "max_iters": opt.max_iters, "step0": opt.step0,
                      "seed": opt.seed, "armijo_c": opt.armijo_c,
                      "armijo_shrink": opt.armijo_shrink},
    }


def dump_case(case: Case) -> str:
    """Serialize a case back to TOML text accepted by :func:`load_case`."""
    return tomli_w.dumps(case_to_dict(case))


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True, eq=False)
class Grid:
    n_interior: int
    h: float
    nodes: np.ndarray
    omega_mask: np.ndarray


@dataclass(frozen=True, eq=False)
class TimeGrid:
    n_steps: int
    dt: float
    times: np.ndarray


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=a.dtype if isinstance(a, np.ndarray) else None)
    a.setflags(write=False)
    return a


def make_grid(spec: ProblemSpec, n_interior: int) -> Grid:
    if n_interior < 2:
        raise ValidationError("n_interior must be >= 2")
    h = (spec.domain_hi - spec.domain_lo) / (n_interior + 1)
    nodes = spec.domain_lo + h * np.arange(1, n_interior + 1)
    mask = (nodes > spec.omega_lo) & (nodes < spec.omega_hi)
    if not mask.any():
        raise ValidationError("grid too coarse: no node lies inside omega")
    return Grid(n_interior, h, _frozen(nodes), _frozen(mask))


def make_time_grid(T: float, n_steps: int) -> TimeGrid:
    if n_steps < 1:
        raise ValidationError("n_steps must be >= 1")
    dt = T / n_steps
    times = dt * np.arange(n_steps + 1)
    times[-1] = T
    return TimeGrid(n_steps, dt, _frozen(times))


@dataclass(frozen=True, eq=False)
class Field:
    """Grid function on (time level, interior node); exterior values are zero."""

    values: np.ndarray
    grid: Grid
    time_grid: TimeGrid

    def __post_init__(self):
        shape = (self.time_grid.n_steps + 1, self.grid.n_interior)
        if self.values.shape != shape:
            raise ValueError(f"field has shape {self.values.shape}, expected {shape}")
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=float)))


@dataclass(frozen=True, eq=False)
class ControlField:
    values: np.ndarray
    m: float
    M: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=float)))


@dataclass(frozen=True, eq=False)
class DirectionField:
    """A perturbation of the control, supported on omega."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=float)))


def sample_field(func: Callable, grid: Grid, time_grid: TimeGrid) -> Field:
    values = np.asarray(func(time_grid.times[:, None], grid.nodes[None, :]), dtype=float)
    values = np.broadcast_to(values, (time_grid.n_steps + 1, grid.n_interior))
    if not np.all(np.isfinite(values)):
        raise NonFiniteSample("function returned NaN or infinity on the grid")
    return Field(values.copy(), grid, time_grid)


def project_control(raw, spec: ProblemSpec, grid: Grid) -> ControlField:
    """Clamp to [m, M] on omega nodes and zero the rest."""
    raw = raw.values if hasattr(raw, "values") else np.asarray(raw, dtype=float)
    out = np.where(grid.omega_mask[None, :], np.clip(raw, spec.m, spec.M), 0.0)
    return ControlField(out, spec.m, spec.M)
