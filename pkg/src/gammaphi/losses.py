"""Gamma-Phi multiclass losses.

A Gamma-Phi loss on ``k`` classes is built from an outer non-decreasing
function ``gamma: [0, inf) -> [0, inf)`` and an inner non-increasing
function ``phi: R -> [0, inf)``.  Its ``y``-th component is::

    L_y(v) = gamma( sum_{j != y} phi(v_y - v_j) )

This module holds the function families, loss evaluation and Jacobians,
grid-based checkers for the sufficient conditions on ``gamma`` and ``phi``,
named presets and a small ``key = value`` config format.

Class indices are 0-based throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, DimensionError, DomainError


class GammaFamily(str, Enum):
    LOG1P = "log1p"
    SCALED_LOG1P = "scaled_log1p"
    IDENTITY = "identity"
    SQUARED_RATIO = "squared_ratio"
    COUNTEREXAMPLE = "counterexample"


class PhiFamily(str, Enum):
    EXP = "exp"
    SHIFTED_SCALED_EXP = "shifted_scaled_exp"
    SIGMOID = "sigmoid"


# Default parameters; a family accepts exactly these keys.
_GAMMA_DEFAULTS: dict[GammaFamily, dict[str, float]] = {
    GammaFamily.LOG1P: {},
    GammaFamily.SCALED_LOG1P: {"T": 1.0},
    GammaFamily.IDENTITY: {},
    GammaFamily.SQUARED_RATIO: {},
    GammaFamily.COUNTEREXAMPLE: {},
}

_PHI_DEFAULTS: dict[PhiFamily, dict[str, float]] = {
    PhiFamily.EXP: {"scale": 1.0},
    PhiFamily.SHIFTED_SCALED_EXP: {"shift": 0.0, "T": 1.0},
    PhiFamily.SIGMOID: {"T": 1.0},
}

# (strictly increasing, positive derivative, unbounded) known in closed form
_GAMMA_ANALYTIC: dict[GammaFamily, tuple[bool, bool, bool]] = {
    GammaFamily.LOG1P: (True, True, True),
    GammaFamily.SCALED_LOG1P: (True, True, True),
    GammaFamily.IDENTITY: (True, True, True),
    # derivative 2x/(1+x)^3 vanishes at 0; supremum is 1
    GammaFamily.SQUARED_RATIO: (True, False, False),
    # derivative vanishes at x = 1
    GammaFamily.COUNTEREXAMPLE: (True, False, True),
}


def _as_float_array(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


def _check_params(family, given: Mapping[str, float], defaults: dict[str, float]) -> dict[str, float]:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigurationError(f"unknown parameter(s) {sorted(unknown)} for family {family.value!r}")
    params = dict(defaults)
    for key, value in given.items():
        try:
            params[key] = float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"parameter {key!r} must be a real number, got {value!r}") from None
        if not math.isfinite(params[key]):
            raise ConfigurationError(f"parameter {key!r} must be finite")
    for key in ("T", "scale"):
        if key in params and params[key] <= 0:
            raise ConfigurationError(f"parameter {key!r} must be > 0, got {params[key]}")
    return params


@dataclass(frozen=True)
class GammaSpec:
    """Outer function ``gamma`` of a Gamma-Phi loss.

    ``value`` and ``deriv`` accept scalars or arrays.  ``+inf`` is accepted
    and maps to the supremum (``value``) or the limiting slope (``deriv``).
    """

    family: GammaFamily
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        try:
            family = GammaFamily(self.family)
        except ValueError:
            raise ConfigurationError(f"unknown gamma family {self.family!r}") from None
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", _check_params(family, self.params, _GAMMA_DEFAULTS[family]))

    def _domain(self, x) -> tuple[np.ndarray, bool]:
        arr, scalar = _as_float_array(x)
        if np.any(np.isnan(arr)) or np.any(arr < 0):
            raise DomainError("gamma is defined on [0, inf) only")
        return arr, scalar

    def value(self, x):
        x, scalar = self._domain(x)
        with np.errstate(over="ignore", invalid="ignore"):
            return _out(self._value(x), scalar)

    def deriv(self, x):
        x, scalar = self._domain(x)
        with np.errstate(over="ignore", invalid="ignore"):
            return _out(self._deriv(x), scalar)

    # unchecked array versions for inner loops
    def _value(self, x: np.ndarray) -> np.ndarray:
        fam = self.family
        if fam is GammaFamily.LOG1P:
            return np.log1p(x)
        if fam is GammaFamily.SCALED_LOG1P:
            return self.params["T"] * np.log1p(x)
        if fam is GammaFamily.IDENTITY:
            return np.array(x, dtype=float)
        if fam is GammaFamily.SQUARED_RATIO:
            ratio = np.where(np.isinf(x), 1.0, x / (1.0 + x))
            return ratio * ratio
        d = x - 1.0
        return np.where(x < 1.0, 1.0 - d * d, 2.0 * d * d + 1.0)

    def _deriv(self, x: np.ndarray) -> np.ndarray:
        fam = self.family
        if fam is GammaFamily.LOG1P:
            return 1.0 / (1.0 + x)
        if fam is GammaFamily.SCALED_LOG1P:
            return self.params["T"] / (1.0 + x)
        if fam is GammaFamily.IDENTITY:
            return np.ones_like(x)
        if fam is GammaFamily.SQUARED_RATIO:
            return np.where(np.isinf(x), 0.0, 2.0 * x / (1.0 + x) ** 3)
        return np.where(x < 1.0, -2.0 * (x - 1.0), 4.0 * (x - 1.0))

    @property
    def sup(self) -> float:
        """``sup_{x >= 0} gamma(x)``, i.e. ``gamma(+inf)``."""
        return 1.0 if self.family is GammaFamily.SQUARED_RATIO else math.inf

    def analytic_flags(self) -> dict[str, bool]:
        si, pd, unbounded = _GAMMA_ANALYTIC[self.family]
        return {"gamma_si": si, "gamma_pd": pd, "gamma_sup_infinite": unbounded}


@dataclass(frozen=True)
class PhiSpec:
    """Inner function ``phi`` of a Gamma-Phi loss.

    Families: ``exp`` is ``exp(-scale*x)``, ``shifted_scaled_exp`` is
    ``exp((shift - x)/T)`` and ``sigmoid`` is ``1/(1 + exp(x/T))``.
    Values overflowing the float range saturate to ``+inf``.
    """

    family: PhiFamily
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        try:
            family = PhiFamily(self.family)
        except ValueError:
            raise ConfigurationError(f"unknown phi family {self.family!r}") from None
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", _check_params(family, self.params, _PHI_DEFAULTS[family]))

    def value(self, x):
        x, scalar = _as_float_array(x)
        if np.any(np.isnan(x)):
            raise DomainError("phi received NaN")
        with np.errstate(over="ignore"):
            return _out(self._value(x), scalar)

    def deriv(self, x):
        x, scalar = _as_float_array(x)
        if np.any(np.isnan(x)):
            raise DomainError("phi received NaN")
        with np.errstate(over="ignore", invalid="ignore"):
            return _out(self._deriv(x), scalar)

    def _value(self, x: np.ndarray) -> np.ndarray:
        fam = self.family
        if fam is PhiFamily.EXP:
            return np.exp(-self.params["scale"] * x)
        if fam is PhiFamily.SHIFTED_SCALED_EXP:
            return np.exp((self.params["shift"] - x) / self.params["T"])
        return expit(-x / self.params["T"])

    def _deriv(self, x: np.ndarray) -> np.ndarray:
        fam = self.family
        if fam is PhiFamily.EXP:
            s = self.params["scale"]
            return -s * np.exp(-s * x)
        if fam is PhiFamily.SHIFTED_SCALED_EXP:
            t = self.params["T"]
            return -np.exp((self.params["shift"] - x) / t) / t
        t = self.params["T"]
        e = expit(-x / t)
        return -(e * (1.0 - e)) / t

    @property
    def sup(self) -> float:
        """``phi(-inf)``."""
        return 1.0 if self.family is PhiFamily.SIGMOID else math.inf

    @property
    def inf(self) -> float:
        """``phi(+inf)``."""
        return 0.0

    def analytic_flags(self) -> dict[str, bool]:
        return {"phi_ndz": True, "phi_inf_zero": True}


@dataclass(frozen=True)
class LossSpec:
    gamma: GammaSpec
    phi: PhiSpec
    k: int
    name: str | None = None

    def __post_init__(self):
        if isinstance(self.k, bool) or not isinstance(self.k, (int, np.integer)) or self.k < 2:
            raise ConfigurationError(f"class count k must be an integer >= 2, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    def with_k(self, k: int) -> "LossSpec":
        return LossSpec(self.gamma, self.phi, k, self.name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "k": self.k,
            "gamma": {"family": self.gamma.family.value, "params": dict(sorted(self.gamma.params.items()))},
            "phi": {"family": self.phi.family.value, "params": dict(sorted(self.phi.params.items()))},
        }


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def gamma_eval(spec: GammaSpec, x):
    return spec.value(x)


def gamma_deriv(spec: GammaSpec, x):
    return spec.deriv(x)


def phi_eval(spec: PhiSpec, x):
    return spec.value(x)


def phi_deriv(spec: PhiSpec, x):
    return spec.deriv(x)


def score_vector(v, k: int | None = None) -> np.ndarray:
    """Validate a finite score vector, optionally of length ``k``."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"score vector must be 1-D, got shape {arr.shape}")
    if k is not None and arr.shape[0] != k:
        raise DimensionError(f"score vector has length {arr.shape[0]}, loss expects k={k}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("score vector must be finite; use ExtendedScore for coordinates at -inf")
    return arr


def _pairwise(spec: LossSpec, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = v[:, None] - v[None, :]
    terms = spec.phi.value(diff)
    np.fill_diagonal(terms, 0.0)
    return diff, terms


def loss_components(spec: LossSpec, v) -> np.ndarray:
    """All ``k`` loss components ``L_y(v)``."""
    v = score_vector(v, spec.k)
    _, terms = _pairwise(spec, v)
    return spec.gamma.value(terms.sum(axis=1))


def loss_jacobian(spec: LossSpec, v) -> np.ndarray:
    """Matrix ``J[y, j] = dL_y / dv_j``."""
    v = score_vector(v, spec.k)
    diff, terms = _pairwise(spec, v)
    outer = spec.gamma.deriv(terms.sum(axis=1))
    dphi = spec.phi.deriv(diff)
    np.fill_diagonal(dphi, 0.0)
    jac = -outer[:, None] * dphi
    np.fill_diagonal(jac, outer * dphi.sum(axis=1))
    return jac


# ---------------------------------------------------------------------------
# sufficient-condition checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplingGrid:
    lo: float
    hi: float
    n: int = 1001

    def points(self) -> np.ndarray:
        if self.n < 2 or not (self.hi > self.lo) or not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigurationError(f"degenerate sampling grid {self}")
        return np.linspace(self.lo, self.hi, self.n)


GAMMA_GRID = SamplingGrid(0.0, 100.0, 1001)
PHI_GRID = SamplingGrid(-50.0, 50.0, 1001)
DERIV_TOL = 1e-9


@dataclass(frozen=True)
class Evidence:
    condition: str
    x: float
    value: float
    note: str


@dataclass
class ConditionReport:
    """Verdicts on the sufficient conditions; ``None`` means not checked."""

    gamma_si: bool | None = None
    gamma_pd: bool | None = None
    gamma_sup_infinite: bool | None = None
    phi_ndz: bool | None = None
    phi_inf_zero: bool | None = None
    evidence: list[Evidence] = field(default_factory=list)

    def merge(self, other: "ConditionReport") -> "ConditionReport":
        merged = ConditionReport(evidence=list(self.evidence) + list(other.evidence))
        for name in ("gamma_si", "gamma_pd", "gamma_sup_infinite", "phi_ndz", "phi_inf_zero"):
            mine, theirs = getattr(self, name), getattr(other, name)
            setattr(merged, name, mine if theirs is None else theirs)
        return merged

    @property
    def hypotheses_hold(self) -> bool:
        """True when the positive-derivative sufficient condition is fully met."""
        return bool(self.gamma_pd and self.gamma_sup_infinite and self.phi_ndz and self.phi_inf_zero)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["hypotheses_hold"] = self.hypotheses_hold
        return out


def _with_analytic(grid_verdict: bool, flags: Mapping[str, bool] | None, key: str) -> bool:
    if flags is None or key not in flags:
        return grid_verdict
    return grid_verdict and bool(flags[key])


def check_gamma_conditions(
    gamma,
    grid: SamplingGrid = GAMMA_GRID,
    tol: float = DERIV_TOL,
    probe: float = 1e300,
    growth: float = 100.0,
) -> ConditionReport:
    """Grid evidence for Gamma-SI, Gamma-PD and unboundedness of ``gamma``.

    ``gamma`` needs ``value``/``deriv`` methods; ``analytic_flags`` is used
    when present and can only turn a grid pass into a fail.
    Unboundedness is judged by ``gamma(probe) > growth * gamma(grid.hi)``.
    """
    if grid.lo < 0:
        raise ConfigurationError("gamma grid must lie in [0, inf)")
    if grid.hi < 100:
        raise ConfigurationError("gamma grid must reach x_max >= 100")
    xs = grid.points()
    vals = np.asarray(gamma.value(xs), dtype=float)
    ders = np.asarray(gamma.deriv(xs), dtype=float)
    flags = gamma.analytic_flags() if hasattr(gamma, "analytic_flags") else None
    evidence = []

    steps = np.diff(vals)
    i = int(np.argmin(steps))
    si = bool(np.all(steps > 0))
    evidence.append(Evidence("gamma_si", float(xs[i]), float(steps[i]), "smallest increment between neighbours"))

    j = int(np.argmin(ders))
    pd = bool(np.all(ders > tol))
    evidence.append(Evidence("gamma_pd", float(xs[j]), float(ders[j]), "smallest derivative on grid"))

    far = float(gamma.value(probe))
    sup_inf = far > growth * max(float(vals[-1]), 1e-300)
    evidence.append(Evidence("gamma_sup_infinite", probe, far, f"value at probe vs {growth:g}x value at grid end"))

    si = _with_analytic(si, flags, "gamma_si")
    pd = _with_analytic(pd, flags, "gamma_pd") and si
    sup_inf = _with_analytic(sup_inf, flags, "gamma_sup_infinite")
    return ConditionReport(gamma_si=si, gamma_pd=pd, gamma_sup_infinite=sup_inf, evidence=evidence)


def check_phi_conditions(
    phi,
    grid: SamplingGrid = PHI_GRID,
    tol: float = DERIV_TOL,
    inf_threshold: float = 1e-6,
) -> ConditionReport:
    """Grid evidence for Phi-NDZ and ``inf phi = 0``."""
    if grid.lo != -grid.hi:
        raise ConfigurationError("phi grid must be symmetric around 0")
    xs = grid.points()
    ders = np.asarray(phi.deriv(xs), dtype=float)
    flags = phi.analytic_flags() if hasattr(phi, "analytic_flags") else None
    evidence = []

    j = int(np.argmax(ders))
    d0 = float(phi.deriv(0.0))
    ndz = bool(np.all(ders <= 0)) and d0 < -tol
    evidence.append(Evidence("phi_ndz", float(xs[j]), float(ders[j]), "largest derivative on grid"))
    evidence.append(Evidence("phi_ndz", 0.0, d0, "derivative at zero"))

    tail = float(phi.value(grid.hi))
    inf_zero = tail < inf_threshold
    evidence.append(Evidence("phi_inf_zero", float(grid.hi), tail, f"value at grid end vs {inf_threshold:g}"))

    ndz = _with_analytic(ndz, flags, "phi_ndz")
    inf_zero = _with_analytic(inf_zero, flags, "phi_inf_zero")
    return ConditionReport(phi_ndz=ndz, phi_inf_zero=inf_zero, evidence=evidence)


def check_conditions(spec: LossSpec) -> ConditionReport:
    return check_gamma_conditions(spec.gamma).merge(check_phi_conditions(spec.phi))


# ---------------------------------------------------------------------------
# presets and config files
# ---------------------------------------------------------------------------

PRESETS = ("logistic", "coherence", "pairwise-exp", "savage", "sigmoid", "cex")


def preset(name: str, k: int = 3) -> LossSpec:
    """Named losses.

    ``coherence:T``, ``savage:s`` and ``sigmoid:T`` take an optional
    parameter after a colon.  ``savage`` defaults to ``phi = exp(-x)``;
    ``savage:2`` gives ``phi = exp(-2x)``.
    """
    base, _, arg = name.partition(":")
    try:
        param = float(arg) if arg else None
    except ValueError:
        raise ConfigurationError(f"bad preset parameter in {name!r}") from None
    if base == "logistic":
        gamma, phi = GammaSpec(GammaFamily.LOG1P), PhiSpec(PhiFamily.EXP)
    elif base == "coherence":
        t = 1.0 if param is None else param
        gamma = GammaSpec(GammaFamily.SCALED_LOG1P, {"T": t})
        phi = PhiSpec(PhiFamily.SHIFTED_SCALED_EXP, {"shift": 1.0, "T": t})
    elif base == "pairwise-exp":
        gamma, phi = GammaSpec(GammaFamily.IDENTITY), PhiSpec(PhiFamily.EXP)
    elif base == "savage":
        gamma = GammaSpec(GammaFamily.SQUARED_RATIO)
        phi = PhiSpec(PhiFamily.EXP, {"scale": 1.0 if param is None else param})
    elif base == "sigmoid":
        gamma = GammaSpec(GammaFamily.IDENTITY)
        phi = PhiSpec(PhiFamily.SIGMOID, {"T": 1.0 if param is None else param})
    elif base == "cex":
        gamma, phi = GammaSpec(GammaFamily.COUNTEREXAMPLE), PhiSpec(PhiFamily.EXP)
    else:
        raise ConfigurationError(f"unknown loss preset {name!r}; choose from {', '.join(PRESETS)}")
    if param is not None and base in ("logistic", "pairwise-exp", "cex"):
        raise ConfigurationError(f"preset {base!r} takes no parameter")
    return LossSpec(gamma, phi, k, name=name)


def is_counterexample_loss(spec: LossSpec) -> bool:
    return (
        spec.gamma.family is GammaFamily.COUNTEREXAMPLE
        and spec.phi.family is PhiFamily.EXP
        and spec.phi.params["scale"] == 1.0
    )


def parse_loss_config(text: str) -> LossSpec:
    """Parse the ``key = value`` loss config format.

    Recognised keys: ``name``, ``k``, ``gamma.family``, ``phi.family`` and
    ``gamma.<param>`` / ``phi.<param>`` for the family's parameters
    (``gamma.T``; ``phi.scale``, ``phi.shift``, ``phi.T``).  Blank lines and
    ``#`` comments are ignored.
    """
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value

    for required in ("gamma.family", "phi.family", "k"):
        if required not in entries:
            raise ConfigurationError(f"missing required key {required!r}")
    gamma_params, phi_params = {}, {}
    for key, value in entries.items():
        if key in ("gamma.family", "phi.family", "k", "name"):
            continue
        prefix, _, param = key.partition(".")
        if prefix == "gamma" and param:
            gamma_params[param] = value
        elif prefix == "phi" and param:
            phi_params[param] = value
        else:
            raise ConfigurationError(f"unknown key {key!r}")
    try:
        k = int(entries["k"])
    except ValueError:
        raise ConfigurationError(f"k must be an integer, got {entries['k']!r}") from None
    return LossSpec(
        GammaSpec(entries["gamma.family"], gamma_params),
        PhiSpec(entries["phi.family"], phi_params),
        k,
        name=entries.get("name"),
    )


def format_loss_config(spec: LossSpec) -> str:
    lines = []
    if spec.name:
        lines.append(f"name = {spec.name}")
    lines.append(f"k = {spec.k}")
    lines.append(f"gamma.family = {spec.gamma.family.value}")
    lines.extend(f"gamma.{key} = {val!r}" for key, val in sorted(spec.gamma.params.items()))
    lines.append(f"phi.family = {spec.phi.family.value}")
    lines.extend(f"phi.{key} = {val!r}" for key, val in sorted(spec.phi.params.items()))
    return "\n".join(lines) + "\n"
