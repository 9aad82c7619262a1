"""A Gamma-Phi loss that satisfies every condition except a positive gamma'.

The loss pairs ``phi(x) = exp(-x)`` with the piecewise quadratic

    gamma(x) = 1 - (x - 1)^2        for x < 1
    gamma(x) = 2 (x - 1)^2 + 1      for x >= 1

which is strictly increasing but flat at ``x = 1``.  At the label
distribution ``p = (r, 1-r, 0, ..., 0)`` the scores
``w_t = (0, 1/t, -t, ..., -t)`` rank the less likely class first, yet their
risk converges to the Bayes risk.  So the loss is not calibrated.

The one-dimensional profile ``F(x) = r gamma(phi(x)) + (1-r) gamma(phi(-x))``
is the risk restricted to the top two classes with score difference ``x``.
For ``r`` in ``[1/3, 2/3]`` it has a unique minimiser at 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from . import __version__
from .calibration import SCHEMA_VERSION, to_json
from .errors import ConfigurationError, DomainError
from .losses import GammaFamily, GammaSpec, LossSpec, PhiFamily, PhiSpec
from .risk import SolverOptions, bayes_conditional_risk, conditional_risk, constrained_bayes_risk

DEFAULT_T_GRID = (1.0, 2.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0)
PROFILE_GRID = (-5.0, 5.0, 2001)
ZERO_GAP_TOL = 1e-4
ROOT_AT_ZERO_TOL = 1e-12

_GAMMA = GammaSpec(GammaFamily.COUNTEREXAMPLE)
_PHI = PhiSpec(PhiFamily.EXP)


def counterexample_loss(k: int) -> LossSpec:
    return LossSpec(_GAMMA, _PHI, k, name="cex")


def _check_r(r: float) -> float:
    r = float(r)
    if not 0.0 < r < 1.0:
        raise DomainError(f"r must lie in (0, 1), got {r}")
    return r


def f_profile(r: float, x):
    """``F(x) = r gamma(exp(-x)) + (1-r) gamma(exp(x))``; scalars or arrays."""
    r = _check_r(r)
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = r * _GAMMA.value(np.exp(-x)) + (1.0 - r) * _GAMMA.value(np.exp(x))
    return float(out) if np.ndim(out) == 0 else out


def _g_plus(r: float, x):
    a, b = np.exp(-x), np.exp(x)
    return 2.0 * r * (a - 1.0) * a + 4.0 * (1.0 - r) * (b - 1.0) * b


def _g_minus(r: float, x):
    a, b = np.exp(-x), np.exp(x)
    return -4.0 * r * (a - 1.0) * a - 2.0 * (1.0 - r) * (b - 1.0) * b


def f_derivative(r: float, x):
    """Closed-form ``F'(x)``: one expression for ``x > 0``, one for ``x < 0``, 0 at 0."""
    r = _check_r(r)
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(x > 0, _g_plus(r, x), np.where(x < 0, _g_minus(r, x), 0.0))
    return float(out) if np.ndim(out) == 0 else out


def g_zero(r: float, side: str):
    """The nonzero stationary point of ``F`` on one side of 0, if any.

    ``side="plus"``: ``(1/3) ln(r / (2(1-r)))``, which is positive iff
    ``r > 2/3``.  ``side="minus"``: ``(1/3) ln(2r / (1-r))``, negative iff
    ``r < 1/3``.  Returns ``None`` when the point falls on the wrong side
    or at 0 (within ``ROOT_AT_ZERO_TOL``, so that ``r = 2/3`` and
    ``r = 1/3`` count as boundary cases despite rounding).
    """
    r = _check_r(r)
    if side == "plus":
        x = math.log(r / (2.0 * (1.0 - r))) / 3.0
        return x if x > ROOT_AT_ZERO_TOL else None
    if side == "minus":
        x = math.log(2.0 * r / (1.0 - r)) / 3.0
        return x if x < -ROOT_AT_ZERO_TOL else None
    raise ConfigurationError(f"side must be 'plus' or 'minus', got {side!r}")


def divergent_witness(k: int, t: float) -> np.ndarray:
    """``(0, 1/t, -t, ..., -t)``: class 1 holds the strict maximum."""
    if isinstance(k, bool) or int(k) != k or k < 2:
        raise ConfigurationError(f"class count k must be an integer >= 2, got {k!r}")
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f"t must be a positive real, got {t}")
    w = np.full(int(k), -float(t))
    w[0], w[1] = 0.0, 1.0 / t
    return w


def violating_distribution(r: float, k: int) -> np.ndarray:
    p = np.zeros(k)
    p[0], p[1] = r, 1.0 - r
    return p


@dataclass(frozen=True)
class CexParams:
    """Inputs of :func:`verify_counterexample`.

    The construction is claimed for ``r`` in ``(1/2, 2/3]`` and ``k >= 3``.
    Other values in ``(0, 1)`` and ``k = 2`` are accepted so that the
    verification can show where the claim stops holding.
    """

    r: float = 0.6
    k: int = 3
    t_grid: tuple[float, ...] = DEFAULT_T_GRID

    def __post_init__(self):
        _check_r(self.r)
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 2:
            raise ConfigurationError(f"class count k must be an integer >= 2, got {self.k!r}")
        grid = tuple(float(t) for t in self.t_grid)
        if not grid or any(not (math.isfinite(t) and t > 0) for t in grid):
            raise ConfigurationError("t_grid must be a nonempty list of positive reals")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("t_grid must be strictly increasing")
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "t_grid", grid)

    @property
    def in_claimed_range(self) -> bool:
        return 0.5 < self.r <= 2.0 / 3.0 and self.k >= 3


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class VerificationReport:
    params: CexParams
    tol: float
    p: tuple[float, ...]
    bayes: float
    constrained: float
    rows: tuple[dict, ...]
    checks: tuple[Check, ...]
    notes: tuple[str, ...] = field(default=())

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed_checks(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "artifact_version": __version__,
            "kind": "counterexample_verification",
            "spec": counterexample_loss(self.params.k).to_dict(),
            "params": asdict(self.params),
            "tol": self.tol,
            "p": list(self.p),
            "bayes": self.bayes,
            "constrained_at_class_1": self.constrained,
            "rows": list(self.rows),
            "checks": [asdict(c) for c in self.checks],
            "passed": self.passed,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return to_json(self.to_dict())


def _unique_minimum_at_zero(r: float) -> tuple[bool, str]:
    lo, hi, n = PROFILE_GRID
    xs = np.linspace(lo, hi, n)
    xs[n // 2] = 0.0
    fx = f_profile(r, xs)
    i = int(np.argmin(fx))
    others = np.delete(fx, n // 2)
    ok = i == n // 2 and bool(np.all(others > fx[n // 2]))
    return ok, f"grid minimum F({xs[i]:.4g}) = {fx[i]:.12g}; F(0) = {fx[n // 2]:.12g}"


def verify_counterexample(
    params: CexParams, tol: float = 1e-2, opts: SolverOptions | None = None
) -> VerificationReport:
    """Check the divergent-witness construction numerically.

    Checks, in order: the parameters lie in the claimed range; the risk of
    ``w_t`` approaches the Bayes risk monotonically and ends within
    ``tol``; ``w_t`` ranks class 1 first while ``p`` ranks class 0 first;
    ``F`` has its unique grid minimum at 0; forcing class 1 to the top does
    not raise the Bayes risk (the calibration failure itself).
    """
    if not (math.isfinite(tol) and tol > 0):
        raise ConfigurationError(f"tol must be a positive real, got {tol}")
    opts = opts or SolverOptions()
    r, k = params.r, params.k
    spec = counterexample_loss(k)
    p = violating_distribution(r, k)
    bayes = bayes_conditional_risk(p, spec, opts).value
    constrained = constrained_bayes_risk(p, spec, 1, opts).value

    rows = []
    for t in params.t_grid:
        w = divergent_witness(k, t)
        risk = conditional_risk(p, spec, w)
        rows.append({"t": t, "risk": risk, "gap": abs(risk - bayes), "argmax": int(np.argmax(w))})

    checks, notes = [], []
    if params.in_claimed_range:
        checks.append(Check("parameters", True, f"r = {r} in (1/2, 2/3], k = {k} >= 3"))
    else:
        reasons = []
        if not 0.5 < r <= 2.0 / 3.0:
            reasons.append(f"r = {r} outside (1/2, 2/3]")
        if k < 3:
            reasons.append("k = 2 leaves no zero-mass class for the witness to push down")
        checks.append(Check("parameters", False, "; ".join(reasons)))
    if k == 2:
        notes.append(
            "binary case: the Bayes risk is F's minimum over the score difference, and "
            f"forcing class 1 on top gives {constrained:.12g} against {bayes:.12g}; "
            "the witness degenerates to a score tie in the limit"
        )

    gaps = [row["gap"] for row in rows]
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    checks.append(
        Check(
            "convergence",
            decreasing and gaps[-1] < tol,
            f"|C_p(w_t) - C_p*| = {gaps[-1]:.3g} at t = {params.t_grid[-1]:g} "
            f"(tol {tol:g}); strictly decreasing: {decreasing}",
        )
    )
    argmax_p = int(np.argmax(p))
    wrong_top = all(row["argmax"] == 1 for row in rows) and argmax_p == 0
    checks.append(Check("argmax", wrong_top, f"argmax p = {argmax_p}; argmax w_t = 1 for every t: {wrong_top}"))
    ok, detail = _unique_minimum_at_zero(r)
    checks.append(Check("unique_minimum", ok, detail))
    zero_gap = constrained - bayes < ZERO_GAP_TOL
    checks.append(
        Check(
            "zero_gap",
            zero_gap,
            f"constrained risk with class 1 on top {constrained:.12g} vs Bayes risk {bayes:.12g}",
        )
    )
    return VerificationReport(
        params=params,
        tol=tol,
        p=tuple(p.tolist()),
        bayes=bayes,
        constrained=constrained,
        rows=tuple(rows),
        checks=tuple(checks),
        notes=tuple(notes),
    )


def risk_table_csv(report: VerificationReport) -> str:
    """Columns ``t, risk``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "risk"])
    for row in report.rows:
        writer.writerow([repr(row["t"]), repr(row["risk"])])
    return buf.getvalue()


def profile_table_csv(r: float, xs: Sequence[float] | None = None) -> str:
    """Columns ``x, F, Fprime`` on ``xs`` (default 2001 points in [-5, 5])."""
    if xs is None:
        xs = np.linspace(*PROFILE_GRID)
    xs = np.asarray(xs, dtype=float)
    fx, dfx = np.atleast_1d(f_profile(r, xs)), np.atleast_1d(f_derivative(r, xs))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "F", "Fprime"])
    for row in zip(xs.tolist(), fx.tolist(), dfx.tolist()):
        writer.writerow([repr(v) for v in row])
    return buf.getvalue()
