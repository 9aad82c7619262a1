"""Surrogate-risk minimisation on finite instance spaces.

With finitely many instances ("cells"), a score function is just one score
vector per cell, so population risks decompose cell by cell.  Gradient
descent on a calibrated surrogate drives the 0-1 risk of the cell-wise
argmax to the Bayes 0-1 risk.  For the counterexample loss, the divergent
witness sequence approaches the surrogate infimum while its 0-1 risk stays
strictly above the Bayes 0-1 risk.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .counterexample import DEFAULT_T_GRID, divergent_witness
from .errors import ConfigurationError, DimensionError, PreconditionError, SolverError, ValidationError
from .losses import LossSpec, is_counterexample_loss
from .risk import (
    PROB_ATOL,
    SolverOptions,
    bayes_conditional_risk,
    conditional_risk,
    conditional_risk_gradient,
    prob_vector,
)


@dataclass(frozen=True)
class Cell:
    mass: float
    cond: tuple[float, ...]


@dataclass(frozen=True)
class DiscreteDistribution:
    """A finite instance space: cell masses and per-cell label distributions."""

    cells: tuple[Cell, ...]

    def __post_init__(self):
        cells = tuple(c if isinstance(c, Cell) else Cell(*c) for c in self.cells)
        if not cells:
            raise ValidationError("a distribution needs at least one cell")
        k = len(cells[0].cond)
        normalised = []
        for c in cells:
            if len(c.cond) != k:
                raise DimensionError("all cells must have the same number of classes")
            mass = float(c.mass)
            if not (math.isfinite(mass) and mass >= 0):
                raise ValidationError(f"cell mass must be finite and >= 0, got {c.mass!r}")
            cond = prob_vector(c.cond)
            normalised.append(Cell(mass, tuple(cond.tolist())))
        total = sum(c.mass for c in normalised)
        if abs(total - 1.0) > PROB_ATOL:
            raise ValidationError(f"cell masses must sum to 1 (got {total!r})")
        if k < 2:
            raise DimensionError("cells need at least two classes")
        object.__setattr__(self, "cells", tuple(normalised))

    @property
    def k(self) -> int:
        return len(self.cells[0].cond)

    def masses(self) -> np.ndarray:
        return np.array([c.mass for c in self.cells])

    def to_dict(self) -> dict:
        return {"cells": [{"mass": c.mass, "cond": list(c.cond)} for c in self.cells]}

    @classmethod
    def from_dict(cls, doc: dict) -> "DiscreteDistribution":
        try:
            cells = [Cell(cell["mass"], tuple(cell["cond"])) for cell in doc["cells"]]
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"distribution document is malformed: {exc}") from None
        return cls(tuple(cells))

    @classmethod
    def load(cls, path: str | Path) -> "DiscreteDistribution":
        """Read ``{"cells": [{"mass": ..., "cond": [...]}, ...]}`` from a JSON file."""
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(doc)


def random_distribution(k: int, n_cells: int, seed: int = 0) -> DiscreteDistribution:
    """Seeded random distribution; masses and label distributions uniform on their simplices."""
    rng = np.random.default_rng(seed)
    masses = rng.dirichlet(np.ones(n_cells))
    conds = rng.dirichlet(np.ones(k), size=n_cells)
    masses = masses / masses.sum()
    conds = conds / conds.sum(axis=1, keepdims=True)
    # absorb rounding so the masses sum to 1 within the validation tolerance
    masses[-1] = 1.0 - masses[:-1].sum()
    return DiscreteDistribution(tuple(Cell(float(m), tuple(c)) for m, c in zip(masses, conds)))


def bayes_01_risk(d: DiscreteDistribution) -> float:
    return float(sum(c.mass * (1.0 - max(c.cond)) for c in d.cells))


def zero_one_risk(d: DiscreteDistribution, predictions: Sequence[int]) -> float:
    return float(sum(c.mass * (1.0 - c.cond[y]) for c, y in zip(d.cells, predictions)))


def surrogate_risk(d: DiscreteDistribution, spec: LossSpec, scores: Sequence[np.ndarray]) -> float:
    return float(sum(c.mass * conditional_risk(c.cond, spec, v) for c, v in zip(d.cells, scores) if c.mass > 0))


def surrogate_infimum(d: DiscreteDistribution, spec: LossSpec, opts: SolverOptions | None = None) -> float:
    return float(sum(c.mass * bayes_conditional_risk(c.cond, spec, opts).value for c in d.cells if c.mass > 0))


@dataclass(frozen=True)
class Step:
    surrogate_risk: float
    zero_one_risk: float
    per_cell_argmax: tuple[int, ...]
    t: float | None = None


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[Step, ...]
    bayes_01: float
    surrogate_infimum: float | None = None
    scores: tuple[tuple[float, ...], ...] = field(default=())

    def zero_one_regret(self) -> np.ndarray:
        return np.array([s.zero_one_risk for s in self.steps]) - self.bayes_01

    def surrogate_regret(self) -> np.ndarray:
        if self.surrogate_infimum is None:
            raise PreconditionError("trajectory has no surrogate infimum attached")
        return np.array([s.surrogate_risk for s in self.steps]) - self.surrogate_infimum

    def to_csv(self) -> str:
        """Columns ``step, surrogate_risk, zero_one_risk`` (plus ``t`` for witness sequences)."""
        with_t = any(s.t is not None for s in self.steps)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "surrogate_risk", "zero_one_risk"] + (["t"] if with_t else []))
        for i, s in enumerate(self.steps):
            row = [i, repr(s.surrogate_risk), repr(s.zero_one_risk)]
            writer.writerow(row + ([repr(s.t)] if with_t else []))
        return buf.getvalue()


@dataclass(frozen=True)
class DescentOptions:
    """Backtracking (Armijo) line search settings."""

    initial_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 60


def _descent_step(p: np.ndarray, spec: LossSpec, v: np.ndarray, risk: float, opts: DescentOptions):
    g = conditional_risk_gradient(p, spec, v)
    if not np.all(np.isfinite(g)):
        raise SolverError("surrogate gradient is not finite", best_value=risk, best_witness=v)
    sq = float(g @ g)
    if sq == 0.0:
        return v, risk
    step = opts.initial_step
    for _ in range(opts.max_backtracks):
        cand = v - step * g
        if np.all(np.isfinite(cand)):
            new = conditional_risk(p, spec, cand)
            if new <= risk - opts.armijo * step * sq:
                return cand, new
        step *= opts.shrink
    # no step gives sufficient decrease: stationary to working precision
    return v, risk


def surrogate_descent(
    d: DiscreteDistribution,
    spec: LossSpec,
    steps: int,
    opts: DescentOptions | None = None,
) -> Trajectory:
    """Cell-wise gradient descent from all-zero scores.

    The trajectory has ``steps + 1`` entries, the first being the starting
    point.  Predictions are the cell-wise argmax, ties to the lowest index.
    """
    if steps < 1:
        raise ConfigurationError(f"steps must be >= 1, got {steps}")
    if spec.k != d.k:
        raise DimensionError(f"loss has k={spec.k} but the distribution has {d.k} classes")
    opts = opts or DescentOptions()
    conds = [np.asarray(c.cond) for c in d.cells]
    masses = d.masses()
    scores = [np.zeros(d.k) for _ in d.cells]
    risks = [conditional_risk(p, spec, v) for p, v in zip(conds, scores)]
    bayes01 = bayes_01_risk(d)

    def snapshot() -> Step:
        preds = tuple(int(np.argmax(v)) for v in scores)
        sur = float(sum(m * r for m, r in zip(masses, risks) if m > 0))
        return Step(sur, zero_one_risk(d, preds), preds)

    out = [snapshot()]
    for _ in range(steps):
        for i, p in enumerate(conds):
            scores[i], risks[i] = _descent_step(p, spec, scores[i], risks[i], opts)
            if not math.isfinite(risks[i]):
                raise SolverError("surrogate risk diverged", best_value=risks[i], best_witness=scores[i])
        out.append(snapshot())
    return Trajectory(tuple(out), bayes01, scores=tuple(tuple(v.tolist()) for v in scores))


def _is_violating(cond: Sequence[float]) -> bool:
    r = cond[0]
    return (
        len(cond) >= 3
        and 0.5 < r <= 2.0 / 3.0
        and abs(cond[1] - (1.0 - r)) <= PROB_ATOL
        and all(c == 0.0 for c in cond[2:])
    )


def adversarial_sequence(
    d: DiscreteDistribution,
    spec: LossSpec,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    descent_steps: int = 500,
    opts: SolverOptions | None = None,
) -> Trajectory:
    """Scores that approach the surrogate infimum with a persistently wrong argmax.

    Cells with label distribution ``(r, 1-r, 0, ..., 0)``, ``r`` in
    ``(1/2, 2/3]``, get the divergent witness at each ``t``; other cells
    keep the end point of :func:`surrogate_descent`.
    """
    if not is_counterexample_loss(spec):
        raise PreconditionError("the witness sequence is only defined for the counterexample loss")
    if spec.k != d.k:
        raise DimensionError(f"loss has k={spec.k} but the distribution has {d.k} classes")
    violating = [_is_violating(c.cond) for c in d.cells]
    if not any(violating):
        raise PreconditionError("no cell has label distribution (r, 1-r, 0, ..., 0) with r in (1/2, 2/3]")

    fixed = surrogate_descent(d, spec, descent_steps).scores
    steps = []
    for t in t_grid:
        scores = [divergent_witness(d.k, t) if bad else np.asarray(v) for bad, v in zip(violating, fixed)]
        preds = tuple(int(np.argmax(v)) for v in scores)
        steps.append(Step(surrogate_risk(d, spec, scores), zero_one_risk(d, preds), preds, float(t)))
    return Trajectory(tuple(steps), bayes_01_risk(d), surrogate_infimum(d, spec, opts))
