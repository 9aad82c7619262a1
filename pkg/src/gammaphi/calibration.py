"""Numerical evidence for (or against) classification-calibration.

A loss is calibrated when, for every label distribution ``p`` and every
class ``y`` with ``p_y < max(p)``, forcing the score maximum onto ``y``
strictly raises the best achievable conditional risk.  The difference is
the calibration gap.  :func:`certify` samples the simplex (boundary faces
included, since zero-mass classes are where calibration can break), plus a
fixed set of known-hard probes, and classifies the smallest gap it sees.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np

from . import __version__
from .errors import ConfigurationError, DimensionError, SolverError
from .losses import LossSpec
from .risk import (
    BayesRisk,
    ExtendedScore,
    SolverOptions,
    bayes_and_constrained,
    bayes_conditional_risk,
    constrained_bayes_risk,
    prob_vector,
)

SCHEMA_VERSION = 1
SAMPLING_MODES = ("interior", "boundary_faces", "stratified")
PROBE_RATIOS = (0.51, 0.55, 0.6, 2.0 / 3.0)
INTERIOR_FLOOR = 1e-6


class Verdict(str, Enum):
    CALIBRATED_EVIDENCE = "CalibratedEvidence"
    VIOLATION_FOUND = "ViolationFound"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Tolerances:
    """Thresholds used to turn gaps into a verdict.

    Gaps below ``violation`` count as violations, gaps above ``evidence``
    as calibrated; anything in between is inconclusive.  ``margin`` is how
    far below ``max(p)`` a class must be before its gap is examined.
    """

    violation: float = 1e-4
    evidence: float = 1e-3
    margin: float = 0.05
    max_failure_rate: float = 0.05

    def __post_init__(self):
        if not 0 <= self.violation <= self.evidence:
            raise ConfigurationError("need 0 <= violation tolerance <= evidence tolerance")
        if not 0 <= self.margin < 1:
            raise ConfigurationError("margin must lie in [0, 1)")
        if not 0 <= self.max_failure_rate <= 1:
            raise ConfigurationError("max_failure_rate must lie in [0, 1]")


@dataclass(frozen=True)
class SamplingPlan:
    n: int = 200
    mode: str = "stratified"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError(f"sample count must be >= 1, got {self.n}")
        if self.mode not in SAMPLING_MODES:
            raise ConfigurationError(f"unknown sampling mode {self.mode!r}; choose from {SAMPLING_MODES}")


@dataclass(frozen=True)
class GapRecord:
    p: tuple[float, ...]
    y: int
    bayes: float
    constrained: float
    gap: float
    source: str = "sample"
    bayes_witness: ExtendedScore | None = None
    constrained_witness: ExtendedScore | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": list(self.p),
            "y": self.y,
            "bayes": self.bayes,
            "constrained": self.constrained,
            "gap": self.gap,
            "source": self.source,
            "bayes_witness": None if self.bayes_witness is None else self.bayes_witness.to_dict(),
            "constrained_witness": (
                None if self.constrained_witness is None else self.constrained_witness.to_dict()
            ),
        }


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _interior(rng: np.random.Generator, k: int, n: int) -> np.ndarray:
    out = rng.dirichlet(np.ones(k), size=n)
    bad = out.min(axis=1) < INTERIOR_FLOOR
    while np.any(bad):
        out[bad] = rng.dirichlet(np.ones(k), size=int(bad.sum()))
        bad = out.min(axis=1) < INTERIOR_FLOOR
    return out


def _on_faces(rng: np.random.Generator, k: int, n: int) -> np.ndarray:
    out = np.zeros((n, k))
    if k == 2:
        # the only proper faces of the segment are its endpoints
        for i in range(n):
            out[i, i % 2] = 1.0
        return out
    sizes = range(2, k)
    for i in range(n):
        m = sizes[i % len(sizes)]
        support = rng.choice(k, size=m, replace=False)
        out[i, support] = rng.dirichlet(np.ones(m))
    return out


def sample_simplex(k: int, n: int, mode: str = "stratified", seed: int = 0) -> np.ndarray:
    """Draw ``n`` probability vectors on the ``k``-class simplex, one per row.

    ``interior`` samples uniformly with every entry at least 1e-6.
    ``boundary_faces`` cycles through support sizes ``2..k-1`` and samples
    uniformly on a random face of that size, other entries exactly 0 (for
    ``k == 2`` the faces are the two vertices).  ``stratified`` puts
    ``ceil(n/3)`` points on faces and the rest in the interior.
    """
    if isinstance(k, bool) or int(k) != k or k < 2:
        raise ConfigurationError(f"class count k must be an integer >= 2, got {k!r}")
    if n < 1:
        raise ConfigurationError(f"sample count must be >= 1, got {n}")
    if mode not in SAMPLING_MODES:
        raise ConfigurationError(f"unknown sampling mode {mode!r}; choose from {SAMPLING_MODES}")
    rng = np.random.default_rng(seed)
    if mode == "interior":
        return _interior(rng, k, n)
    if mode == "boundary_faces":
        return _on_faces(rng, k, n)
    n_face = math.ceil(n / 3)
    return np.vstack([_interior(rng, k, n - n_face), _on_faces(rng, k, n_face)])


def probe_points(k: int) -> list[np.ndarray]:
    """The fixed probes ``(r, 1-r, 0, ..., 0)``; class 1 is the one examined."""
    out = []
    for r in PROBE_RATIOS:
        p = np.zeros(k)
        p[0], p[1] = r, 1.0 - r
        out.append(p)
    return out


# ---------------------------------------------------------------------------
# gaps
# ---------------------------------------------------------------------------


def hypothesis_holds(p: np.ndarray, y: int, margin: float) -> bool:
    return bool(p[y] < p.max() - margin)


def _record(p, y, bayes: BayesRisk, constrained: BayesRisk, source: str) -> GapRecord:
    # the constrained optimum is itself a valid unconstrained configuration
    best = bayes if bayes.value <= constrained.value else constrained
    return GapRecord(
        p=tuple(float(x) for x in p),
        y=int(y),
        bayes=best.value,
        constrained=constrained.value,
        gap=constrained.value - best.value,
        source=source,
        bayes_witness=best.witness,
        constrained_witness=constrained.witness,
    )


def calibration_gap(
    p,
    spec: LossSpec,
    y: int,
    opts: SolverOptions | None = None,
    margin: float = 0.05,
) -> GapRecord | None:
    """Constrained minus unconstrained Bayes risk at ``(p, y)``.

    Returns ``None`` when ``p_y`` is not at least ``margin`` below
    ``max(p)``; the gap is only meaningful for such classes.
    """
    p = prob_vector(p, spec.k)
    if not 0 <= y < spec.k:
        raise DimensionError(f"class index {y} outside range({spec.k})")
    if not hypothesis_holds(p, y, margin):
        return None
    opts = opts or SolverOptions()
    return _record(p, y, bayes_conditional_risk(p, spec, opts), constrained_bayes_risk(p, spec, y, opts), "direct")


@dataclass(frozen=True)
class _Task:
    p: tuple[float, ...]
    ys: tuple[int, ...]
    source: str


def _evaluate(task: _Task, spec: LossSpec, opts: SolverOptions) -> tuple[list[GapRecord], list[dict]]:
    p = np.asarray(task.p)
    records, failures = [], []
    try:
        bayes, constrained = bayes_and_constrained(p, spec, task.ys, opts)
    except SolverError as exc:
        return [], [{"p": list(task.p), "y": y, "stage": "bayes", "message": str(exc)} for y in task.ys]
    for y in task.ys:
        result = constrained[y]
        if isinstance(result, SolverError):
            failures.append({"p": list(task.p), "y": y, "stage": "constrained", "message": str(result)})
        else:
            records.append(_record(p, y, bayes, result, task.source))
    return records, failures


def _evaluate_star(args):
    return _evaluate(*args)


@dataclass(frozen=True)
class CalibrationReport:
    spec: LossSpec
    k: int
    seed: int
    sampling: SamplingPlan
    tolerances: Tolerances
    solver: SolverOptions
    records: tuple[GapRecord, ...]
    probes: tuple[dict, ...]
    failures: tuple[dict, ...]
    min_gap: float | None
    verdict: Verdict
    witness: GapRecord | None
    notes: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "artifact_version": __version__,
            "kind": "calibration_report",
            "spec": self.spec.to_dict(),
            "k": self.k,
            "seed": self.seed,
            "sampling": asdict(self.sampling),
            "tolerances": asdict(self.tolerances),
            "solver": asdict(self.solver),
            "min_gap": self.min_gap,
            "verdict": self.verdict.value,
            "witness": None if self.witness is None else self.witness.to_dict(),
            "probes": list(self.probes),
            "diagnostics": {
                "pairs_evaluated": len(self.records) + len(self.failures),
                "solver_failures": list(self.failures),
                "notes": list(self.notes),
            },
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return to_json(self.to_dict())


def to_json(doc: dict) -> str:
    """Deterministic JSON rendering shared by all reports."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _verdict(min_gap: float | None, n_pairs: int, n_failed: int, tol: Tolerances) -> tuple[Verdict, list[str]]:
    notes = []
    if min_gap is not None and min_gap < tol.violation:
        return Verdict.VIOLATION_FOUND, notes
    if n_pairs == 0:
        notes.append("no (p, y) pair satisfied the gap hypothesis")
        return Verdict.INCONCLUSIVE, notes
    if n_failed > tol.max_failure_rate * n_pairs:
        notes.append(f"solver failed on {n_failed} of {n_pairs} pairs")
        return Verdict.INCONCLUSIVE, notes
    if min_gap is None:
        return Verdict.INCONCLUSIVE, notes
    if min_gap > tol.evidence:
        return Verdict.CALIBRATED_EVIDENCE, notes
    notes.append(f"smallest gap {min_gap:.3g} lies between the violation and evidence tolerances")
    return Verdict.INCONCLUSIVE, notes


def certify(
    spec: LossSpec,
    plan: SamplingPlan | None = None,
    tolerances: Tolerances | None = None,
    opts: SolverOptions | None = None,
    workers: int = 1,
) -> CalibrationReport:
    """Sweep sampled ``(p, y)`` pairs and the fixed probes, then classify.

    Results are assembled in sampling order, so the report does not depend
    on ``workers``.
    """
    plan = plan or SamplingPlan()
    tol = tolerances or Tolerances()
    opts = opts or SolverOptions(seed=plan.seed)
    k = spec.k

    tasks: list[_Task] = []
    probes: list[dict] = []
    for p in probe_points(k):
        y = 1
        entry = {"p": p.tolist(), "y": y, "evaluated": hypothesis_holds(p, y, tol.margin)}
        if entry["evaluated"]:
            tasks.append(_Task(tuple(p.tolist()), (y,), "probe"))
        else:
            entry["reason"] = "p_y is within the margin of max(p)"
        probes.append(entry)
    for p in sample_simplex(k, plan.n, plan.mode, plan.seed):
        ys = tuple(y for y in range(k) if hypothesis_holds(p, y, tol.margin))
        if ys:
            tasks.append(_Task(tuple(p.tolist()), ys, "sample"))

    jobs = [(t, spec, opts) for t in tasks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_star, jobs, chunksize=8))
    else:
        results = [_evaluate_star(job) for job in jobs]

    records = [r for recs, _ in results for r in recs]
    failures = [f for _, fails in results for f in fails]
    witness = min(records, key=lambda r: r.gap) if records else None
    min_gap = None if witness is None else witness.gap
    verdict, notes = _verdict(min_gap, len(records) + len(failures), len(failures), tol)
    return CalibrationReport(
        spec=spec,
        k=k,
        seed=plan.seed,
        sampling=plan,
        tolerances=tol,
        solver=opts,
        records=tuple(records),
        probes=tuple(probes),
        failures=tuple(failures),
        min_gap=min_gap,
        verdict=verdict,
        witness=witness,
        notes=tuple(notes),
    )


def summarize(report: CalibrationReport) -> str:
    lines = [
        f"loss: {report.spec.name or 'custom'} (k={report.k})",
        f"pairs evaluated: {len(report.records)} (solver failures: {len(report.failures)})",
        f"min gap: {report.min_gap!r}",
        f"verdict: {report.verdict.value}",
    ]
    if report.witness is not None:
        w = report.witness
        lines.append(f"witness: p={[round(x, 6) for x in w.p]} y={w.y} gap={w.gap:.3g}")
    lines.extend(f"note: {n}" for n in report.notes)
    return "\n".join(lines)


def gaps_by_source(records: Sequence[GapRecord]) -> dict[str, float]:
    """Smallest gap per record source (``sample``/``probe``)."""
    out: dict[str, float] = {}
    for r in records:
        out[r.source] = min(out.get(r.source, math.inf), r.gap)
    return out
