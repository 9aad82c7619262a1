"""Conditional risks and conditional Bayes risks of Gamma-Phi losses.

The conditional risk at a label distribution ``p`` is
``C_p(v) = sum_y p_y L_y(v)``.  Its infimum over finite score vectors is
usually approached only along sequences where some scores run off to
``-inf``.  Such limits are represented exactly by :class:`ExtendedScore`:
a top block of finite scores (the active classes) and optional lower
blocks, each infinitely far below the previous one.  Any class that is not
listed sits in a final floor block where all scores are equal.

The Bayes-risk solvers enumerate block structures over the classes sorted
by decreasing probability (sorting scores to agree with ``p`` never
increases risk, so only contiguous blocks of that order need checking) and
minimise each block's finite scores with a multi-start bounded
quasi-Newton search.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionError, SolverError, ValidationError
from .losses import LossSpec, loss_components, loss_jacobian, score_vector

PROB_ATOL = 1e-12


def prob_vector(p, k: int | None = None) -> np.ndarray:
    """Validate a point of the probability simplex (boundary allowed)."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"probability vector must be 1-D, got shape {arr.shape}")
    if k is not None and arr.shape[0] != k:
        raise DimensionError(f"probability vector has length {arr.shape[0]}, expected {k}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError("probability vector entries must be finite and >= 0")
    if abs(arr.sum() - 1.0) > PROB_ATOL:
        raise ValidationError(f"probability vector must sum to 1 (got {arr.sum()!r})")
    return arr


def descending_order(p) -> np.ndarray:
    """Indices sorting ``p`` into non-increasing order, ties by index."""
    return np.argsort(-np.asarray(p, dtype=float), kind="stable")


def check_permutation(sigma, k: int | None = None) -> np.ndarray:
    sig = np.asarray(sigma)
    if sig.ndim != 1 or not np.issubdtype(sig.dtype, np.integer):
        raise ValidationError("permutation must be a 1-D integer array")
    n = sig.shape[0] if k is None else k
    if sig.shape[0] != n or not np.array_equal(np.sort(sig), np.arange(n)):
        raise ValidationError(f"{sig.tolist()} is not a permutation of range({n})")
    return sig


def apply_permutation(x, sigma) -> np.ndarray:
    """Return ``out`` with ``out[j] = x[sigma[j]]``."""
    arr = np.asarray(x)
    return arr[check_permutation(sigma, arr.shape[0])]


def compose(sigma, tau) -> np.ndarray:
    """The permutation ``j -> sigma[tau[j]]``.

    Note ``apply_permutation(apply_permutation(x, tau), sigma)`` equals
    ``apply_permutation(x, compose(tau, sigma))``.
    """
    sig = check_permutation(sigma)
    return sig[check_permutation(tau, sig.shape[0])]


def transposition(k: int, i: int, j: int) -> np.ndarray:
    sigma = np.arange(k)
    sigma[i], sigma[j] = j, i
    return sigma


def _weighted(p: np.ndarray, losses: np.ndarray) -> float:
    # classes with zero mass contribute nothing, even at infinite loss
    mask = p > 0
    return float(np.sum(p[mask] * losses[mask]))


def conditional_risk(p, spec: LossSpec, v) -> float:
    p = prob_vector(p, spec.k)
    return _weighted(p, loss_components(spec, v))


def conditional_risk_gradient(p, spec: LossSpec, v) -> np.ndarray:
    """Gradient of ``C_p`` in ``v``; its components sum to zero."""
    p = prob_vector(p, spec.k)
    return loss_jacobian(spec, v).T @ p


# ---------------------------------------------------------------------------
# extended scores
# ---------------------------------------------------------------------------


def _as_index_tuple(indices) -> tuple[int, ...]:
    return tuple(int(i) for i in indices)


@dataclass(frozen=True)
class ExtendedScore:
    """Limit of a score sequence in which some coordinates diverge to ``-inf``.

    ``active``/``alpha`` give the finite top block.  ``lower`` is a sequence
    of further ``(indices, alpha)`` blocks, each infinitely below the one
    before it.  Classes listed nowhere share one floor block at equal score.
    """

    active: tuple[int, ...]
    alpha: tuple[float, ...]
    lower: tuple[tuple[tuple[int, ...], tuple[float, ...]], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "active", _as_index_tuple(self.active))
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(
            self,
            "lower",
            tuple((_as_index_tuple(idx), tuple(float(a) for a in al)) for idx, al in self.lower),
        )
        blocks = [(self.active, self.alpha), *self.lower]
        seen: set[int] = set()
        for idx, al in blocks:
            if len(idx) == 0:
                raise ValidationError("extended score blocks must be nonempty")
            if len(idx) != len(al):
                raise ValidationError("each block needs one alpha per index")
            if not all(math.isfinite(a) for a in al):
                raise ValidationError("alpha entries must be finite")
            if seen.intersection(idx) or len(set(idx)) != len(idx):
                raise ValidationError("extended score blocks must be disjoint")
            seen.update(idx)

    @property
    def ell(self) -> int:
        return len(self.active)

    def blocks(self, k: int) -> list[tuple[tuple[int, ...], tuple[float, ...]]]:
        """All blocks top to bottom, including the implicit floor block."""
        listed = [(self.active, self.alpha), *self.lower]
        used = {i for idx, _ in listed for i in idx}
        if any(i < 0 or i >= k for i in used):
            raise DimensionError(f"extended score refers to classes outside range({k})")
        floor = tuple(i for i in range(k) if i not in used)
        if floor:
            listed.append((floor, (0.0,) * len(floor)))
        return listed

    def canonical(self) -> "ExtendedScore":
        """Shift every block so its maximum is 0."""

        def shift(al):
            top = max(al)
            return tuple(a - top for a in al)

        return ExtendedScore(self.active, shift(self.alpha), tuple((idx, shift(al)) for idx, al in self.lower))

    def at_depth(self, k: int, depth: float) -> np.ndarray:
        """A finite member of the sequence: block ``m`` is lowered by ``m * depth``."""
        v = np.empty(k)
        for m, (idx, al) in enumerate(self.blocks(k)):
            v[list(idx)] = np.asarray(al) - m * depth
        return v

    def to_dict(self) -> dict:
        return {
            "active": list(self.active),
            "alpha": list(self.alpha),
            "lower": [{"indices": list(idx), "alpha": list(al)} for idx, al in self.lower],
        }


@dataclass(frozen=True)
class RiskDecomposition:
    """Limiting risk split as ``S * reduced_risk + A``.

    ``S`` is the mass of the active classes, ``q`` the renormalised
    distribution on them (``None`` when ``S == 0``), ``reduced_risk`` the
    conditional risk of ``q`` at the active scores and ``A`` the
    contribution of all other classes.  ``A`` (and the total) may be
    ``+inf``.
    """

    S: float
    q: tuple[float, ...] | None
    reduced_risk: float
    A: float

    @property
    def total(self) -> float:
        if math.isinf(self.A):
            return math.inf
        return self.S * self.reduced_risk + self.A


def _offset(spec: LossSpec, above: int, below: int) -> float:
    """Constant part of the phi-sum for a class in a block.

    Higher blocks contribute ``phi(-inf)`` each, lower blocks ``phi(+inf)``.
    """
    total = 0.0
    if above:
        total += above * spec.phi.sup
    if below:
        total += below * spec.phi.inf
    return total


def _block_losses(spec: LossSpec, alpha: np.ndarray, offset: float) -> np.ndarray:
    if math.isinf(offset):
        return np.full(alpha.shape[0], spec.gamma.sup)
    diff = alpha[:, None] - alpha[None, :]
    terms = spec.phi.value(diff)
    np.fill_diagonal(terms, 0.0)
    return spec.gamma.value(offset + terms.sum(axis=1))


def extended_risk(p, spec: LossSpec, e: ExtendedScore) -> RiskDecomposition:
    """Exact limiting conditional risk of the sequence described by ``e``."""
    p = prob_vector(p, spec.k)
    k = spec.k
    above = 0
    S, q, reduced, A = 0.0, None, 0.0, 0.0
    for m, (idx, al) in enumerate(e.blocks(k)):
        idx_arr = np.asarray(idx)
        below = k - above - len(idx)
        losses = _block_losses(spec, np.asarray(al, dtype=float), _offset(spec, above, below))
        weights = p[idx_arr]
        if m == 0:
            S = float(weights.sum())
            if S > 0:
                q_arr = weights / S
                q = tuple(float(x) for x in q_arr)
                reduced = _weighted(q_arr, losses)
        else:
            A += _weighted(weights, losses)
        above += len(idx)
    return RiskDecomposition(S=S, q=q, reduced_risk=reduced, A=A)


# ---------------------------------------------------------------------------
# Bayes-risk search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverOptions:
    seed: int = 0
    n_random_starts: int = 3
    random_scale: float = 3.0
    maxiter: int = 5000
    ftol: float = 1e-10
    gtol: float = 1e-10


class BayesRisk(NamedTuple):
    value: float
    witness: ExtendedScore


def _block_objective(spec: LossSpec, weights: np.ndarray, offset: float):
    """Value and gradient of a block's risk in the free scores ``alpha[1:]``."""
    live = weights > 0
    gamma, phi = spec.gamma, spec.phi

    def fun(x: np.ndarray) -> tuple[float, np.ndarray]:
        alpha = np.concatenate(([0.0], x))
        diff = alpha[:, None] - alpha[None, :]
        terms = phi._value(diff)
        np.fill_diagonal(terms, 0.0)
        sums = offset + terms.sum(axis=1)
        losses = gamma._value(sums)
        value = float(np.sum(weights[live] * losses[live]))
        if not math.isfinite(value):
            return math.inf, np.zeros_like(x)
        outer = np.where(live, weights * gamma._deriv(sums), 0.0)
        dphi = phi._deriv(diff)
        np.fill_diagonal(dphi, 0.0)
        grad = outer * dphi.sum(axis=1) - dphi.T @ outer
        return value, grad[1:]

    return fun


def _minimize_block(spec: LossSpec, weights: np.ndarray, offset: float, opts: SolverOptions):
    """Minimise one block's risk with its first member pinned at the top (0)."""
    m = weights.shape[0]
    if not np.any(weights > 0):
        return 0.0, np.zeros(m)
    if math.isinf(offset):
        return _weighted(weights, np.full(m, spec.gamma.sup)), np.zeros(m)
    if m == 1:
        return float(weights[0] * spec.gamma.value(offset)), np.zeros(1)

    fun = _block_objective(spec, weights, offset)
    rng = np.random.default_rng(opts.seed)
    starts = [np.zeros(m - 1), -np.arange(1.0, m)]
    starts += [rng.uniform(-opts.random_scale, 0.0, m - 1) for _ in range(opts.n_random_starts)]

    with np.errstate(over="ignore", invalid="ignore"):
        return _multistart(fun, starts, opts)


def _multistart(fun, starts: list[np.ndarray], opts: SolverOptions) -> tuple[float, np.ndarray]:
    bounds = [(None, 0.0)] * starts[0].shape[0]
    best_val, best_x, converged = math.inf, starts[0], False
    for x0 in starts:
        res = minimize(
            fun,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": opts.maxiter, "ftol": opts.ftol, "gtol": opts.gtol},
        )
        x = np.minimum(res.x, 0.0)
        val = fun(x)[0]
        converged = converged or bool(res.success)
        if val < best_val:
            best_val, best_x = val, x

    if not converged:
        res = minimize(
            lambda x: fun(np.minimum(x, 0.0))[0],
            best_x,
            method="Nelder-Mead",
            options={"maxiter": opts.maxiter, "xatol": 1e-10, "fatol": opts.ftol},
        )
        x = np.minimum(res.x, 0.0)
        val = fun(x)[0]
        if val < best_val:
            best_val, best_x = val, x
        if not res.success:
            raise SolverError(
                f"block search did not converge within {opts.maxiter} iterations",
                best_value=best_val,
                best_witness=np.concatenate(([0.0], best_x)),
            )
    return best_val, np.concatenate(([0.0], best_x))


def _search(
    p: np.ndarray,
    spec: LossSpec,
    order: Sequence[int],
    opts: SolverOptions,
    cache: dict | None = None,
) -> BayesRisk:
    """Best block structure over contiguous splits of ``order``.

    The first class of every block is pinned at that block's maximum.
    ``cache`` may be shared between searches at the same ``p``.
    """
    k = len(order)
    order = [int(i) for i in order]
    cache = {} if cache is None else cache

    def segment(start: int, stop: int) -> tuple[float, np.ndarray]:
        idx = tuple(order[start:stop])
        key = (idx, start, k - stop)
        if key not in cache:
            offset = _offset(spec, start, k - stop)
            cache[key] = _minimize_block(spec, p[list(idx)], offset, opts)
        return cache[key]

    best_val, best_blocks = math.inf, None
    for cuts in itertools.product((False, True), repeat=k - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [k]
        pieces = list(zip(bounds[:-1], bounds[1:]))
        # lower blocks first: with unbounded phi they are often infinite, which
        # makes the expensive top-block search unnecessary
        total = 0.0
        for start, stop in reversed(pieces):
            total += segment(start, stop)[0]
            if math.isinf(total):
                break
        if total < best_val:
            best_val, best_blocks = total, pieces

    if best_blocks is None:
        # every structure is infinite; the all-equal vector is a valid witness
        return BayesRisk(math.inf, ExtendedScore(tuple(order), (0.0,) * k))
    blocks = [(tuple(order[a:b]), tuple(segment(a, b)[1])) for a, b in best_blocks]
    witness = ExtendedScore(blocks[0][0], blocks[0][1], tuple(blocks[1:]))
    return BayesRisk(best_val, witness)


def bayes_conditional_risk(p, spec: LossSpec, opts: SolverOptions | None = None) -> BayesRisk:
    """Conditional Bayes risk ``inf_v C_p(v)`` and a limit configuration attaining it."""
    p = prob_vector(p, spec.k)
    return _search(p, spec, descending_order(p), opts or SolverOptions())


def constrained_bayes_risk(p, spec: LossSpec, y: int, opts: SolverOptions | None = None) -> BayesRisk:
    """Infimum of ``C_p(v)`` over score vectors whose maximum is at class ``y``."""
    p = prob_vector(p, spec.k)
    if not 0 <= y < spec.k:
        raise DimensionError(f"class index {y} outside range({spec.k})")
    return _search(p, spec, _constrained_order(p, y), opts or SolverOptions())


def _constrained_order(p: np.ndarray, y: int) -> list[int]:
    return [y, *(int(j) for j in descending_order(p) if j != y)]


def bayes_and_constrained(
    p, spec: LossSpec, ys: Sequence[int], opts: SolverOptions | None = None
) -> tuple[BayesRisk, dict[int, BayesRisk | SolverError]]:
    """Unconstrained and per-class constrained Bayes risks at one ``p``.

    Block minimisations common to the searches are done once.  A solver
    failure for one class is returned in place of its result; a failure of
    the unconstrained search is raised.
    """
    p = prob_vector(p, spec.k)
    opts = opts or SolverOptions()
    cache: dict = {}
    bayes = _search(p, spec, descending_order(p), opts, cache)
    out: dict[int, BayesRisk | SolverError] = {}
    for y in ys:
        if not 0 <= y < spec.k:
            raise DimensionError(f"class index {y} outside range({spec.k})")
        try:
            out[int(y)] = _search(p, spec, _constrained_order(p, y), opts, cache)
        except SolverError as exc:
            out[int(y)] = exc
    return bayes, out
