"""Groupoids defined by a map: fiber disintegration, Haar-Jacobians, Markov shifts.

For a finite map ``T: X -> Y`` the relation ``x ~ z iff T(x) == T(z)``
has the fibers of ``T`` as classes.  ``M`` on ``X`` is compatible with a
base measure ``B`` on ``Y`` when ``T_* M = B``; when ``Y = X`` and ``B = M``
this is ordinary ``T``-invariance.  The conditional measures are then the
normalized restrictions of ``M`` to fibers, and the Haar-Jacobian is
``J(z) = M(z) / M([z])``.
"""
from __future__ import annotations

import itertools
from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InputError, ValidationError
from .groupoid import (
    STRUCTURAL_TOL,
    FiniteGroupoid,
    Measure,
    PointSpace,
    _frozen,
    build_fiber_groupoid,
)

INVARIANCE_TOL = 1e-10


def _pushforward_check(G: FiniteGroupoid, M: Measure, codomain: PointSpace, base: Measure, tol: float):
    push = np.zeros(len(codomain))
    for cid, mem in zip(G.class_ids, G.members):
        push[codomain.index(cid)] = M.mass[list(mem)].sum()
    diff = np.abs(push - base.mass)
    j = int(np.argmax(diff))
    if diff[j] > tol:
        raise ValidationError(
            f"measure is not invariant: mass {push[j]!r} maps onto {codomain.label(j)!r}, "
            f"which has base mass {base.mass[j]!r}",
            check="invariance", witness=codomain.label(j), residual=float(diff[j]),
        )


@dataclass(frozen=True, eq=False)
class Disintegration:
    """Conditional measures of ``M`` on the fibers of ``T``.

    ``conditionals[c]`` is the conditional probability on class ``c`` (a
    full-length array, zero off the fiber).  ``uniform_classes`` lists fibers
    of zero ``M``-mass, which receive the uniform conditional.
    """

    groupoid: FiniteGroupoid
    measure: Measure
    conditionals: np.ndarray
    uniform_classes: tuple
    recomposition_residual: float

    def conditional(self, cid) -> Measure:
        return Measure(self.groupoid.space, self.conditionals[self.groupoid.class_index(cid)])

    def jacobian(self) -> np.ndarray:
        """``J(z) = mu^z({z})``."""
        G = self.groupoid
        return self.conditionals[G.class_of, np.arange(G.n_points)]


def disintegrate(T: Mapping | Callable, M: Measure, codomain: PointSpace | None = None,
                 base: Measure | None = None, tol: float = INVARIANCE_TOL) -> Disintegration:
    """Disintegrate ``M`` along the fibers of ``T``.

    Parameters
    ----------
    T
        Map on point labels, as a mapping or callable.
    M
        Measure on the domain.
    codomain, base
        Target space of ``T`` and a measure on it that ``T_* M`` must match.
        Both default to the domain and ``M``.

    Raises
    ------
    ValidationError
        If ``T_* M`` differs from ``base`` by more than ``tol`` on some atom,
        or the recomposition ``int f dM = int int f dmu^x dM(x)`` fails.
    """
    if codomain is None:
        codomain = M.space
        base = M if base is None else base
    elif base is None:
        raise InputError("a base measure on the codomain is required with an explicit codomain")
    if base.space != codomain:
        raise InputError("base measure does not live on the codomain")
    G = build_fiber_groupoid(M.space, T, codomain)
    _pushforward_check(G, M, codomain, base, tol)
    n = G.n_points
    cond = np.zeros((G.n_classes, n))
    uniform = []
    for c, mem in enumerate(G.members):
        idx = list(mem)
        mass = M.mass[idx].sum()
        if mass > 0:
            cond[c, idx] = M.mass[idx] / mass
        else:
            cond[c, idx] = 1.0 / len(idx)
            uniform.append(G.class_ids[c])
    # recompose on point indicators: sum_x M(x) mu^{[x]}(z) = M(z)
    recomposed = M.mass @ cond[G.class_of]
    res = float(np.max(np.abs(recomposed - M.mass)))
    if res > STRUCTURAL_TOL:
        raise ValidationError(f"recomposition fails (residual {res:.3g})", check="recomposition", residual=res)
    return Disintegration(G, M, _frozen(cond), tuple(uniform), res)


@dataclass(frozen=True, eq=False)
class HaarJacobian:
    groupoid: FiniteGroupoid
    values: np.ndarray
    uniform_classes: tuple = ()

    def fiber_sums(self) -> np.ndarray:
        return self.groupoid.class_sum(self.values)

    def as_dict(self) -> dict:
        return {p: float(v) for p, v in zip(self.groupoid.space, self.values)}


def haar_jacobian(T: Mapping | Callable, M: Measure, codomain: PointSpace | None = None,
                  base: Measure | None = None, tol: float = INVARIANCE_TOL) -> HaarJacobian:
    """Haar-Jacobian ``J(z) = mu^z({z})`` on the fibers of ``T``; sums to 1 on every fiber."""
    dis = disintegrate(T, M, codomain, base, tol)
    J = HaarJacobian(dis.groupoid, _frozen(dis.jacobian()), dis.uniform_classes)
    bad = np.abs(J.fiber_sums() - 1.0)
    if np.any(bad > STRUCTURAL_TOL):
        c = int(np.argmax(bad))
        raise ValidationError(f"Jacobian does not sum to 1 on fiber {J.groupoid.class_ids[c]!r}",
                              check="fiber_sum", witness=J.groupoid.class_ids[c], residual=float(bad[c]))
    return J


def jacobian_integral_residual(J: HaarJacobian, M: Measure, f) -> float:
    """``|int f dM - int sum_{z ~ y} J(z) f(z) dM(y)|``."""
    G = J.groupoid
    fv = np.asarray(f, dtype=float)
    inner = G.class_sum(J.values * fv)[G.class_of]
    return abs(float(M.mass @ fv) - float(M.mass @ inner))


@dataclass(frozen=True, eq=False)
class MarkovSpec:
    """Row-stochastic transition table with a stationary vector.

    The stationary vector is computed by fixed-point iteration of the lazy
    chain ``(I + P) / 2`` when not supplied.
    """

    transition: np.ndarray
    stationary: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise InputError("transition must be a nonempty square table")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise InputError("transition entries must be finite and nonnegative")
        rows = np.abs(P.sum(axis=1) - 1.0)
        if np.any(rows > STRUCTURAL_TOL):
            raise InputError(f"transition row {int(np.argmax(rows))} does not sum to 1")
        pi = stationary_distribution(P) if self.stationary is None else np.asarray(self.stationary, dtype=float)
        if pi.shape != (P.shape[0],) or np.any(pi < 0) or abs(pi.sum() - 1.0) > STRUCTURAL_TOL:
            raise InputError("stationary vector must be a probability of matching length")
        res = float(np.max(np.abs(pi @ P - pi)))
        if res > STRUCTURAL_TOL:
            raise ValidationError(f"stationary vector is not invariant (residual {res:.3g})",
                                  check="stationary", residual=res)
        object.__setattr__(self, "transition", _frozen(P))
        object.__setattr__(self, "stationary", _frozen(pi))

    @property
    def states(self) -> int:
        return self.transition.shape[0]


def stationary_distribution(P: np.ndarray, tol: float = 1e-15, max_iter: int = 1_000_000) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    lazy = 0.5 * (np.eye(len(P)) + P)
    pi = np.full(len(P), 1.0 / len(P))
    for it in range(max_iter):
        nxt = pi @ lazy
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < tol:
            # transient states keep a residue of order tol / (1 - rate); drop it
            nxt = np.where(nxt < 1e-12, 0.0, nxt)
            return nxt / nxt.sum()
        pi = nxt
    raise ConvergenceError("stationary iteration did not converge", residual=float(np.max(np.abs(nxt - pi))),
                           iterations=max_iter)


def markov_jacobian(spec: MarkovSpec) -> np.ndarray:
    """``J(x0, x1) = pi(x0) P(x0, x1) / pi(x1)``; columns sum to 1."""
    pi = spec.stationary
    if np.any(pi <= 0):
        raise InputError(f"state {int(np.argmin(pi))} has zero stationary mass")
    return pi[:, None] * spec.transition / pi[None, :]


def cylinder_masses(spec: MarkovSpec, n: int) -> np.ndarray:
    """``M([x_0 .. x_{n-1}])`` as a depth-``n`` table."""
    if n < 1:
        raise InputError("cylinder length must be at least 1")
    out = spec.stationary
    for _ in range(n - 1):
        out = out[..., None] * spec.transition[(None,) * (out.ndim - 1)]
    return out


def cylinder_ratio_jacobian(spec: MarkovSpec, n: int) -> np.ndarray:
    """Literal ratios ``M([x_0..x_n]) / M([x_1..x_n])`` (NaN where the denominator vanishes)."""
    num = cylinder_masses(spec, n + 1)
    den = cylinder_masses(spec, n)[None, ...]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def _xlogy_sum(w: np.ndarray, y: np.ndarray) -> float:
    mask = w > 0
    return float(np.sum(w[mask] * np.log(y[mask])))


def ks_entropy_via_jacobian(spec: MarkovSpec) -> float:
    """``-int log J dM = -sum pi(x0) P(x0, x1) log J(x0, x1)``, with ``0 log 0 = 0``."""
    w = spec.stationary[:, None] * spec.transition
    return -_xlogy_sum(w, markov_jacobian(spec))


def markov_entropy_rate(spec: MarkovSpec) -> float:
    """``-sum pi_i P_ij log P_ij``."""
    w = spec.stationary[:, None] * spec.transition
    return -_xlogy_sum(w, spec.transition)


@dataclass(frozen=True, eq=False)
class CylinderShift:
    """Depth-``n`` Markov cylinders with the tail map onto depth-``(n-1)`` cylinders."""

    space: PointSpace
    tails: PointSpace
    measure: Measure
    base: Measure

    @staticmethod
    def tail(word: tuple) -> tuple:
        return word[1:]


def markov_cylinder_shift(spec: MarkovSpec, n: int) -> CylinderShift:
    if n < 2:
        raise InputError("cylinder depth must be at least 2")
    words = list(itertools.product(range(spec.states), repeat=n))
    tails = list(itertools.product(range(spec.states), repeat=n - 1))
    return CylinderShift(PointSpace(tuple(words)), PointSpace(tuple(tails)),
                         Measure(PointSpace(tuple(words)), cylinder_masses(spec, n).reshape(-1)),
                         Measure(PointSpace(tuple(tails)), cylinder_masses(spec, n - 1).reshape(-1)))


def markov_haar_invariance_residual(spec: MarkovSpec, n: int) -> float:
    """Haar-invariance of the Markov measure with Jacobian ``J`` on depth-``n`` cylinders.

    Returns the larger of ``max_w |M(w) - J(w_0, w_1) M(sigma w)|`` (the
    identity tested on cylinder indicators) and the gap between ``J`` and the
    fiber Jacobian recovered by :func:`haar_jacobian`.
    """
    cs = markov_cylinder_shift(spec, n)
    J = markov_jacobian(spec)
    words = np.array(cs.space.points)
    Jw = J[words[:, 0], words[:, 1]]
    tails = np.array([cs.tails.index(w[1:]) for w in cs.space.points])
    r1 = float(np.max(np.abs(cs.measure.mass - Jw * cs.base.mass[tails])))
    fib = haar_jacobian(cs.tail, cs.measure, cs.tails, cs.base)
    charged = cs.base.mass[tails] > 0
    r2 = float(np.max(np.abs(fib.values - Jw)[charged], initial=0.0))
    return max(r1, r2)


def random_markov(rng: np.random.Generator, d: int) -> MarkovSpec:
    """Random chain with strictly positive transitions (hence aperiodic)."""
    P = rng.random((d, d)) + 0.05
    return MarkovSpec(P / P.sum(axis=1, keepdims=True))
