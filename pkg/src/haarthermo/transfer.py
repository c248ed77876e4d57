"""The transfer operator ``H_U`` of a Haar system and Haar-invariant probabilities.

A Haar system here is a finite groupoid together with a probability
transverse function ``nu_hat``.  For a potential ``U``,

    H_U(f)(y) = sum_{x in [y]} exp(U(x)) f(x) nu_hat(x),

which is constant on classes.  ``V`` is Haar-normalized when ``H_V(1) == 1``.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import InputError, NotNormalizedError, ValidationError
from .groupoid import (
    ITERATIVE_TOL,
    STRUCTURAL_TOL,
    FiniteGroupoid,
    Measure,
    ModularFunction,
    Potential,
    TransverseFunction,
    check_same_groupoid,
    point_values,
)

HAAR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ClassFunction:
    """A function on points that is constant along classes, stored per class."""

    groupoid: FiniteGroupoid
    values: np.ndarray

    def lift(self) -> np.ndarray:
        return self.values[self.groupoid.class_of]

    def __getitem__(self, cid) -> float:
        return float(self.values[self.groupoid.class_index(cid)])

    def as_dict(self) -> dict:
        return {cid: float(v) for cid, v in zip(self.groupoid.class_ids, self.values)}


def _haar(nu_hat: TransverseFunction, G: FiniteGroupoid | None) -> FiniteGroupoid:
    G = check_same_groupoid(G or nu_hat.groupoid, nu_hat.groupoid)
    if not nu_hat.is_probability():
        raise ValidationError("nu_hat must be a probability on every class", check="nu_hat")
    return G


def _potential(U, G: FiniteGroupoid) -> Potential:
    if isinstance(U, Potential):
        if U.space != G.space:
            raise InputError("potential lives on a different point space")
        return U
    return Potential(G.space, point_values(U, G.space))


def u_tilde(U, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None) -> ClassFunction:
    """Class function ``sum_{x in C} exp(U(x)) nu_hat(x)``."""
    G = _haar(nu_hat, G)
    U = _potential(U, G)
    return ClassFunction(G, G.class_sum(U.exp * nu_hat.weights))


def normalize(U, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None) -> Potential:
    """Return ``V = U - log(U~)``, which is Haar-normalized."""
    G = _haar(nu_hat, G)
    U = _potential(U, G)
    ut = u_tilde(U, nu_hat, G)
    return Potential(G.space, U.values - np.log(ut.lift()))


def normalization_residual(V, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None) -> np.ndarray:
    """Per-class ``|sum exp(V) nu_hat - 1|``."""
    return np.abs(u_tilde(V, nu_hat, G).values - 1.0)


def is_normalized(V, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None,
                  tol: float = ITERATIVE_TOL) -> bool:
    return bool(np.all(normalization_residual(V, nu_hat, G) <= tol))


def require_normalized(V, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None,
                       tol: float = ITERATIVE_TOL) -> Potential:
    G = _haar(nu_hat, G)
    V = _potential(V, G)
    res = normalization_residual(V, nu_hat, G)
    if np.any(res > tol):
        c = int(np.argmax(res))
        raise NotNormalizedError(
            f"potential is not Haar-normalized on class {G.class_ids[c]!r} "
            f"(residual {res[c]:.3g}); apply normalize() first",
            check="normalized", witness=G.class_ids[c], residual=float(res[c]),
        )
    return V


def apply_H(U, f, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None) -> ClassFunction:
    """Transfer operator ``H_U(f)(y) = sum_{x in [y]} exp(U(x)) f(x) nu_hat(x)``."""
    G = _haar(nu_hat, G)
    U = _potential(U, G)
    return ClassFunction(G, G.class_sum(U.exp * point_values(f, G.space) * nu_hat.weights))


def eigenfunction_residual(U, g, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None) -> float:
    """``max |H_U g - c g|`` for a positive candidate ``g``, with ``c`` the midrange of ``H_U g / g``.

    Zero exactly when ``g`` is an eigenfunction.  ``H_U g`` is constant on
    classes, so a positive eigenfunction is class-constant and then
    ``H_U g = U~ g`` forces ``U~`` to be constant; for a class-constant ``g``
    the residual vanishes iff ``U~`` does not vary.
    """
    G = _haar(nu_hat, G)
    gv = point_values(g, G.space)
    if np.any(gv <= 0):
        raise InputError("candidate eigenfunction must be strictly positive")
    Hg = apply_H(U, gv, nu_hat, G).lift()
    r = Hg / gv
    c = 0.5 * (r.max() + r.min())
    return float(np.max(np.abs(Hg - c * gv)))


def dual_apply(V, M: Measure, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None) -> Measure:
    """Dual operator ``H_V^*``: mass at ``x`` becomes ``exp(V(x)) nu_hat(x) M([x])``.

    Raises
    ------
    NotNormalizedError
        If ``V`` is not Haar-normalized within 1e-9.
    """
    G = _haar(nu_hat, G)
    V = require_normalized(V, nu_hat, G)
    if M.space != G.space:
        raise InputError("measure lives on a different point space")
    class_mass = G.class_sum(M.mass)
    return Measure(G.space, V.exp * nu_hat.weights * class_mass[G.class_of])


def invariant_from_seed(V, mu: Measure, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None) -> Measure:
    """The unique Haar-invariant probability with Jacobian ``exp(V)`` that
    agrees with ``mu`` on class-constant functions; it is ``H_V^*(mu)``."""
    if not mu.is_probability():
        raise ValidationError(f"seed must be a probability (total {mu.total!r})", check="probability")
    return dual_apply(V, mu, nu_hat, G)


@dataclass(frozen=True)
class InvarianceResidual:
    """Largest ``|LHS - RHS|`` over a family of test functions on pairs."""

    residual: float
    worst: Any
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol

    def __float__(self) -> float:
        return self.residual


def _pair_tables(test_functions, G: FiniteGroupoid):
    for f in test_functions:
        if callable(f):
            F = np.zeros((G.n_points, G.n_points))
            for mem in G.members:
                for i in mem:
                    for j in mem:
                        F[i, j] = f(G.space.label(i), G.space.label(j))
            yield F
        else:
            F = np.asarray(f, dtype=float)
            if F.shape != (G.n_points, G.n_points):
                raise InputError("pair test functions must be n x n tables")
            yield F


def _pairwise_residual(lhs: np.ndarray, rhs: np.ndarray, G: FiniteGroupoid,
                       test_functions, tol: float) -> InvarianceResidual:
    """``lhs[a, b]`` / ``rhs[a, b]`` are the two sides evaluated on ``1_{(a, b)}``."""
    lhs = np.where(G.same_class, lhs, 0.0)
    rhs = np.where(G.same_class, rhs, 0.0)
    if test_functions is None:
        diff = np.abs(lhs - rhs)
        k = int(np.argmax(diff))
        a, b = np.unravel_index(k, diff.shape)
        worst = (G.space.label(a), G.space.label(b))
        return InvarianceResidual(float(diff.flat[k]), worst, tol)
    best, worst = 0.0, None
    for i, F in enumerate(_pair_tables(test_functions, G)):
        r = abs(float(np.sum(F * lhs)) - float(np.sum(F * rhs)))
        if worst is None or r > best:
            best, worst = r, i
    return InvarianceResidual(best, worst, tol)


def verify_haar_invariance(M: Measure, V, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None,
                           test_functions: Sequence[Callable | np.ndarray] | None = None,
                           tol: float = HAAR_TOL) -> InvarianceResidual:
    """Compare both sides of

        sum_y M(y) sum_x f(y, x) e^V(x) nu_hat(x)  ==  sum_y M(y) sum_x f(x, y) e^V(x) nu_hat(x)

    over ``test_functions`` (default: every in-class pair indicator, which is
    exhaustive for atomic measures).  ``worst`` is the offending pair of
    labels, or the index of the offending test function.
    """
    G = _haar(nu_hat, G)
    V = require_normalized(V, nu_hat, G)
    w = V.exp * nu_hat.weights
    # on 1_{(a, b)}: left side puts y=a, x=b; right side puts x=a, y=b
    lhs = M.mass[:, None] * w[None, :]
    rhs = w[:, None] * M.mass[None, :]
    return _pairwise_residual(lhs, rhs, G, test_functions, tol)


def verify_quasi_invariance(M: Measure, delta: ModularFunction, nu_hat: TransverseFunction,
                            G: FiniteGroupoid | None = None,
                            test_functions: Sequence[Callable | np.ndarray] | None = None,
                            tol: float = HAAR_TOL) -> InvarianceResidual:
    """Compare both sides of

        sum_y M(y) sum_x f(y, x) nu_hat(x)  ==  sum_y M(y) sum_x f(x, y) / delta(x, y) nu_hat(x)
    """
    G = _haar(nu_hat, G)
    if M.space != G.space:
        raise InputError("measure lives on a different point space")
    D = delta.matrix(G)
    inv = np.where(G.same_class, 1.0 / np.where(G.same_class, D, 1.0), 0.0)
    lhs = M.mass[:, None] * nu_hat.weights[None, :]
    rhs = nu_hat.weights[:, None] * inv * M.mass[None, :]
    return _pairwise_residual(lhs, rhs, G, test_functions, tol)


def random_normalized(nu_hat: TransverseFunction, rng: np.random.Generator, scale: float = 2.0) -> Potential:
    """Draw unconstrained reals per point and normalize them."""
    G = nu_hat.groupoid
    return normalize(Potential(G.space, scale * rng.standard_normal(G.n_points)), nu_hat, G)


def random_seed_measure(G: FiniteGroupoid, rng: np.random.Generator, sparse: bool = False) -> Measure:
    m = rng.random(G.n_points)
    if sparse:
        m[rng.random(G.n_points) < 0.5] = 0.0
        if not m.any():
            m[int(rng.integers(G.n_points))] = 1.0
    return Measure(G.space, m / m.sum())
