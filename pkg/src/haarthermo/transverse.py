"""Transverse measures as functionals on transverse functions.

A Haar-invariant transverse probability with modulus
``delta(x, y) = exp(V(y) - V(x))`` is stored as the pair ``(V, M)`` where
``M`` is Haar-invariant with Jacobian ``exp(V)``; the functional is then

    Lambda(nu) = sum_y M(y) sum_{x in [y]} exp(V(x)) nu^y(x).
"""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ValidationError
from .groupoid import (
    STRUCTURAL_TOL,
    FiniteGroupoid,
    Kernel,
    Measure,
    Potential,
    TransverseFunction,
    check_same_groupoid,
    kernel_convolve,
    point_values,
    validate_transverse,
)
from .transfer import require_normalized, verify_haar_invariance


@dataclass(frozen=True, eq=False)
class TransverseMeasure:
    """Haar-invariant transverse probability represented by ``(modulus, base)``.

    Construction checks that ``modulus`` is Haar-normalized, ``base`` is a
    probability, and ``base`` is Haar-invariant with Jacobian
    ``exp(modulus)``.
    """

    modulus: Potential
    base: Measure
    nu_hat: TransverseFunction

    def __post_init__(self):
        G = self.nu_hat.groupoid
        require_normalized(self.modulus, self.nu_hat, G)
        if self.base.space != G.space:
            raise InputError("base measure lives on a different point space")
        if not self.base.is_probability():
            raise ValidationError(f"base measure has total {self.base.total!r}, expected 1",
                                  check="probability")
        res = verify_haar_invariance(self.base, self.modulus, self.nu_hat, G)
        if not res.passed:
            raise ValidationError(
                f"base measure is not Haar-invariant for this modulus (residual {res.residual:.3g} "
                f"at pair {res.worst!r})", check="haar", witness=res.worst, residual=res.residual,
            )

    @property
    def groupoid(self) -> FiniteGroupoid:
        return self.nu_hat.groupoid

    def __call__(self, nu: TransverseFunction) -> float:
        return lambda_eval(self, nu)


def _class_integrals(Lam: TransverseMeasure, weights: np.ndarray) -> float:
    G = Lam.groupoid
    per_class = G.class_sum(Lam.modulus.exp * weights)
    return float(G.class_sum(Lam.base.mass) @ per_class)


def lambda_eval(Lam: TransverseMeasure, nu: TransverseFunction) -> float:
    """``Lambda(nu) = sum_y M(y) sum_x exp(V(x)) nu^y(x)``.

    Signed transverse functions are split into positive and negative parts
    and evaluated as ``Lambda(nu+) - Lambda(nu-)``.
    """
    check_same_groupoid(Lam.groupoid, nu.groupoid)
    if nu.is_signed():
        return (_class_integrals(Lam, nu.positive_part().weights)
                - _class_integrals(Lam, nu.negative_part().weights))
    return _class_integrals(Lam, nu.weights)


def lambda_eval_modular(Lam: TransverseMeasure, nu: TransverseFunction) -> float:
    """The other form, ``sum_y M(y) sum_x exp(V(x) - V(y)) nu^y(x)``."""
    check_same_groupoid(Lam.groupoid, nu.groupoid)
    G = Lam.groupoid
    V = Lam.modulus.values
    inner = G.class_sum(np.exp(V) * nu.weights)[G.class_of]
    return float(np.sum(Lam.base.mass * np.exp(-V) * inner))


def density_identity_check(Lam: TransverseMeasure, F) -> float:
    """``|Lambda(F nu_hat) - sum_x F(x) M(x)|``."""
    nu = TransverseFunction.from_density(F, Lam.nu_hat)
    return abs(lambda_eval(Lam, nu) - Lam.base.integrate(point_values(F, Lam.groupoid.space)))


def measure_from_transverse(evaluator: Callable[[TransverseFunction], float], nu_hat: TransverseFunction,
                            modulus: Potential | None = None, tol: float = STRUCTURAL_TOL) -> Measure:
    """Recover ``M`` from a transverse probability via ``M(x) = Lambda(1_x nu_hat)``.

    If ``modulus`` is given, the result is also checked to be Haar-invariant
    with Jacobian ``exp(modulus)``.

    Raises
    ------
    ValidationError
        If ``Lambda(nu_hat) != 1`` or the Haar-invariance check fails.
    """
    G = nu_hat.groupoid
    total = float(evaluator(nu_hat))
    if abs(total - 1.0) > tol:
        raise ValidationError(f"Lambda(nu_hat) = {total!r}, expected 1", check="normalization",
                              residual=abs(total - 1.0))
    mass = np.empty(G.n_points)
    for i in range(G.n_points):
        ind = np.zeros(G.n_points)
        ind[i] = 1.0
        mass[i] = evaluator(TransverseFunction(G, ind * nu_hat.weights))
    M = Measure(G.space, mass)
    if modulus is not None:
        res = verify_haar_invariance(M, modulus, nu_hat, G)
        if not res.passed:
            raise ValidationError(f"recovered measure is not Haar-invariant (residual {res.residual:.3g})",
                                  check="haar", witness=res.worst, residual=res.residual)
    return M


@dataclass(frozen=True, eq=False)
class CocoCheck:
    residual: float
    nu1_value: float
    nu2_value: float
    nu2: TransverseFunction


def modular_weighted_kernel(lam: Kernel, V: Potential) -> Kernel:
    """The kernel ``(delta lam)^x(ds) = delta(s, x) lam^x(ds)``, ``delta(s, x) = exp(V(x) - V(s))``."""
    v = V.values
    return Kernel(lam.groupoid, lam.rows * np.exp(v[:, None] - v[None, :]))


def coco_invariance_check(Lam: TransverseMeasure, nu1: TransverseFunction, lam: Kernel,
                          tol: float = STRUCTURAL_TOL) -> CocoCheck:
    """Invariance of ``Lambda`` under ``nu1 -> nu2 = nu1 * (delta lam)``.

    ``lam`` must have unit row masses.  ``nu2`` is formed by kernel
    convolution, checked to be transverse, and both values returned along
    with ``|Lambda(nu1) - Lambda(nu2)|``.
    """
    G = check_same_groupoid(Lam.groupoid, nu1.groupoid, lam.groupoid)
    rows = lam.row_masses()
    bad = np.abs(rows - 1.0)
    if np.any(bad > tol):
        i = int(np.argmax(bad))
        raise ValidationError(f"kernel row {G.space.label(i)!r} has mass {rows[i]!r}, expected 1",
                              check="unit_rows", witness=G.space.label(i), residual=float(bad[i]))
    conv = kernel_convolve(nu1.as_kernel(), modular_weighted_kernel(lam, Lam.modulus), G)
    scale = max(1.0, float(np.abs(conv.rows).max()))
    rep = validate_transverse(conv, G, allow_signed=nu1.is_signed(), tol=1e3 * np.finfo(float).eps * scale)
    if not rep:
        raise ValidationError(rep.message, check=rep.check, witness=rep.witness)
    nu2 = TransverseFunction.from_kernel(conv, tol=rep.max_discrepancy)
    a, b = lambda_eval(Lam, nu1), lambda_eval(Lam, nu2)
    return CocoCheck(abs(a - b), a, b, nu2)


def random_unit_kernel(G: FiniteGroupoid, rng: np.random.Generator) -> Kernel:
    """Random nonnegative kernel supported on classes with unit row masses."""
    R = np.where(G.same_class, rng.random((G.n_points, G.n_points)), 0.0)
    R[rng.random(R.shape) < 0.2] = 0.0
    R[np.arange(G.n_points), np.arange(G.n_points)] += 1e-3
    return Kernel(G, R / R.sum(axis=1, keepdims=True))
