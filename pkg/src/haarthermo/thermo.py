"""Entropy, pressure and equilibria for Haar-invariant transverse probabilities.

Closed forms are the source of truth: entropy is ``-sum V M`` for the
modulus ``V`` and pressure of ``U nu_hat`` is ``max_C log U~(C)``.  The
variational definitions are evaluated over finite families only, to test
one-sided bounds and attainment.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InputError, ValidationError
from .groupoid import (
    ITERATIVE_TOL,
    STRUCTURAL_TOL,
    FiniteGroupoid,
    Measure,
    Potential,
    TransverseFunction,
    check_same_groupoid,
)
from .transfer import (
    _haar,
    _potential,
    invariant_from_seed,
    normalize,
    normalization_residual,
    random_normalized,
    u_tilde,
)
from .transverse import TransverseMeasure, lambda_eval


def entropy(Lam: TransverseMeasure) -> float:
    """``h(Lambda) = -sum_x V(x) M(x)``; never positive."""
    return -float(Lam.modulus.values @ Lam.base.mass)


@dataclass(frozen=True, eq=False)
class NormalizedFamily:
    """A finite set of Haar-normalized potentials with provenance.

    ``provenance[i]`` names where ``members[i]`` came from (a closed-form
    candidate or ``"random"``); ``seed`` records the generator seed used for
    the random draws.
    """

    nu_hat: TransverseFunction
    members: tuple
    provenance: tuple = ()
    seed: int | None = None

    def __post_init__(self):
        if not self.members:
            raise InputError("a normalized family needs at least one member")
        for k, F in enumerate(self.members):
            res = normalization_residual(F, self.nu_hat)
            if np.any(res > ITERATIVE_TOL):
                raise ValidationError(f"family member {k} is not Haar-normalized "
                                      f"(residual {res.max():.3g})", check="normalized", witness=k)

    @classmethod
    def sample(cls, nu_hat: TransverseFunction, n: int, seed: int = 0,
               include: Sequence[tuple[str, Potential]] = ()) -> "NormalizedFamily":
        rng = np.random.default_rng(seed)
        members = [F for _, F in include]
        prov = [name for name, _ in include]
        for _ in range(n):
            members.append(random_normalized(nu_hat, rng, scale=float(rng.uniform(0.1, 4.0))))
            prov.append("random")
        return cls(nu_hat, tuple(members), tuple(prov), seed)

    def __len__(self) -> int:
        return len(self.members)


def entropy_sup_estimate(Lam: TransverseMeasure, family: NormalizedFamily) -> float:
    """``-max_F Lambda(F nu_hat)`` over the family; an upper bound on the entropy."""
    check_same_groupoid(Lam.groupoid, family.nu_hat.groupoid)
    best = max(lambda_eval(Lam, TransverseFunction.from_density(F, Lam.nu_hat)) for F in family.members)
    return -best


class Pressure(NamedTuple):
    value: float
    argmax_classes: tuple


def pressure(U, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None,
             tie_tol: float = STRUCTURAL_TOL) -> Pressure:
    """Pressure of ``U nu_hat``: the largest ``log U~`` over classes.

    All classes within ``tie_tol`` of the maximum are reported, in class
    order.
    """
    G = _haar(nu_hat, G)
    logs = np.log(u_tilde(U, nu_hat, G).values)
    top = float(logs.max())
    ties = tuple(G.class_ids[c] for c in np.flatnonzero(logs >= top - tie_tol))
    return Pressure(top, ties)


def transverse_density(nu: TransverseFunction, nu_hat: TransverseFunction) -> np.ndarray:
    """The ``F`` with ``nu = F nu_hat`` (zero where ``nu_hat`` vanishes)."""
    check_same_groupoid(nu.groupoid, nu_hat.groupoid)
    charged = nu_hat.weights > 0
    if np.any(~charged & (nu.weights != 0)):
        i = int(np.flatnonzero(~charged & (nu.weights != 0))[0])
        raise InputError(f"transverse function charges {nu.groupoid.space.label(i)!r} where nu_hat vanishes")
    return np.divide(nu.weights, nu_hat.weights, out=np.zeros_like(nu.weights), where=charged)


def transverse_pressure(nu: TransverseFunction, nu_hat: TransverseFunction) -> Pressure:
    return pressure(transverse_density(nu, nu_hat), nu_hat)


def pressure_variational_estimate(U, nu_hat: TransverseFunction, G: FiniteGroupoid | None,
                                  samples: Sequence[tuple[Potential, Measure]]) -> float:
    """``max [Lambda(U nu_hat) + h(Lambda)]`` over the sampled ``(V, M_V)`` pairs.

    Raises
    ------
    ValidationError
        If some ``M_V`` is not Haar-invariant with Jacobian ``exp(V)``.
    """
    G = _haar(nu_hat, G)
    nu = TransverseFunction.from_density(_potential(U, G), nu_hat)
    best = -np.inf
    for k, (V, M) in enumerate(samples):
        try:
            Lam = TransverseMeasure(V, M, nu_hat)
        except ValidationError as exc:
            raise ValidationError(f"sample pair {k} is inconsistent: {exc}", check=exc.check,
                                  witness=k, residual=exc.residual) from exc
        best = max(best, lambda_eval(Lam, nu) + entropy(Lam))
    return float(best)


def equilibrium_for(U, nu_hat: TransverseFunction, G: FiniteGroupoid | None = None) -> TransverseMeasure:
    """Equilibrium for ``U nu_hat``: modulus ``U - log U~`` seeded at an argmax class.

    The seed is the first point of the lowest-indexed class attaining the
    pressure.
    """
    G = _haar(nu_hat, G)
    p = pressure(U, nu_hat, G)
    c = G.class_index(p.argmax_classes[0])
    V = normalize(U, nu_hat, G)
    seed = Measure.point_mass(G.space, G.space.label(G.members[c][0]))
    return TransverseMeasure(V, invariant_from_seed(V, seed, nu_hat, G), nu_hat)


def involution_check(Lam: TransverseMeasure, candidates: Sequence[TransverseFunction]) -> float:
    """``min_nu [-Lambda(nu) + P(nu)] - h(Lambda)`` over ``candidates``.

    Non-negative by the pressure bound, and zero once ``V nu_hat`` is among
    the candidates.
    """
    if not candidates:
        raise InputError("involution check needs at least one candidate")
    vals = [-lambda_eval(Lam, nu) + transverse_pressure(nu, Lam.nu_hat).value for nu in candidates]
    return float(min(vals) - entropy(Lam))


@dataclass(frozen=True)
class ExtremalReport:
    case: str
    closed_pressure: float
    generic_pressure: float
    closed_entropy: float
    generic_entropy: float
    variational_pressure: float
    gibbs: tuple = field(default=())

    @property
    def residual(self) -> float:
        return max(abs(self.closed_pressure - self.generic_pressure),
                   abs(self.closed_entropy - self.generic_entropy),
                   abs(self.closed_pressure - self.variational_pressure))


def extremal_closed_forms(case: str, nu_hat: TransverseFunction, U) -> ExtremalReport:
    """Closed forms for the two extreme groupoids, cross-checked against the generic code.

    ``case="pair"``: one class, ``nu_hat`` is the a priori probability ``m``;
    pressure is ``log sum e^U m`` and the equilibrium entropy is
    ``-sum P log P m`` with Gibbs density ``P = e^U / sum e^U m``.

    ``case="trivial"``: singleton classes; ``U`` is the function ``nu`` itself,
    pressure is ``max nu`` and every entropy is 0.
    """
    G = nu_hat.groupoid
    u = _potential(U, G).values
    m = nu_hat.weights
    if case == "pair":
        if not G.is_pair():
            raise InputError("pair case needs a single-class groupoid")
        z = float(np.sum(np.exp(u) * m))
        P = np.exp(u) / z
        closed_p = float(np.log(z))
        mask = P * m > 0
        closed_h = -float(np.sum(P[mask] * np.log(P[mask]) * m[mask]))
        gibbs = tuple(float(x) for x in P)
    elif case == "trivial":
        if not G.is_trivial():
            raise InputError("trivial case needs singleton classes")
        closed_p = float(np.max(u))
        closed_h = 0.0
        gibbs = ()
    else:
        raise InputError(f"unknown extremal case {case!r}")
    Lam = equilibrium_for(u, nu_hat, G)
    var_p = lambda_eval(Lam, TransverseFunction.from_density(u, nu_hat)) + entropy(Lam)
    return ExtremalReport(case, closed_p, pressure(u, nu_hat, G).value, closed_h, entropy(Lam),
                          float(var_p), gibbs)


def random_sample_pair(nu_hat: TransverseFunction, rng: np.random.Generator) -> tuple[Potential, Measure]:
    """A random ``(V, M_V)`` with ``M_V`` Haar-invariant for ``V``."""
    G = nu_hat.groupoid
    V = random_normalized(nu_hat, rng, scale=float(rng.uniform(0.1, 4.0)))
    mu = rng.random(G.n_points) ** 3
    return V, invariant_from_seed(V, Measure(G.space, mu / mu.sum()), nu_hat, G)
