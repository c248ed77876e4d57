"""Generalized XY model: a full shift over a finite alphabet with an a priori probability.

Potentials and test functions depend on finitely many coordinates and are
stored as ``d x d x ... x d`` tables (a depth-``j`` table is indexed by
``x_1, ..., x_j``).  The Ruelle operator is

    (L_V f)(x) = sum_a m(a) exp(V(a, x_1, ..., x_{k-1})) f(a, x_1, ...).

A compact alphabet enters through quadrature nodes, which turn the
a priori integral into a finite weighted sum.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, InputError
from .groupoid import (
    FiniteGroupoid,
    Measure,
    ModularFunction,
    PointSpace,
    Potential,
    TransverseFunction,
    _frozen,
    build_fiber_groupoid,
)
from .transfer import InvarianceResidual, apply_H, verify_quasi_invariance

EIGEN_TOL = 1e-12
MAX_ITER = 200_000


@dataclass(frozen=True, eq=False)
class XYSpec:
    """Alphabet, a priori weights ``m``, and a depth-``k`` potential table."""

    alphabet: tuple
    a_priori: np.ndarray
    potential: np.ndarray
    base_symbol: object = None

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        if not alphabet or len(set(alphabet)) != len(alphabet):
            raise InputError("alphabet must be nonempty with distinct labels")
        d = len(alphabet)
        m = np.asarray(self.a_priori, dtype=float)
        if m.shape != (d,):
            raise InputError(f"a priori weights must have length {d}")
        if np.any(m < 0) or not np.all(np.isfinite(m)) or abs(m.sum() - 1.0) > 1e-12:
            raise InputError("a priori weights must be nonnegative and sum to 1")
        V = np.asarray(self.potential, dtype=float)
        if V.ndim < 1 or any(s != d for s in V.shape):
            raise InputError(f"potential must be a d x ... x d table with d = {d} and depth >= 1")
        if not np.all(np.isfinite(V)):
            raise InputError("potential must be finite everywhere")
        base = alphabet[0] if self.base_symbol is None else self.base_symbol
        if base not in alphabet:
            raise InputError(f"base symbol {base!r} is not in the alphabet")
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "a_priori", _frozen(m))
        object.__setattr__(self, "potential", _frozen(V))
        object.__setattr__(self, "base_symbol", base)

    @property
    def d(self) -> int:
        return len(self.alphabet)

    @property
    def depth(self) -> int:
        return self.potential.ndim

    @property
    def base_index(self) -> int:
        return self.alphabet.index(self.base_symbol)

    def with_potential(self, potential) -> "XYSpec":
        return XYSpec(self.alphabet, self.a_priori, potential, self.base_symbol)

    def cylinders(self, n: int) -> list[tuple]:
        """Depth-``n`` cylinders as label tuples, in lexicographic (table) order."""
        return list(itertools.product(self.alphabet, repeat=n))


@dataclass(frozen=True, eq=False)
class CylinderFunction:
    """A function of the first ``depth`` coordinates; depth 0 is a constant."""

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen(self.table))

    @property
    def depth(self) -> int:
        return self.table.ndim

    @classmethod
    def constant(cls, c: float = 1.0) -> "CylinderFunction":
        return cls(np.asarray(float(c)))

    def extend(self, d: int, depth: int) -> np.ndarray:
        """Table of the same function viewed at a larger depth."""
        return _extend(self.table, d, depth)

    def __call__(self, word) -> float:
        return float(self.table[tuple(word[: self.depth])])


def _extend(table: np.ndarray, d: int, depth: int) -> np.ndarray:
    if table.ndim > depth:
        raise InputError(f"cannot view a depth-{table.ndim} table at depth {depth}")
    return np.broadcast_to(table.reshape(table.shape + (1,) * (depth - table.ndim)), (d,) * depth)


def _as_cylinder(f, spec: XYSpec) -> CylinderFunction:
    f = f if isinstance(f, CylinderFunction) else CylinderFunction(np.asarray(f, dtype=float))
    if any(s != spec.d for s in f.table.shape):
        raise InputError(f"cylinder table must have every axis of length {spec.d}")
    return f


def ruelle_apply(spec: XYSpec, f) -> CylinderFunction:
    """``L_V f``; the output has depth ``max(k - 1, j - 1, 0)``."""
    f = _as_cylinder(f, spec)
    D = max(spec.depth, f.depth, 1)
    integrand = np.exp(_extend(spec.potential, spec.d, D)) * f.extend(spec.d, D)
    return CylinderFunction(np.tensordot(spec.a_priori, integrand, axes=(0, 0)))


def ruelle_dual_apply(spec: XYSpec, rho: np.ndarray) -> np.ndarray:
    """``L_V^*`` acting on a measure given by its depth-``(k-1)`` cylinder weights."""
    rho = np.asarray(rho, dtype=float)
    k = spec.depth
    if rho.ndim != k - 1:
        raise InputError(f"expected depth-{k - 1} cylinder weights")
    eV = np.exp(spec.potential)
    if k == 1:
        return np.asarray(float(rho) * float(spec.a_priori @ eV))
    out = (eV * rho[None, ...]).sum(axis=-1)
    return spec.a_priori.reshape((-1,) + (1,) * (k - 2)) * out


def dense_transfer_matrix(spec: XYSpec) -> np.ndarray:
    """``A`` on depth-``(k-1)`` cylinders with ``(L f)(x) = sum_y A[x, y] f(y)``.

    Built entry by entry; used as an oracle for the table-based operators.
    """
    k, d = spec.depth, spec.d
    states = list(itertools.product(range(d), repeat=k - 1))
    pos = {s: i for i, s in enumerate(states)}
    A = np.zeros((len(states), len(states)))
    for x in states:
        for a in range(d):
            y = (a,) + x[: k - 2] if k >= 2 else ()
            A[pos[x], pos[y]] += spec.a_priori[a] * np.exp(spec.potential[(a,) + x])
    return A


def dense_eigen(spec: XYSpec) -> tuple[float, np.ndarray, np.ndarray]:
    """Perron data of the dense matrix: ``(c, phi, rho)`` with ``sum rho = 1``, ``rho . phi = 1``."""
    A = dense_transfer_matrix(spec)
    w, R = np.linalg.eig(A)
    i = int(np.argmax(w.real))
    c = float(w[i].real)
    phi = np.abs(R[:, i].real)
    wl, L = np.linalg.eig(A.T)
    rho = np.abs(L[:, int(np.argmax(wl.real))].real)
    rho = rho / rho.sum()
    phi = phi / (rho @ phi)
    shape = (spec.d,) * (spec.depth - 1)
    return c, phi.reshape(shape), rho.reshape(shape)


class XYEigen(NamedTuple):
    """Perron data on depth-``(k-1)`` cylinders.

    ``phi`` is normalized so that ``sum phi * rho == 1`` and ``rho`` sums to 1.
    """

    c: float
    phi: CylinderFunction
    rho: np.ndarray
    iterations: int
    residual_phi: float
    residual_rho: float


def _power(step, x0: np.ndarray, norm, tol: float, max_iter: int, what: str) -> tuple[np.ndarray, int]:
    x = x0 / norm(x0)
    for it in range(1, max_iter + 1):
        y = step(x)
        y = y / norm(y)
        diff = float(np.max(np.abs(y - x)))
        x = y
        if diff < tol:
            return x, it
    raise ConvergenceError(f"{what} power iteration did not converge in {max_iter} steps "
                           f"(last change {diff:.3g})", residual=diff, iterations=max_iter)


def leading_eigen(spec: XYSpec, tol: float = EIGEN_TOL, max_iter: int = MAX_ITER) -> XYEigen:
    """Perron eigenvalue ``c``, eigenfunction ``phi`` and left eigenvector ``rho`` of ``L_V``.

    Both are found by power iteration on depth-``(k-1)`` tables, stopping when
    successive normalized iterates differ by less than ``tol`` in sup norm.

    Raises
    ------
    ConvergenceError
        If either iteration exceeds ``max_iter`` steps.
    """
    shape = (spec.d,) * (spec.depth - 1)
    phi, it1 = _power(lambda f: ruelle_apply(spec, f).table, np.ones(shape),
                      lambda x: float(np.max(x)), tol, max_iter, "eigenfunction")
    rho, it2 = _power(lambda r: ruelle_dual_apply(spec, r), np.ones(shape),
                      lambda x: float(np.sum(x)), tol, max_iter, "eigenmeasure")
    c = float(np.sum(ruelle_dual_apply(spec, rho)))
    phi = phi / float(np.sum(phi * rho))
    res_phi = float(np.max(np.abs(ruelle_apply(spec, phi).table - c * phi)))
    res_rho = float(np.sum(np.abs(ruelle_dual_apply(spec, rho) - c * rho)))
    return XYEigen(c, CylinderFunction(phi), rho, max(it1, it2), res_phi, res_rho)


def eigenprob_table(spec: XYSpec, n: int, eigen: XYEigen | None = None) -> np.ndarray:
    """Weights ``rho[x_1..x_n]`` of the eigenprobability on depth-``n`` cylinders.

    Below depth ``k - 1`` they are marginals of the left Perron vector; above
    it, ``rho[x_1..x_n] = m(x_1) exp(V(x_1..x_k)) rho[x_2..x_n] / c``.
    """
    if n < 0:
        raise InputError("cylinder depth must be nonnegative")
    eigen = eigen or leading_eigen(spec)
    k, d = spec.depth, spec.d
    if n <= k - 1:
        return eigen.rho.sum(axis=tuple(range(n, k - 1)))
    rho = eigen.rho
    lead = spec.a_priori.reshape((-1,) + (1,) * (k - 1)) * np.exp(spec.potential) / eigen.c
    for depth in range(k, n + 1):
        rho = _extend(lead, d, depth) * rho[None, ...]
    return rho


def eigenprob(spec: XYSpec, n: int, eigen: XYEigen | None = None) -> Measure:
    """The eigenprobability on depth-``n`` cylinders, labelled by symbol tuples."""
    table = eigenprob_table(spec, n, eigen)
    return Measure(PointSpace(tuple(spec.cylinders(n))), table.reshape(-1))


def limit_quotient(spec: XYSpec, h, n: int) -> float:
    """``L^n h(z0) / L^n 1(z0)`` with ``z0`` the base symbol repeated.

    Numerator and denominator are rescaled by the same factor at every step.
    """
    h = _as_cylinder(h, spec)
    if n < h.depth:
        raise InputError(f"iteration count {n} is below the depth {h.depth} of the test function")
    num, den = h, CylinderFunction.constant(1.0)
    for _ in range(n):
        num, den = ruelle_apply(spec, num), ruelle_apply(spec, den)
        s = float(np.max(den.table))
        num, den = CylinderFunction(num.table / s), CylinderFunction(den.table / s)
    b = spec.base_index
    return float(num.table[(b,) * num.depth] / den.table[(b,) * den.depth])


def ruelle_normalize(spec: XYSpec, c: float, phi) -> XYSpec:
    """Spec with ``U = V + log phi - log(phi o sigma) - log c``, so that ``L_U 1 = 1``."""
    phi = _as_cylinder(phi, spec)
    k = spec.depth
    if phi.depth != k - 1:
        raise InputError(f"eigenfunction must have depth {k - 1}")
    logphi = np.log(phi.table)
    U = spec.potential - np.log(c)
    if k >= 2:
        U = U + logphi[..., None] - logphi[None, ...]
    return spec.with_potential(U)


class CylinderGroupoid(NamedTuple):
    """Depth-``N`` cylinders related by equal tails past the first coordinate."""

    groupoid: FiniteGroupoid
    nu_hat: TransverseFunction
    potential: Potential


def cylinder_groupoid(spec: XYSpec, N: int) -> CylinderGroupoid:
    """Finite groupoid on depth-``N`` cylinders with ``nu_hat = m`` on the first symbol."""
    if N < spec.depth:
        raise InputError(f"cylinder depth {N} is below the potential depth {spec.depth}")
    space = PointSpace(tuple(spec.cylinders(N)))
    tails = PointSpace(tuple(spec.cylinders(N - 1)))
    G = build_fiber_groupoid(space, lambda w: w[1:], codomain=tails)
    idx = {a: i for i, a in enumerate(spec.alphabet)}
    first = np.array([idx[w[0]] for w in space])
    rest = np.array([[idx[s] for s in w[: spec.depth]] for w in space])
    nu_hat = TransverseFunction(G, spec.a_priori[first])
    V = Potential(space, spec.potential[tuple(rest.T)])
    return CylinderGroupoid(G, nu_hat, V)


def h_vs_ruelle_check(spec: XYSpec, f, depth: int) -> float:
    """``max |H_V f(y) - (L_V f)(sigma y)|`` over all depth-``depth`` cylinders ``y``."""
    f = _as_cylinder(f, spec)
    if depth < max(spec.depth, f.depth):
        raise InputError(f"cylinder depth {depth} is below the depth of V or f")
    cg = cylinder_groupoid(spec, depth)
    words = np.array([[spec.alphabet.index(s) for s in w] for w in cg.groupoid.space])
    fvals = f.table[tuple(words[:, : f.depth].T)] if f.depth else np.full(len(words), float(f.table))
    lhs = apply_H(cg.potential, fvals, cg.nu_hat, cg.groupoid).lift()
    Lf = ruelle_apply(spec, f)
    rhs = Lf.table[tuple(words[:, 1: 1 + Lf.depth].T)] if Lf.depth else np.full(len(words), float(Lf.table))
    return float(np.max(np.abs(lhs - rhs)))


class QuasiResidual(NamedTuple):
    residual: float
    worst: tuple


def xy_quasi_invariance_check(spec: XYSpec, rho: np.ndarray, n: int, *, unit_modulus: bool = False) -> QuasiResidual:
    """Quasi-invariance of ``rho`` under ``delta(x, y) = exp(V(y) - V(x))``.

    Tests every pair-cylinder indicator ``1{x in [a t], y in [b t]}`` with
    ``|t| = n - 1``.  Both sides are exact finite sums over depth
    ``N = max(n, k)`` cylinders, so ``rho`` must have depth at least ``N``;
    a deeper table is marginalized.  ``unit_modulus=True`` replaces
    ``delta`` by 1 (a negative control).

    Raises
    ------
    InputError
        If ``rho`` is too shallow for the requested test functions.
    """
    rho = np.asarray(rho, dtype=float)
    d, k = spec.d, spec.depth
    if n < 1:
        raise InputError("pair indicators need depth at least 1")
    N = max(n, k)
    if rho.ndim < N:
        raise InputError(f"test functions need cylinder depth {N}, but rho has depth {rho.ndim}")
    rho = rho.sum(axis=tuple(range(N, rho.ndim)))
    V = _extend(spec.potential, d, N)
    m = spec.a_priori
    shape = (d, d) + (d,) * (N - 1)
    expand = (slice(None),) + (None,) * (N - 1)
    # axes: a, b, t_2..t_N
    L = np.broadcast_to(rho[:, None, ...] * m[None, :][(...,) + (None,) * (N - 1)], shape)
    ratio = np.ones(shape) if unit_modulus else np.exp(V[:, None, ...] - V[None, :, ...])
    R = rho[None, :, ...] * m[expand][:, None, ...] * ratio
    tail = tuple(range(2 + n - 1, 2 + N - 1))
    diff = np.abs(L.sum(axis=tail) - R.sum(axis=tail))
    i = np.unravel_index(int(np.argmax(diff)), diff.shape)
    a, b, *t = (spec.alphabet[j] for j in i)
    return QuasiResidual(float(diff[i]), (a, b, tuple(t)))


def cylinder_quasi_invariance(spec: XYSpec, N: int, eigen: XYEigen | None = None,
                              unit_modulus: bool = False) -> InvarianceResidual:
    """The same identity checked by the generic finite-groupoid code on depth-``N`` cylinders."""
    cg = cylinder_groupoid(spec, N)
    M = eigenprob(spec, N, eigen)
    delta = ModularFunction.constant_one(cg.groupoid) if unit_modulus else ModularFunction.from_potential(cg.potential)
    return verify_quasi_invariance(M, delta, cg.nu_hat, cg.groupoid)


def random_xy_spec(rng: np.random.Generator, d: int, k: int, scale: float = 1.0,
                   uniform_prior: bool = False) -> XYSpec:
    """Random depth-``k`` potential with entries uniform in ``[-scale, scale]``."""
    m = np.full(d, 1.0 / d) if uniform_prior else rng.random(d) + 0.1
    return XYSpec(tuple(range(d)), m / m.sum(), rng.uniform(-scale, scale, size=(d,) * k))
