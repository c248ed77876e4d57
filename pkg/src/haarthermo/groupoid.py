"""Finite equivalence-relation groupoids and the objects that live on them.

Everything here is atomic: a point space is a finite ordered list of labels,
a groupoid is a partition of that list into classes, and kernels, transverse
functions, potentials and measures are dense arrays indexed by point position.
Absent entries in the dictionary constructors mean zero mass.
"""
from __future__ import annotations

from collections.abc import Callable, Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .errors import InputError, PartitionError, ValidationError

STRUCTURAL_TOL = 1e-12
ITERATIVE_TOL = 1e-9


def _frozen(a: Any, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PointSpace:
    """Ordered, duplicate-free list of point labels."""

    points: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        index = {}
        for i, p in enumerate(pts):
            if p in index:
                raise PartitionError(f"duplicate point label {p!r}", point=p)
            index[p] = i
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __contains__(self, label) -> bool:
        return label in self._index

    def index(self, label: Hashable) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise InputError(f"unknown point {label!r}") from None

    def label(self, i: int):
        return self.points[i]


@dataclass(frozen=True, eq=False)
class FiniteGroupoid:
    """The groupoid ``{(x, y) : x ~ y}`` stored as a partition of a point space.

    ``class_of[i]`` is the position (in ``class_ids``) of the class containing
    point ``i``; ``members[c]`` lists the point indices of class ``c`` in
    increasing order.
    """

    space: PointSpace
    class_ids: tuple
    members: tuple
    class_of: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.space)

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    @cached_property
    def class_sizes(self) -> np.ndarray:
        return _frozen([len(m) for m in self.members], dtype=int)

    @cached_property
    def same_class(self) -> np.ndarray:
        """Boolean ``n x n`` mask, true on in-class pairs."""
        return _frozen(self.class_of[:, None] == self.class_of[None, :], dtype=bool)

    @cached_property
    def _class_pos(self) -> dict:
        return {cid: c for c, cid in enumerate(self.class_ids)}

    def class_index(self, cid) -> int:
        try:
            return self._class_pos[cid]
        except KeyError:
            raise InputError(f"unknown class id {cid!r}") from None

    def class_of_label(self, label):
        return self.class_ids[self.class_of[self.space.index(label)]]

    @property
    def classes(self) -> dict:
        """Map class id -> list of member labels."""
        return {
            cid: [self.space.points[i] for i in mem]
            for cid, mem in zip(self.class_ids, self.members)
        }

    def class_sum(self, values) -> np.ndarray:
        """Per-class sums of a point array, reduced in point-index order."""
        return np.bincount(self.class_of, weights=values, minlength=self.n_classes)

    def is_trivial(self) -> bool:
        return bool(np.all(self.class_sizes == 1))

    def is_pair(self) -> bool:
        return self.n_classes == 1

    def same_as(self, other: "FiniteGroupoid") -> bool:
        return self is other or (
            self.space == other.space
            and self.class_ids == other.class_ids
            and np.array_equal(self.class_of, other.class_of)
        )


def check_same_groupoid(*groupoids: FiniteGroupoid) -> FiniteGroupoid:
    first = groupoids[0]
    for g in groupoids[1:]:
        if not first.same_as(g):
            raise InputError("objects live on different groupoids")
    return first


def build_partition_groupoid(
    space: PointSpace,
    classes: Sequence[Sequence[Hashable]],
    class_ids: Sequence[Hashable] | None = None,
) -> FiniteGroupoid:
    """Build a groupoid from an explicit partition of ``space``.

    Class ids default to ``"C1", "C2", ...`` in the order given.

    Raises
    ------
    PartitionError
        If a point is repeated, unknown, or not covered by any class.
    """
    n = len(space)
    class_of = np.full(n, -1, dtype=int)
    members = []
    for c, cls in enumerate(classes):
        if len(cls) == 0:
            raise PartitionError(f"class {c} is empty")
        idx = []
        for p in cls:
            if p not in space:
                raise PartitionError(f"point {p!r} is not in the space", point=p)
            i = space.index(p)
            if class_of[i] != -1:
                raise PartitionError(f"point {p!r} appears in more than one class", point=p)
            class_of[i] = c
            idx.append(i)
        members.append(tuple(sorted(idx)))
    missing = np.flatnonzero(class_of < 0)
    if missing.size:
        p = space.label(int(missing[0]))
        raise PartitionError(f"point {p!r} is not covered by any class", point=p)
    if class_ids is None:
        class_ids = [f"C{c + 1}" for c in range(len(members))]
    class_ids = tuple(class_ids)
    if len(class_ids) != len(members) or len(set(class_ids)) != len(class_ids):
        raise PartitionError("class ids must be unique, one per class")
    return FiniteGroupoid(space, class_ids, tuple(members), _frozen(class_of, dtype=int))


def build_fiber_groupoid(
    space: PointSpace,
    T: Mapping | Callable,
    codomain: PointSpace | None = None,
) -> FiniteGroupoid:
    """Groupoid of the relation ``x ~ y iff T(x) == T(y)``.

    ``T`` is a mapping or callable on labels.  Images must lie in
    ``codomain`` (default: ``space`` itself).  Class ids are the image labels,
    ordered by first appearance along ``space``.
    """
    target = space if codomain is None else codomain
    fibers: dict = {}
    for p in space:
        try:
            q = T[p] if isinstance(T, Mapping) else T(p)
        except KeyError:
            raise PartitionError(f"map is not defined at {p!r}", point=p) from None
        if q not in target:
            raise PartitionError(f"map sends {p!r} to {q!r}, outside the codomain", point=p)
        fibers.setdefault(q, []).append(p)
    return build_partition_groupoid(space, list(fibers.values()), list(fibers))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of an axiom check.  Truthy iff the check passed."""

    ok: bool
    check: str
    witness: Any = None
    max_discrepancy: float = 0.0
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


# --------------------------------------------------------------------------
# kernels and transverse functions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Kernel:
    """``rows[y, x]`` is the mass the measure ``lambda^y`` puts on ``x``."""

    groupoid: FiniteGroupoid
    rows: np.ndarray

    def __post_init__(self):
        n = self.groupoid.n_points
        rows = np.asarray(self.rows, dtype=float)
        if rows.shape != (n, n):
            raise InputError(f"kernel must be {n}x{n}, got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise InputError("kernel entries must be finite")
        object.__setattr__(self, "rows", _frozen(rows))

    @classmethod
    def from_rows(cls, G: FiniteGroupoid, rows: Mapping[Hashable, Mapping[Hashable, float]]):
        mat = np.zeros((G.n_points, G.n_points))
        for y, row in rows.items():
            iy = G.space.index(y)
            for x, w in row.items():
                mat[iy, G.space.index(x)] = w
        return cls(G, mat)

    def row_masses(self) -> np.ndarray:
        return self.rows.sum(axis=1)

    def support_report(self) -> ValidationReport:
        G = self.groupoid
        outside = np.where(G.same_class, 0.0, np.abs(self.rows))
        worst = float(outside.max()) if outside.size else 0.0
        if worst > 0.0:
            y, x = np.unravel_index(int(np.argmax(outside)), outside.shape)
            pair = (G.space.label(y), G.space.label(x))
            return ValidationReport(
                False, "support", pair, worst,
                f"row {pair[0]!r} puts mass {worst:.3g} on {pair[1]!r} outside its class",
            )
        return ValidationReport(True, "support")


def identity_kernel(G: FiniteGroupoid) -> Kernel:
    return Kernel(G, np.eye(G.n_points))


def kernel_convolve(lam1: Kernel, lam2: Kernel, G: FiniteGroupoid | None = None) -> Kernel:
    """Convolution ``(lam1 * lam2)^y(s) = sum_x lam1^y(x) lam2^x(s)``."""
    G = check_same_groupoid(G or lam1.groupoid, lam1.groupoid, lam2.groupoid)
    for lam in (lam1, lam2):
        rep = lam.support_report()
        if not rep:
            raise ValidationError(rep.message, check=rep.check, witness=rep.witness)
    return Kernel(G, lam1.rows @ lam2.rows)


@dataclass(frozen=True, eq=False)
class TransverseFunction:
    """A kernel constant along classes: one weight vector per class.

    ``weights[x]`` is the mass that ``nu^y`` gives ``x`` for every ``y`` in
    the class of ``x``.  Weights may be signed; the positive and negative
    parts are then themselves transverse functions.
    """

    groupoid: FiniteGroupoid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.groupoid.n_points,):
            raise InputError(f"expected {self.groupoid.n_points} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InputError("transverse weights must be finite")
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def from_per_class(cls, G: FiniteGroupoid, per_class: Mapping[Hashable, Mapping[Hashable, float]]):
        w = np.zeros(G.n_points)
        for cid, row in per_class.items():
            c = G.class_index(cid)
            for p, val in row.items():
                i = G.space.index(p)
                if G.class_of[i] != c:
                    raise ValidationError(
                        f"point {p!r} is not a member of class {cid!r}", check="support", witness=(cid, p)
                    )
                w[i] = val
        return cls(G, w)

    @classmethod
    def uniform(cls, G: FiniteGroupoid) -> "TransverseFunction":
        return cls(G, 1.0 / G.class_sizes[G.class_of])

    @classmethod
    def from_density(cls, F, nu_hat: "TransverseFunction") -> "TransverseFunction":
        """The transverse function ``F(x) nu_hat^y(dx)``."""
        return cls(nu_hat.groupoid, point_values(F, nu_hat.groupoid.space) * nu_hat.weights)

    @classmethod
    def from_kernel(cls, lam: Kernel, tol: float = 0.0) -> "TransverseFunction":
        rep = validate_transverse(lam, lam.groupoid, allow_signed=True, tol=tol)
        if not rep:
            raise ValidationError(rep.message, check=rep.check, witness=rep.witness)
        G = lam.groupoid
        reps = np.array([m[0] for m in G.members])
        return cls(G, lam.rows[reps[G.class_of], np.arange(G.n_points)])

    def class_totals(self) -> np.ndarray:
        return self.groupoid.class_sum(self.weights)

    @cached_property
    def _class_deviation(self) -> float:
        if np.any(self.weights < 0):
            return np.inf
        return float(np.max(np.abs(self.class_totals() - 1.0)))

    def is_probability(self, tol: float = STRUCTURAL_TOL) -> bool:
        return self._class_deviation <= tol

    def is_signed(self) -> bool:
        return bool(np.any(self.weights < 0))

    def as_kernel(self) -> Kernel:
        G = self.groupoid
        return Kernel(G, np.where(G.same_class, self.weights[None, :], 0.0))

    def positive_part(self) -> "TransverseFunction":
        return TransverseFunction(self.groupoid, np.maximum(self.weights, 0.0))

    def negative_part(self) -> "TransverseFunction":
        return TransverseFunction(self.groupoid, np.maximum(-self.weights, 0.0))

    def per_class(self) -> dict:
        G = self.groupoid
        return {
            cid: {G.space.label(i): float(self.weights[i]) for i in mem}
            for cid, mem in zip(G.class_ids, G.members)
        }

    def __add__(self, other: "TransverseFunction") -> "TransverseFunction":
        check_same_groupoid(self.groupoid, other.groupoid)
        return TransverseFunction(self.groupoid, self.weights + other.weights)

    def __mul__(self, a: float) -> "TransverseFunction":
        return TransverseFunction(self.groupoid, a * self.weights)

    __rmul__ = __mul__


def validate_transverse(nu: Kernel, G: FiniteGroupoid | None = None, *, allow_signed: bool = False,
                        tol: float = 0.0) -> ValidationReport:
    """Check that ``nu^x == nu^y`` whenever ``x ~ y``.

    Support violations are reported first, then negative masses (unless
    ``allow_signed``), then the first in-class pair ``(x, y)`` whose rows
    differ by more than ``tol``, along with the largest row discrepancy.
    """
    G = check_same_groupoid(G or nu.groupoid, nu.groupoid)
    rep = nu.support_report()
    if not rep:
        return rep
    rows = nu.rows
    if not allow_signed and np.any(rows < 0):
        y, x = np.unravel_index(int(np.argmin(rows)), rows.shape)
        pair = (G.space.label(y), G.space.label(x))
        return ValidationReport(False, "sign", pair, float(-rows[y, x]),
                                f"row {pair[0]!r} has negative mass at {pair[1]!r}")
    worst, first = 0.0, None
    for mem in G.members:
        ref = rows[mem[0]]
        for y in mem[1:]:
            d = float(np.max(np.abs(rows[y] - ref)))
            if d > tol and first is None:
                first = (G.space.label(mem[0]), G.space.label(y))
            worst = max(worst, d)
    if first is not None:
        return ValidationReport(False, "transverse", first, worst,
                                f"rows {first[0]!r} and {first[1]!r} differ by {worst:.3g}")
    return ValidationReport(True, "transverse", max_discrepancy=worst)


# --------------------------------------------------------------------------
# potentials, modular functions, measures
# --------------------------------------------------------------------------


def point_values(f, space: PointSpace) -> np.ndarray:
    """Coerce a point function (array, sequence, mapping, Potential) to an array."""
    if isinstance(f, Potential):
        if f.space != space:
            raise InputError("potential lives on a different point space")
        return f.values
    if isinstance(f, Mapping):
        out = np.zeros(len(space))
        for p, v in f.items():
            out[space.index(p)] = v
        return out
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full(len(space), float(arr))
    if arr.shape != (len(space),):
        raise InputError(f"expected {len(space)} point values, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Potential:
    """A bounded real function on points, on the natural-log scale."""

    space: PointSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.space),):
            raise InputError(f"expected {len(self.space)} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("potential values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_dict(cls, space: PointSpace, values: Mapping) -> "Potential":
        missing = [p for p in space if p not in values]
        if missing:
            raise InputError(f"potential is missing a value for {missing[0]!r}")
        return cls(space, [values[p] for p in space])

    @classmethod
    def constant(cls, space: PointSpace, c: float = 0.0) -> "Potential":
        return cls(space, np.full(len(space), float(c)))

    @cached_property
    def exp(self) -> np.ndarray:
        return _frozen(np.exp(self.values))

    def as_dict(self) -> dict:
        return {p: float(v) for p, v in zip(self.space, self.values)}


@dataclass(frozen=True, eq=False)
class ModularFunction:
    """A positive cocycle on in-class pairs.

    Either ``exp_form`` holds a potential ``V`` (meaning
    ``delta(x, y) = exp(V(y) - V(x))``) or ``table`` maps label pairs to
    positive reals.
    """

    exp_form: Potential | None = None
    table: Mapping | None = None

    def __post_init__(self):
        if (self.exp_form is None) == (self.table is None):
            raise InputError("a modular function needs exactly one of exp_form or table")

    @classmethod
    def from_potential(cls, V: Potential) -> "ModularFunction":
        return cls(exp_form=V)

    @classmethod
    def from_table(cls, table: Mapping) -> "ModularFunction":
        return cls(table=dict(table))

    @classmethod
    def constant_one(cls, G: FiniteGroupoid) -> "ModularFunction":
        return cls(exp_form=Potential.constant(G.space, 0.0))

    def matrix(self, G: FiniteGroupoid) -> np.ndarray:
        """``D[x, y] = delta(x, y)`` on in-class pairs, NaN elsewhere.

        Raises
        ------
        ValidationError
            If a table is missing an in-class pair.
        """
        n = G.n_points
        D = np.full((n, n), np.nan)
        if self.exp_form is not None:
            V = point_values(self.exp_form, G.space)
            D[G.same_class] = np.exp(V[None, :] - V[:, None])[G.same_class]
            return D
        for mem in G.members:
            for i in mem:
                for j in mem:
                    key = (G.space.label(i), G.space.label(j))
                    if key not in self.table:
                        raise ValidationError(f"modular table has no entry for {key!r}",
                                              check="modular", witness=key)
                    D[i, j] = self.table[key]
        return D


def validate_modular(delta: ModularFunction, G: FiniteGroupoid, tol: float = STRUCTURAL_TOL) -> ValidationReport:
    """Check ``delta(x,y) delta(y,z) = delta(x,z)`` on every in-class triple.

    The comparison is relative: ``|lhs - rhs| <= tol * |rhs|``.  The
    reported discrepancy is the largest relative error seen.
    """
    D = delta.matrix(G)
    worst, first = 0.0, None
    for mem in G.members:
        idx = np.asarray(mem)
        sub = D[np.ix_(idx, idx)]
        if np.any(sub <= 0):
            i, j = np.unravel_index(int(np.argmin(sub)), sub.shape)
            pair = (G.space.label(idx[i]), G.space.label(idx[j]))
            return ValidationReport(False, "positivity", pair, float(-sub[i, j]),
                                    f"delta{pair!r} is not positive")
        # lhs[x, y, z] = delta(x, y) delta(y, z); rhs[x, z] = delta(x, z)
        lhs = sub[:, :, None] * sub[None, :, :]
        rel = np.abs(lhs - sub[:, None, :]) / np.abs(sub[:, None, :])
        m = float(rel.max())
        if m > tol and first is None:
            x, y, z = np.unravel_index(int(np.argmax(rel)), rel.shape)
            first = tuple(G.space.label(idx[k]) for k in (x, y, z))
        worst = max(worst, m)
    if first is not None:
        return ValidationReport(False, "cocycle", first, worst,
                                f"cocycle identity fails on {first!r} (relative error {worst:.3g})")
    return ValidationReport(True, "cocycle", max_discrepancy=worst)


@dataclass(frozen=True, eq=False)
class Measure:
    """A finite nonnegative measure on a point space."""

    space: PointSpace
    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        if m.shape != (len(self.space),):
            raise InputError(f"expected {len(self.space)} masses, got shape {m.shape}")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise InputError("masses must be finite and nonnegative")
        object.__setattr__(self, "mass", _frozen(m))

    @classmethod
    def from_dict(cls, space: PointSpace, mass: Mapping) -> "Measure":
        return cls(space, point_values(mass, space))

    @classmethod
    def point_mass(cls, space: PointSpace, label) -> "Measure":
        m = np.zeros(len(space))
        m[space.index(label)] = 1.0
        return cls(space, m)

    @classmethod
    def uniform(cls, space: PointSpace) -> "Measure":
        return cls(space, np.full(len(space), 1.0 / len(space)))

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def is_probability(self, tol: float = STRUCTURAL_TOL) -> bool:
        return abs(self.total - 1.0) <= tol

    def integrate(self, f) -> float:
        return float(self.mass @ point_values(f, self.space))

    def as_dict(self) -> dict:
        return {p: float(v) for p, v in zip(self.space, self.mass)}


def saturation_check(M: Measure, G: FiniteGroupoid) -> tuple[bool, Any]:
    """``M(B) = 0 => M(S[B]) = 0`` for atomic ``M`` on finite classes.

    Equivalent to every class being either entirely charged or entirely
    null.  Returns ``(True, None)`` or ``(False, class_id)`` for the first
    offending class.
    """
    if M.space != G.space:
        raise InputError("measure and groupoid live on different point spaces")
    pos = M.mass > 0
    n_pos = np.bincount(G.class_of, weights=pos, minlength=G.n_classes)
    bad = np.flatnonzero((n_pos > 0) & (n_pos < G.class_sizes))
    if bad.size:
        return False, G.class_ids[int(bad[0])]
    return True, None


def random_transverse(G: FiniteGroupoid, rng: np.random.Generator, *, probability: bool = True,
                      zeros: bool = False) -> TransverseFunction:
    """Random nonnegative transverse function; normalized per class if ``probability``."""
    w = rng.random(G.n_points) + (0.0 if zeros else 0.05)
    if zeros:
        w[rng.random(G.n_points) < 0.2] = 0.0
        # every class keeps at least one charged point
        for mem in G.members:
            if not np.any(w[list(mem)] > 0):
                w[mem[0]] = 1.0
    if probability:
        w = w / G.class_sum(w)[G.class_of]
    return TransverseFunction(G, w)


def random_groupoid(rng: np.random.Generator, max_points: int = 64, max_classes: int = 8,
                    min_points: int = 1) -> FiniteGroupoid:
    """Random partition groupoid on ``p0, p1, ...``."""
    n = int(rng.integers(min_points, max_points + 1))
    k = int(rng.integers(1, min(max_classes, n) + 1))
    labels = rng.permutation(n)
    cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False)) if k > 1 else []
    space = PointSpace(tuple(f"p{i}" for i in range(n)))
    classes = [[f"p{i}" for i in part] for part in np.split(labels, cuts)]
    return build_partition_groupoid(space, classes)


def iter_pairs(G: FiniteGroupoid) -> Iterable[tuple[int, int]]:
    """In-class ordered pairs ``(x, y)`` as point indices, class by class."""
    for mem in G.members:
        for i in mem:
            for j in mem:
                yield i, j
