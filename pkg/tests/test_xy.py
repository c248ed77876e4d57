import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from haarthermo.errors import ConvergenceError, InputError
from haarthermo.thermo import pressure
from haarthermo.transfer import apply_H
from haarthermo.xy import (
    CylinderFunction,
    XYSpec,
    cylinder_groupoid,
    cylinder_quasi_invariance,
    dense_eigen,
    dense_transfer_matrix,
    eigenprob,
    eigenprob_table,
    h_vs_ruelle_check,
    leading_eigen,
    limit_quotient,
    random_xy_spec,
    ruelle_apply,
    ruelle_dual_apply,
    ruelle_normalize,
    xy_quasi_invariance_check,
)

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture
def sym():
    return XYSpec(("a", "b"), [0.5, 0.5], np.log([[2.0, 1.0], [1.0, 2.0]]))


@pytest.fixture
def asym():
    return XYSpec((0, 1), [0.5, 0.5], np.log([[2.0, 1.0], [3.0, 1.0]]))


def _asym_closed_form():
    # A = 1/2 e^V transposed = [[1, 3/2], [1/2, 1/2]], char poly c^2 - 3c/2 - 1/4
    c = (1.5 + math.sqrt(3.25)) / 2
    phi = np.array([1.5, c - 1])
    rho = np.array([1.0, 2 * (c - 1)])
    rho = rho / rho.sum()
    return c, phi / (phi @ rho), rho


def test_spec_validation():
    with pytest.raises(InputError):
        XYSpec((0, 1), [0.7, 0.7], np.zeros((2, 2)))
    with pytest.raises(InputError):
        XYSpec((0, 0), [0.5, 0.5], np.zeros(2))
    with pytest.raises(InputError):
        XYSpec((0, 1), [0.5, 0.5], np.zeros((2, 3)))
    with pytest.raises(InputError):
        XYSpec((0, 1), [0.5, 0.5], [0.0, np.inf])
    with pytest.raises(InputError):
        XYSpec((0, 1), [0.5, 0.5], np.zeros(2), base_symbol=7)
    assert XYSpec((0, 1), [0.5, 0.5], np.zeros((2, 2, 2))).depth == 3


def test_ruelle_of_one_with_zero_potential():
    spec = XYSpec((0, 1, 2), [0.2, 0.3, 0.5], np.zeros((3, 3)))
    out = ruelle_apply(spec, CylinderFunction.constant())
    np.testing.assert_allclose(out.table, 1.0, atol=1e-15)


def test_ruelle_apply_matches_double_loop(asym):
    f = np.array([0.3, -1.7])
    out = ruelle_apply(asym, f)
    expected = [sum(0.5 * math.exp(asym.potential[a, x]) * f[a] for a in range(2)) for x in range(2)]
    np.testing.assert_allclose(out.table, expected, atol=1e-15)
    np.testing.assert_allclose(out.table, dense_transfer_matrix(asym) @ f, atol=1e-15)


def test_ruelle_output_depth(asym):
    assert ruelle_apply(asym, CylinderFunction.constant()).depth == 1
    assert ruelle_apply(asym, np.zeros((2, 2, 2))).depth == 2
    flat = asym.with_potential(np.zeros(2))
    assert ruelle_apply(flat, CylinderFunction.constant()).depth == 0


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_ruelle_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    d, k = int(rng.integers(2, 4)), int(rng.integers(1, 4))
    spec = random_xy_spec(rng, d, k)
    n = max(k - 1, 1) + int(rng.integers(0, 2))
    f = rng.standard_normal((d,) * n)
    B, words = oracles.xy_transfer_matrix(d, spec.a_priori, spec.potential, n)
    got = ruelle_apply(spec, f).extend(d, n).reshape(-1)
    np.testing.assert_allclose(got, B @ f.reshape(-1), rtol=1e-13, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_shift_composition_factors(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 4))
    spec = random_xy_spec(rng, d, 2)
    g = rng.standard_normal(d)
    g_after_shift = np.broadcast_to(g[None, :], (d, d))
    lhs = ruelle_apply(spec, g_after_shift).table
    rhs = g * ruelle_apply(spec, CylinderFunction.constant()).table
    np.testing.assert_allclose(lhs, rhs, rtol=1e-14, atol=1e-15)


def test_dual_apply_is_transpose(asym, rng):
    A = dense_transfer_matrix(asym)
    r = rng.random(2)
    np.testing.assert_allclose(ruelle_dual_apply(asym, r), r @ A, atol=1e-15)
    with pytest.raises(InputError):
        ruelle_dual_apply(asym, np.ones((2, 2)))


def test_eigen_zero_potential():
    spec = XYSpec((0, 1, 2), [0.2, 0.3, 0.5], np.zeros((3, 3)))
    e = leading_eigen(spec)
    assert e.c == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(e.phi.table, 1.0, atol=1e-12)


def test_eigen_symmetric_fixture(sym):
    e = leading_eigen(sym)
    assert e.c == pytest.approx(1.5, abs=1e-12)
    np.testing.assert_allclose(e.phi.table, [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(e.rho, [0.5, 0.5], atol=1e-12)


def test_eigen_asymmetric_fixture(asym):
    c, phi, rho = _asym_closed_form()
    e = leading_eigen(asym)
    assert e.c == pytest.approx(c, abs=1e-12)
    np.testing.assert_allclose(e.phi.table, phi, atol=1e-11)
    np.testing.assert_allclose(e.rho, rho, atol=1e-12)
    dc, dphi, drho = dense_eigen(asym)
    assert dc == pytest.approx(c, abs=1e-14)
    np.testing.assert_allclose(drho, rho, atol=1e-14)
    np.testing.assert_allclose(dphi, phi, atol=1e-13)
    assert e.residual_phi <= 1e-10 * e.c and e.residual_rho <= 1e-10 * e.c


def test_eigen_depth_one_potential():
    m = np.array([0.1, 0.6, 0.3])
    V = np.array([0.4, -1.2, 2.0])
    e = leading_eigen(XYSpec((0, 1, 2), m, V))
    assert e.c == pytest.approx(float(m @ np.exp(V)), rel=1e-14)
    assert e.phi.depth == 0 and float(e.phi.table) == pytest.approx(1.0, abs=1e-14)


def test_eigen_convergence_error(asym):
    with pytest.raises(ConvergenceError) as exc:
        leading_eigen(asym, max_iter=2)
    assert exc.value.residual > 0


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_eigen_matches_dense(seed):
    rng = np.random.default_rng(seed)
    spec = random_xy_spec(rng, int(rng.integers(2, 4)), int(rng.integers(2, 4)))
    e = leading_eigen(spec)
    c, phi, rho = dense_eigen(spec)
    assert e.c == pytest.approx(c, rel=1e-11)
    np.testing.assert_allclose(e.rho, rho, atol=1e-11)
    np.testing.assert_allclose(e.phi.table, phi, rtol=1e-10)
    assert float(np.sum(e.phi.table * e.rho)) == pytest.approx(1.0, abs=1e-14)


def test_eigenprob_zero_potential_is_bernoulli():
    m = np.array([0.2, 0.3, 0.5])
    spec = XYSpec((0, 1, 2), m, np.zeros((3, 3)))
    table = eigenprob_table(spec, 3)
    np.testing.assert_allclose(table, np.einsum("i,j,k->ijk", m, m, m), atol=1e-14)


def test_eigenprob_measure_labels(asym):
    M = eigenprob(asym, 2)
    assert tuple(M.space) == ((0, 0), (0, 1), (1, 0), (1, 1))
    assert M.mass.sum() == pytest.approx(1.0, abs=1e-14)
    _, _, rho = _asym_closed_form()
    np.testing.assert_allclose(eigenprob_table(asym, 1), rho, atol=1e-12)
    assert float(eigenprob_table(asym, 0)) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_eigenprob_projective(seed):
    rng = np.random.default_rng(seed)
    spec = random_xy_spec(rng, int(rng.integers(2, 4)), int(rng.integers(1, 4)))
    e = leading_eigen(spec)
    prev = eigenprob_table(spec, 1, e)
    for n in range(2, 6):
        cur = eigenprob_table(spec, n, e)
        np.testing.assert_allclose(cur.sum(axis=-1), prev, atol=1e-12)
        prev = cur


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_eigenprob_matches_deep_left_vector(seed):
    rng = np.random.default_rng(seed)
    d, k = int(rng.integers(2, 4)), int(rng.integers(1, 3))
    spec = random_xy_spec(rng, d, k)
    n = 3
    c, rho, words = oracles.xy_eigenprobability(d, spec.a_priori, spec.potential, n)
    e = leading_eigen(spec)
    assert e.c == pytest.approx(c, rel=1e-11)
    np.testing.assert_allclose(eigenprob_table(spec, n, e).reshape(-1), rho, atol=1e-11)


def test_limit_quotient_trivial_cases():
    m = np.array([0.2, 0.3, 0.5])
    spec = XYSpec(("x", "y", "z"), m, np.zeros((3, 3)))
    for a in range(3):
        h = np.eye(3)[a]
        for n in (1, 2, 7):
            assert limit_quotient(spec, h, n) == pytest.approx(m[a], abs=1e-15)
    asym = XYSpec((0, 1), [0.5, 0.5], np.log([[2.0, 1.0], [3.0, 1.0]]))
    for n in (0, 1, 5, 40):
        assert limit_quotient(asym, CylinderFunction.constant(), n) == pytest.approx(1.0, abs=1e-14)


def test_limit_quotient_fixture(asym):
    _, _, rho = _asym_closed_form()
    h = np.array([2.0, -1.0])
    assert limit_quotient(asym, h, 50) == pytest.approx(float(h @ rho), abs=1e-10)


def test_limit_quotient_converges_geometrically(asym):
    _, _, rho = _asym_closed_form()
    h = np.array([2.0, -1.0])
    target = float(h @ rho)
    errs = [abs(limit_quotient(asym, h, n) - target) for n in range(1, 9)]
    c = (1.5 + math.sqrt(3.25)) / 2
    ratio = abs(0.75 - c) / c
    for e1, e2 in zip(errs, errs[1:]):
        assert e2 <= 1.01 * ratio * e1


def test_limit_quotient_base_symbol_irrelevant_in_the_limit(asym):
    other = XYSpec(asym.alphabet, asym.a_priori, asym.potential, base_symbol=1)
    h = np.array([0.4, 1.3])
    assert limit_quotient(asym, h, 60) == pytest.approx(limit_quotient(other, h, 60), abs=1e-12)


def test_limit_quotient_rejects_shallow_n(asym):
    with pytest.raises(InputError):
        limit_quotient(asym, np.ones((2, 2, 2)), 2)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_limit_quotient_deep_h(seed):
    rng = np.random.default_rng(seed)
    spec = random_xy_spec(rng, int(rng.integers(2, 4)), 2)
    h = rng.standard_normal((spec.d,) * 3)
    expected = float(np.sum(h * eigenprob_table(spec, 3)))
    assert limit_quotient(spec, h, 60) == pytest.approx(expected, abs=1e-10)


def test_normalize_zero_potential():
    spec = XYSpec((0, 1), [0.3, 0.7], np.zeros((2, 2)))
    e = leading_eigen(spec)
    np.testing.assert_allclose(ruelle_normalize(spec, e.c, e.phi).potential, 0.0, atol=1e-12)


def test_normalize_fixture(asym):
    e = leading_eigen(asym)
    U = ruelle_normalize(asym, e.c, e.phi)
    assert np.max(np.abs(ruelle_apply(U, CylinderFunction.constant()).table - 1)) <= 1e-10
    mu = e.phi.table * e.rho
    np.testing.assert_allclose(ruelle_dual_apply(U, mu), mu, atol=1e-12)
    dc, _, dmu = dense_eigen(U)
    assert dc == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(dmu, mu, atol=1e-11)


def test_normalize_rejects_wrong_depth(asym):
    with pytest.raises(InputError):
        ruelle_normalize(asym, 1.0, np.ones((2, 2)))


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_normalize_random(seed):
    rng = np.random.default_rng(seed)
    spec = random_xy_spec(rng, int(rng.integers(2, 4)), int(rng.integers(1, 4)), scale=2.0)
    e = leading_eigen(spec)
    U = ruelle_normalize(spec, e.c, e.phi)
    assert np.max(np.abs(ruelle_apply(U, CylinderFunction.constant()).table - 1)) <= 1e-10
    # normalized in the Ruelle sense means Haar-normalized on the cylinder groupoid
    cg = cylinder_groupoid(U, max(U.depth, 2))
    assert pressure(cg.potential, cg.nu_hat, cg.groupoid).value == pytest.approx(0.0, abs=1e-10)


def test_cylinder_groupoid_shape(asym):
    cg = cylinder_groupoid(asym, 3)
    assert cg.groupoid.n_points == 8 and cg.groupoid.n_classes == 4
    assert cg.groupoid.classes[(1, 0)] == [(0, 1, 0), (1, 1, 0)]
    np.testing.assert_allclose(cg.nu_hat.weights, 0.5)
    with pytest.raises(InputError):
        cylinder_groupoid(asym.with_potential(np.zeros((2, 2, 2))), 2)


def test_quasi_zero_potential():
    m = np.array([0.2, 0.3, 0.5])
    spec = XYSpec((0, 1, 2), m, np.zeros((3, 3)))
    rho = eigenprob_table(spec, 3)
    assert xy_quasi_invariance_check(spec, rho, 3).residual <= 1e-12


def test_quasi_fixture_and_negative_control(asym):
    rho = eigenprob_table(asym, 3)
    res = xy_quasi_invariance_check(asym, rho, 3)
    assert res.residual <= 1e-9
    bad = xy_quasi_invariance_check(asym, rho, 3, unit_modulus=True)
    assert bad.residual > 1e-3
    a, b, t = bad.worst
    assert a in asym.alphabet and b in asym.alphabet and len(t) == 2
    loop = oracles.xy_quasi_residual(2, asym.a_priori, asym.potential, rho, 3, unit_modulus=True)
    assert bad.residual == pytest.approx(loop, abs=1e-15)


def test_quasi_rejects_shallow_rho(asym):
    with pytest.raises(InputError):
        xy_quasi_invariance_check(asym, eigenprob_table(asym, 2), 3)
    with pytest.raises(InputError):
        xy_quasi_invariance_check(asym, eigenprob_table(asym, 2), 0)


def test_quasi_marginalizes_deeper_rho(asym):
    deep = xy_quasi_invariance_check(asym, eigenprob_table(asym, 5), 3)
    assert deep.residual <= 1e-9


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_quasi_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    d, k = int(rng.integers(2, 4)), int(rng.integers(1, 4))
    spec = random_xy_spec(rng, d, k)
    n = int(rng.integers(1, 4))
    rho = eigenprob_table(spec, max(n, k))
    for unit in (False, True):
        got = xy_quasi_invariance_check(spec, rho, n, unit_modulus=unit).residual
        assert got == pytest.approx(oracles.xy_quasi_residual(d, spec.a_priori, spec.potential, rho, n, unit),
                                    abs=1e-14)
    assert xy_quasi_invariance_check(spec, rho, n).residual <= 1e-9


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_cylinder_quasi_invariance_agrees(seed):
    rng = np.random.default_rng(seed)
    spec = random_xy_spec(rng, int(rng.integers(2, 4)), 2)
    assert cylinder_quasi_invariance(spec, 3).residual <= 1e-12
    if np.ptp(spec.potential) > 1e-3:
        assert cylinder_quasi_invariance(spec, 3, unit_modulus=True).residual > 0


def test_h_vs_ruelle_fixtures(asym):
    assert h_vs_ruelle_check(asym, np.array([1.0, -2.0]), 2) <= 1e-12
    e = leading_eigen(asym)
    U = ruelle_normalize(asym, e.c, e.phi)
    cg = cylinder_groupoid(U, 2)
    np.testing.assert_allclose(apply_H(cg.potential, np.ones(4), cg.nu_hat, cg.groupoid).lift(), 1.0, atol=1e-12)
    assert h_vs_ruelle_check(U, CylinderFunction.constant(), 2) <= 1e-12
    with pytest.raises(InputError):
        h_vs_ruelle_check(asym, np.ones((2, 2, 2)), 2)


def test_h_vs_ruelle_shift_composition(asym):
    g = np.array([0.7, -0.4])
    g_shift = np.broadcast_to(g[None, :], (2, 2))
    L1 = ruelle_apply(asym, CylinderFunction.constant()).table
    np.testing.assert_allclose(ruelle_apply(asym, g_shift).table, g * L1, atol=1e-15)
    assert h_vs_ruelle_check(asym, g_shift, 3) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_h_vs_ruelle_random(seed):
    rng = np.random.default_rng(seed)
    d, k = int(rng.integers(2, 4)), int(rng.integers(1, 4))
    spec = random_xy_spec(rng, d, k)
    j = int(rng.integers(0, 4))
    f = rng.standard_normal((d,) * j)
    assert h_vs_ruelle_check(spec, f, max(k, j, 1) + 1) <= 1e-12


def test_cylinders_order(asym):
    assert asym.cylinders(2) == list(itertools.product((0, 1), repeat=2))
