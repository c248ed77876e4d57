import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from haarthermo.errors import InputError, NotNormalizedError, ValidationError
from haarthermo.groupoid import (
    Kernel,
    Measure,
    PointSpace,
    Potential,
    TransverseFunction,
    build_partition_groupoid,
    identity_kernel,
    random_groupoid,
    random_transverse,
)
from haarthermo.transfer import invariant_from_seed, random_normalized, random_seed_measure
from haarthermo.transverse import (
    TransverseMeasure,
    coco_invariance_check,
    density_identity_check,
    lambda_eval,
    lambda_eval_modular,
    measure_from_transverse,
    random_unit_kernel,
)

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture
def g4_lambda(g4, g4_nu, g4_v):
    V = Potential(g4.space, g4_v)
    return TransverseMeasure(V, Measure(g4.space, [1 / 3, 2 / 3, 0, 0]), g4_nu)


def _random_lambda(seed, max_points=30):
    rng = np.random.default_rng(seed)
    G = random_groupoid(rng, max_points=max_points)
    nu = random_transverse(G, rng)
    V = random_normalized(nu, rng)
    M = invariant_from_seed(V, random_seed_measure(G, rng, sparse=True), nu)
    return rng, G, nu, TransverseMeasure(V, M, nu)


def test_g4_values(g4_lambda, g4_nu):
    assert lambda_eval(g4_lambda, g4_nu) == pytest.approx(1.0, abs=1e-15)
    nu = TransverseFunction.from_density([1, 2, 3, 4], g4_nu)
    assert lambda_eval(g4_lambda, nu) == pytest.approx(5 / 3, abs=1e-15)
    assert g4_lambda(nu) == lambda_eval(g4_lambda, nu)
    assert density_identity_check(g4_lambda, [1, 2, 3, 4]) <= 1e-15
    assert density_identity_check(g4_lambda, np.ones(4)) <= 1e-15


def test_construction_rejects_bad_pairs(g4, g4_nu, g4_u, g4_v):
    with pytest.raises(NotNormalizedError):
        TransverseMeasure(Potential(g4.space, g4_u), Measure.uniform(g4.space), g4_nu)
    with pytest.raises(ValidationError) as exc:
        TransverseMeasure(Potential(g4.space, g4_v), Measure.point_mass(g4.space, "p1"), g4_nu)
    assert exc.value.check == "haar"
    with pytest.raises(ValidationError):
        TransverseMeasure(Potential(g4.space, g4_v), Measure(g4.space, [1 / 6, 1 / 3, 0, 0]), g4_nu)


def test_groupoid_mismatch(g4_lambda):
    other = build_partition_groupoid(PointSpace(("a", "b")), [["a", "b"]])
    with pytest.raises(InputError):
        lambda_eval(g4_lambda, TransverseFunction.uniform(other))


def test_signed_split(g4_lambda, g4_nu):
    f = np.array([1.5, -2.0, 0.5, -0.25])
    nu = TransverseFunction.from_density(f, g4_nu)
    pos = lambda_eval(g4_lambda, nu.positive_part())
    neg = lambda_eval(g4_lambda, nu.negative_part())
    assert lambda_eval(g4_lambda, nu) == pytest.approx(pos - neg, abs=1e-15)
    assert lambda_eval(g4_lambda, nu) == pytest.approx(g4_lambda.base.integrate(f), abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_two_forms_agree_and_match_oracle(seed):
    rng, G, nu_hat, Lam = _random_lambda(seed)
    nu = random_transverse(G, rng, probability=False)
    val = lambda_eval(Lam, nu)
    assert abs(val - lambda_eval_modular(Lam, nu)) <= 1e-12 * max(1.0, abs(val))
    assert val == pytest.approx(oracles.lambda_value(G, Lam.modulus.values, Lam.base.mass, nu.weights), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_density_identity(seed):
    rng, G, nu_hat, Lam = _random_lambda(seed)
    assert density_identity_check(Lam, rng.standard_normal(G.n_points)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_linearity(seed):
    rng, G, nu_hat, Lam = _random_lambda(seed)
    nu, mu = (random_transverse(G, rng, probability=False) for _ in range(2))
    a, b = rng.random(2) * 3
    assert lambda_eval(Lam, nu * a + mu * b) == pytest.approx(a * lambda_eval(Lam, nu) + b * lambda_eval(Lam, mu),
                                                               rel=1e-12)


def test_round_trip_g4(g4_lambda, g4_nu):
    M = measure_from_transverse(g4_lambda, g4_nu, g4_lambda.modulus)
    np.testing.assert_allclose(M.mass, g4_lambda.base.mass, atol=1e-15)


def test_round_trip_rejects_unnormalized(g4_lambda, g4_nu):
    with pytest.raises(ValidationError):
        measure_from_transverse(lambda nu: 2 * lambda_eval(g4_lambda, nu), g4_nu)


def test_round_trip_trivial_groupoid(rng):
    space = PointSpace(("a", "b", "c"))
    G = build_partition_groupoid(space, [["a"], ["b"], ["c"]])
    nu_hat = TransverseFunction.uniform(G)
    M = Measure(space, [0.2, 0.5, 0.3])
    back = measure_from_transverse(lambda nu: float(nu.weights @ M.mass), nu_hat)
    np.testing.assert_allclose(back.mass, M.mass, atol=1e-16)


def test_round_trip_pair_groupoid_gives_exp_v_m(rng):
    space = PointSpace(tuple(range(5)))
    G = build_partition_groupoid(space, [list(space)])
    m = TransverseFunction(G, rng.dirichlet(np.ones(5)))
    V = random_normalized(m, rng)
    Lam = TransverseMeasure(V, invariant_from_seed(V, Measure.uniform(space), m), m)
    back = measure_from_transverse(Lam, m, V)
    np.testing.assert_allclose(back.mass, np.exp(V.values) * m.weights, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_round_trip_random(seed):
    rng, G, nu_hat, Lam = _random_lambda(seed)
    M2 = measure_from_transverse(Lam, nu_hat, Lam.modulus)
    assert np.max(np.abs(M2.mass - Lam.base.mass)) <= 1e-14
    back = TransverseMeasure(Lam.modulus, M2, nu_hat)
    for _ in range(10):
        nu = random_transverse(G, rng, probability=False)
        assert lambda_eval(back, nu) == pytest.approx(lambda_eval(Lam, nu), abs=1e-12)


def test_coco_fixtures(g4, g4_lambda, g4_nu):
    res = coco_invariance_check(g4_lambda, g4_nu, g4_nu.as_kernel())
    assert res.residual <= 1e-12
    flat = TransverseMeasure(Potential(g4.space, np.zeros(4)), Measure.uniform(g4.space), g4_nu)
    nu1 = TransverseFunction.from_density([0.3, 1.2, 2.0, 0.1], g4_nu)
    same = coco_invariance_check(flat, nu1, identity_kernel(g4))
    assert same.residual == 0.0
    np.testing.assert_array_equal(same.nu2.weights, nu1.weights)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_coco_structured_kernel_gives_class_constant_density(seed):
    rng, G, nu_hat, Lam = _random_lambda(seed)
    w = Lam.modulus.exp * nu_hat.weights
    lam = Kernel(G, np.where(G.same_class, w[None, :], 0.0))
    nu1 = random_transverse(G, rng, probability=False)
    res = coco_invariance_check(Lam, nu1, lam)
    assert res.residual <= 1e-12
    C = G.class_sum(Lam.modulus.exp * nu1.weights)[G.class_of]
    np.testing.assert_allclose(res.nu2.weights, C * nu_hat.weights, rtol=1e-12, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_coco_random_kernels(seed):
    rng, G, nu_hat, Lam = _random_lambda(seed, max_points=20)
    nu1 = random_transverse(G, rng, probability=False)
    for _ in range(5):
        assert coco_invariance_check(Lam, nu1, random_unit_kernel(G, rng)).residual <= 1e-12


def test_coco_rejects_non_unit_rows(g4, g4_lambda, g4_nu):
    with pytest.raises(ValidationError) as exc:
        coco_invariance_check(g4_lambda, g4_nu, Kernel(g4, 2 * np.eye(4)))
    assert exc.value.check == "unit_rows"
