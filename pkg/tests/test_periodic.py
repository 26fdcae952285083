"""Fourier layer: exactness of products, derivatives, means, antiderivatives."""

import numpy as np
import pytest

from steklov.periodic import (
    PeriodicFunction,
    CorruptedDataError,
    NonPositiveFunctionError,
    antiderivative,
    differentiate,
    mean,
    multiply,
    reciprocal,
    require_positive,
)


def rand_trig(rng, order=4, scale=0.5, real=True, cap=64):
    """Random trigonometric polynomial, conjugate-symmetric when real."""
    c = {}
    for n in range(1, order + 1):
        a = scale * (rng.standard_normal() + 1j * rng.standard_normal()) / n
        c[n] = a
        c[-n] = np.conj(a) if real else scale * (rng.standard_normal() + 1j * rng.standard_normal())
    c[0] = rng.standard_normal() if real else rng.standard_normal() + 1j * rng.standard_normal()
    return PeriodicFunction.from_dict(c, cap=cap)


def test_multiply_product_to_sum_identity():
    c = PeriodicFunction.cosine(1)
    prod = multiply(c, c)
    expected = PeriodicFunction.constant(0.5) + PeriodicFunction.cosine(2, 0.5)
    assert prod.allclose(expected, tol=1e-15)


def test_multiply_by_one_is_identity():
    rng = np.random.default_rng(0)
    f = rand_trig(rng)
    one = PeriodicFunction.constant(1.0)
    assert multiply(one, f).allclose(f, tol=1e-15)


def test_multiply_matches_pointwise_grid():
    f = PeriodicFunction.constant(1.0) + PeriodicFunction.cosine(1, 0.3)
    g = PeriodicFunction.sine(2)
    prod = multiply(f, g)
    x = 2 * np.pi * np.arange(64) / 64
    direct = f.evaluate(x) * g.evaluate(x)
    assert np.max(np.abs(prod.evaluate(x) - direct)) < 1e-12


def test_multiply_truncation_policy_recorded():
    f = rand_trig(np.random.default_rng(1), order=5, cap=8)
    g = rand_trig(np.random.default_rng(2), order=5, cap=8)
    prod = multiply(f, g)
    assert prod.order <= 8
    assert prod.truncated


def test_differentiate_cos_and_constant():
    assert differentiate(PeriodicFunction.cosine(1)).allclose(PeriodicFunction.sine(1, -1.0))
    assert differentiate(PeriodicFunction.constant(3.7)).allclose(PeriodicFunction.zero())


def test_differentiate_matches_central_differences():
    rng = np.random.default_rng(3)
    f = rand_trig(rng, order=6)
    x = np.linspace(0, 2 * np.pi, 17)[:-1]
    h = 1e-5
    fd = (f.evaluate(x + h) - f.evaluate(x - h)) / (2 * h)
    assert np.max(np.abs(differentiate(f).evaluate(x) - fd)) < 1e-8


def test_mean_examples():
    f = PeriodicFunction.constant(1.0) + PeriodicFunction.cosine(1, 0.3)
    assert mean(f) == 1.0
    assert mean(PeriodicFunction.sine(7)) == 0.0


def test_mean_matches_trapezoid_quadrature():
    # rho = exp(0.1 cos x) truncated at order 32, vs 4096-point trapezoid
    rho = PeriodicFunction.from_callable(lambda x: np.exp(0.1 * np.cos(x)), order=32)
    n = 4096
    x = 2 * np.pi * np.arange(n) / n
    quad = np.mean(np.exp(0.1 * np.cos(x)))
    assert abs(mean(rho) - quad) < 1e-12


def test_mean_rejects_corrupted_real_data():
    f = PeriodicFunction.from_dict({0: 1.0 + 0.1j})
    with pytest.raises(CorruptedDataError):
        mean(f)


def test_antiderivative_constant_and_cosine():
    slope, per = antiderivative(PeriodicFunction.constant(1.0))
    assert slope == 1.0
    assert per.allclose(PeriodicFunction.zero())
    slope, per = antiderivative(PeriodicFunction.cosine(1))
    assert slope == 0.0
    assert per.allclose(PeriodicFunction.sine(1))


def test_antiderivative_zero_mean_is_periodic():
    rng = np.random.default_rng(4)
    f = rand_trig(rng, order=5)
    f = f - f.coeff(0)  # zero mean
    slope, per = antiderivative(f)
    assert abs(slope) < 1e-15
    assert abs(per.evaluate(2 * np.pi) - per.evaluate(0.0)) < 1e-12
    assert abs(per.evaluate(0.0)) < 1e-14


@pytest.mark.parametrize("seed", range(5))
def test_multiply_commutative_bilinear(seed):
    rng = np.random.default_rng(seed)
    f, g, h = (rand_trig(rng) for _ in range(3))
    assert multiply(f, g).allclose(multiply(g, f), tol=1e-12)
    lhs = multiply(f, g + 2.5 * h)
    rhs = multiply(f, g) + 2.5 * multiply(f, h)
    assert lhs.allclose(rhs, tol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_derivative_of_antiderivative_roundtrip(seed):
    rng = np.random.default_rng(10 + seed)
    f = rand_trig(rng, order=6)
    slope, per = antiderivative(f)
    back = differentiate(per) + slope
    assert back.allclose(f, tol=1e-14)


def test_mean_of_derivative_is_zero_exactly():
    rng = np.random.default_rng(20)
    f = rand_trig(rng, order=8)
    assert differentiate(f).coeff(0) == 0j


def test_reciprocal_newton():
    rho = PeriodicFunction.from_callable(lambda x: np.exp(0.3 * np.cos(x)), order=24)
    inv = reciprocal(rho)
    assert (multiply(rho, inv) - 1.0).max_abs() < 1e-12
    with pytest.raises(NonPositiveFunctionError):
        reciprocal(PeriodicFunction.sine(1))


def test_require_positive():
    require_positive(PeriodicFunction.constant(1.0) + PeriodicFunction.cosine(1, 0.5))
    with pytest.raises(NonPositiveFunctionError):
        require_positive(PeriodicFunction.constant(0.4) + PeriodicFunction.cosine(1, 0.5))


def test_json_roundtrip():
    rng = np.random.default_rng(30)
    f = rand_trig(rng, order=3, real=False)
    g = PeriodicFunction.from_json(f.to_json())
    assert g.allclose(f, tol=0.0)


def test_evaluation_is_exact_finite_sum():
    f = PeriodicFunction.from_dict({-2: 1 - 2j, 0: 0.5, 3: 0.25j})
    x = 0.731
    direct = (1 - 2j) * np.exp(-2j * x) + 0.5 + 0.25j * np.exp(3j * x)
    assert abs(f.evaluate(x) - direct) < 1e-15
