"""Conjugation, averaging steps, and eigenvalue-expansion coefficients."""

import math

import numpy as np
import pytest

from conftest import closed_form_s1, closed_form_s2, rand_positive_trig, rand_tau_jet
from steklov.diagonal import (
    DiagonalizationOrderError,
    asymptotic_coefficients,
    conjugate_symbol,
    diag_step,
    fio_conjugate,
    invert_arclength,
    predict_eigenvalues,
)
from steklov.periodic import PeriodicFunction, mean, differentiate
from steklov.symbols import (
    DepthError,
    HomogeneousComponent,
    JetFunction,
    SymbolExpansion,
    boundary_symbol,
    factor_symbol,
    is_hermitian,
)

ONE = JetFunction.constant(1.0)


def pipeline_symbol(lam, tau, rho, depth):
    return fio_conjugate(boundary_symbol(factor_symbol(lam, tau, depth), rho),
                         rho, depth)


# -- arclength inversion ---------------------------------------------------------

def test_invert_arclength_roundtrip():
    rng = np.random.default_rng(0)
    rho = rand_positive_trig(rng)
    L = mean(rho)
    x = np.linspace(0, 2 * np.pi, 257)
    s = invert_arclength(rho, x)
    # forward map of s must reproduce x
    from steklov.periodic import antiderivative
    slope, per = antiderivative(rho)
    forward = (slope.real * s + per.evaluate(s).real) / L
    assert np.max(np.abs(forward - x)) < 1e-12
    assert np.all(np.diff(s) > 0)


# -- conjugated symbol ------------------------------------------------------------

def test_conjugate_principal_is_one_over_L():
    rng = np.random.default_rng(1)
    rho = rand_positive_trig(rng)
    tau = rand_tau_jet(rng)
    lam = 1.2
    r = boundary_symbol(factor_symbol(lam, tau, -2), rho)
    tilde = conjugate_symbol(r, rho, -2)
    L = mean(rho)
    for branch in (tilde.component(1).plus, tilde.component(1).minus):
        assert (branch.at_t0() - 1.0 / L).max_abs() < 1e-11
    assert tilde.component(0).max_abs() < 1e-12


def test_conjugate_constant_data():
    lam = 1.7
    r = boundary_symbol(factor_symbol(lam, ONE, -2), PeriodicFunction.constant(1.0))
    tilde = conjugate_symbol(r, PeriodicFunction.constant(1.0), -2)
    # rho = tau = 1: degree -1 is -lam/2, degree -2 is (lam/4)(tau_r + 2 tau) = lam/2
    assert abs(tilde.component(-1).plus.at_t0().coeff(0) + lam / 2) < 1e-13
    assert abs(tilde.component(-2).plus.at_t0().coeff(0) - lam / 2) < 1e-13


def test_conjugate_generic_matches_closed_form():
    # degree -2 closed form:
    # (lam L^2 / 4 rho^3)(tau_r - i sgn(xi) tau_x + 2 tau) + i lam L^2 tau sgn(xi) rho' / (2 rho^4)
    lam = 1.0
    rho = PeriodicFunction.constant(1.0) + PeriodicFunction.cosine(1, 0.3)
    tau = JetFunction.polynomial([
        PeriodicFunction.constant(1.0) + PeriodicFunction.sine(1, 0.2),
        -(PeriodicFunction.sine(1, 0.2)),
    ])  # 1 + 0.2 sin(x) (1 - t)
    r = boundary_symbol(factor_symbol(lam, tau, -2), rho)
    tilde = conjugate_symbol(r, rho, -2)
    L = mean(rho)
    x = np.linspace(0, 2 * np.pi, 41)
    rho_v = rho.evaluate(x).real
    rho_p = differentiate(rho).evaluate(x).real
    tau_v = tau.at_t0().evaluate(x).real
    tau_x = tau.dx().at_t0().evaluate(x).real
    tau_r = (-tau.dt().at_t0()).evaluate(x).real
    for sign, branch in ((+1, tilde.component(-2).plus), (-1, tilde.component(-2).minus)):
        want = (lam * L ** 2 / (4 * rho_v ** 3)
                * (tau_r - 1j * sign * tau_x + 2 * tau_v)
                + 1j * lam * L ** 2 * tau_v * sign * rho_p / (2 * rho_v ** 4))
        got = branch.at_t0().evaluate(x)
        assert np.max(np.abs(got - want)) < 1e-10


def test_conjugate_rejects_unsupported_depth():
    r = boundary_symbol(factor_symbol(1.0, ONE, -1), PeriodicFunction.constant(1.0))
    with pytest.raises(DepthError):
        conjugate_symbol(r, PeriodicFunction.constant(1.0), -7)


# -- averaging step ---------------------------------------------------------------

def diagonal_symbol(depth, values):
    comps = {}
    for m, v in values.items():
        pf = PeriodicFunction.constant(v)
        comps[m] = HomogeneousComponent(m, JetFunction.from_boundary(pf),
                                        JetFunction.from_boundary(pf))
    return SymbolExpansion(comps)


def test_diag_step_fixed_point():
    p = diagonal_symbol(-2, {1: 1.0, 0: 0.0, -1: -0.5, -2: 0.25})
    q = diag_step(p, 2)
    for m in (1, 0, -1, -2):
        assert q.component(m).allclose(p.component(m), tol=0.0)


def test_diag_step_averages_target_degree():
    p = diagonal_symbol(-1, {1: 1.0, 0: 0.0})
    c = PeriodicFunction.constant(0.7) + PeriodicFunction.cosine(2, 0.4)
    p = p.with_component(HomogeneousComponent(
        -1, JetFunction.from_boundary(c), JetFunction.from_boundary(c)))
    q = diag_step(p, 1)
    assert abs(q.component(-1).plus.at_t0().coeff(0) - 0.7) < 1e-15
    assert q.component(-1).plus.at_t0().order == 0


def test_diag_step_precondition_error():
    p = diagonal_symbol(-2, {1: 1.0, 0: 0.0, -2: 0.3})
    c = PeriodicFunction.cosine(1, 0.5)
    p = p.with_component(HomogeneousComponent(
        -1, JetFunction.from_boundary(c), JetFunction.from_boundary(c)))
    with pytest.raises(DiagonalizationOrderError, match="degree -1"):
        diag_step(p, 2)


def test_diag_step_stabilized_degrees_bit_identical():
    rng = np.random.default_rng(2)
    rho = rand_positive_trig(rng)
    tau = rand_tau_jet(rng)
    p = pipeline_symbol(0.8, tau, rho, -4)
    p1 = diag_step(p, 1)
    p2 = diag_step(p1, 2)
    for m in (1, 0, -1):
        a = p1.component(m).plus.at_t0()
        b = p2.component(m).plus.at_t0()
        assert np.array_equal(np.asarray(a.coeffs), np.asarray(b.coeffs))


def test_diag_step_preserves_hermiticity():
    rng = np.random.default_rng(3)
    rho = rand_positive_trig(rng)
    tau = rand_tau_jet(rng)
    p = pipeline_symbol(1.1, tau, rho, -4)
    assert is_hermitian(p, tol=1e-9)
    p = diag_step(p, 1)
    assert is_hermitian(p, tol=1e-9)
    p = diag_step(p, 2)
    assert is_hermitian(p, tol=1e-9)


# -- coefficients -------------------------------------------------------------------

def test_unit_disk_coefficients():
    lam = 1.0
    c = asymptotic_coefficients(lam, ONE, PeriodicFunction.constant(1.0), order=2)
    assert abs(c.L - 1.0) < 1e-15
    assert abs(c.s[0] + lam / 2) < 1e-12
    assert abs(c.s[1] - lam / 2) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_generic_matches_closed_form_s1_s2(seed):
    rng = np.random.default_rng(100 + seed)
    rho = rand_positive_trig(rng)
    tau = rand_tau_jet(rng)
    lam = float(rng.uniform(-2.0, 2.5))
    c = asymptotic_coefficients(lam, tau, rho, order=2)
    s1 = closed_form_s1(lam, tau, rho)
    s2 = closed_form_s2(lam, tau, rho)
    assert abs(c.s[0] - s1) <= 1e-9 * max(1.0, abs(s1))
    assert abs(c.s[1] - s2) <= 1e-9 * max(1.0, abs(s2))


def test_lambda_zero_coefficients_vanish():
    rng = np.random.default_rng(4)
    rho = rand_positive_trig(rng)
    tau = rand_tau_jet(rng)
    c = asymptotic_coefficients(0.0, tau, rho, order=4)
    assert np.max(np.abs(c.s)) < 1e-13


def test_lambda_must_be_real():
    with pytest.raises(ValueError):
        asymptotic_coefficients(1.0 + 0.5j, ONE, PeriodicFunction.constant(1.0), 2)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_shortcut_equals_full_run(n):
    """The x-integral of the degree -n component after ceil(n/2) steps equals
    the fully diagonalized value after n steps."""
    rng = np.random.default_rng(5)
    rho = rand_positive_trig(rng)
    tau = rand_tau_jet(rng, t_order=12)
    p = pipeline_symbol(1.3, tau, rho, -4)
    k_short = (n + 1) // 2
    q = p
    for step in range(1, n + 1):
        q = diag_step(q, step)
        if step == k_short:
            short_mean = q.component(-n).plus.at_t0().coeff(0)
    full = q.component(-n).plus.at_t0().coeff(0)
    assert abs(short_mean - full) < 1e-10 * max(1.0, abs(full))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_lambda_polynomiality_of_s(n):
    rng = np.random.default_rng(6)
    rho = rand_positive_trig(rng)
    tau = rand_tau_jet(rng, t_order=12)
    lams = np.arange(0.0, n + 2.0)
    vals = []
    for lam in lams:
        c = asymptotic_coefficients(float(lam), tau, rho, order=n)
        vals.append(c.s[n - 1])
    V = np.vander(lams, n + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, np.array(vals), rcond=None)
    resid = np.max(np.abs(V @ coef - vals))
    assert resid < 1e-10
    assert abs(coef[0]) < 1e-10  # no constant term


def test_coefficients_real_hermitian_pairing():
    rng = np.random.default_rng(7)
    rho = rand_positive_trig(rng)
    tau = rand_tau_jet(rng)
    c = asymptotic_coefficients(1.9, tau, rho, order=4)
    for m, (vp, vm) in c.branch_values.items():
        assert abs(vp.imag) < 1e-10
        assert abs(vp - np.conj(vm)) < 1e-10 * (1 + abs(vp))


# -- model sequences -----------------------------------------------------------------

def test_predict_classical_disk():
    c = asymptotic_coefficients(0.0, ONE, PeriodicFunction.constant(1.0), order=2)
    s = predict_eigenvalues(c, 2)
    assert np.allclose(s.values, [0, 1, 1, 2, 2], atol=1e-14)


def test_predict_pair_value():
    from steklov.diagonal import DiagonalCoefficients
    c = DiagonalCoefficients(L=1.0, s=(-0.5, 0.5), lam=1.0, branch_values={})
    s = predict_eigenvalues(c, 10)
    want = 10 - 0.05 + 0.5 / 100
    assert abs(s.values[-1] - want) < 1e-14
    assert s.values[-1] == s.values[-2]


def test_predict_nondecreasing():
    from steklov.diagonal import DiagonalCoefficients
    c = DiagonalCoefficients(L=0.8, s=(-0.6, 0.3), lam=1.0, branch_values={})
    s = predict_eigenvalues(c, 50)
    assert np.all(np.diff(s.values) >= 0)
