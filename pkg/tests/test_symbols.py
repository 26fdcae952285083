"""Symbol calculus: factorization recursion, boundary symbol, products."""

import math

import numpy as np
import pytest
import sympy as sp

from conftest import rand_positive_trig, rand_tau_jet, rand_trig
from steklov.periodic import PeriodicFunction, NonPositiveFunctionError
from steklov.symbols import (
    HomogeneousComponent,
    JetFunction,
    JetOrderError,
    SymbolExpansion,
    boundary_symbol,
    factor_symbol,
    is_hermitian,
    symbol_product,
)

ONE = JetFunction.constant(1.0)


def geometric_jet(order):
    return JetFunction.geometric(order)


# -- jets --------------------------------------------------------------------

def test_jet_dt_errors_past_valid_order():
    f = JetFunction((PeriodicFunction.constant(1.0),), exact=False)
    with pytest.raises(JetOrderError):
        f.dt()
    # exact polynomial jets differentiate to zero instead
    assert JetFunction.constant(2.0).dt().is_zero()


def test_jet_product_tracks_validity():
    g = geometric_jet(5)
    p = JetFunction.one_minus_t() * g  # (1-t) * 1/(1-t) = 1 to order 5
    assert p.order == 5
    assert p.allclose(JetFunction((tuple(PeriodicFunction.constant(1.0 if k == 0 else 0.0)
                                         for k in range(6))), exact=False), tol=1e-15)


def test_jet_evaluate():
    tau = JetFunction.polynomial([PeriodicFunction.constant(1.0),
                                  PeriodicFunction.sine(1, 0.2)])
    x, t = 0.7, 0.3
    assert abs(tau.evaluate(x, t) - (1.0 + 0.2 * np.sin(x) * t)) < 1e-14


# -- factorization recursion ---------------------------------------------------

def test_factor_degree_zero_component_vanishes():
    rng = np.random.default_rng(0)
    tau = rand_tau_jet(rng)
    a = factor_symbol(1.7, tau, depth=-3)
    assert a.component(0).max_abs() == 0.0


def test_factor_seed_components_constant_tau():
    a = factor_symbol(2.0, ONE, depth=-2)
    # principal: -|xi|/(1-t); at t = 0 both branches equal -1
    assert abs(a.component(1).plus.at_t0().coeff(0) + 1.0) < 1e-14
    # degree -1 at t = 0: lam/2 = 1 on both branches
    for branch in (a.component(-1).plus, a.component(-1).minus):
        assert abs(branch.at_t0().coeff(0) - 1.0) < 1e-14


def test_factor_degree_minus2_constant_tau():
    a = factor_symbol(1.0, ONE, depth=-2)
    # closed form at t = 0 with tau_x = tau_t = 0: (1/4)(-2) = -1/2 branchwise
    for branch in (a.component(-2).plus, a.component(-2).minus):
        assert abs(branch.at_t0().coeff(0) + 0.5) < 1e-13


def test_factor_degree_minus2_generic_tau():
    # closed form (1-t)*lam/(4) * (i tau_x sgn - 2 tau + (1-t) tau_t) branchwise
    rng = np.random.default_rng(1)
    lam = 1.3
    tau = rand_tau_jet(rng, t_order=8)
    a = factor_symbol(lam, tau, depth=-2)
    omt = JetFunction.one_minus_t()
    base = tau.scale(-2.0) + (omt * tau.dt())
    plus = (omt * (base + tau.dx().scale(1j))).scale(lam / 4)
    minus = (omt * (base + tau.dx().scale(-1j))).scale(lam / 4)
    got = a.component(-2)
    k = min(got.plus.order, plus.order)
    assert got.plus.truncate(k).allclose(plus.truncate(k), tol=1e-12)
    assert got.minus.truncate(k).allclose(minus.truncate(k), tol=1e-12)


def test_factor_requires_sufficient_jet_order():
    rng = np.random.default_rng(2)
    shallow = rand_tau_jet(rng, t_order=3)
    with pytest.raises(JetOrderError, match="K_t >= 8"):
        factor_symbol(1.0, shallow, depth=-6)


@pytest.mark.parametrize("depth", [-1, -2, -3, -4, -5, -6])
def test_factor_residual_vanishes_above_depth(depth):
    """Substituting a back into the quadratic symbol identity annihilates all
    degrees above the last computed one; the first unresolved degree is
    exactly `depth` (it would determine the next coefficient)."""
    rng = np.random.default_rng(40 + depth)
    lam = 0.9
    tau = rand_tau_jet(rng, t_order=12)
    a = factor_symbol(lam, tau, depth=depth)

    k_work = 6 - depth
    E = JetFunction.geometric(k_work)
    resid = symbol_product(a, a, depth=depth)
    resid += SymbolExpansion({2: HomogeneousComponent.even(2, -(E * E))})
    resid += SymbolExpansion({0: HomogeneousComponent.even(0, tau.truncate(k_work).scale(lam))})
    dt_terms = {m: a.components[m].dt() for m in a.degrees}
    resid += SymbolExpansion(dt_terms)
    e_mult = HomogeneousComponent.even(0, E)
    resid += SymbolExpansion({m: -(a.components[m] * e_mult) for m in a.degrees})

    for m in range(2, depth, -1):
        assert resid.component(m).max_abs() < 1e-10, f"degree {m}"
    assert resid.component(depth).max_abs() > 1e-6  # unresolved tail is genuine


@pytest.mark.parametrize("m", [-1, -2, -3, -4, -5])
def test_factor_lambda_polynomiality(m):
    """Each coefficient is a polynomial in lambda of degree <= ceil(-m/2)
    with vanishing constant term."""
    rng = np.random.default_rng(7)
    tau = rand_tau_jet(rng, t_order=10)
    deg = math.ceil(-m / 2)
    lams = np.arange(0.0, deg + 2.0)  # deg+2 sample points
    xs = np.linspace(0.0, 2 * np.pi, 9)
    ts = (0.0, 0.17)
    stacks = []
    for lam in lams:
        a = factor_symbol(float(lam), tau, depth=-5)
        c = a.component(m)
        vec = np.concatenate([np.atleast_1d(jet.evaluate(xs, t))
                              for jet in (c.plus, c.minus) for t in ts])
        stacks.append(vec)
    Y = np.array(stacks)  # rows: lambda samples
    V = np.vander(lams, deg + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, Y, rcond=None)
    fit_resid = np.max(np.abs(V @ coef - Y))
    assert fit_resid < 1e-10
    assert np.max(np.abs(coef[0])) < 1e-10  # constant term vanishes


# -- boundary symbol -----------------------------------------------------------

def test_boundary_symbol_zero_potential_is_principal_only():
    rng = np.random.default_rng(3)
    rho = rand_positive_trig(rng)
    a = factor_symbol(0.0, ONE, depth=-4)
    r = boundary_symbol(a, rho)
    inv_top = r.component(1)
    # |xi|/rho on both branches
    x = np.linspace(0, 2 * np.pi, 11)
    assert np.max(np.abs(inv_top.plus.at_t0().evaluate(x) - 1.0 / rho.evaluate(x))) < 1e-11
    for m in (0, -1, -2, -3, -4):
        assert r.component(m).max_abs() < 1e-14


def test_boundary_symbol_constant_data_matches_expansion():
    lam = 1.1
    a = factor_symbol(lam, ONE, depth=-2)
    r = boundary_symbol(a, PeriodicFunction.constant(1.0))
    assert abs(r.component(1).plus.at_t0().coeff(0) - 1.0) < 1e-14
    assert abs(r.component(-1).plus.at_t0().coeff(0) + lam / 2) < 1e-13
    # r_{-2} = -lam/4 (i tau_x sgn - 2 tau - tau_r) = lam/2 for tau == 1
    assert abs(r.component(-2).plus.at_t0().coeff(0) - lam / 2) < 1e-13
    assert is_hermitian(r)


def test_boundary_symbol_generic_r_minus2():
    # cross-check of the normal-derivative sign: r_{-2} must equal
    # -lam/(4 rho) (i tau_x sgn(xi) - 2 tau - tau_r) with tau_r = -dt tau
    rng = np.random.default_rng(4)
    lam = 0.8
    tau = rand_tau_jet(rng)
    rho = rand_positive_trig(rng)
    r = boundary_symbol(factor_symbol(lam, tau, depth=-2), rho)
    tau0 = tau.at_t0()
    tau_x = tau.dx().at_t0()
    tau_r = -tau.dt().at_t0()
    x = np.linspace(0, 2 * np.pi, 23)
    for sign, branch in ((+1, r.component(-2).plus), (-1, r.component(-2).minus)):
        want = (-lam / (4 * rho.evaluate(x))
                * (1j * sign * tau_x.evaluate(x) - 2 * tau0.evaluate(x) - tau_r.evaluate(x)))
        assert np.max(np.abs(branch.at_t0().evaluate(x) - want)) < 1e-12


def test_boundary_symbol_rejects_nonpositive_rho():
    a = factor_symbol(1.0, ONE, depth=-1)
    rho = PeriodicFunction.constant(0.2) + PeriodicFunction.cosine(1, 0.5)
    with pytest.raises(NonPositiveFunctionError):
        boundary_symbol(a, rho)


def test_factor_output_hermitian_to_depth_minus6():
    rng = np.random.default_rng(5)
    tau = rand_tau_jet(rng, t_order=10)
    a = factor_symbol(1.4, tau, depth=-6)
    assert is_hermitian(a, tol=1e-10)
    r = boundary_symbol(a, rand_positive_trig(rng))
    assert is_hermitian(r, tol=1e-10)


# -- products ------------------------------------------------------------------

def comp_from_boundary(degree, plus: PeriodicFunction, minus: PeriodicFunction):
    return HomogeneousComponent(degree, JetFunction.from_boundary(plus),
                                JetFunction.from_boundary(minus))


def test_product_with_constant_symbol_is_identity():
    rng = np.random.default_rng(6)
    a = boundary_symbol(factor_symbol(1.2, ONE, depth=-3), rand_positive_trig(rng))
    one = SymbolExpansion({0: comp_from_boundary(0, PeriodicFunction.constant(1.0),
                                                 PeriodicFunction.constant(1.0))})
    assert symbol_product(a, one, depth=-3).allclose(a, tol=1e-13)
    assert symbol_product(one, a, depth=-3).allclose(a, tol=1e-13)


def test_product_abs_xi_squared():
    one = PeriodicFunction.constant(1.0)
    absxi = SymbolExpansion({1: comp_from_boundary(1, one, one)})
    prod = symbol_product(absxi, absxi, depth=-2)
    assert prod.component(2).plus.at_t0().allclose(one, tol=0.0)
    assert prod.component(2).minus.at_t0().allclose(one, tol=0.0)
    for m in (1, 0, -1, -2):
        assert prod.component(m).max_abs() == 0.0


def _sympy_branch(components, x, v, branch):
    """Branch symbol as a sympy expression in x and v = |xi| > 0."""
    total = 0
    for m, (cp, cm) in components.items():
        total += (cp if branch > 0 else cm) * v ** m
    return total


def test_product_matches_naive_sympy_expansion():
    """Brute-force double loop over (K, m, m') run through sympy calculus."""
    x = sp.symbols("x", real=True)
    v = sp.symbols("v", positive=True)  # |xi| on either half-line

    # small random-ish symbols with degrees 1..-1, written twice: sympy + ours
    a_sym = {1: (1 + sp.Rational(3, 10) * sp.cos(x), 1 + sp.Rational(3, 10) * sp.cos(x)),
             -1: (sp.sin(2 * x) + sp.I * sp.cos(x), sp.sin(2 * x) - sp.I * sp.cos(x))}
    b_sym = {0: (sp.cos(x), sp.cos(x)),
             -1: (2 + sp.sin(x), 2 - sp.sin(x))}

    def pf(expr):
        f = sp.lambdify(x, expr, "numpy")
        return PeriodicFunction.from_callable(lambda t: f(t) + 0j * t, order=8,
                                              enforce_real=False)

    a = SymbolExpansion({m: comp_from_boundary(m, pf(cp), pf(cm))
                         for m, (cp, cm) in a_sym.items()})
    b = SymbolExpansion({m: comp_from_boundary(m, pf(cp), pf(cm))
                         for m, (cp, cm) in b_sym.items()})
    depth = -3
    got = symbol_product(a, b, depth)

    for branch in (+1, -1):
        # on xi > 0: xi = v, d/dxi = d/dv; on xi < 0: xi = -v, d/dxi = -d/dv
        A = _sympy_branch(a_sym, x, v, branch)
        B = _sympy_branch(b_sym, x, v, branch)
        total = 0
        for K in range(0, 6):
            dA = sp.diff(A, v, K) * (branch ** K)
            dB = sp.diff(B, x, K)
            total += sp.Rational(1, math.factorial(K)) * dA * (-sp.I) ** K * dB
        total = sp.expand(total)
        xs = np.linspace(0.1, 2 * np.pi, 7)
        for m in range(got.top_degree, depth - 1, -1):
            coeff = total.coeff(v, m)
            fn = sp.lambdify(x, coeff, "numpy")
            want = np.asarray(fn(xs), dtype=complex) + np.zeros_like(xs, dtype=complex)
            branch_fn = got.component(m).plus if branch > 0 else got.component(m).minus
            have = branch_fn.at_t0().evaluate(xs)
            assert np.max(np.abs(have - want)) < 1e-10, (branch, m)


# -- hermiticity ---------------------------------------------------------------

def test_hermitian_examples():
    one = PeriodicFunction.constant(1.0)
    absxi = SymbolExpansion({1: comp_from_boundary(1, one, one)})
    assert is_hermitian(absxi)
    s = PeriodicFunction.sine(1)
    odd_imag = SymbolExpansion({0: comp_from_boundary(0, 1j * s, -1j * s)})
    assert is_hermitian(odd_imag)
    bad = SymbolExpansion({0: comp_from_boundary(0, 1j * s, 1j * s)})
    assert not is_hermitian(bad)


def test_product_preserves_hermiticity():
    rng = np.random.default_rng(8)
    tau = rand_tau_jet(rng)
    rho = rand_positive_trig(rng)
    r = boundary_symbol(factor_symbol(0.9, tau, depth=-3), rho)
    rr = symbol_product(r, r, depth=-3)
    assert is_hermitian(rr, tol=1e-10)
