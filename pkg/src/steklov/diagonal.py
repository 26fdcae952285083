"""Diagonalization of the boundary symbol and eigenvalue asymptotics.

Pipeline: the boundary symbol r(x, xi) is conjugated by the Fourier integral
operator whose phase straightens the principal symbol to |xi|/L (L being the
mean of the boundary density rho).  The conjugated symbol is then made
x-independent degree by degree: each step replaces the highest non-diagonal
component by its x-average and propagates a periodic corrector into the lower
degrees.  Evaluating the diagonal components at xi = +-j yields the eigenvalue
expansion j/L + sum_n s_n j^{-n}.

Only ceil(n/2) averaging steps are needed for the x-integral of the degree -n
component to stabilize, which cuts the work for the coefficient table roughly
in half; the property suite checks this equality against the full run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .periodic import (
    PeriodicFunction,
    antiderivative,
    mean,
    multiply,
    reciprocal,
    require_positive,
)
from .symbols import (
    DepthError,
    HomogeneousComponent,
    JetFunction,
    SymbolExpansion,
)
from .solvers import SpectrumSequence


class DiagonalizationOrderError(ValueError):
    """diag_step precondition violated: a component is not yet diagonal."""


# ---------------------------------------------------------------------------
# Partitions and Bell polynomials
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _partitions_into(n: int, k: int):
    """Partitions of n into exactly k parts, as sorted tuples (descending)."""
    if k == 0:
        return ((),) if n == 0 else ()
    if k > n:
        return ()
    out = []
    def rec(remaining, parts_left, max_part, acc):
        if parts_left == 0:
            if remaining == 0:
                out.append(tuple(acc))
            return
        for p in range(min(remaining - parts_left + 1, max_part), 0, -1):
            rec(remaining - p, parts_left - 1, p, acc + [p])
    rec(n, k, n, [])
    return tuple(out)


def _bell_coefficient(partition) -> float:
    """alpha! / prod_i (m_i! (i!)^{m_i}) for the partition's multiplicities."""
    alpha = sum(partition)
    mult = {}
    for p in partition:
        mult[p] = mult.get(p, 0) + 1
    denom = 1
    for part, m in mult.items():
        denom *= math.factorial(m) * math.factorial(part) ** m
    return math.factorial(alpha) / denom


def _falling(a: int, s: int) -> int:
    out = 1
    for i in range(s):
        out *= a - i
    return out


# ---------------------------------------------------------------------------
# FIO conjugation
# ---------------------------------------------------------------------------

def conjugate_symbol(r: SymbolExpansion, rho: PeriodicFunction, depth: int,
                     supported_depth: int = -6) -> SymbolExpansion:
    """Stationary-phase expansion of the conjugated symbol, before the
    arclength reparametrization.

    Degree m collects, for alpha = 0..1-m, the alpha-th transport term: the
    (alpha+k)-th radial derivative of the degree-(m+alpha) component evaluated
    at eta = xi rho/L, paired with the Bell polynomial B_{alpha,k} of the
    phase-remainder derivatives xi rho^(beta) / ((beta+1) L).
    """
    if depth < supported_depth:
        raise DepthError(
            f"depth {depth} below the supported transport order {supported_depth}; "
            "raise supported_depth explicitly to go deeper (cost grows with the "
            "number of integer partitions involved)")
    require_positive(rho)
    L = mean(rho)
    inv = reciprocal(rho)
    one = PeriodicFunction.constant(1.0)

    @lru_cache(maxsize=None)
    def rho_over_L_pow(p: int) -> PeriodicFunction:
        if p == 0:
            return one
        if p > 0:
            return multiply(rho_over_L_pow(p - 1), rho) * (1.0 / L)
        return multiply(rho_over_L_pow(p + 1), inv) * L

    # phase-remainder derivative factors w_beta = rho^(beta)/((beta+1) L)
    max_beta = 1 - depth
    w = {}
    d = rho
    for beta in range(1, max_beta + 1):
        from .periodic import differentiate
        d = differentiate(d)
        w[beta] = d * (1.0 / ((beta + 1) * L))

    def bell(alpha: int, k: int) -> PeriodicFunction:
        acc = PeriodicFunction.zero()
        for part in _partitions_into(alpha, k):
            term = PeriodicFunction.constant(_bell_coefficient(part))
            for p in part:
                term = multiply(term, w[p])
            acc = acc + term
        return acc

    out = {}
    for m in range(depth, 2):
        plus = PeriodicFunction.zero()
        minus = PeriodicFunction.zero()
        # alpha = 0: plain substitution eta = xi rho/L
        c = r.component(m)
        if not c.is_zero():
            scale_m = rho_over_L_pow(m)
            plus = plus + multiply(c.plus.at_t0(), scale_m)
            minus = minus + multiply(c.minus.at_t0(), scale_m)
        for alpha in range(1, 1 - m + 1):
            src = r.component(m + alpha)
            if src.is_zero():
                continue
            pref = (-1j) ** alpha / math.factorial(alpha)
            for k in range(1, alpha + 1):
                F = _falling(m + alpha, alpha + k)
                if F == 0:
                    continue
                B = bell(alpha, k)
                if B.max_abs() == 0.0:
                    continue
                base = multiply(B, rho_over_L_pow(m - k))
                coeff = pref * F
                plus = plus + multiply(src.plus.at_t0(), base) * coeff
                minus = minus + multiply(src.minus.at_t0(), base) * (
                    coeff * (-1.0) ** (alpha + k) * (-1.0) ** k)
        out[m] = HomogeneousComponent(m, JetFunction.from_boundary(plus),
                                      JetFunction.from_boundary(minus))
    return SymbolExpansion(out)


def invert_arclength(rho: PeriodicFunction, x: np.ndarray,
                     tol: float = 1e-13, max_iter: int = 80) -> np.ndarray:
    """Solve x = (1/L) int_0^s rho(t) dt for s, by safeguarded Newton.

    The map is strictly increasing with derivative rho/L > 0, so Newton from
    s = x converges; iterates are clipped to the bracket implied by the
    bounded periodic part of the antiderivative.
    """
    L = mean(rho)
    slope, per = antiderivative(rho)
    slope = slope.real

    def g(s):
        return (slope * s + per.evaluate(s).real) / L - x

    bound = float(np.max(np.abs(per.sample(512)))) / L + 1.0
    lo, hi = x - bound, x + bound
    s = np.array(x, dtype=float, copy=True)
    for _ in range(max_iter):
        val = g(s)
        if np.max(np.abs(val)) < tol:
            return s
        deriv = rho.evaluate(s).real / L
        step = val / deriv
        s_new = s - step
        bad = (s_new < lo) | (s_new > hi)
        if np.any(bad):  # bisection fallback keeps the iterate bracketed
            s_new[bad] = 0.5 * (np.where(val > 0, lo, hi) + s)[bad]
        s = s_new
    raise RuntimeError("arclength inversion did not converge")


def _project(values: np.ndarray, order: int) -> PeriodicFunction:
    """Fourier coefficients of uniformly sampled values, truncated to order."""
    n_grid = len(values)
    spec = np.fft.fft(values) / n_grid
    arr = np.zeros(2 * order + 1, dtype=complex)
    for n in range(-order, order + 1):
        arr[n + order] = spec[n % n_grid]
    return PeriodicFunction(arr)


def fio_conjugate(r: SymbolExpansion, rho: PeriodicFunction, depth: int,
                  supported_depth: int = -6) -> SymbolExpansion:
    """Full conjugation: transport expansion followed by composition with the
    inverse arclength map s(x), re-projected on 8*N_x Fourier modes."""
    tilde = conjugate_symbol(r, rho, depth, supported_depth)
    cap = rho.cap
    n_grid = 8 * cap
    x = 2 * np.pi * np.arange(n_grid) / n_grid
    s = invert_arclength(rho, x)

    out = {}
    for m, comp in tilde.components.items():
        new_branches = []
        for branch in (comp.plus, comp.minus):
            f = branch.at_t0()
            if f.order == 0:  # constants pass through composition unchanged
                new_branches.append(f)
                continue
            new_branches.append(_project(f.evaluate(s), cap))
        out[m] = HomogeneousComponent(m, JetFunction.from_boundary(new_branches[0]),
                                      JetFunction.from_boundary(new_branches[1]))
    return SymbolExpansion(out)


# ---------------------------------------------------------------------------
# Degree-by-degree diagonalization
# ---------------------------------------------------------------------------

def _x_dependence(comp: HomogeneousComponent) -> float:
    out = 0.0
    for branch in (comp.plus, comp.minus):
        f = branch.at_t0()
        if f.order > 0:
            arr = np.asarray(f.coeffs).copy()
            arr[f.order] = 0.0  # drop the constant mode
            out = max(out, float(np.max(np.abs(arr))))
    return out


def diag_step(p: SymbolExpansion, N: int, tol: float = 1e-9) -> SymbolExpansion:
    """One averaging step: make the degree -N component x-independent.

    Precondition: every component at degree >= 1-N is already diagonal.  The
    new degree -N component is the x-average of the old one; degrees above -N
    are returned unchanged (bit-identical), and degrees below are updated with
    the commutator terms of the periodic corrector, whose symbol is built from
    the zero-mean antiderivative of the degree -N component.
    """
    for m in p.degrees:
        if m >= 1 - N and _x_dependence(p.component(m)) > tol:
            raise DiagonalizationOrderError(
                f"component at degree {m} must be diagonal before step {N}")

    c1 = p.component(1).plus.at_t0().coeff(0)
    if c1 == 0:
        raise DiagonalizationOrderError("missing principal component |xi|/L")
    L = 1.0 / c1.real

    target = p.component(-N)
    mean_plus = target.plus.at_t0().coeff(0)
    mean_minus = target.minus.at_t0().coeff(0)
    averaged = HomogeneousComponent(
        -N,
        JetFunction.from_boundary(PeriodicFunction.constant(mean_plus)),
        JetFunction.from_boundary(PeriodicFunction.constant(mean_minus)))

    # corrector k_{-N}: -i L sgn(xi) int_0^x (p_{-N} - mean) dt
    _, int_plus = antiderivative(target.plus.at_t0() - mean_plus)
    _, int_minus = antiderivative(target.minus.at_t0() - mean_minus)
    k_comp = HomogeneousComponent(
        -N,
        JetFunction.from_boundary(int_plus * (-1j * L)),
        JetFunction.from_boundary(int_minus * (+1j * L)))

    new = {m: p.components[m] for m in p.degrees if m > -N}
    new[-N] = averaged
    for m in range(-N - 1, p.depth - 1, -1):
        acc = p.component(m)
        for alpha in range(0, 1 - m - N + 1):
            deg_hi = m + alpha + N
            old_hi = p.component(deg_hi)
            new_hi = new.get(deg_hi, HomogeneousComponent.zero(deg_hi))
            inv_fact = 1.0 / math.factorial(alpha)
            t1 = k_comp.dx_power(alpha) * old_hi.dxi_power(alpha).scale((-1j) ** alpha)
            t2 = new_hi.dx_power(alpha) * k_comp.dxi_power(alpha).scale((-1j) ** alpha)
            acc = acc + (t1 + (-t2)).scale(inv_fact)
        new[m] = acc
    return SymbolExpansion(new)


# ---------------------------------------------------------------------------
# Coefficient extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiagonalCoefficients:
    """Length scale and expansion coefficients of the eigenvalue asymptotics."""

    L: float
    s: tuple
    lam: float
    branch_values: dict  # degree -> (value at xi=+1, value at xi=-1)

    def to_json_dict(self) -> dict:
        return {"schema_version": 1, "L": self.L,
                "s": [float(v) for v in self.s], "lambda": self.lam}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def asymptotic_coefficients(lam: float, tau: JetFunction, rho: PeriodicFunction,
                            order: int, supported_depth: int = -6,
                            imag_tol: float = 1e-8) -> DiagonalCoefficients:
    """Coefficients s_1..s_order of the eigenvalue expansion j/L + sum s_n j^-n.

    Runs the factorization, boundary restriction, conjugation, and ceil(order/2)
    averaging steps; s_n is the x-average of the degree -n component at xi = 1.
    Real lambda only; self-adjointness makes every s_n real, and a residual
    imaginary part above imag_tol aborts rather than being discarded.
    """
    from .symbols import boundary_symbol, factor_symbol

    if isinstance(lam, complex) or not np.isfinite(lam):
        raise ValueError("real finite lambda required")
    if order < 1:
        raise ValueError("order must be >= 1")
    depth = -order
    a = factor_symbol(lam, tau, depth)
    r = boundary_symbol(a, rho)
    p = fio_conjugate(r, rho, depth, supported_depth=supported_depth)
    for step in range(1, (order + 1) // 2 + 1):
        p = diag_step(p, step)

    L = mean(rho)
    s = []
    branch_values = {}
    for n in range(1, order + 1):
        comp = p.component(-n)
        vp = comp.plus.at_t0().coeff(0)
        vm = comp.minus.at_t0().coeff(0)
        branch_values[-n] = (vp, vm)
        if abs(vp.imag) > imag_tol or abs(vp - np.conj(vm)) > 10 * imag_tol * (1 + abs(vp)):
            raise ValueError(
                f"coefficient s_{n} is not real within tolerance "
                f"(imag {vp.imag:.2e}); data is not a real self-adjoint problem")
        s.append(vp.real)
    branch_values[1] = (p.component(1).plus.at_t0().coeff(0),
                        p.component(1).minus.at_t0().coeff(0))
    return DiagonalCoefficients(L=L, s=tuple(s), lam=float(lam),
                                branch_values=branch_values)


def predict_eigenvalues(coeffs: DiagonalCoefficients, j_max: int) -> SpectrumSequence:
    """Model sequence 0, then exact pairs j/L + sum_n s_n j^{-n} for j <= j_max.

    Components are evaluated at xi = +-j through exact homogeneity, which for
    the diagonal symbol reduces to the scalar expansion above.
    """
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    vals = [0.0]
    modes = [0]
    for j in range(1, j_max + 1):
        v = j / coeffs.L + sum(sn * j ** (-(n + 1)) for n, sn in enumerate(coeffs.s))
        vals.extend([v, v])
        modes.extend([j, j])
    return SpectrumSequence(np.array(vals), np.array(modes, dtype=int),
                            tuple("model" for _ in vals))
