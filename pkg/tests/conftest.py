"""Shared helpers for random trigonometric data and closed-form oracles."""

import numpy as np

from steklov.periodic import PeriodicFunction, mean, multiply, reciprocal
from steklov.symbols import JetFunction


def rand_trig(rng, order=3, scale=0.3, offset=0.0, cap=64):
    """Random real trigonometric polynomial offset + sum of decaying modes."""
    c = {0: offset + scale * rng.standard_normal()}
    for n in range(1, order + 1):
        a = scale * (rng.standard_normal() + 1j * rng.standard_normal()) / (2 * n)
        c[n] = a
        c[-n] = np.conj(a)
    return PeriodicFunction.from_dict(c, cap=cap)


def rand_positive_trig(rng, order=3, scale=0.25, cap=64):
    """Random real trig polynomial bounded away from zero."""
    f = rand_trig(rng, order=order, scale=scale, offset=0.0, cap=cap)
    return f - mean(f) + (1.0 + scale * float(rng.uniform(0.2, 1.0)))


def rand_tau_jet(rng, t_order=10, x_order=3, scale=0.25):
    """Random real tau(x,t) jet with decaying t-coefficients."""
    parts = []
    for k in range(t_order + 1):
        part = rand_trig(rng, order=x_order, scale=scale / (1 + k) ** 2)
        if k == 0:
            part = part + 1.0
        parts.append(part)
    return JetFunction(tuple(parts), exact=False)


def closed_form_s1(lam, tau: JetFunction, rho: PeriodicFunction) -> float:
    """First eigenvalue-expansion coefficient, -(lam/4pi) int tau/rho dx."""
    inv = reciprocal(rho)
    return -lam / 2.0 * mean(multiply(tau.at_t0(), inv))


def closed_form_s2(lam, tau: JetFunction, rho: PeriodicFunction) -> float:
    """Second coefficient, (lam L / 8pi) int (tau_r + 2 tau)/rho^2 dx.

    tau_r is the outward normal derivative of tau at the boundary, which in
    the boundary-distance coordinate is minus the t^1 jet coefficient.
    """
    inv = reciprocal(rho)
    inv2 = multiply(inv, inv)
    L = mean(rho)
    tau_r = -tau.part(1)
    integrand = multiply(tau_r + 2.0 * tau.at_t0(), inv2)
    return lam * L / 4.0 * mean(integrand)
