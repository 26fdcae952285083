"""Boundary symbol calculus for the disk Dirichlet-to-Neumann operator.

Symbols are finite sums of components homogeneous in the cotangent variable
xi.  A component of degree m stores the two branch coefficients c+(x,t) and
c-(x,t) so that it equals c+ * xi^m for xi > 0 and c- * |xi|^m for xi < 0;
both branches are Taylor jets in the boundary-distance coordinate t with
Fourier coefficients along the boundary.  Storing values at xi = +-1 keeps
sgn(xi) exact, since every formula in play is branchwise rational.

The sign convention throughout: t is the distance to the boundary, so the
outward normal derivative is -d/dt.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .periodic import PeriodicFunction, differentiate, multiply, reciprocal, require_positive


class JetOrderError(ValueError):
    """A Taylor jet in t was asked for more derivatives than it carries."""


class DepthError(ValueError):
    """Requested homogeneity depth outside the representable range."""


# ---------------------------------------------------------------------------
# Taylor jets in t with periodic coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JetFunction:
    """f(x,t) = sum_k parts[k](x) t^k, a jet of order len(parts)-1.

    `exact` marks jets whose coefficients beyond the stored ones are exactly
    zero (polynomials in t); inexact jets are truncations of smooth functions
    and lose one valid order per t-derivative.  Requesting a derivative past
    the valid order raises, it never silently truncates.
    """

    parts: tuple
    exact: bool = False

    def __post_init__(self):
        if not self.parts:
            raise ValueError("jet needs at least the t^0 part")
        if self.exact:
            # drop exactly-zero top coefficients of polynomials
            parts = list(self.parts)
            while len(parts) > 1 and parts[-1].max_abs() == 0.0:
                parts.pop()
            object.__setattr__(self, "parts", tuple(parts))

    # -- constructors --

    @classmethod
    def constant(cls, value, cap=None) -> "JetFunction":
        kw = {} if cap is None else {"cap": cap}
        return cls((PeriodicFunction.constant(value, **kw),), exact=True)

    @classmethod
    def from_boundary(cls, f: PeriodicFunction) -> "JetFunction":
        """Wrap an x-only function as an exact 0-jet."""
        return cls((f,), exact=True)

    @classmethod
    def polynomial(cls, parts) -> "JetFunction":
        """Exact polynomial in t with the given periodic coefficients."""
        return cls(tuple(parts), exact=True)

    @classmethod
    def one_minus_t(cls) -> "JetFunction":
        return cls.polynomial([PeriodicFunction.constant(1.0), PeriodicFunction.constant(-1.0)])

    @classmethod
    def geometric(cls, order: int) -> "JetFunction":
        """1/(1-t) expanded to the given jet order (inexact)."""
        one = PeriodicFunction.constant(1.0)
        return cls(tuple(one for _ in range(order + 1)), exact=False)

    # -- queries --

    @property
    def order(self) -> int:
        return len(self.parts) - 1

    def at_t0(self) -> PeriodicFunction:
        return self.parts[0]

    def part(self, k: int) -> PeriodicFunction:
        if k < len(self.parts):
            return self.parts[k]
        if self.exact:
            return PeriodicFunction.zero()
        raise JetOrderError(f"jet only valid to t-order {self.order}, asked for {k}")

    def max_abs(self) -> float:
        return max(p.max_abs() for p in self.parts)

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_abs() <= tol

    def evaluate(self, x, t):
        return sum(p.evaluate(x) * t ** k for k, p in enumerate(self.parts))

    # -- algebra --

    def _aligned(self, other: "JetFunction"):
        """Common valid order for a binary operation."""
        if self.exact and other.exact:
            return None  # unbounded
        orders = []
        if not self.exact:
            orders.append(self.order)
        if not other.exact:
            orders.append(other.order)
        return min(orders)

    def __add__(self, other: "JetFunction") -> "JetFunction":
        n = self._aligned(other)
        exact = n is None
        n = max(self.order, other.order) if exact else n
        parts = tuple(self._safe_part(k) + other._safe_part(k) for k in range(n + 1))
        return JetFunction(parts, exact=exact)

    def _safe_part(self, k: int) -> PeriodicFunction:
        if k < len(self.parts):
            return self.parts[k]
        return PeriodicFunction.zero()

    def __neg__(self) -> "JetFunction":
        return JetFunction(tuple(-p for p in self.parts), exact=self.exact)

    def __sub__(self, other: "JetFunction") -> "JetFunction":
        return self + (-other)

    def scale(self, c) -> "JetFunction":
        return JetFunction(tuple(p * c for p in self.parts), exact=self.exact)

    def __mul__(self, other: "JetFunction") -> "JetFunction":
        n = self._aligned(other)
        exact = n is None
        n = self.order + other.order if exact else n
        parts = []
        for k in range(n + 1):
            acc = PeriodicFunction.zero()
            for i in range(k + 1):
                a = self._safe_part(i)
                b = other._safe_part(k - i)
                if a.max_abs() and b.max_abs():
                    acc = acc + multiply(a, b)
            parts.append(acc)
        return JetFunction(tuple(parts), exact=exact)

    def mul_boundary(self, f: PeriodicFunction) -> "JetFunction":
        return JetFunction(tuple(multiply(p, f) for p in self.parts), exact=self.exact)

    def dt(self) -> "JetFunction":
        """d/dt, consuming one valid jet order."""
        if self.order == 0:
            if self.exact:
                return JetFunction((PeriodicFunction.zero(),), exact=True)
            raise JetOrderError("t-derivative exceeds the jet's valid order 0")
        parts = tuple((k + 1) * self.parts[k + 1] for k in range(self.order))
        return JetFunction(parts, exact=self.exact)

    def dx(self) -> "JetFunction":
        return JetFunction(tuple(differentiate(p) for p in self.parts), exact=self.exact)

    def truncate(self, order: int) -> "JetFunction":
        if order >= self.order:
            return self
        return JetFunction(self.parts[:order + 1], exact=False)

    def conjugate(self) -> "JetFunction":
        return JetFunction(tuple(p.conjugate() for p in self.parts), exact=self.exact)

    def allclose(self, other: "JetFunction", tol: float = 1e-12) -> bool:
        n = max(self.order, other.order)
        return all((self._safe_part(k) - other._safe_part(k)).max_abs() <= tol
                   for k in range(n + 1))

    def to_json_dict(self) -> dict:
        return {"exact": self.exact, "parts": [p.to_json_dict() for p in self.parts]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "JetFunction":
        return cls(tuple(PeriodicFunction.from_json_dict(p) for p in d["parts"]),
                   exact=bool(d["exact"]))


def _zero_jet() -> JetFunction:
    return JetFunction((PeriodicFunction.zero(),), exact=True)


# ---------------------------------------------------------------------------
# Homogeneous components and symbol expansions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HomogeneousComponent:
    """Degree-m piece: plus * xi^m on xi > 0 and minus * |xi|^m on xi < 0."""

    degree: int
    plus: JetFunction
    minus: JetFunction

    @classmethod
    def zero(cls, degree: int) -> "HomogeneousComponent":
        return cls(degree, _zero_jet(), _zero_jet())

    @classmethod
    def even(cls, degree: int, jet: JetFunction) -> "HomogeneousComponent":
        """Component c(x,t) |xi|^degree."""
        return cls(degree, jet, jet)

    @classmethod
    def odd(cls, degree: int, jet: JetFunction) -> "HomogeneousComponent":
        """Component c(x,t) sgn(xi) |xi|^degree."""
        return cls(degree, jet, -jet)

    def __add__(self, other: "HomogeneousComponent") -> "HomogeneousComponent":
        if other.degree != self.degree:
            raise ValueError("cannot add components of different degree")
        return HomogeneousComponent(self.degree, self.plus + other.plus,
                                    self.minus + other.minus)

    def __neg__(self):
        return HomogeneousComponent(self.degree, -self.plus, -self.minus)

    def scale(self, c) -> "HomogeneousComponent":
        return HomogeneousComponent(self.degree, self.plus.scale(c), self.minus.scale(c))

    def __mul__(self, other: "HomogeneousComponent") -> "HomogeneousComponent":
        return HomogeneousComponent(self.degree + other.degree,
                                    self.plus * other.plus,
                                    self.minus * other.minus)

    def dxi(self) -> "HomogeneousComponent":
        """d/dxi, lowering the degree by one; sign-aware on the minus branch."""
        m = self.degree
        return HomogeneousComponent(m - 1, self.plus.scale(m), self.minus.scale(-m))

    def dxi_power(self, k: int) -> "HomogeneousComponent":
        out = self
        for _ in range(k):
            out = out.dxi()
        return out

    def dx(self) -> "HomogeneousComponent":
        return HomogeneousComponent(self.degree, self.plus.dx(), self.minus.dx())

    def dx_power(self, k: int) -> "HomogeneousComponent":
        out = self
        for _ in range(k):
            out = out.dx()
        return out

    def dt(self) -> "HomogeneousComponent":
        return HomogeneousComponent(self.degree, self.plus.dt(), self.minus.dt())

    def at_t0(self) -> "HomogeneousComponent":
        return HomogeneousComponent(self.degree,
                                    JetFunction.from_boundary(self.plus.at_t0()),
                                    JetFunction.from_boundary(self.minus.at_t0()))

    def max_abs(self) -> float:
        return max(self.plus.max_abs(), self.minus.max_abs())

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_abs() <= tol

    def evaluate(self, x, t, xi):
        if xi > 0:
            return self.plus.evaluate(x, t) * xi ** self.degree
        if xi < 0:
            return self.minus.evaluate(x, t) * abs(xi) ** self.degree
        raise ValueError("homogeneous components are defined away from xi = 0")

    def hermitian_defect(self) -> float:
        """Max coefficient deviation of minus from conj(plus)."""
        diff = self.minus - self.plus.conjugate()
        return diff.max_abs()

    def allclose(self, other: "HomogeneousComponent", tol: float = 1e-12) -> bool:
        return (self.degree == other.degree
                and self.plus.allclose(other.plus, tol)
                and self.minus.allclose(other.minus, tol))

    def to_json_dict(self) -> dict:
        return {"degree": self.degree,
                "plus": self.plus.to_json_dict(),
                "minus": self.minus.to_json_dict()}


@dataclass(frozen=True)
class SymbolExpansion:
    """Finite sum of homogeneous components, keyed by degree."""

    components: dict

    def __post_init__(self):
        comps = {int(m): c for m, c in self.components.items()}
        for m, c in comps.items():
            if c.degree != m:
                raise ValueError("component degree does not match its key")
        object.__setattr__(self, "components", comps)

    @property
    def degrees(self):
        return sorted(self.components, reverse=True)

    @property
    def top_degree(self) -> int:
        return max(self.components) if self.components else 0

    @property
    def depth(self) -> int:
        return min(self.components) if self.components else 0

    def component(self, m: int) -> HomogeneousComponent:
        return self.components.get(m, HomogeneousComponent.zero(m))

    def with_component(self, comp: HomogeneousComponent) -> "SymbolExpansion":
        new = dict(self.components)
        new[comp.degree] = comp
        return SymbolExpansion(new)

    def __add__(self, other: "SymbolExpansion") -> "SymbolExpansion":
        new = dict(self.components)
        for m, c in other.components.items():
            new[m] = new[m] + c if m in new else c
        return SymbolExpansion(new)

    def scale(self, c) -> "SymbolExpansion":
        return SymbolExpansion({m: comp.scale(c) for m, comp in self.components.items()})

    def truncate(self, depth: int) -> "SymbolExpansion":
        return SymbolExpansion({m: c for m, c in self.components.items() if m >= depth})

    def at_t0(self) -> "SymbolExpansion":
        return SymbolExpansion({m: c.at_t0() for m, c in self.components.items()})

    def evaluate(self, x, t, xi):
        return sum(c.evaluate(x, t, xi) for c in self.components.values())

    def allclose(self, other: "SymbolExpansion", tol: float = 1e-12) -> bool:
        for m in set(self.components) | set(other.components):
            if not self.component(m).allclose(other.component(m), tol):
                return False
        return True

    def to_json_dict(self) -> dict:
        return {"components": [self.components[m].to_json_dict() for m in self.degrees]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# Interior factorization recursion
# ---------------------------------------------------------------------------

def factor_symbol(lam: float, tau: JetFunction, depth: int) -> SymbolExpansion:
    """Symbol of the outgoing factor of the Helmholtz operator near the circle.

    Seeds the expansion with the principal part -|xi|/(1-t) and solves, degree
    by degree, the quadratic symbol identity of the factorization

        (D_t + iE - iA)(D_t + iA) = -Laplacian - lam*tau   (E = 1/(1-t)),

    which at homogeneity degree m determines the next coefficient from the
    Leibniz products of the known ones plus one t-derivative of the previous
    coefficient.  Each recursion level therefore consumes one valid jet order
    of tau; the precondition on tau's order is checked up front.
    """
    if depth > -1:
        raise DepthError("depth must be <= -1")
    required = 2 - depth
    if not tau.exact and tau.order < required:
        raise JetOrderError(
            f"tau jet order {tau.order} insufficient: depth {depth} requires "
            f"K_t >= {required}")

    # working jet order: enough t-headroom for every derivative consumed below
    k_work = required + 2
    E = JetFunction.geometric(k_work)          # 1/(1-t)
    one_minus_t = JetFunction.one_minus_t()

    a = {
        1: HomogeneousComponent.even(1, -E),
        0: HomogeneousComponent.zero(0),
        -1: HomogeneousComponent.even(-1, (one_minus_t * tau).scale(lam / 2.0)),
    }
    # -1/(2 a_1) as a degree -1 multiplier
    inv_2a1 = HomogeneousComponent.even(-1, one_minus_t.scale(0.5))

    for m in range(-1, depth, -1):
        # gather the degree-m terms of the identity; the unknown a_{m-1}
        # appears only through 2 a_1 a_{m-1}
        acc = HomogeneousComponent.zero(m)
        for j in range(m, 2):
            cj = a[j]
            if cj.is_zero():
                continue
            for k in range(m, 2):
                gamma = j + k - m
                if gamma < 0:
                    continue
                ck = a[k]
                if ck.is_zero():
                    continue
                dj = cj.dxi_power(gamma)
                if dj.is_zero():
                    continue
                term = (dj * ck.dx_power(gamma)).scale((-1j) ** gamma / math.factorial(gamma))
                acc = acc + term
        acc = acc + a[m].dt() + (-(a[m] * HomogeneousComponent.even(0, E)))
        a[m - 1] = inv_2a1 * acc  # inv_2a1 is -1/(2 a_1)

    return SymbolExpansion({m: a[m] for m in range(1, depth - 1, -1)})


def boundary_symbol(a: SymbolExpansion, rho: PeriodicFunction) -> SymbolExpansion:
    """Restrict the interior factor to t = 0, negate, and divide by rho.

    This is the full symbol of the density-normalized Dirichlet-to-Neumann
    operator; its leading component is |xi|/rho.
    """
    require_positive(rho)
    inv = reciprocal(rho)
    comps = {}
    for m, c in a.components.items():
        plus = JetFunction.from_boundary(multiply(-c.plus.at_t0(), inv))
        minus = JetFunction.from_boundary(multiply(-c.minus.at_t0(), inv))
        comps[m] = HomogeneousComponent(m, plus, minus)
    return SymbolExpansion(comps)


def symbol_product(a: SymbolExpansion, b: SymbolExpansion, depth: int) -> SymbolExpansion:
    """Composition-of-operators product sum_K (1/K!) (d_xi^K a)(D_x^K b).

    Homogeneity bookkeeping is exact: the K-th term of degrees (m, m') lands
    at degree m + m' - K.  Components below `depth` are dropped.
    """
    acc = {}
    for ma in a.degrees:
        ca = a.components[ma]
        if ca.is_zero():
            continue
        for mb in b.degrees:
            cb = b.components[mb]
            if cb.is_zero():
                continue
            for K in range(0, ma + mb - depth + 1):
                target = ma + mb - K
                if target < depth:
                    break
                da = ca.dxi_power(K)
                if da.is_zero():
                    break  # higher K only multiplies by more vanishing factors
                term = (da * cb.dx_power(K)).scale((-1j) ** K / math.factorial(K))
                acc[target] = acc[target] + term if target in acc else term
    return SymbolExpansion(acc).truncate(depth)


def is_hermitian(a: SymbolExpansion, tol: float = 1e-10) -> bool:
    """True iff every component satisfies minus = conj(plus) within tol."""
    for c in a.components.values():
        scale = max(1.0, c.max_abs())
        if c.hermitian_defect() > tol * scale:
            return False
    return True
