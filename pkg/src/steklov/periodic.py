"""Truncated Fourier arithmetic for smooth 2*pi-periodic functions.

A PeriodicFunction stores finitely many Fourier coefficients c_n, |n| <= order,
and evaluates as the exact finite sum sum_n c_n exp(i n x).  There is no hidden
grid: products are exact coefficient convolutions (up to the declared
truncation cap), derivatives and antiderivatives act on coefficients, and the
mean is the n = 0 coefficient.  Values are immutable, so instances can be
shared freely between threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# Default truncation cap for the coefficient order of products.  Symbol
# recursions multiply only a few low-order factors, so 64 keeps aliasing far
# below 1e-12 for the smooth data this package works with.
DEFAULT_CAP = 64


class CorruptedDataError(ValueError):
    """A declared-real quantity came out complex beyond tolerance."""


class NonPositiveFunctionError(ValueError):
    """A function required to be strictly positive is not."""


def _trim(coeffs: np.ndarray) -> np.ndarray:
    """Drop exactly-zero outermost coefficients, keeping symmetric storage."""
    order = (len(coeffs) - 1) // 2
    while order > 0 and coeffs[0] == 0 and coeffs[-1] == 0:
        coeffs = coeffs[1:-1]
        order -= 1
    return coeffs


@dataclass(frozen=True)
class PeriodicFunction:
    """Finite Fourier sum f(x) = sum_{|n| <= order} c_n exp(i n x)."""

    coeffs: np.ndarray  # complex, length 2*order + 1, index i <-> n = i - order
    cap: int = DEFAULT_CAP
    truncated: bool = False  # whether a product was clipped at the cap

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=complex)
        if arr.ndim != 1 or len(arr) % 2 != 1:
            raise ValueError("coefficient array must be 1-d of odd length")
        arr = _trim(arr.copy())
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, cap: int = DEFAULT_CAP) -> "PeriodicFunction":
        return cls(np.zeros(1, dtype=complex), cap=cap)

    @classmethod
    def constant(cls, value, cap: int = DEFAULT_CAP) -> "PeriodicFunction":
        return cls(np.array([value], dtype=complex), cap=cap)

    @classmethod
    def from_dict(cls, coeffs: dict, cap: int = DEFAULT_CAP) -> "PeriodicFunction":
        """Build from a {frequency: amplitude} mapping."""
        if not coeffs:
            return cls.zero(cap)
        order = max(abs(int(n)) for n in coeffs)
        arr = np.zeros(2 * order + 1, dtype=complex)
        for n, c in coeffs.items():
            arr[int(n) + order] += c
        return cls(arr, cap=cap)

    @classmethod
    def cosine(cls, k: int, amp=1.0, cap: int = DEFAULT_CAP) -> "PeriodicFunction":
        return cls.from_dict({k: amp / 2, -k: amp / 2}, cap=cap)

    @classmethod
    def sine(cls, k: int, amp=1.0, cap: int = DEFAULT_CAP) -> "PeriodicFunction":
        return cls.from_dict({k: amp / (2j), -k: -amp / (2j)}, cap=cap)

    @classmethod
    def from_callable(cls, f, order: int, cap: int = DEFAULT_CAP,
                      enforce_real: bool | None = None) -> "PeriodicFunction":
        """Project a callable onto Fourier modes |n| <= order.

        This is the single sampling step of the library: the callable is
        evaluated on a uniform grid of 4*(order + 1) points and transformed.
        For band-limited inputs the projection is exact; otherwise it aliases
        the tail, which is accepted at ingestion only.
        """
        n_grid = 4 * (order + 1)
        x = 2 * np.pi * np.arange(n_grid) / n_grid
        vals = np.asarray(f(x), dtype=complex)
        spec = np.fft.fft(vals) / n_grid
        arr = np.zeros(2 * order + 1, dtype=complex)
        for n in range(-order, order + 1):
            arr[n + order] = spec[n % n_grid]
        if enforce_real is None:
            enforce_real = bool(np.max(np.abs(vals.imag)) < 1e-14 * (1 + np.max(np.abs(vals))))
        pf = cls(arr, cap=cap)
        return pf.symmetrized() if enforce_real else pf

    # -- basic queries -----------------------------------------------------

    @property
    def order(self) -> int:
        return (len(self.coeffs) - 1) // 2

    def coeff(self, n: int) -> complex:
        if abs(n) > self.order:
            return 0j
        return complex(self.coeffs[n + self.order])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def evaluate(self, x):
        """Exact finite Fourier sum at x (scalar or array)."""
        x = np.asarray(x, dtype=float)
        n = np.arange(-self.order, self.order + 1)
        vals = np.exp(1j * np.outer(x.ravel(), n)) @ self.coeffs
        return vals.reshape(x.shape) if x.shape else complex(vals[0])

    def sample(self, n_grid: int) -> np.ndarray:
        x = 2 * np.pi * np.arange(n_grid) / n_grid
        return self.evaluate(x)

    def is_real(self, tol: float = 1e-12) -> bool:
        """Conjugate symmetry coeff(-n) == conj(coeff(n)) within tol."""
        res = self.coeffs - np.conj(self.coeffs[::-1])
        return float(np.max(np.abs(res))) <= tol * (1 + self.max_abs())

    def symmetrized(self) -> "PeriodicFunction":
        """Enforce conjugate symmetry exactly (projects onto real functions)."""
        arr = 0.5 * (self.coeffs + np.conj(self.coeffs[::-1]))
        return PeriodicFunction(arr, cap=self.cap, truncated=self.truncated)

    # -- algebra -----------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, PeriodicFunction):
            other = PeriodicFunction.constant(other, cap=self.cap)
        n = max(self.order, other.order)
        arr = np.zeros(2 * n + 1, dtype=complex)
        arr[n - self.order:n + self.order + 1] += self.coeffs
        arr[n - other.order:n + other.order + 1] += other.coeffs
        return PeriodicFunction(arr, cap=max(self.cap, other.cap),
                                truncated=self.truncated or other.truncated)

    __radd__ = __add__

    def __neg__(self):
        return PeriodicFunction(-self.coeffs, cap=self.cap, truncated=self.truncated)

    def __sub__(self, other):
        if not isinstance(other, PeriodicFunction):
            other = PeriodicFunction.constant(other, cap=self.cap)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PeriodicFunction):
            return multiply(self, other)
        return PeriodicFunction(self.coeffs * other, cap=self.cap, truncated=self.truncated)

    __rmul__ = __mul__

    def conjugate(self) -> "PeriodicFunction":
        return PeriodicFunction(np.conj(self.coeffs[::-1]), cap=self.cap,
                                truncated=self.truncated)

    def allclose(self, other: "PeriodicFunction", tol: float = 1e-12) -> bool:
        return (self - other).max_abs() <= tol

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {"coeffs": [[int(n), float(self.coeff(n).real), float(self.coeff(n).imag)]
                           for n in range(-self.order, self.order + 1)]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, d: dict, cap: int = DEFAULT_CAP) -> "PeriodicFunction":
        return cls.from_dict({int(n): re + 1j * im for n, re, im in d["coeffs"]}, cap=cap)

    @classmethod
    def from_json(cls, s: str, cap: int = DEFAULT_CAP) -> "PeriodicFunction":
        return cls.from_json_dict(json.loads(s), cap=cap)


# -- operations -------------------------------------------------------------

def multiply(f: PeriodicFunction, g: PeriodicFunction) -> PeriodicFunction:
    """Exact coefficient convolution, truncated at the declared cap.

    The result order is f.order + g.order, clipped to max(f.cap, g.cap); the
    clipping is recorded on the result through the `truncated` flag.
    """
    cap = max(f.cap, g.cap)
    conv = np.convolve(f.coeffs, g.coeffs)
    order = f.order + g.order
    clipped = order > cap
    if clipped:
        k = order - cap
        conv = conv[k:len(conv) - k]
    return PeriodicFunction(conv, cap=cap,
                            truncated=f.truncated or g.truncated or clipped)


def differentiate(f: PeriodicFunction) -> PeriodicFunction:
    """d/dx on coefficients: c_n -> i n c_n."""
    n = np.arange(-f.order, f.order + 1)
    return PeriodicFunction(1j * n * f.coeffs, cap=f.cap, truncated=f.truncated)


def mean(f: PeriodicFunction, tol: float = 1e-9) -> float:
    """Mean value (1/2pi) int_0^{2pi} f dx, i.e. the n = 0 coefficient.

    Raises CorruptedDataError when the coefficient carries an imaginary part
    beyond tol, which for declared-real data signals corruption upstream.
    """
    c0 = f.coeff(0)
    if abs(c0.imag) > tol * (1 + abs(c0)):
        raise CorruptedDataError(
            f"mean has imaginary part {c0.imag:.3e} beyond tolerance {tol:.1e}")
    return float(c0.real)


def antiderivative(f: PeriodicFunction):
    """Split the antiderivative F with F(0) = 0 as slope*x + periodic part.

    F'(x) = f(x) exactly and slope = mean(f) = coeff(0).  The returned slope is
    complex so that complex-valued intermediates can use the same path; for
    real input it is real.
    """
    slope = f.coeff(0)
    n = np.arange(-f.order, f.order + 1)
    arr = np.zeros_like(np.asarray(f.coeffs))
    nz = n != 0
    arr[nz] = f.coeffs[nz] / (1j * n[nz])
    periodic = PeriodicFunction(arr, cap=f.cap, truncated=f.truncated)
    # fix the additive constant so that slope*0 + periodic(0) = 0
    periodic = periodic - periodic.evaluate(0.0)
    return slope, periodic


def reciprocal(f: PeriodicFunction, tol: float = 1e-12, max_iter: int = 60) -> PeriodicFunction:
    """1/f as a truncated Fourier series via Newton iteration on coefficients.

    Iterates x <- x (2 - f x) from 1/coeff(0) and verifies by re-multiplying:
    the returned series g satisfies max |(f g - 1) coefficients| <= tol.
    """
    c0 = f.coeff(0)
    if abs(c0) == 0:
        raise NonPositiveFunctionError("cannot invert a zero-mean function")
    x = PeriodicFunction.constant(1.0 / c0, cap=f.cap)
    for _ in range(max_iter):
        residual = multiply(f, x) - 1.0
        if residual.max_abs() <= tol:
            return x
        x = x * 2.0 - multiply(f, multiply(x, x))
    residual = multiply(f, x) - 1.0
    if residual.max_abs() <= tol:
        return x
    raise NonPositiveFunctionError(
        f"reciprocal did not converge; residual {residual.max_abs():.3e} "
        "(is the function bounded away from zero at this truncation?)")


def require_positive(f: PeriodicFunction, n_grid: int = 1024, margin: float = 0.0):
    """Raise unless min f > margin on a dense grid."""
    vals = f.sample(max(n_grid, 8 * (f.order + 1)))
    if np.max(np.abs(vals.imag)) > 1e-10 * (1 + np.max(np.abs(vals))):
        raise NonPositiveFunctionError("function expected real and positive is complex")
    lo = float(np.min(vals.real))
    if lo <= margin:
        raise NonPositiveFunctionError(f"function must be strictly positive; min = {lo:.3e}")
    return lo
