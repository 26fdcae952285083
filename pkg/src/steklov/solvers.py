"""Exact and ODE-based forward solvers for model Dirichlet-to-Neumann spectra.

Three geometries with separable or radially-reducible structure supply ground
truth spectra: the unit disk with constant potential (Bessel ratios), the flat
annulus with constant potential (2x2 boundary pencil per Fourier mode), and
the unit disk with a radial polynomial potential (log-derivative shooting).

Bessel ratios are evaluated by backward recurrence on J_{n+1}/J_n rather than
by direct J_n values, since J_n(z) underflows for n >> z while the ratio stays
well conditioned.  Asymptotic pair gaps of these oracles sit at the 1e-13
floating-point floor (rotational symmetry makes the doubling exact here), a
floor the sequence diagnostics report explicitly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import j0, j1, y0, y1, k0, k1, jn_zeros

SCHEMA_VERSION = 1

# below this, |a_j - b_j| is considered indistinguishable from rounding
FLOAT_FLOOR = 1e-13


class PencilError(ValueError):
    """lambda sits on (or hugs) a Dirichlet eigenvalue of the pencil."""


class PencilProximityError(PencilError):
    """Shooting reached the outer boundary with |u(1)| below threshold."""


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("STEKLOV_THREADS", "1")))
    except ValueError:
        return 1


def _map_modes(fn, items):
    """Map over independent per-mode work, optionally threaded; order kept."""
    n = _n_threads()
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# Spectrum container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumSequence:
    """Nondecreasing multiset of eigenvalues with per-value provenance."""

    values: np.ndarray
    modes: np.ndarray       # Fourier mode index, -1 where unknown
    components: tuple       # component id string per value, "" where unknown

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.modes, dtype=int)
        comps = tuple(str(c) for c in self.components)
        if not (len(v) == len(m) == len(comps)):
            raise ValueError("values, modes and components must align")
        order = sorted(range(len(v)), key=lambda i: (v[i], m[i], comps[i]))
        v = v[order]
        m = m[order]
        comps = tuple(comps[i] for i in order)
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "modes", m)
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_values(cls, values, modes=None, component="") -> "SpectrumSequence":
        values = np.asarray(values, dtype=float)
        if modes is None:
            modes = -np.ones(len(values), dtype=int)
        comps = tuple(component for _ in values)
        return cls(values, np.asarray(modes, dtype=int), comps)

    def __len__(self) -> int:
        return len(self.values)

    def take(self, n: int) -> "SpectrumSequence":
        return SpectrumSequence(self.values[:n], self.modes[:n], self.components[:n])

    # -- serialization --

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "value", "mode", "component"])
        for i, (v, m, c) in enumerate(zip(self.values, self.modes, self.components)):
            w.writerow([i, repr(float(v)), int(m), c])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SpectrumSequence":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if header[:2] != ["index", "value"]:
            raise ValueError("expected spectrum CSV with index,value,... header")
        vals = [float(r[1]) for r in body]
        modes = [int(r[2]) if len(r) > 2 and r[2] != "" else -1 for r in body]
        comps = tuple(r[3] if len(r) > 3 else "" for r in body)
        return cls(np.array(vals), np.array(modes, dtype=int), comps)

    def to_json_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION,
                "entries": [{"value": float(v), "mode": int(m), "component": c}
                            for v, m, c in zip(self.values, self.modes, self.components)]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "SpectrumSequence":
        e = d["entries"]
        return cls(np.array([r["value"] for r in e], dtype=float),
                   np.array([r.get("mode", -1) for r in e], dtype=int),
                   tuple(r.get("component", "") for r in e))


# ---------------------------------------------------------------------------
# Bessel ratio machinery
# ---------------------------------------------------------------------------

def ratios_j(z: float, n_max: int) -> np.ndarray:
    """t_n = J_{n+1}(z)/J_n(z) for n = 0..n_max by backward recurrence.

    Backward iteration of t_{k-1} = 1/(2k/z - t_k) converges to the minimal
    (J) solution; the seed error damps geometrically in (z/2k)^2.
    """
    if z <= 0:
        raise ValueError("positive argument required")
    k_start = n_max + 32 + int(2 * z)
    t = z / (2.0 * (k_start + 1))
    out = np.empty(n_max + 1)
    for k in range(k_start, 0, -1):
        t = 1.0 / (2.0 * k / z - t)
        if k - 1 <= n_max:
            out[k - 1] = t
    return out


def ratios_i(z: float, n_max: int) -> np.ndarray:
    """t_n = I_{n+1}(z)/I_n(z) for n = 0..n_max by backward recurrence."""
    if z <= 0:
        raise ValueError("positive argument required")
    k_start = n_max + 32 + int(2 * z)
    t = z / (2.0 * (k_start + 1))
    out = np.empty(n_max + 1)
    for k in range(k_start, 0, -1):
        t = 1.0 / (2.0 * k / z + t)
        if k - 1 <= n_max:
            out[k - 1] = t
    return out


def _log_family_forward(v0: float, v1: float, z: float, n_max: int, sign_recur: float):
    """Forward three-term recurrence in log-magnitude/sign form.

    Computes f_{n+1} = (2n/z) f_n + sign_recur * f_{n-1} for the dominant
    family (Y with sign -1, K with sign +1), returning per-n (log|f|, sign).
    """
    logs = np.empty(n_max + 1)
    signs = np.empty(n_max + 1)
    logs[0] = math.log(abs(v0)) if v0 != 0 else -math.inf
    signs[0] = math.copysign(1.0, v0)
    if n_max == 0:
        return logs, signs
    logs[1] = math.log(abs(v1)) if v1 != 0 else -math.inf
    signs[1] = math.copysign(1.0, v1)
    a, b = v0, v1  # scaled values; true value = current * exp(shift)
    shift = 0.0
    for n in range(1, n_max):
        c = (2.0 * n / z) * b + sign_recur * a
        mag = max(abs(b), abs(c))
        if mag > 1e250:
            a, b, c = a / mag, b / mag, c / mag
            shift += math.log(mag)
        a, b = b, c
        logs[n + 1] = math.log(abs(b)) + shift if b != 0 else -math.inf
        signs[n + 1] = math.copysign(1.0, b)
    return logs, signs


def log_bessel_y(z: float, n_max: int):
    """(log|Y_n(z)|, sign) for n = 0..n_max (forward recurrence is stable)."""
    return _log_family_forward(y0(z), y1(z), z, n_max, sign_recur=-1.0)


def log_bessel_k(z: float, n_max: int):
    """(log K_n(z), sign=+1) for n = 0..n_max."""
    return _log_family_forward(k0(z), k1(z), z, n_max, sign_recur=+1.0)


def log_bessel_j(z: float, n_max: int):
    """(log|J_n(z)|, sign) via the ratio ladder from J_0."""
    t = ratios_j(z, max(n_max, 1))
    logs = np.empty(n_max + 1)
    signs = np.empty(n_max + 1)
    v = j0(z)
    logs[0] = math.log(abs(v)) if v != 0 else -math.inf
    signs[0] = math.copysign(1.0, v)
    for n in range(n_max):
        logs[n + 1] = logs[n] + math.log(abs(t[n]))
        signs[n + 1] = signs[n] * math.copysign(1.0, t[n])
    return logs, signs


def log_bessel_i(z: float, n_max: int):
    """(log I_n(z), sign=+1) via the ratio ladder from I_0 (scaled)."""
    t = ratios_i(z, max(n_max, 1))
    from scipy.special import i0e
    logs = np.empty(n_max + 1)
    logs[0] = math.log(i0e(z)) + z
    for n in range(n_max):
        logs[n + 1] = logs[n] + math.log(t[n])
    return logs, np.ones(n_max + 1)


# ---------------------------------------------------------------------------
# Disk with constant potential
# ---------------------------------------------------------------------------

def disk_constant_mode(lam: float, n: int, _ratios=None) -> float:
    """sigma_n = sqrt(lam) J_n'(sqrt(lam))/J_n(sqrt(lam)), branch by lam sign."""
    if lam == 0.0:
        return float(n)
    if lam > 0:
        z = math.sqrt(lam)
        t = _ratios[n] if _ratios is not None else ratios_j(z, n)[n]
        return n - z * t
    z = math.sqrt(-lam)
    t = _ratios[n] if _ratios is not None else ratios_i(z, n)[n]
    return n + z * t


def disk_constant_spectrum(lam: float, n_max: int, guard_margin: float = 1e-6) -> SpectrumSequence:
    """Disk DtN spectrum for constant potential, modes n = 0..n_max.

    Mode 0 enters once, modes n >= 1 twice.  Raises PencilError when lam is
    within guard_margin of a Dirichlet pencil eigenvalue (a squared J_n zero).
    """
    offender = _disk_pencil_offender(lam, n_max, guard_margin)
    if offender is not None:
        raise PencilError(f"lambda = {lam} within {guard_margin} of a Dirichlet "
                          f"pencil eigenvalue at mode {offender}")
    if lam > 0:
        table = ratios_j(math.sqrt(lam), n_max)
    elif lam < 0:
        table = ratios_i(math.sqrt(-lam), n_max)
    else:
        table = None
    vals, modes = [], []
    for n in range(n_max + 1):
        s = disk_constant_mode(lam, n, table)
        reps = 1 if n == 0 else 2
        vals.extend([s] * reps)
        modes.extend([n] * reps)
    return SpectrumSequence(np.array(vals), np.array(modes, dtype=int),
                            tuple("disk" for _ in vals))


def _disk_pencil_offender(lam: float, n_max: int, margin: float):
    """Mode index whose pencil eigenvalue sits within margin of lam, if any."""
    if lam <= 0:
        return None  # I_n has no positive zeros; lam = 0 is never a pencil value
    z = math.sqrt(lam)
    n = 0
    while n <= n_max:
        # first zero j_{n,1} >= n; once n > z there are no zeros below z
        if n > z + 2:
            break
        count = max(1, int(z / math.pi) + 2)
        zeros = jn_zeros(n, count)
        zeros = zeros[zeros < z + 1.0]
        for zz in zeros:
            if abs(lam - zz * zz) <= margin:
                return n
        n += 1
    return None


# ---------------------------------------------------------------------------
# Flat annulus with constant potential
# ---------------------------------------------------------------------------

def _quadratic_roots(a: float, b: float, c: float):
    """Real roots of a x^2 + b x + c, numerically careful form."""
    disc = b * b - 4 * a * c
    if disc < 0:
        if disc > -1e-10 * max(b * b, abs(4 * a * c), 1.0):
            disc = 0.0
        else:
            raise PencilError("annulus boundary pencil produced complex roots")
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b)) if b != 0 else 0.5 * sq
    if a == 0:
        raise PencilError("annulus boundary pencil is degenerate (det N = 0)")
    if q == 0:
        return (0.0, 0.0)
    return tuple(sorted((q / a, c / q)))


def _annulus_mode_pair(lam: float, R: float, n: int, tables) -> tuple:
    """The two density-one eigenvalues of mode n on the annulus R < r < 1.

    Solves det(M - sigma N) = 0 where the columns are scaled by the dominant
    basis values so every entry stays O(1) for all n.
    """
    if lam == 0.0:
        if n == 0:
            return (0.0, (1.0 + 1.0 / R) / (-math.log(R)))
        Rn = R ** n
        M = ((n, -n * Rn), (-n * Rn / R, n / R))
        N = ((1.0, Rn), (Rn, 1.0))
    else:
        (qA1, qAR, qB1, qBR, rA, rB) = tables[n]
        M = ((qA1, qB1 * rB), (-qAR * rA / R, -qBR / R))
        N = ((1.0, rB), (rA, 1.0))
    a = N[0][0] * N[1][1] - N[0][1] * N[1][0]
    b = -(M[0][0] * N[1][1] + M[1][1] * N[0][0] - M[0][1] * N[1][0] - M[1][0] * N[0][1])
    c = M[0][0] * M[1][1] - M[0][1] * M[1][0]
    return _quadratic_roots(a, b, c)


def _annulus_tables(lam: float, R: float, n_max: int):
    """Per-mode scaled Bessel data for the annulus pencil.

    Returns per n: q-values z C'(z)/C(z) at both radii for both basis
    families A (recessive: J or I) and B (dominant: Y or K), plus the cross
    ratios rA = A_n(kR)/A_n(k) and rB = B_n(k)/B_n(kR), both decaying ~ R^n.
    """
    if lam > 0:
        z1, zR = math.sqrt(lam), math.sqrt(lam) * R
        tA1, tAR = ratios_j(z1, n_max), ratios_j(zR, n_max)
        logA1, sgA1 = log_bessel_j(z1, n_max)
        logAR, sgAR = log_bessel_j(zR, n_max)
        logB1, sgB1 = log_bessel_y(z1, n_max + 1)
        logBR, sgBR = log_bessel_y(zR, n_max + 1)
        out = []
        for n in range(n_max + 1):
            qA1 = n - z1 * tA1[n]
            qAR = n - zR * tAR[n]
            # Y ratio u_n = Y_{n+1}/Y_n from the log table
            uB1n = sgB1[n + 1] * sgB1[n] * math.exp(logB1[n + 1] - logB1[n])
            uBRn = sgBR[n + 1] * sgBR[n] * math.exp(logBR[n + 1] - logBR[n])
            qB1 = n - z1 * uB1n
            qBR = n - zR * uBRn
            rA = sgAR[n] * sgA1[n] * math.exp(logAR[n] - logA1[n])
            rB = sgB1[n] * sgBR[n] * math.exp(logB1[n] - logBR[n])
            out.append((qA1, qAR, qB1, qBR, rA, rB))
        return out
    # lam < 0: recessive I, dominant K
    z1, zR = math.sqrt(-lam), math.sqrt(-lam) * R
    tA1, tAR = ratios_i(z1, n_max), ratios_i(zR, n_max)
    logA1, _ = log_bessel_i(z1, n_max)
    logAR, _ = log_bessel_i(zR, n_max)
    logB1, _ = log_bessel_k(z1, n_max + 1)
    logBR, _ = log_bessel_k(zR, n_max + 1)
    out = []
    for n in range(n_max + 1):
        qA1 = n + z1 * tA1[n]
        qAR = n + zR * tAR[n]
        # K ratio: z K'_n/K_n = n - z K_{n+1}/K_n
        qB1 = n - z1 * math.exp(logB1[n + 1] - logB1[n])
        qBR = n - zR * math.exp(logBR[n + 1] - logBR[n])
        rA = math.exp(logAR[n] - logA1[n])
        rB = math.exp(logB1[n] - logBR[n])
        out.append((qA1, qAR, qB1, qBR, rA, rB))
    return out


def annulus_constant_spectrum(lam: float, R: float, n_max: int,
                              guard_margin: float = 1e-6) -> SpectrumSequence:
    """Annulus R < r < 1 DtN spectrum for constant potential.

    Outward normals are +d/dr at r = 1 and -d/dr at r = R.  Each mode n
    contributes two eigenvalues; modes n >= 1 enter twice.
    """
    if not 0.0 < R < 1.0:
        raise ValueError("inner radius must satisfy 0 < R < 1")
    if lam > 0 and not dirichlet_pencil_guard(lam, {"geometry": "annulus", "R": R,
                                                    "n_max": n_max},
                                              margin=guard_margin):
        raise PencilError(f"lambda = {lam} within {guard_margin} of an annulus "
                          "Dirichlet pencil eigenvalue")
    tables = _annulus_tables(lam, R, n_max) if lam != 0 else None
    vals, modes = [], []
    for n in range(n_max + 1):
        pair = _annulus_mode_pair(lam, R, n, tables)
        reps = 1 if n == 0 else 2
        for s in pair:
            vals.extend([s] * reps)
            modes.extend([n] * reps)
    return SpectrumSequence(np.array(vals), np.array(modes, dtype=int),
                            tuple("annulus" for _ in vals))


def _annulus_dirichlet_det(lam: float, R: float, n: int) -> float:
    """Sign-carrying cross determinant of the Dirichlet condition u(1)=u(R)=0."""
    if lam <= 0:
        return 1.0  # no Dirichlet pencil eigenvalues at lam <= 0
    z1, zR = math.sqrt(lam), math.sqrt(lam) * R
    logJ1, sJ1 = log_bessel_j(z1, n)
    logJR, sJR = log_bessel_j(zR, n)
    logY1, sY1 = log_bessel_y(z1, n)
    logYR, sYR = log_bessel_y(zR, n)
    # J_n(z1) Y_n(zR) - J_n(zR) Y_n(z1), scaled by exp(-(logJR + logY1))
    t1 = sJ1[n] * sYR[n] * math.exp((logJ1[n] + logYR[n]) - (logJR[n] + logY1[n]))
    t2 = sJR[n] * sY1[n]
    return t1 - t2


# ---------------------------------------------------------------------------
# Disk with radial potential: log-derivative shooting
# ---------------------------------------------------------------------------

_PHI_BIG = 1e6


def _radial_shoot(n: int, lam: float, tau_coeffs, r0: float = 1e-6,
                  rtol: float = 1e-12):
    """Integrate phi = r u'/u for u'' + u'/r + (lam tau - n^2/r^2) u = 0.

    Starts on the regular branch phi(r0) = n (the r^n Frobenius solution) and
    switches to psi = 1/phi across zeros of u, counting interior zeros.
    Returns (sigma = phi(1), zero_count, final_psi_or_None).
    """
    c = np.asarray(tau_coeffs, dtype=float)

    def tau(r):
        return np.polynomial.polynomial.polyval(r, c)

    def f_phi(r, y):
        return [(n * n - y[0] * y[0]) / r - lam * tau(r) * r]

    def jac_phi(r, y):
        return [[-2.0 * y[0] / r]]

    def f_psi(r, y):
        p = y[0]
        return [(1.0 - n * n * p * p) / r + lam * tau(r) * r * p * p]

    def jac_psi(r, y):
        return [[-2.0 * n * n * y[0] / r + 2.0 * lam * tau(r) * r * y[0]]]

    big = lambda r, y: abs(y[0]) - _PHI_BIG
    big.terminal = True
    small = lambda r, y: abs(y[0]) - 2.0 / _PHI_BIG
    small.terminal = True
    small.direction = 1.0

    r, phi = r0, float(n)
    zeros = 0
    in_psi = False
    psi = None
    for _ in range(200):  # alternating phi/psi legs
        if not in_psi:
            sol = solve_ivp(f_phi, (r, 1.0), [phi], method="Radau",
                            rtol=rtol, atol=1e-14, jac=jac_phi, events=big)
            if not sol.success:
                raise RuntimeError(f"radial shooting failed at mode {n}: {sol.message}")
            if sol.status == 0:
                return float(sol.y[0, -1]), zeros, None
            r, phi = float(sol.t_events[0][0]), float(sol.y_events[0][0][0])
            in_psi, psi = True, 1.0 / phi
        else:
            sol = solve_ivp(f_psi, (r, 1.0), [psi], method="Radau",
                            rtol=rtol, atol=1e-16, jac=jac_psi, events=small)
            if not sol.success:
                raise RuntimeError(f"radial shooting failed at mode {n}: {sol.message}")
            end_psi = float(sol.y[0, -1])
            start_psi = psi
            if sol.status == 0:
                if math.copysign(1.0, end_psi) != math.copysign(1.0, start_psi):
                    zeros += 1
                return None, zeros, end_psi  # still next to a zero of u at r=1
            r, psi = float(sol.t_events[0][0]), float(sol.y_events[0][0][0])
            if math.copysign(1.0, psi) != math.copysign(1.0, start_psi):
                zeros += 1
            in_psi, phi = False, 1.0 / psi
    raise RuntimeError(f"radial shooting did not terminate at mode {n}")


def disk_radial_mode(lam: float, tau_coeffs, n: int, rtol: float = 1e-12,
                     u1_threshold: float = 1e-8) -> float:
    """sigma_n for the radial potential tau(r) given as polynomial coefficients."""
    sigma, zeros, psi = _radial_shoot(n, lam, tau_coeffs, rtol=rtol)
    if sigma is None:
        if abs(psi) < u1_threshold:
            raise PencilProximityError(
                f"mode {n}: |u(1)| within {u1_threshold} of zero, lambda too "
                "close to a Dirichlet pencil eigenvalue")
        return 1.0 / psi
    return sigma


def disk_radial_spectrum(lam: float, tau_coeffs, n_max: int,
                         rtol: float = 1e-12) -> SpectrumSequence:
    """Disk DtN spectrum for a radial polynomial potential, modes 0..n_max."""
    if lam == 0.0:
        sigmas = [float(n) for n in range(n_max + 1)]
    else:
        sigmas = _map_modes(lambda n: disk_radial_mode(lam, tau_coeffs, n, rtol),
                            range(n_max + 1))
    vals, modes = [], []
    for n, s in enumerate(sigmas):
        reps = 1 if n == 0 else 2
        vals.extend([s] * reps)
        modes.extend([n] * reps)
    return SpectrumSequence(np.array(vals), np.array(modes, dtype=int),
                            tuple("disk-radial" for _ in vals))


# ---------------------------------------------------------------------------
# Pencil guard
# ---------------------------------------------------------------------------

def dirichlet_pencil_guard(lam: float, geometry: dict, margin: float = 1e-6) -> bool:
    """True iff lam stays at least `margin` away from every Dirichlet pencil
    eigenvalue detectable up to the geometry's n_max."""
    kind = geometry["geometry"]
    n_max = int(geometry.get("n_max", 64))
    if kind == "disk":
        return _disk_pencil_offender(lam, n_max, margin) is None
    if kind == "annulus":
        if lam <= 0:
            return True
        R = float(geometry["R"])
        lo, hi = lam - margin, lam + margin
        grid = np.linspace(max(lo, 1e-12), hi, 9)
        for n in range(n_max + 1):
            if n > math.sqrt(lam) / (1 - R):  # no pencil eigenvalues this deep
                break
            dets = [_annulus_dirichlet_det(g, R, n) for g in grid]
            if any(d1 * d2 <= 0 for d1, d2 in zip(dets, dets[1:])):
                return False
        return True
    if kind == "disk-radial":
        tau_coeffs = geometry.get("tau", (1.0,))
        if lam == 0:
            return True
        grid = np.linspace(lam - margin, lam + margin, 5)
        for n in range(n_max + 1):
            c = np.asarray(tau_coeffs, dtype=float)
            if lam * np.max(np.polynomial.polynomial.polyval(
                    np.linspace(0, 1, 64), c)) < (n / 1.0) ** 2 and n > 4:
                break  # potential cannot create interior zeros this deep
            marks = []
            for g in grid:
                _, zeros, psi = _radial_shoot(n, g, tau_coeffs, rtol=1e-10)
                near = psi is not None and abs(psi) < 1e-8
                marks.append((zeros, near))
            if any(near for _, near in marks):
                return False
            if any(z1 != z2 for (z1, _), (z2, _) in zip(marks, marks[1:])):
                return False  # an interior-zero count change crossed the window
        return True
    raise ValueError(f"unknown geometry {kind!r}")
