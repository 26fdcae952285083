"""Model eigenvalue sequences, multiset merging, and decay diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solvers import FLOAT_FLOOR, SpectrumSequence


class WindowError(ValueError):
    """Too few usable points in the requested comparison window."""


@dataclass(frozen=True)
class ComponentModel:
    """One boundary component's model: spacing alpha = 1/L and coefficients."""

    alpha: float
    s: tuple = ()
    multiplicity: int = 1
    label: str = ""

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be >= 1")
        object.__setattr__(self, "s", tuple(float(v) for v in self.s))


def build_model_sequence(c: ComponentModel, N: int, j_max: int) -> SpectrumSequence:
    """0 once, then exact pairs j*alpha + sum_{n<=N} s_n j^{-n}, j = 1..j_max.

    The output is nondecreasing whenever max|s_n| stays below alpha j^2/2 for
    all retained j, which every sane configuration satisfies.
    """
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    s = c.s[:N]
    vals = [0.0]
    modes = [0]
    for j in range(1, j_max + 1):
        v = c.alpha * j + sum(sn * float(j) ** (-(n + 1)) for n, sn in enumerate(s))
        vals.extend([v, v])
        modes.extend([j, j])
    reps = c.multiplicity
    vals = [v for v in vals for _ in range(reps)]
    modes = [m for m in modes for _ in range(reps)]
    return SpectrumSequence(np.array(vals), np.array(modes, dtype=int),
                            tuple(c.label for _ in vals))


def merge(sequences) -> SpectrumSequence:
    """Sorted multiset union; repeated values keep their multiplicity.

    Ties break on (value, mode, component id), making the merge deterministic
    and associative/commutative as a multiset operation.
    """
    seqs = list(sequences)
    if not seqs:
        return SpectrumSequence(np.zeros(0), np.zeros(0, dtype=int), ())
    values = np.concatenate([s.values for s in seqs])
    modes = np.concatenate([s.modes for s in seqs])
    comps = tuple(c for s in seqs for c in s.components)
    return SpectrumSequence(values, modes, comps)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares slope of log|a_j - b_j| against log j."""

    slope: float | None
    intercept: float | None
    n_used: int
    n_floored: int
    floor_dominated: bool

    def __str__(self):
        if self.floor_dominated:
            return (f"floor-dominated: all {self.n_floored} differences below "
                    f"{FLOAT_FLOOR:g}, no slope")
        return (f"slope {self.slope:+.3f} from {self.n_used} points "
                f"({self.n_floored} below floor excluded)")


def decay_order(a: SpectrumSequence, b: SpectrumSequence, window,
                floor: float = FLOAT_FLOOR) -> DecayFit:
    """Fit the decay exponent of |a_j - b_j| over the index window.

    `window` is an inclusive index range (lo, hi).  Differences below the
    floating-point floor are excluded and counted; if everything sits below
    the floor the sequences are indistinguishable and the fit reports
    floor-dominated instead of a slope.  Fewer than 10 usable points (with
    some differences above the floor) is an error.
    """
    lo, hi = window
    if hi - lo + 1 < 10:
        raise WindowError(f"window [{lo},{hi}] has fewer than 10 indices")
    if hi >= len(a) or hi >= len(b) or lo < 0:
        raise WindowError("window exceeds the sequences' length")
    j = np.arange(lo, hi + 1)
    diff = np.abs(a.values[j] - b.values[j])
    usable = diff > floor
    n_used = int(np.sum(usable))
    n_floored = len(j) - n_used
    if n_used == 0:
        return DecayFit(None, None, 0, n_floored, True)
    if n_used < 10:
        raise WindowError(f"only {n_used} usable points above the {floor:g} floor")
    X = np.log(j[usable].astype(float))
    Y = np.log(diff[usable])
    A = np.vstack([X, np.ones_like(X)]).T
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    return DecayFit(float(coef[0]), float(coef[1]), n_used, n_floored, False)
