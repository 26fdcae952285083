"""Inverse-spectral decoupling of a merged boundary spectrum.

Given a nondecreasing sequence whose tail is a union of component models
j*alpha_m + sum_n s_n^(m) j^{-n} (exact pairs plus o(1) perturbation), the
decoupler recovers, in order:

1. the spacings alpha_m with multiplicities, by repeated tail-gap extraction:
   the largest recurring consecutive gap equals the smallest remaining
   spacing, after which the two elements nearest each multiple are removed
   and the scan repeats;
2. per spacing, a set of resonant indices j whose windows
   [j alpha - delta, j alpha + delta] contain no multiple of any unrelated
   spacing (exhaustive scan at desk scale; spacings that divide alpha_m are
   not excluded, their contribution is tracked explicitly);
3. the coefficients s_n with multiplicities, by clustering the window
   residuals (x - eta_j) j^{T+1} stage by stage, where eta_j carries the
   already recovered terms; components whose spacing divides alpha_m ride
   along with their known models and absorb their share of each window;
4. geometric invariants of the constant-potential problem: perimeters
   2 pi / alpha, the coupling lambda from s_1, the total geodesic curvature
   per boundary from s_2, and the Gauss-Bonnet combination
   4 pi gamma + int K = 2 pi (2 - ell) - sum int k_g.

Every tolerance here is finite-data policy validated against the exact
oracles; the limits being approximated are exact only asymptotically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .solvers import SpectrumSequence


class DecoupleError(ValueError):
    """Base for decoupler failures; carries a diagnostics dict."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InsufficientDataError(DecoupleError):
    """Tail-gap windows disagree: not enough data to pin down a spacing."""


class HorizonError(DecoupleError):
    """No (or too few) resonant indices below the data horizon."""


class AmbiguityError(DecoupleError):
    """Residual clusters cannot be reconciled with integer multiplicities."""


@dataclass(frozen=True)
class DecoupleConfig:
    """Finite-data policy knobs; defaults are validated on the oracles."""

    min_entries: int = 400        # refuse shorter inputs outright
    guard_frac: float = 0.1       # removal guard = guard_frac * alpha_max
    s1_scale: float = 2.0         # nominal |s_1| bound for gap-drift tolerance
    min_tail: int = 48            # stop extracting spacings below this leftover
    min_multiples: int = 12       # a spacing needs this many multiples in range
    same_alpha_rel: float = 1e-4  # recovered spacings closer than this merge
    rational_tol: float = 5e-5    # ratio within this of p/q counts as rational
    rational_qmax: int = 32
    min_resonant: int = 30        # required |E_m| in the usable index range
    mult_int_tol: float = 0.25    # occupancy distance to an integer
    split_significance: float = 8.0  # max gap vs median gap needed to split
    lambda_consistency_tol: float = 5e-2
    lambda_zero_tol: float = 1e-7  # max|s_1| below this => degenerate coupling
    fit_j_lo_factor: float = 4.0  # lowest fitted index ~ factor*s1_scale/delta
    fit_nuisance: int = 2         # extra expansion orders absorbed by the refit
    fit_weight_exp: float | None = None  # refit weight exponent; None = N + 2


# ---------------------------------------------------------------------------
# Step 1: spacings
# ---------------------------------------------------------------------------

def _tail_gap_estimate(arr: np.ndarray, cfg: DecoupleConfig):
    """Stabilized maximum consecutive gap over three nested tail windows.

    Returns (alpha0, diagnostics) or None when the tail is too short; raises
    InsufficientDataError when the windows disagree beyond the coefficient
    drift model 3 * s1_scale / j_lo^2.
    """
    n = len(arr)
    if n < 24:
        return None
    maxima = []
    starts = []
    for frac in (0.5, 0.33, 0.2):
        w = max(12, int(n * frac))
        gaps = np.sort(np.diff(arr[n - w:]))[::-1]
        # median of the top-decile gaps: the recurring near-maximal gap.
        # Plain maxima get corrupted by removal swaps at lattice collisions
        # (the two closest elements to a multiple may belong to the other
        # component), which inflate isolated gaps.
        k_top = max(3, len(gaps) // 10)
        maxima.append(float(np.median(gaps[:k_top])))
        starts.append(float(arr[n - w]))
    alpha0 = max(maxima)
    if alpha0 <= 0:
        return None
    # the statistic drifts like spread/j when equal spacings carry different
    # first coefficients, so windows anchored at different depths may differ
    # at first order in 1/j
    j_starts = [max(2.0, s / alpha0) for s in starts]
    drift = 2.0 * cfg.s1_scale * abs(1.0 / j_starts[0] - 1.0 / j_starts[-1])
    tol = (3.0 * drift + 1e-3 * alpha0
           + 64 * np.finfo(float).eps * (1 + arr[-1]))
    spread = max(maxima) - min(maxima)
    diag = {"window_maxima": maxima, "tolerance": tol, "spread": spread}
    if spread > tol:
        raise InsufficientDataError(
            f"tail-gap windows disagree: maxima {maxima}, spread {spread:.3e} "
            f"exceeds tolerance {tol:.3e}", diag)
    return alpha0, diag


def _coherence_peaks(arr: np.ndarray, alpha0: float, span: float = 0.03,
                     max_peaks: int = 3):
    """Candidate spacings from lattice-phase coherence around a seed.

    Scores |sum exp(2 pi i v / alpha)| over the tail values: coherence peaks
    at the true spacing regardless of per-cluster coefficient spread, which
    defeats the gap estimator's O(spread/k) bias for repeated spacings.  A
    comb of another component can produce a stronger peak at a rational
    fraction of its spacing, so the top few local maxima are all returned
    (best first) and the caller validates them against the data.
    """
    tail = arr[len(arr) // 3:]
    if len(tail) < 16:
        return [alpha0]
    v_max = tail[-1]
    step = alpha0 * alpha0 / (8.0 * v_max)
    offsets = np.arange(-span * alpha0, span * alpha0 + step, step)
    alphas = alpha0 + offsets
    phases = np.exp(2j * np.pi * np.outer(1.0 / alphas, tail))
    score = np.abs(phases.sum(axis=1))
    peaks = []
    for k in range(1, len(alphas) - 1):
        if score[k] >= score[k - 1] and score[k] >= score[k + 1]:
            y0, y1, y2 = score[k - 1], score[k], score[k + 1]
            denom = y0 - 2 * y1 + y2
            frac = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
            peaks.append((float(score[k]), float(alphas[k] + frac * step)))
    peaks.sort(reverse=True)
    out = [a for _, a in peaks[:max_peaks]]
    return out or [alpha0]


def _refine_alpha(arr: np.ndarray, alpha0: float, guard: float) -> float:
    """Sharpen a gap-seeded spacing by regressing multiple positions on k.

    Cluster centers near k*alpha follow alpha*k + c/k + O(k^-2); a robust
    [k, 1/k] fit removes the coefficient-induced drift that biases the raw
    maximum-gap estimate by O(1/j_tail^2).  The matching and the fit are
    alternated a few times, because a percent-level seed loses the clusters
    at large k; each pass extends the match range.  Collision outliers
    (points of other components wandering into the guard) are trimmed.
    """
    k_max = int(arr[-1] / alpha0)
    if k_max < 6:
        return alpha0
    alpha, c1 = alpha0, 0.0
    for _pass in range(4):
        # keep low multiples in play: right after a biased gap seed they are
        # the only ones the guard still catches, and the robust trim protects
        # the fit from stray low-end junk
        k_lo = max(2, int(0.02 * k_max))
        ks, ys = [], []
        for k in range(k_lo, k_max + 1):
            target = alpha * k + c1 / k
            i = np.searchsorted(arr, target)
            lo, hi = max(0, i - 8), min(len(arr), i + 8)
            cand = arr[lo:hi]
            cand = cand[np.abs(cand - target) <= guard]
            if len(cand) == 0:
                continue
            # mean over the whole cluster, not the two nearest: with repeated
            # spacings the nearest pair flips between the coefficient branches
            # and would feed the fit a bistable mixture
            ks.append(k)
            ys.append(float(np.mean(cand)))
        if len(ks) < 8:
            return alpha
        ks = np.asarray(ks, dtype=float)
        ys = np.asarray(ys)
        keep = np.ones(len(ks), dtype=bool)
        for _trim in range(3):
            A = np.vstack([ks[keep], 1.0 / ks[keep]]).T
            coef, *_ = np.linalg.lstsq(A, ys[keep], rcond=None)
            resid = ys - (coef[0] * ks + coef[1] / ks)
            scale = np.median(np.abs(resid[keep])) + 1e-15
            new_keep = np.abs(resid) <= 6.0 * scale
            if new_keep.sum() < 8:
                break
            keep = new_keep
        alpha, c1 = float(coef[0]), float(coef[1])
    return alpha


def _hit_ratio(arr: np.ndarray, alpha: float, guard: float) -> float:
    """Fraction of tail multiples of alpha with at least two nearby elements."""
    k_max = int(arr[-1] / alpha)
    k_lo = max(1, k_max // 2)
    if k_max < k_lo + 4:
        return 0.0
    hits = 0
    for k in range(k_lo, k_max + 1):
        target = k * alpha
        i = np.searchsorted(arr, target)
        lo, hi = max(0, i - 6), min(len(arr), i + 6)
        cand = arr[lo:hi]
        if np.sum(np.abs(cand - target) <= guard) >= 2:
            hits += 1
    return hits / (k_max - k_lo + 1)


def _remove_component(arr: np.ndarray, alpha: float, guard: float):
    """Drop, per multiple k*alpha, the two nearest elements within the guard
    distance, preferring the larger value on exact distance ties."""
    alive = np.ones(len(arr), dtype=bool)
    k_max = int((arr[-1] + guard) / alpha)
    misses = 0
    for k in range(1, k_max + 1):
        target = k * alpha
        i = np.searchsorted(arr, target)
        lo, hi = max(0, i - 6), min(len(arr), i + 6)
        idx = [p for p in range(lo, hi)
               if alive[p] and abs(arr[p] - target) <= guard]
        idx.sort(key=lambda p: (abs(arr[p] - target), -arr[p]))
        for p in idx[:2]:
            alive[p] = False
        if len(idx) < 2:
            misses += 1
    return arr[alive], misses


def recover_lengths(S: SpectrumSequence, config: DecoupleConfig | None = None,
                    with_diagnostics: bool = False):
    """Recover the multiset of spacings {alpha_m} from a merged spectrum.

    Repeatedly estimates the largest recurring tail gap (three nested windows
    must agree), refines it against the multiple positions, and removes the
    two nearest elements per multiple before rescanning.  Multiplicities
    come out through repeated extraction of the same spacing.
    """
    cfg = config or DecoupleConfig()
    if len(S) < cfg.min_entries:
        raise InsufficientDataError(
            f"need at least {cfg.min_entries} eigenvalues, got {len(S)}",
            {"n_entries": len(S)})
    work = np.array(S.values, dtype=float)
    alphas = []
    trail = []
    for _round in range(64):
        try:
            est = _tail_gap_estimate(work, cfg)
        except InsufficientDataError:
            if not alphas:
                raise
            break
        if est is None:
            break
        alpha0, diag = est
        if work[-1] / alpha0 < cfg.min_multiples:
            if not alphas:
                raise InsufficientDataError(
                    f"estimated spacing {alpha0:.6g} admits fewer than "
                    f"{cfg.min_multiples} multiples in range", diag)
            break
        guard = cfg.guard_frac * max([alpha0] + alphas)
        # coherence candidates first (another component's comb can fake the
        # strongest peak at a fraction of its spacing, hence the validation)
        alpha, ratio = alpha0, -1.0
        for cand in _coherence_peaks(work, alpha0):
            a_try = _refine_alpha(work, cand, guard)
            r_try = _hit_ratio(work, a_try, guard)
            if r_try > ratio:
                alpha, ratio = a_try, r_try
            if r_try >= 0.8:
                break
        diag["alpha"] = alpha
        diag["hit_ratio"] = ratio
        if ratio < 0.5:
            # the refined candidate does not track the data's multiples: a
            # corrupted leftover rather than a real component
            trail.append(diag)
            if not alphas:
                raise InsufficientDataError(
                    f"spacing candidate {alpha:.6g} matches only "
                    f"{100 * ratio:.0f}% of its tail multiples", diag)
            break
        before = len(work)
        work, misses = _remove_component(work, alpha, guard)
        diag["misses"] = misses
        trail.append(diag)
        if before - len(work) < 2 * cfg.min_multiples:
            if not alphas:
                raise InsufficientDataError(
                    f"spacing candidate {alpha:.6g} matched almost no multiples",
                    diag)
            break
        alphas.append(alpha)
        if len(work) < cfg.min_tail:
            break
    alphas.sort()
    if with_diagnostics:
        return alphas, {"extraction_trail": trail, "leftover": int(len(work))}
    return alphas


def group_spacings(alphas, config: DecoupleConfig | None = None):
    """Collapse a recovered spacing multiset into (value, multiplicity) pairs."""
    cfg = config or DecoupleConfig()
    groups = []
    for a in sorted(alphas):
        if groups and abs(a - groups[-1][0]) <= cfg.same_alpha_rel * groups[-1][0]:
            val, mult = groups[-1]
            groups[-1] = ((val * mult + a) / (mult + 1), mult + 1)
        else:
            groups.append((a, 1))
    return groups


# ---------------------------------------------------------------------------
# Step 2: resonant indices
# ---------------------------------------------------------------------------

def _integer_ratio(num: float, den: float, cfg: DecoupleConfig):
    """num/den as an integer >= 1 when within tolerance, else None."""
    r = num / den
    n = round(r)
    if n >= 1 and abs(r - n) <= cfg.rational_tol * max(1.0, r):
        return n
    return None


def _rational_approx(x: float, q_max: int, tol: float):
    """Best continued-fraction convergent p/q with q <= q_max within tol."""
    p0, q0, p1, q1 = 0, 1, 1, 0
    y = x
    for _ in range(64):
        a = math.floor(y)
        p0, p1 = p1, a * p1 + p0
        q0, q1 = q1, a * q1 + q0
        if q1 > q_max:
            return None
        if abs(x - p1 / q1) <= tol:
            return p1, q1
        frac = y - a
        if frac <= 1e-14:
            return None
        y = 1.0 / frac
    return None


def _window_halfwidth(M, m: int, j_max: int, cfg: DecoupleConfig):
    """delta and the exclusion spacings for the index-selection windows.

    delta is half the least distance from alpha_m to any in-horizon multiple
    of an unrelated spacing; it is capped below half of alpha_m and below
    half of every spacing dividing alpha_m, so that neighbouring multiples
    of the related lattices stay outside the window.  The cap (the geometric
    bound independent of the separation minimum) is returned alongside.
    """
    alpha_m = M[m][0]
    cap = 0.5 * alpha_m
    exclusion = []
    for i, (beta, _) in enumerate(M):
        if i == m:
            continue
        if _integer_ratio(alpha_m, beta, cfg) is not None:
            cap = min(cap, 0.49 * beta)
            continue
        exclusion.append(beta)
    delta = cap
    for beta in exclusion:
        n_cap = int((j_max * alpha_m + 1.0) / beta) + 1
        n = np.arange(1, n_cap + 1)
        delta = min(delta, 0.5 * float(np.min(np.abs(alpha_m - n * beta))))
    return delta, cap, exclusion


def select_resonant_indices(M, m: int, Q_max: int, j_max: int,
                            config: DecoupleConfig | None = None,
                            with_delta: bool = False):
    """Indices j <= j_max whose window around j*alpha_m avoids every multiple
    of the spacings not dividing alpha_m.

    M is the grouped [(alpha, multiplicity)] list, m an index into it, and
    Q_max bounds the continued-fraction denominators used to classify
    spacing ratios as commensurable.  Raises HorizonError when no index
    survives, reporting the approximation quality the horizon would need.
    """
    cfg = config or DecoupleConfig()
    if Q_max:
        cfg = replace(cfg, rational_qmax=int(Q_max))
    alpha_m = M[m][0]
    delta, _cap, exclusion = _window_halfwidth(M, m, j_max, cfg)
    if delta <= 0:
        raise HorizonError("window width degenerated to zero; spacings collide",
                           {"alpha": alpha_m, "exclusion": exclusion})
    j = np.arange(1, j_max + 1)
    ok = np.ones(len(j), dtype=bool)
    for beta in exclusion:
        n_near = np.maximum(np.round(j * alpha_m / beta), 1.0)
        ok &= np.abs(j * alpha_m - n_near * beta) > delta
    E = j[ok]
    if len(E) == 0:
        raise HorizonError(
            f"no resonant indices below horizon {j_max} for spacing "
            f"{alpha_m:.6g}; a longer spectrum (simultaneous-approximation "
            f"denominators beyond {cfg.rational_qmax}) is needed",
            {"alpha": alpha_m, "delta": delta, "j_max": j_max})
    if with_delta:
        return E, delta
    return E


def near_resonances(M, config: DecoupleConfig | None = None,
                    horizon_tol: float = 1e-4):
    """Pairs of incomparable spacings whose ratio is within horizon_tol of a
    small-denominator rational: effectively rational at this data horizon."""
    cfg = config or DecoupleConfig()
    found = []
    for i in range(len(M)):
        for k in range(i + 1, len(M)):
            a, b = M[k][0], M[i][0]
            if _integer_ratio(a, b, cfg) is not None:
                continue
            approx = _rational_approx(a / b, cfg.rational_qmax, horizon_tol)
            if approx is not None:
                found.append({"pair": (i, k), "ratio": a / b,
                              "approx": f"{approx[0]}/{approx[1]}"})
    return found


# ---------------------------------------------------------------------------
# Steps 3 and 4: coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Track:
    """One (group of) component(s) followed through the residual stages."""

    prefix: tuple        # recovered s_1..s_T (own) or full known list (known)
    mult: int
    own: bool
    ratio: int = 1       # alpha_m = ratio * alpha_pred for known tracks
    unc: tuple = ()

    def eta(self, j, alpha: float):
        j = np.asarray(j, dtype=float)
        jj = self.ratio * j
        out = alpha * j
        for n, sn in enumerate(self.prefix):
            out = out + sn * jj ** (-(n + 1))
        return out


def _fit_center(js: np.ndarray, ys: np.ndarray):
    """Tail-weighted limit estimate: intercept of y ~ s + c1/j (+ c2/j^2)."""
    js = np.asarray(js, dtype=float)
    cols = [np.ones_like(js), 1.0 / js]
    if len(js) >= 60:
        cols.append(1.0 / js ** 2)
    A = np.vstack(cols).T
    w = js / js.max()  # emphasize the tail
    coef, *_ = np.linalg.lstsq(A * w[:, None], ys * w, rcond=None)
    resid = ys - A @ coef
    dof = max(1, len(js) - len(cols))
    stderr = float(np.sqrt(np.sum((w * resid) ** 2) / dof) / math.sqrt(len(js)))
    tail_term = float(abs(coef[-1]) / js.max() ** len(cols))
    return float(coef[0]), stderr + tail_term


def _refine_alpha_from_windows(windows: dict, alpha0: float) -> float:
    """Re-estimate the spacing from uncontaminated resonant windows.

    Window means follow alpha*j + c1/j + c2/j^2 regardless of multiplicities
    or riding known components, so a robust linear fit pins alpha far beyond
    the step-1 accuracy.  This matters because the stage-(T+1) residual
    scaling j^{T+1} amplifies any spacing error by j^{T+2}.
    """
    js = np.array(sorted(windows), dtype=float)
    ys = np.array([np.mean(windows[int(j)]) for j in js])
    if len(js) < 8:
        return alpha0
    A = np.vstack([js, 1.0 / js, 1.0 / js ** 2]).T
    keep = np.ones(len(js), dtype=bool)
    alpha = alpha0
    for _ in range(3):
        coef, *_ = np.linalg.lstsq(A[keep], ys[keep], rcond=None)
        alpha = float(coef[0])
        resid = ys - A @ coef
        scale = np.median(np.abs(resid[keep])) + 1e-15
        keep = np.abs(resid) <= 8.0 * scale
        if keep.sum() < 8:
            return alpha0
    return alpha


def _joint_refit(js: np.ndarray, xs: np.ndarray, alpha0: float, N: int,
                 nuisance: int = 2, weight_exp: float | None = None):
    """Final per-component fit x ~ alpha j + sum_{n<=N+nu} s_n j^{-n}.

    Fitting alpha jointly removes the spacing-error amplification entirely;
    nuisance orders beyond N absorb the truncation bias of the expansion.
    The nuisance depth is chosen by significance: the deepest column is kept
    only while its coefficient exceeds three standard errors, so exact-oracle
    data (real higher-order terms) gets the bias reduction while noisy data
    is spared the near-collinear variance blow-up.
    Returns (alpha, s_1..s_N, stderr_1..stderr_N).
    """
    js = np.asarray(js, dtype=float)
    # whitening against the expected perturbation envelope j^-(N+2)
    w = (js / js.max()) ** (N + 2 if weight_exp is None else weight_exp)

    def solve(n_cols):
        cols = [js] + [js ** (-(n + 1)) for n in range(n_cols)]
        A = np.vstack(cols).T * w[:, None]
        b = xs * w
        scale = np.sqrt(np.sum(A * A, axis=0))
        coef, *_ = np.linalg.lstsq(A / scale, b, rcond=None)
        coef = coef / scale
        resid = b - A @ coef
        dof = max(1, len(js) - len(cols))
        sigma2 = float(np.sum(resid ** 2) / dof)
        cov = sigma2 * np.linalg.inv((A / scale).T @ (A / scale))
        err = np.sqrt(np.maximum(np.diag(cov), 0.0)) / scale
        return coef, err

    nu = max(0, nuisance)
    while nu > 0:
        coef, err = solve(N + nu)
        last = N + nu
        if abs(coef[last]) > 3.0 * err[last]:
            break
        nu -= 1
    if nu == 0:
        coef, err = solve(N)
    alpha = float(coef[0]) if abs(coef[0] - alpha0) < 0.01 * alpha0 else alpha0
    s = tuple(float(v) for v in coef[1:N + 1])
    # the unmodeled remainder ~ c_last j^{-(N+nu+1)} aliases onto the
    # j^{-(n+1)} column at a scale suppressed by j_typ^{N+nu-n}
    j_typ = math.sqrt(js.min() * js.max())
    c_last = abs(float(coef[N + nu])) if nu > 0 else 0.0
    unc = tuple(float(err[1 + n]) + c_last * j_typ ** (-(N + nu - n))
                for n in range(N))
    return alpha, s, unc


def _assign_points(points, tracks, etas):
    """Greedy nearest-eta assignment with per-track capacity 2*mult."""
    order = sorted(((abs(x - etas[t_idx]), p_idx, t_idx)
                    for p_idx, x in enumerate(points)
                    for t_idx in range(len(tracks))),
                   key=lambda z: (z[0], z[1], z[2]))
    cap = [2 * t.mult for t in tracks]
    taken = [False] * len(points)
    out = [[] for _ in tracks]
    for dist, p_idx, t_idx in order:
        if taken[p_idx] or cap[t_idx] <= 0:
            continue
        taken[p_idx] = True
        cap[t_idx] -= 1
        out[t_idx].append(points[p_idx])
    return out


def _split_clusters(js: np.ndarray, ys: np.ndarray, total_mult: int,
                    n_indices: int, cfg: DecoupleConfig):
    """Partition stage residuals into s-value clusters with multiplicities.

    Values are detrended by a pooled 1/j fit so clusters shrink toward their
    limit separation, then split at gaps above half the largest gap.  A split
    stands only when every part's occupancy is an integer multiple of
    2*n_indices and the largest gap is significant against the median gap;
    a significant gap that cannot be reconciled with integer multiplicities
    is reported as ambiguous, with the scatter attached.

    Returns [(index array into js/ys, multiplicity), ...].
    """
    everything = np.arange(len(js))
    if total_mult == 1 or len(js) < 4:
        return [(everything, total_mult)]
    A = np.vstack([np.ones_like(js), 1.0 / js]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    z = ys - coef[1] / js
    order = np.argsort(z)
    zs = z[order]
    gaps = np.diff(zs)
    if len(gaps) == 0 or np.max(gaps) <= 0:
        return [(everything, total_mult)]
    g_max = float(np.max(gaps))
    pos = gaps[gaps > 0]
    med = float(np.median(pos)) if len(pos) else 0.0
    significant = med > 0 and g_max > cfg.split_significance * med
    if not significant:
        return [(everything, total_mult)]
    cut = np.nonzero(gaps > g_max / 2)[0]
    segments = np.split(order, cut + 1)
    mults = []
    for seg in segments:
        occ = len(seg) / (2.0 * n_indices)
        mround = round(occ)
        if mround < 1 or abs(occ - mround) > cfg.mult_int_tol:
            mults = None
            break
        mults.append(mround)
    if mults is None or sum(mults) != total_mult:
        raise AmbiguityError(
            "residual clusters do not reconcile with integer multiplicities",
            {"gap_max": g_max, "median_gap": med,
             "occupancies": [len(seg) / (2.0 * n_indices) for seg in segments],
             "scatter": zs.tolist()[:400]})
    return [(seg, mult) for seg, mult in zip(segments, mults)]


@dataclass(frozen=True)
class RecoveredComponent:
    """One boundary component recovered from the merged spectrum."""

    alpha: float
    s: tuple
    multiplicity: int
    uncertainty: tuple


def extract_coefficients(S: SpectrumSequence, M, E_map, N: int,
                         config: DecoupleConfig | None = None):
    """Recover per-component coefficient lists s_1..s_N with multiplicities.

    M is the grouped [(alpha, mult)] list in ascending order and E_map maps
    each group index to its resonant indices.  Groups are processed
    ascending, so components whose spacing divides the current one are
    already known; their full models ride along as capacity absorbers in
    each window, realizing the divisibility recursion.  Stage clustering
    discovers the structure (distinct coefficient values and their
    multiplicities); a final joint fit of (alpha, s_1..s_{N+1}) on each
    component's own window points supplies the reported values, immune to
    the j^{T+2} amplification of any step-1 spacing error.

    Returns {group index: [RecoveredComponent, ...]}.
    """
    cfg = config or DecoupleConfig()
    values = np.asarray(S.values, dtype=float)
    if len(values) == 0:
        raise InsufficientDataError("empty spectrum", {})
    results = {}
    for m, (alpha_g, mu) in enumerate(M):
        j_horizon = int(values[-1] / alpha_g) + 1
        delta_exact, cap, exclusion = _window_halfwidth(M, m, j_horizon, cfg)

        def usable(delta):
            j = np.arange(1, j_horizon + 1)
            ok = np.ones(len(j), dtype=bool)
            for beta in exclusion:
                n_near = np.maximum(np.round(j * alpha_g / beta), 1.0)
                ok &= np.abs(j * alpha_g - n_near * beta) > delta
            jh = int((values[-1] - 2 * delta) / alpha_g) - 1
            jl = max(4, int(math.ceil(cfg.fit_j_lo_factor * cfg.s1_scale / delta)),
                     int(0.1 * jh))
            E = j[ok]
            return E[(E >= jl) & (E <= jh)], jl, jh

        if m in E_map:
            # caller-specified indices: use the separation-minimum window
            delta = max(delta_exact, 1e-12)
            E = np.asarray(E_map[m])
            j_hi = int((values[-1] - 2 * delta) / alpha_g) - 1
            j_lo = max(4, int(math.ceil(cfg.fit_j_lo_factor * cfg.s1_scale / delta)),
                       int(0.1 * j_hi))
            E = E[(E >= j_lo) & (E <= j_hi)]
        else:
            # the separation minimum can be microscopic for near-resonant
            # spacings, which would push the usable index range past the
            # horizon; sweep window widths and keep the most productive one
            floor = max(delta_exact, cap / 512.0)
            candidates = [floor]
            delta = cap
            while delta > floor:
                candidates.append(delta)
                delta /= 2.0
            best = (None, -1, None)
            for delta in sorted(set(candidates), reverse=True):
                E_c, jl, jh = usable(delta)
                if len(E_c) > best[1]:
                    best = (delta, len(E_c), (E_c, jl, jh))
            if best[2] is None or best[1] == 0:
                raise HorizonError(
                    f"no resonant indices below horizon {j_horizon} for spacing "
                    f"{alpha_g:.6g}", {"alpha": alpha_g, "delta_range": (floor, cap)})
            delta, _, (E, j_lo, j_hi) = best
        if len(E) < cfg.min_resonant:
            raise HorizonError(
                f"only {len(E)} resonant indices in [{j_lo},{j_hi}] for spacing "
                f"{alpha_g:.6g}; need {cfg.min_resonant}",
                {"alpha": alpha_g, "E_size": int(len(E)), "window": (j_lo, j_hi)})

        windows = {}
        for j in E:
            lo = np.searchsorted(values, j * alpha_g - delta)
            hi = np.searchsorted(values, j * alpha_g + delta, side="right")
            windows[int(j)] = values[lo:hi]
        alpha_m = _refine_alpha_from_windows(windows, alpha_g)

        tracks = [_Track(prefix=(), mult=mu, own=True)]
        for k in range(m):
            r = _integer_ratio(alpha_m, M[k][0], cfg)
            if r is None:
                continue
            for comp in results[k]:
                tracks.append(_Track(prefix=comp.s, mult=comp.multiplicity,
                                     own=False, ratio=r))

        assignment = {}
        for T in range(N):
            collected = {t_idx: ([], []) for t_idx, t in enumerate(tracks) if t.own}
            for j, pts in windows.items():
                etas = [float(t.eta(j, alpha_m)) for t in tracks]
                groups = _assign_points(list(pts), tracks, etas)
                for t_idx, got in enumerate(groups):
                    if tracks[t_idx].own:
                        collected[t_idx][0].extend([j] * len(got))
                        collected[t_idx][1].extend(got)
            new_tracks = []
            new_assignment = {}
            for t_idx, t in enumerate(tracks):
                if not t.own:
                    new_tracks.append(t)
                    continue
                js, xs = collected[t_idx]
                if len(js) < cfg.min_resonant:
                    raise AmbiguityError(
                        f"component track got only {len(js)} window points at "
                        f"stage {T + 1}",
                        {"alpha": alpha_m, "stage": T + 1})
                js = np.asarray(js, dtype=float)
                xs = np.asarray(xs, dtype=float)
                ys = (xs - t.eta(js, alpha_m)) * js ** (T + 1)
                n_idx = len(windows)
                for idx, cmult in _split_clusters(js, ys, t.mult, n_idx, cfg):
                    center, _ = _fit_center(js[idx], ys[idx])
                    nt = _Track(prefix=t.prefix + (center,), mult=cmult, own=True)
                    new_assignment[len(new_tracks)] = (js[idx], xs[idx])
                    new_tracks.append(nt)
            tracks = new_tracks
            assignment = new_assignment

        comps = []
        for t_idx, t in enumerate(tracks):
            if not t.own:
                continue
            js, xs = assignment[t_idx]
            alpha_fit, s_fit, unc = _joint_refit(js, xs, alpha_m, N,
                                                 nuisance=cfg.fit_nuisance,
                                                 weight_exp=cfg.fit_weight_exp)
            comps.append(RecoveredComponent(alpha=alpha_fit, s=s_fit,
                                            multiplicity=t.mult,
                                            uncertainty=unc))
        total = sum(c.multiplicity for c in comps)
        if total != mu:
            raise AmbiguityError(
                f"recovered multiplicities sum to {total}, expected {mu}",
                {"alpha": alpha_m,
                 "components": [(c.s, c.multiplicity) for c in comps]})
        results[m] = comps
    return results


# ---------------------------------------------------------------------------
# Invariants and the report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecoupleReport:
    """Everything the merged spectrum determines, plus derived geometry."""

    M: tuple                     # ((alpha, multiplicity), ...)
    components: tuple            # ((alpha, s tuple, mult, uncertainty), ...)
    boundary_count: int
    perimeters: tuple
    lambda_estimate: float | None
    lambda_residual: float
    lambda_consistent: bool
    perimeters_only: bool
    geodesic_totals: tuple | None
    euler_invariant: float | None
    sphere_area: float | None
    flat_genus: float | None
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "M": [{"alpha": a, "multiplicity": m} for a, m in self.M],
            "components": [
                {"alpha": a, "s": list(s), "multiplicity": mult,
                 "uncertainty": list(unc)}
                for a, s, mult, unc in self.components],
            "boundary_count": self.boundary_count,
            "perimeters": list(self.perimeters),
            "lambda": self.lambda_estimate,
            "lambda_residual": self.lambda_residual,
            "lambda_consistent": self.lambda_consistent,
            "perimeters_only": self.perimeters_only,
            "geodesic_totals": None if self.geodesic_totals is None
            else list(self.geodesic_totals),
            "euler_invariant": self.euler_invariant,
            "sphere_area": self.sphere_area,
            "flat_genus": self.flat_genus,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, default=str)

    def summary(self) -> str:
        lines = [f"boundary components: {self.boundary_count}"]
        for i, per in enumerate(self.perimeters):
            lines.append(f"  perimeter[{i}] = {per:.6f}")
        if self.perimeters_only:
            lines.append("coupling is zero at this resolution: nothing beyond "
                         "perimeters can be recovered")
            return "\n".join(lines)
        lines.append(f"lambda = {self.lambda_estimate:.6f} "
                     f"(max component deviation {self.lambda_residual:.2e}, "
                     f"{'consistent' if self.lambda_consistent else 'INCONSISTENT'})")
        for i, g in enumerate(self.geodesic_totals):
            lines.append(f"  total geodesic curvature[{i}] = {g:.6f}")
        lines.append("4*pi*genus + total Gaussian curvature = "
                     f"{self.euler_invariant:.6f}")
        if self.sphere_area is not None:
            lines.append(f"spherical-domain area = {self.sphere_area:.6f}")
        if self.flat_genus is not None:
            lines.append(f"flat-domain genus = {self.flat_genus:.3f}")
        return "\n".join(lines)


def recover_invariants(M, coefficient_lists, tau_is_one: bool = True,
                       sphere_domain: bool = False, flat_domain: bool = False,
                       config: DecoupleConfig | None = None,
                       diagnostics: dict | None = None) -> DecoupleReport:
    """Assemble the geometric report from spacings and coefficient lists.

    The constant-potential identities s_1 = -lambda L / 2 and
    s_2 = (lambda L / 4 pi) int k_g give lambda per component (with a
    consistency residual) and the geodesic totals; Gauss-Bonnet then yields
    4 pi gamma + int K = 2 pi (2 - ell) - sum int k_g.  When every s_1
    vanishes at resolution, the coupling is zero and nothing beyond the
    perimeters is recovered: no lambda is fabricated.
    """
    cfg = config or DecoupleConfig()
    if not tau_is_one:
        raise ValueError("geometric identities require the constant potential")
    flat_comps = []
    for m in range(len(M)):
        for comp in coefficient_lists[m]:
            flat_comps.append((comp.alpha, tuple(comp.s), int(comp.multiplicity),
                               tuple(comp.uncertainty)))
    if not flat_comps:
        raise DecoupleError("no components recovered", {})
    ell = sum(c[2] for c in flat_comps)
    perims = tuple(2 * math.pi / c[0] for c in flat_comps)

    s1_abs = max(abs(c[1][0]) for c in flat_comps)
    s1_unc = max((c[3][0] for c in flat_comps if c[3]), default=0.0)
    if s1_abs <= max(cfg.lambda_zero_tol, 5.0 * s1_unc):
        return DecoupleReport(
            M=tuple(M), components=tuple(flat_comps), boundary_count=ell,
            perimeters=perims, lambda_estimate=None, lambda_residual=0.0,
            lambda_consistent=True, perimeters_only=True, geodesic_totals=None,
            euler_invariant=None, sphere_area=None, flat_genus=None,
            diagnostics=diagnostics or {})

    lams = [-2.0 * s[0] * alpha for alpha, s, _, _ in flat_comps]
    lam_hat = float(np.mean(lams))
    lam_res = float(max(abs(l - lam_hat) for l in lams))
    geos = tuple(4 * math.pi * s[1] * alpha / lam_hat if len(s) > 1 else math.nan
                 for alpha, s, _, _ in flat_comps)
    euler = 2 * math.pi * (2 - ell) - sum(
        g * c[2] for g, c in zip(geos, flat_comps))
    return DecoupleReport(
        M=tuple(M), components=tuple(flat_comps), boundary_count=ell,
        perimeters=perims, lambda_estimate=lam_hat, lambda_residual=lam_res,
        lambda_consistent=lam_res <= cfg.lambda_consistency_tol,
        perimeters_only=False, geodesic_totals=geos,
        euler_invariant=float(euler),
        sphere_area=float(euler) if sphere_domain else None,
        flat_genus=float(euler) / (4 * math.pi) if flat_domain else None,
        diagnostics=diagnostics or {})


def decouple_spectrum(S: SpectrumSequence, order: int = 2,
                      config: DecoupleConfig | None = None,
                      sphere_domain: bool = False,
                      flat_domain: bool = False) -> DecoupleReport:
    """Full pipeline: spacings, resonant indices, coefficients, invariants."""
    cfg = config or DecoupleConfig()
    alphas, diag = recover_lengths(S, cfg, with_diagnostics=True)
    M = group_spacings(alphas, cfg)
    # window widths are swept adaptively inside the extraction, so the
    # resonant index sets are chosen there rather than precomputed
    coeffs = extract_coefficients(S, M, {}, order, cfg)
    diag["near_resonances"] = near_resonances(M, cfg)
    return recover_invariants(M, coeffs, tau_is_one=True,
                              sphere_domain=sphere_domain,
                              flat_domain=flat_domain, config=cfg,
                              diagnostics=diag)
