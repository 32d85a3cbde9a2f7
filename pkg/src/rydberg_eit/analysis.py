"""
Peak traces, bell-curve features and the empirical RF2 field fits.

When RF2 is swept between the two Rydberg resonances the central EIT peak
bends into a bell: its position is Omega_RF1/2-ish at zero RF2 detuning and
crosses Delta_c = 0 near the resonances. The apex and the slope at the
crossings follow

    apex  = (Omega_RF1 / 2) / (1 + 1.55 Omega_RF2^2 / (Omega_RF1 * 2 pi 324.8 MHz))
    slope = A Omega_RF1^2 / (Omega_RF1^2 + Omega_RF2^2)

which can be inverted for Omega_RF2. All rates are in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks, peak_prominences

from .constants import TWO_PI

SPLIT_REFERENCE = TWO_PI * 324.8e6     # rad/s
APEX_COEFFICIENT = 1.55
TABULATED_SLOPE_A = (1.0, 0.8, 0.7)
PROMINENCE_FRACTION = 0.05


class AnalysisError(ValueError):
    """Input cannot be analysed as requested."""


class NoCrossingError(AnalysisError):
    """A peak trace never changes sign."""


@dataclass(frozen=True)
class PeakTrace:
    """Refined peak position per scan row, sorted by scan parameter."""

    scan_param: np.ndarray
    dc_peak: np.ndarray
    height: np.ndarray
    method: str = "quadratic_interp"

    def __post_init__(self):
        if not (len(self.scan_param) == len(self.dc_peak) == len(self.height)):
            raise AnalysisError("trace arrays differ in length")
        if np.any(np.diff(self.scan_param) <= 0):
            raise AnalysisError("scan parameter must be strictly increasing")

    def __len__(self) -> int:
        return len(self.scan_param)

    @property
    def points(self):
        return list(zip(self.scan_param.tolist(), self.dc_peak.tolist(), self.height.tolist()))


@dataclass(frozen=True)
class BellFeatures:
    apex: float                                 # rad/s, peak position at zero RF2 detuning
    crossings: Tuple[float, float]              # rad/s
    slopes: Tuple[float, float]                 # d dc_peak / d scan at each crossing

    @property
    def slope(self) -> float:
        """Mean magnitude of the two crossing slopes (the quantity of the slope fit)."""
        return 0.5 * (abs(self.slopes[0]) + abs(self.slopes[1]))

    @property
    def separation(self) -> float:
        return self.crossings[1] - self.crossings[0]


# -- peak finding ------------------------------------------------------------------

def refine_peak(x: np.ndarray, y: np.ndarray, i: int) -> Tuple[float, float]:
    """Vertex of the parabola through samples i-1, i, i+1 of a uniform grid."""
    if i <= 0 or i >= len(y) - 1:
        return float(x[i]), float(y[i])
    ym, y0, yp = y[i - 1], y[i], y[i + 1]
    curv = ym - 2.0 * y0 + yp
    if curv >= 0:
        return float(x[i]), float(y0)
    delta = 0.5 * (ym - yp) / curv
    return float(x[i] + delta * (x[i + 1] - x[i])), float(y0 - 0.25 * (ym - yp) * delta)


def row_peak(x: np.ndarray, y: np.ndarray, window: Tuple[float, float],
             prominence: float = PROMINENCE_FRACTION) -> Optional[Tuple[float, float]]:
    """Highest local maximum of ``y`` with ``x`` inside ``window``.

    Returns the refined ``(x_peak, height)`` or None when the best candidate
    is less prominent than ``prominence`` times the row's max-min range.
    Equal maxima resolve to the one at lower x. ``x`` must be increasing.
    """
    lo, hi = window
    inside = np.nonzero((x >= lo) & (x <= hi))[0]
    if inside.size < 3:
        return None
    first, last = inside[0], inside[-1]
    seg = y[first:last + 1]
    peaks, _ = find_peaks(seg, plateau_size=1)
    if peaks.size == 0:
        return None
    best = peaks[np.argmax(seg[peaks])]          # argmax keeps the first (lowest x) tie
    # prominence against the whole row, so a peak near the window edge is not
    # judged on a truncated flank
    prom = peak_prominences(y, [first + best])[0][0]
    span = float(np.max(y) - np.min(y))
    if span == 0.0 or prom < prominence * span:
        return None
    return refine_peak(x, y, first + best)


def extract_peak_trace(x: np.ndarray, y_values: np.ndarray, values: np.ndarray,
                       window: Tuple[float, float],
                       prominence: float = PROMINENCE_FRACTION) -> PeakTrace:
    """Main EIT peak position for every row of a transmission grid.

    ``values[i, j]`` is the transmission at ``y_values[i]``, ``x[j]``. Rows
    whose best peak is not prominent enough are left out.
    """
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = sorted(window)
    if not np.any((x >= lo) & (x <= hi)):
        raise AnalysisError(f"window [{lo:g}, {hi:g}] contains no grid points "
                            f"(grid spans [{x.min():g}, {x.max():g}])")
    order_x = np.argsort(x, kind="stable")
    x = x[order_x]
    values = values[:, order_x]
    order_y = np.argsort(y_values, kind="stable")
    params, pos, height = [], [], []
    for i in order_y:
        found = row_peak(x, values[i], (lo, hi), prominence)
        if found is not None:
            params.append(float(y_values[i]))
            pos.append(found[0])
            height.append(found[1])
    if not params:
        raise AnalysisError("no row has a peak above the prominence threshold")
    return PeakTrace(np.array(params), np.array(pos), np.array(height))


def trace_from_grid(grid, window: Tuple[float, float],
                    prominence: float = PROMINENCE_FRACTION) -> PeakTrace:
    """:func:`extract_peak_trace` on a :class:`~rydberg_eit.spectra.SpectrumGrid`."""
    return extract_peak_trace(grid.x_values, grid.y_values, grid.values, window, prominence)


def peak_separation(x: np.ndarray, y: np.ndarray) -> float:
    """Distance between the two highest local maxima of a spectrum."""
    peaks, _ = find_peaks(y)
    if peaks.size < 2:
        raise AnalysisError(f"expected two peaks, found {peaks.size}")
    top = peaks[np.argsort(y[peaks])[-2:]]
    a, b = sorted(refine_peak(x, y, i)[0] for i in top)
    return b - a


# -- bell features -----------------------------------------------------------------------

def _local_quadratic(xs: np.ndarray, ys: np.ndarray, at: float, npts: int):
    idx = np.argsort(np.abs(xs - at), kind="stable")[:npts]
    coef = np.polyfit(xs[idx] - at, ys[idx], 2)
    return coef                                    # value = coef[2], slope = coef[1]


def bell_features(trace: PeakTrace) -> BellFeatures:
    """Apex, zero crossings and crossing slopes of a bell-shaped trace.

    The apex is the local quadratic through the three samples nearest zero
    scan parameter, evaluated at zero. Crossings are bracketed by linearly
    interpolated sign changes of the peak position, taking the one closest
    to the apex on each side, then refined to the root of a least-squares
    quadratic through the 5 samples nearest the bracket. Slopes are
    derivatives of that quadratic at the crossing.
    """
    s, d = trace.scan_param, trace.dc_peak
    span = f"trace spans scan parameter [{s.min():.6g}, {s.max():.6g}] rad/s"
    if len(trace) < 5:
        raise NoCrossingError(f"need at least 5 trace points; {span}")
    apex = float(_local_quadratic(s, d, 0.0, 3)[2])
    sign = np.sign(d)
    change = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    exact = np.nonzero(sign == 0)[0]
    roots = [float(s[k] - d[k] * (s[k + 1] - s[k]) / (d[k + 1] - d[k])) for k in change]
    roots += [float(s[k]) for k in exact]
    lower = [r for r in roots if r < 0]
    upper = [r for r in roots if r > 0]
    if not lower or not upper:
        raise NoCrossingError(f"peak position does not cross zero on both sides; {span}")
    crossings, slopes = [], []
    for guess in (max(lower), min(upper)):
        root, slope = _refine_root(s, d, guess)
        crossings.append(root)
        slopes.append(slope)
    return BellFeatures(apex, tuple(crossings), tuple(slopes))


def _refine_root(s: np.ndarray, d: np.ndarray, guess: float) -> Tuple[float, float]:
    """Root of the local 5-point quadratic nearest ``guess`` and the slope there."""
    c2, c1, c0 = _local_quadratic(s, d, guess, 5)
    root = guess
    if c2 != 0:
        disc = c1 * c1 - 4 * c2 * c0
        if disc >= 0:
            # stable form of the root closest to the expansion point
            q = -0.5 * (c1 + math.copysign(math.sqrt(disc), c1))
            cand = [q / c2] + ([c0 / q] if q != 0 else [])
            root = guess + min(cand, key=abs)
    elif c1 != 0:
        root = guess - c0 / c1
    if abs(root - guess) > np.max(np.abs(np.diff(s))):
        root = guess                      # quadratic disagrees with the bracket
    c2, c1, _ = _local_quadratic(s, d, root, 5)
    return float(root), float(c1)


# -- empirical fits ------------------------------------------------------------------------

def fit_peak_location(omega_rf1: float, omega_rf2: float) -> float:
    """Empirical apex of the bell (rad/s)."""
    if not omega_rf1 > 0:
        raise AnalysisError("Omega_RF1 must be > 0")
    return 0.5 * omega_rf1 / (1.0 + APEX_COEFFICIENT * omega_rf2 ** 2
                              / (omega_rf1 * SPLIT_REFERENCE))


def fit_slope(omega_rf1: float, omega_rf2: float, a: float) -> float:
    """Empirical crossing slope (dimensionless)."""
    denom = omega_rf1 ** 2 + omega_rf2 ** 2
    if denom == 0:
        raise AnalysisError("Omega_RF1 and Omega_RF2 cannot both be zero")
    return a * omega_rf1 ** 2 / denom


def infer_rf2_field(omega_rf1: float, apex: Optional[float] = None,
                    slope: Optional[float] = None, a: Optional[float] = None) -> float:
    """Omega_RF2 >= 0 (rad/s) from a measured apex or slope.

    Give exactly one of ``apex`` (needs 0 < apex <= Omega_RF1/2) or ``slope``
    (needs ``a`` and 0 < slope <= a).
    """
    if not omega_rf1 > 0:
        raise AnalysisError("Omega_RF1 must be > 0")
    if (apex is None) == (slope is None):
        raise AnalysisError("give exactly one of apex or slope")
    if apex is not None:
        top = 0.5 * omega_rf1
        if not 0 < apex <= top:
            raise AnalysisError(f"apex {apex:.6g} rad/s outside the invertible range "
                                f"(0, {top:.6g}]")
        ratio = top / apex - 1.0
        return math.sqrt(max(ratio, 0.0) * omega_rf1 * SPLIT_REFERENCE / APEX_COEFFICIENT)
    if a is None or not a > 0:
        raise AnalysisError("slope inversion needs A > 0")
    if not 0 < slope <= a:
        raise AnalysisError(f"slope {slope:.6g} outside the invertible range (0, {a:.6g}]")
    return omega_rf1 * math.sqrt(max(a / slope - 1.0, 0.0))


def calibrate_cell_factor(powers_w: Sequence[float], splittings: Sequence[float],
                          rabi_per_unit_factor) -> Tuple[float, float]:
    """Least-squares cell factor F from Autler-Townes splittings.

    ``rabi_per_unit_factor(P)`` is the Rabi frequency (rad/s) the source
    would produce at power P with F = 1; the model is linear in F. Returns
    ``(F, rms residual in rad/s)``.
    """
    p = np.asarray(powers_w, dtype=float)
    s = np.asarray(splittings, dtype=float)
    if p.size == 0 or p.size != s.size:
        raise AnalysisError("need at least one (power, splitting) pair of equal length")
    k = np.array([rabi_per_unit_factor(x) for x in p])
    denom = float(k @ k)
    if denom == 0:
        raise AnalysisError("all powers are zero; F is undetermined")
    factor = float(k @ s) / denom
    if not factor > 0:
        raise AnalysisError(f"fit gives non-positive cell factor {factor:.4g}")
    resid = float(np.sqrt(np.mean((s - factor * k) ** 2)))
    return factor, resid
