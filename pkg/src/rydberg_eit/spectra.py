"""
Doppler-averaged probe response and 2-D transmission scans.

Atoms moving with velocity v along the counter-propagating probe and
coupling beams see

    dp' = dp - (2 pi / lambda_p) v,      dc' = dc + (2 pi / lambda_c) v,

and rho21 is averaged with the weight exp(-v^2/u^2) / (sqrt(pi) u) over
[-span*u, span*u] by the composite trapezoid rule. The weight is not
renormalised, so with span = 3 the weights add up to erf(3).

Off-resonant velocity classes carry two-photon resonances only kHz wide,
far narrower than any affordable node spacing, and the plain trapezoid
rule converges slowly (about 2% error at 301 nodes). Because the
generator is affine in v, rho21(v) is a rational function whose poles are
the eigenvalues of a small matrix pencil. Poles close to the real axis are
subtracted from the integrand and integrated exactly; the trapezoid rule
then only sees a smooth remainder.

RF drives are not velocity shifted.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import __version__
from ._kernels import solve_affine_batch
from .config import DopplerSettings, DopplerSpec, ScanSpec
from .constants import A_0, E_CHARGE, EPSILON_0, HBAR, MHZ, RB85_MASS, TWO_PI
from .fields import VaporConditions, most_probable_speed, vapor_density
from .liouvillian import DetuningAssignment, build_liouvillian, detuning_gradient
from .scheme import LevelScheme, SchemeError
from .steady_state import real_generator

PIVOT_RTOL = 1e-13
"""Systems whose smallest LU pivot falls below this fraction of the matrix
scale are counted as degenerate."""


class UnphysicalGainWarning(RuntimeWarning):
    """Im[chi] came out negative, i.e. the medium would amplify the probe."""


# -- quadrature ------------------------------------------------------------------

def doppler_spec(vapor: VaporConditions, settings: DopplerSettings = DopplerSettings(),
                 mass: float = RB85_MASS) -> Optional[DopplerSpec]:
    """Velocity quadrature for a vapor, or None when Doppler averaging is off."""
    if not settings.enabled:
        return None
    return DopplerSpec(most_probable_speed(vapor.temperature, mass),
                       settings.span, settings.points, settings.pole_subtraction)


def velocity_nodes(dop: DopplerSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Trapezoid nodes (m/s) and weights, including the Maxwell factor."""
    v = np.linspace(-dop.span * dop.u, dop.span * dop.u, dop.points)
    if dop.u == 0:
        # delta-function limit of the weight
        w = np.zeros(dop.points)
        w[dop.points // 2] = 1.0
        return np.zeros(dop.points), w
    h = v[1] - v[0]
    w = np.full(dop.points, h)
    w[0] = w[-1] = h / 2
    w *= np.exp(-(v / dop.u) ** 2) / (math.sqrt(math.pi) * dop.u)
    return v, w


_GL_NODES, _GL_WEIGHTS = leggauss(160)


def truncated_gauss_cauchy(z, span: float):
    """``int_{-span}^{span} exp(-t^2) / (t - z) dt`` for complex ``z`` off the real axis.

    Near the real axis the pole is removed analytically,

        exp(-t^2)/(t-z) = (exp(-t^2) - exp(-z^2))/(t-z) + exp(-z^2)/(t-z),

    leaving an entire function for Gauss-Legendre and a logarithm. Farther
    away the integrand is smooth and is integrated directly.
    """
    z = np.asarray(z, dtype=complex)
    t = span * _GL_NODES
    wt = span * _GL_WEIGHTS
    zz = z[..., None]
    x = (zz - t) * (zz + t)
    safe = np.where(x == 0, 1.0, x)
    ratio = np.where(x == 0, 1.0, np.expm1(safe) / safe)
    ez = np.exp(-z ** 2)
    smooth = -(ez[..., None] * (zz + t) * ratio) @ wt
    near = smooth + ez * (np.log(span - z) - np.log(-span - z))
    with np.errstate(over="ignore", invalid="ignore"):
        far = (np.exp(-t ** 2) / (t - zz)) @ wt
    return np.where(np.abs(z.imag) < 1.0, near, far)


# -- affine detuning model -------------------------------------------------------

def _commutator_superop(diag: np.ndarray) -> np.ndarray:
    n = len(diag)
    d = np.diag(diag.astype(complex))
    eye = np.eye(n)
    return -1j * (np.kron(d, eye) - np.kron(eye, d))


@dataclass(frozen=True)
class AffineGenerator:
    """Real-basis generator as an affine function of the probe and coupling detunings.

    ``R(dp, dc) = r0 + dp * kp + dc * kc``; every other drive is frozen at the
    values of the scheme it was built from.
    """

    n: int
    ground: int
    r0: np.ndarray
    kp: np.ndarray
    kc: np.ndarray

    @classmethod
    def from_scheme(cls, scheme: LevelScheme) -> "AffineGenerator":
        if not scheme.has_drive("coupling"):
            raise SchemeError("scans need a drive named 'coupling'")
        n = scheme.n
        m0 = build_liouvillian(scheme, {"probe": 0.0, "coupling": 0.0}).matrix()
        kp = _commutator_superop(0.5 * detuning_gradient(scheme, "probe"))
        kc = _commutator_superop(0.5 * detuning_gradient(scheme, "coupling"))
        return cls(n, scheme.ground - 1, real_generator(m0, n),
                   real_generator(kp, n), real_generator(kc, n))

    def solve_rho21(self, dp: np.ndarray, dc: np.ndarray,
                    chunk: int = 512) -> Tuple[np.ndarray, np.ndarray]:
        """rho21 for each (dp[m], dc[m]) and the per-system pivot ratio."""
        dp = np.ascontiguousarray(dp, dtype=float)
        dc = np.ascontiguousarray(dc, dtype=float)
        n2 = self.n * self.n
        total = dp.shape[0]
        x = np.empty((n2, total))
        piv = np.empty(total)
        span = np.abs(dp).max(initial=0.0) * np.abs(self.kp).max() \
            + np.abs(dc).max(initial=0.0) * np.abs(self.kc).max()
        scale = float(np.abs(self.r0).max() + span) or 1.0
        trace_row = self.ground * self.n + self.ground
        for start in range(0, total, chunk):
            stop = min(start + chunk, total)
            out = np.empty((n2, stop - start))
            ratio = np.empty(stop - start)
            solve_affine_batch(self.r0, self.kp, self.kc, dp[start:stop], dc[start:stop],
                               trace_row, scale, out, ratio)
            x[:, start:stop] = out
            piv[start:stop] = ratio
        # basis of hermitian_basis: Re rho21 at r[1], Im rho21 at r[n]
        return x[1] + 1j * x[self.n], piv


    def pole_correction(self, dp0: float, dcs: np.ndarray, kp: float, kc: float,
                        dop: DopplerSpec, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Exact-minus-trapezoid contribution of the near-real poles, per dcs entry.

        With ``A = R(dp0, dc)`` and ``B = dR/dv`` (trace row held fixed),
        x(v) = V diag(1/(1 + v lam)) V^-1 A^-1 e where A^-1 B = V diag(lam) V^-1,
        so each eigenpair adds beta/(1 + v lam) to rho21(v).
        """
        n, g = self.n, self.ground * self.n + self.ground
        dcs = np.asarray(dcs, dtype=float)
        a = self.r0 + dp0 * self.kp + dcs[:, None, None] * self.kc
        b = -kp * self.kp + kc * self.kc
        a[:, g, :] = 0.0
        a[:, g, :: n + 1] = 1.0
        b = b.copy()
        b[g, :] = 0.0
        e = np.zeros((len(dcs), n * n, 1))
        e[:, g, 0] = 1.0
        lam, beta = _pencil_poles(a, b, e, n)
        h = (v[1] - v[0]) / dop.u
        with np.errstate(divide="ignore", invalid="ignore"):
            pole = -1.0 / (lam * dop.u)
        narrow = (lam != 0) & np.isfinite(pole) & (pole.imag != 0) \
            & (np.abs(pole.imag) < 4 * h) & (np.abs(pole.real) < dop.span + 1)
        out = np.zeros(len(dcs), dtype=complex)
        if not narrow.any():
            return out
        cell, k = np.nonzero(narrow)
        mu = lam[cell, k] * dop.u
        exact = truncated_gauss_cauchy(pole[cell, k], dop.span) / (math.sqrt(math.pi) * mu)
        trap = (w[None, :] / (1.0 + v[None, :] * lam[cell, k][:, None])).sum(axis=1)
        np.add.at(out, cell, beta[cell, k] * (exact - trap))
        return out


def _pencil_poles(a: np.ndarray, b: np.ndarray, e: np.ndarray,
                  n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of A^-1 B and the rho21 residue weight of each, per cell.

    Cells whose A (or eigenvector matrix) is singular get no poles; they are
    already counted as degenerate by the pivot check of the main solve.
    """
    def one(ak, ek):
        lam, vec = np.linalg.eig(np.linalg.solve(ak, np.broadcast_to(b, ak.shape)))
        y = np.linalg.solve(vec, np.linalg.solve(ak, ek))[..., 0]
        return lam, (vec[..., 1, :] + 1j * vec[..., n, :]) * y

    try:
        return one(a, e)
    except np.linalg.LinAlgError:
        pass
    lam = np.zeros((a.shape[0], a.shape[1]), dtype=complex)
    beta = np.zeros_like(lam)
    for k in range(a.shape[0]):
        try:
            lam[k], beta[k] = one(a[k], e[k])
        except np.linalg.LinAlgError:
            continue
    return lam, beta


def _wavenumbers(scheme: LevelScheme) -> Tuple[float, float]:
    return TWO_PI / scheme.probe_wavelength, TWO_PI / scheme.coupling_wavelength


def _apply_detunings(scheme: LevelScheme, det: Optional[DetuningAssignment]) -> LevelScheme:
    for drive_id, value in (det or {}).items():
        scheme = scheme.with_drive(drive_id, detuning=float(value))
    return scheme


def doppler_average_rho21(scheme: LevelScheme, det: Optional[DetuningAssignment] = None,
                          dop: Optional[DopplerSpec] = None) -> complex:
    """Velocity-averaged rho21 at one set of detunings (``dop=None``: no averaging)."""
    scheme = _apply_detunings(scheme, det)
    model = AffineGenerator.from_scheme(scheme)
    dp0 = scheme.drive("probe").detuning
    dc0 = scheme.drive("coupling").detuning
    if dop is None:
        rho, _ = model.solve_rho21(np.array([dp0]), np.array([dc0]))
        return complex(rho[0])
    kp, kc = _wavenumbers(scheme)
    v, w = velocity_nodes(dop)
    rho, _ = model.solve_rho21(dp0 - kp * v, dc0 + kc * v)
    total = np.dot(w, rho)
    if dop.pole_subtraction and dop.u > 0:
        total += model.pole_correction(dp0, np.array([dc0]), kp, kc, dop, v, w)[0]
    return complex(total)


# -- optics ------------------------------------------------------------------------

def susceptibility(rho21_d, scheme: LevelScheme, vapor: VaporConditions,
                   probe_rabi: Optional[float] = None):
    """Linear susceptibility seen by the probe.

    chi = (2 N0 / (eps0 hbar)) (d e a0)^2 / Omega_p * rho_eg, where rho_eg is
    the optical coherence in the sign convention of -d.E. The Hamiltonian
    here carries +Omega/2 off the diagonal, so rho_eg = -rho21 and an
    absorbing medium gets Im[chi] > 0.

    Accepts scalars or arrays for ``rho21_d``.
    """
    omega_p = scheme.drive("probe").rabi if probe_rabi is None else probe_rabi
    if not omega_p > 0:
        raise SchemeError("the susceptibility needs a probe with Omega_p > 0")
    dipole = scheme.probe_dipole * E_CHARGE * A_0
    prefactor = 2.0 * vapor_density(vapor) / (EPSILON_0 * HBAR) * dipole ** 2 / omega_p
    return -prefactor * np.asarray(rho21_d) if np.ndim(rho21_d) else \
        -prefactor * complex(rho21_d)


def transmission(chi, vapor: VaporConditions, probe_wavelength: float):
    """Beer's-law probe transmission P/P0 = exp(-2 pi L Im[chi] / lambda_p).

    A negative Im[chi] below -1e-12 triggers :class:`UnphysicalGainWarning`;
    the value is still returned.
    """
    im = np.imag(chi)
    if np.any(im < -1e-12):
        warnings.warn(f"Im[chi] = {np.min(im):.3e} < 0: the model predicts gain",
                      UnphysicalGainWarning, stacklevel=2)
    out = np.exp(-TWO_PI * vapor.cell_length * im / probe_wavelength)
    return float(out) if np.ndim(out) == 0 else out


# -- scans ---------------------------------------------------------------------------

@dataclass
class SpectrumGrid:
    """Transmission over (coupling detuning, scan parameter).

    ``values[i, j]`` belongs to ``y_values[i]`` and ``x_values[j]``; x is in
    rad/s, y in the natural unit of the scan (W or rad/s) with
    ``y_display`` holding the same axis in the unit named by ``y_label``.
    """

    x_values: np.ndarray
    y_values: np.ndarray
    y_label: str
    values: np.ndarray
    y_display: np.ndarray = None
    rho21: Optional[np.ndarray] = None
    degenerate: int = 0
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (len(self.y_values), len(self.x_values)):
            raise ValueError(f"grid shape {self.values.shape} does not match axes "
                             f"({len(self.y_values)}, {len(self.x_values)})")
        if self.y_display is None:
            self.y_display = np.asarray(self.y_values, dtype=float)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def x_mhz(self) -> np.ndarray:
        return self.x_values / MHZ


def row_scheme(scheme: LevelScheme, scan: ScanSpec, y: float) -> LevelScheme:
    """The scheme with the swept drive set to the scan value ``y``."""
    if scan.y_kind == "probe_transmission_only":
        return scheme
    drive = scheme.drive(scan.y_drive)
    if scan.y_kind == "rf_detuning_sweep":
        return scheme.with_drive(drive.id, detuning=float(y))
    rabi = scheme.drive_rabi_for_power(drive.id, float(y))
    return scheme.with_drive(drive.id, rabi=rabi, source=replace(drive.source, power=float(y)))


def _scan_metadata(scheme: LevelScheme, scan: ScanSpec, vapor: VaporConditions,
                   dop: Optional[DopplerSpec]) -> Dict:
    drives = {d.id: {"rabi_mhz": d.rabi / MHZ, "detuning_mhz": d.detuning / MHZ,
                     "targets": [f"{a}-{b}*{t.scale:g}" for t, (a, b) in
                                 zip(d.targets, d.pairs)]}
              for d in scheme.drives}
    return {
        "scheme": scheme.name,
        "levels": scheme.n,
        "drives": drives,
        "scan": {"y_kind": scan.y_kind, "y_drive": scan.y_drive, "y_label": scan.y_label,
                 "x_points": scan.x_points, "y_points": scan.y_points,
                 "y_scale": scan.y_scale},
        "vapor": {"temperature_k": vapor.temperature, "cell_length_m": vapor.cell_length,
                  "isotope_fraction": vapor.isotope_fraction},
        "doppler": None if dop is None else {"u_m_s": dop.u, "span": dop.span,
                                             "points": dop.points,
                                             "pole_subtraction": dop.pole_subtraction},
        "version": __version__,
    }


def _scan_row(scheme: LevelScheme, xs: np.ndarray,
              dop: Optional[DopplerSpec]) -> Tuple[np.ndarray, int]:
    model = AffineGenerator.from_scheme(scheme)
    dp0 = scheme.drive("probe").detuning
    if dop is None:
        rho, piv = model.solve_rho21(np.full(len(xs), dp0), xs)
        return rho, int(np.count_nonzero(~(piv >= PIVOT_RTOL)))
    kp, kc = _wavenumbers(scheme)
    v, w = velocity_nodes(dop)
    dp = np.broadcast_to(dp0 - kp * v, (len(xs), len(v))).reshape(-1)
    dc = (xs[:, None] + kc * v[None, :]).reshape(-1)
    rho, piv = model.solve_rho21(dp, dc, chunk=len(v))
    rho = rho.reshape(len(xs), len(v)) @ w
    if dop.pole_subtraction and dop.u > 0:
        rho = rho + model.pole_correction(dp0, xs, kp, kc, dop, v, w)
    bad = ~(piv.reshape(len(xs), len(v)) >= PIVOT_RTOL)
    return rho, int(np.count_nonzero(bad.any(axis=1)))


def run_scan(scheme: LevelScheme, scan: ScanSpec, vapor: VaporConditions = VaporConditions(),
             dop: Optional[DopplerSpec] = None, workers: int = 1) -> SpectrumGrid:
    """Probe transmission over the scan grid.

    Rows (one per y value) are independent; with ``workers > 1`` they run on
    a thread pool and each result lands in its own pre-assigned slot, so the
    grid is bit-identical for any worker count. ``degenerate`` counts grid
    cells where some velocity class gave a numerically singular system.
    """
    if scan.y_kind != "probe_transmission_only":
        scheme.drive(scan.y_drive)
    xs = scan.x_values()
    ys = scan.y_values()
    rows = [row_scheme(scheme, scan, y) for y in ys]
    rho = np.empty((len(ys), len(xs)), dtype=complex)
    bad = np.zeros(len(ys), dtype=int)

    def work(i: int) -> None:
        rho[i], bad[i] = _scan_row(rows[i], xs, dop)

    if workers <= 1:
        for i in range(len(ys)):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(len(ys))))
    chi = np.stack([susceptibility(rho[i], rows[i], vapor) for i in range(len(ys))])
    values = transmission(chi, vapor, scheme.probe_wavelength)
    return SpectrumGrid(xs, ys, scan.y_label, values, y_display=scan.y_display(ys),
                        rho21=rho, degenerate=int(bad.sum()),
                        metadata=_scan_metadata(scheme, scan, vapor, dop))
