import math
import warnings

import mpmath
import numpy as np
import pytest
from scipy.special import erf

from rydberg_eit.config import DopplerSettings, DopplerSpec, ScanSpec
from rydberg_eit.constants import MHZ
from rydberg_eit.fields import VaporConditions, field_from_rabi, rabi_frequency
from rydberg_eit.presets import builtin_preset
from rydberg_eit.scheme import SchemeError
from rydberg_eit.spectra import (AffineGenerator, UnphysicalGainWarning, doppler_average_rho21,
                                 doppler_spec, run_scan, susceptibility, transmission,
                                 truncated_gauss_cauchy, velocity_nodes)
from rydberg_eit.steady_state import solve_steady_state

VAPOR = VaporConditions()
DOP = doppler_spec(VAPOR)
ERF3 = 0.9999779095030014


def six(**rabi_mhz):
    s = builtin_preset("six_level_rb85")
    for drive_id, value in rabi_mhz.items():
        s = s.with_drive(drive_id, rabi=value * MHZ)
    return s


def plain(points, u=DOP.u):
    return DopplerSpec(u, 3.0, points, pole_subtraction=False)


# -- quadrature building blocks ---------------------------------------------------

def test_velocity_weights_sum_to_truncated_gaussian():
    v, w = velocity_nodes(DOP)
    assert len(v) == 301 and v[0] == pytest.approx(-3 * DOP.u)
    assert w.sum() == pytest.approx(ERF3, rel=1e-6)
    assert ERF3 == pytest.approx(erf(3.0), rel=1e-15)


def test_doppler_disabled():
    assert doppler_spec(VAPOR, DopplerSettings(enabled=False)) is None


@pytest.mark.parametrize("z", [0.3 + 1e-6j, -1.7 - 1e-3j, 2.95 + 0.02j, 0.1 + 0.5j,
                               4.0 + 1e-4j, 1.0 + 3.0j, -0.5 - 2.0j])
def test_truncated_gauss_cauchy_matches_mpmath(z):
    mpmath.mp.dps = 30
    zz = mpmath.mpc(z.real, z.imag)
    f = lambda t: mpmath.exp(-t * t) / (t - zz)        # noqa: E731
    pts = sorted({-3, 3, max(-3.0, min(3.0, z.real))})
    ref = complex(mpmath.quad(f, pts))
    got = complex(truncated_gauss_cauchy(np.array([z]), 3.0)[0])
    assert abs(got - ref) < 1e-12 * max(1.0, abs(ref))


# -- steady-state fast path -----------------------------------------------------------

def test_batched_solver_matches_least_squares():
    rng = np.random.default_rng(11)
    s = six(RF1=40, RF2=55).with_drive("RF2", detuning=70 * MHZ)
    model = AffineGenerator.from_scheme(s)
    dp = rng.uniform(-30, 30, 40) * MHZ
    dc = rng.uniform(-60, 60, 40) * MHZ
    rho, piv = model.solve_rho21(dp, dc)
    assert np.all(piv > 1e-13)
    ref = np.array([solve_steady_state(s, {"probe": a, "coupling": b}).rho21
                    for a, b in zip(dp, dc)])
    assert np.max(np.abs(rho - ref)) < 1e-10


def test_small_u_limit():
    s = six()
    direct = doppler_average_rho21(s)
    assert abs(doppler_average_rho21(s, dop=DopplerSpec(1e-3)) - direct) < 1e-6
    # off resonance the truncated weight leaves exactly a factor erf(3)
    det = {"coupling": 5 * MHZ}
    direct = doppler_average_rho21(s, det)
    tiny = doppler_average_rho21(s, det, DopplerSpec(1e-3))
    assert tiny == pytest.approx(ERF3 * direct, rel=1e-6)
    assert tiny != pytest.approx(direct, rel=1e-5)
    assert doppler_average_rho21(s, det, DopplerSpec(0.0)) == direct


def test_pole_subtraction_matches_dense_trapezoid():
    s = six(RF1=40)
    for det in ({"coupling": 0.0}, {"coupling": 13 * MHZ}, {"coupling": -20 * MHZ}):
        fast = doppler_average_rho21(s, det, DOP)
        ref = doppler_average_rho21(s, det, plain(60001))
        assert abs(fast - ref) < 1e-6 * abs(ref)


def test_doubling_points_at_defaults():
    s = six()
    for dc in (-15.0, -3.0, 0.0, 2.5, 20.0):
        a = doppler_average_rho21(s, {"coupling": dc * MHZ}, DOP)
        b = doppler_average_rho21(s, {"coupling": dc * MHZ},
                                  DopplerSpec(DOP.u, 3.0, 601))
        assert abs(a - b) < 1e-6 * abs(b)


# -- optics -----------------------------------------------------------------------------

def test_susceptibility_scaling():
    s = six()
    assert susceptibility(0.0, s, VAPOR) == 0.0
    chi = susceptibility(0.01 + 0.02j, s, VAPOR)
    assert susceptibility(0.03 + 0.06j, s, VAPOR) == pytest.approx(3 * chi, rel=1e-14)
    thin = VaporConditions(isotope_fraction=VAPOR.isotope_fraction / 2)
    assert susceptibility(0.01 + 0.02j, s, thin) == pytest.approx(chi / 2, rel=1e-14)
    # at a fixed probe field, doubling the dipole doubles the Rabi frequency and chi
    field = field_from_rabi(s.probe_dipole, s.drive("probe").rabi)
    d2 = s.with_coupling(1, 2, dipole=2 * s.probe_dipole)
    chi2 = susceptibility(0.01 + 0.02j, d2, VAPOR, rabi_frequency(2 * s.probe_dipole, field))
    assert chi2 == pytest.approx(2 * chi, rel=1e-14)


def test_susceptibility_needs_probe():
    with pytest.raises(SchemeError):
        susceptibility(0.1j, six(probe=0), VAPOR)


def test_absorption_has_positive_imaginary_part():
    s = six()
    rho = doppler_average_rho21(s, {"coupling": 30 * MHZ}, DOP)
    assert susceptibility(rho, s, VAPOR).imag > 0


def test_transmission_examples():
    lam = 780.24e-9
    assert transmission(0.0, VAPOR, lam) == 1.0
    im = lam / (2 * math.pi * VAPOR.cell_length)
    assert transmission(1j * im, VAPOR, lam) == pytest.approx(math.exp(-1), rel=1e-14)
    t = transmission(1j * np.linspace(0, 1e-5, 50), VAPOR, lam)
    assert np.all(np.diff(t) < 0)
    with pytest.warns(UnphysicalGainWarning):
        transmission(-1e-9j, VAPOR, lam)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        transmission(-1e-13j, VAPOR, lam)


# -- scans ----------------------------------------------------------------------------

def test_single_eit_peak_without_rf():
    scan = ScanSpec(-120 * MHZ, 40 * MHZ, 161)
    grid = run_scan(six(), scan, VAPOR, DOP)
    row = grid.values[0]
    assert grid.shape == (1, 161)
    assert np.all((row > 0) & (row <= 1))
    assert abs(grid.x_mhz[np.argmax(row)]) < 1e-9
    interior = (row[1:-1] > row[:-2]) & (row[1:-1] > row[2:])
    assert interior.sum() == 1


def test_rf1_autler_townes_pair():
    scan = ScanSpec(-40 * MHZ, 40 * MHZ, 161)
    grid = run_scan(six(RF1=40), scan, VAPOR, DOP)
    row, x = grid.values[0], grid.x_mhz
    left = x[np.argmax(np.where(x < 0, row, -1))]
    right = x[np.argmax(np.where(x > 0, row, -1))]
    assert left == pytest.approx(-20, rel=0.1)
    assert right == pytest.approx(20, rel=0.1)


def test_scan_deterministic_and_worker_invariant():
    s = six(RF1=40, RF2=55)
    scan = ScanSpec(-30 * MHZ, 30 * MHZ, 21, "rf_detuning_sweep", "RF2",
                    -200 * MHZ, 200 * MHZ, 6)
    dop = DopplerSpec(DOP.u, 3.0, 51)
    a = run_scan(s, scan, VAPOR, dop)
    b = run_scan(s, scan, VAPOR, dop)
    c = run_scan(s, scan, VAPOR, dop, workers=4)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.values, c.values)
    assert a.degenerate == 0
    assert a.y_label == "delta_rf2_mhz"


def test_power_sweep_sets_rabi_from_source():
    scan = ScanSpec(-30 * MHZ, 30 * MHZ, 11, "rf_power_sweep", "RF1", 1e-3, 2e-3, 2)
    grid = run_scan(six(), scan, VAPOR, None)
    rabi = six().drive_rabi_for_power("RF1", 1e-3)
    assert rabi / MHZ == pytest.approx(39.65219411992272, rel=1e-8)
    ref = run_scan(six().with_drive("RF1", rabi=rabi), ScanSpec(-30 * MHZ, 30 * MHZ, 11),
                   VAPOR, None)
    assert grid.y_label == "rf1_power_mw"
    assert np.allclose(grid.values[0], ref.values[0], rtol=1e-12, atol=0)


def test_unknown_scan_drive():
    scan = ScanSpec(-1.0, 1.0, 3, "rf_detuning_sweep", "RF9", -1.0, 1.0, 3)
    with pytest.raises(SchemeError, match="RF9"):
        run_scan(six(), scan, VAPOR, None)
