import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydberg_eit.analysis import (AnalysisError, NoCrossingError, PeakTrace, bell_features,
                                  calibrate_cell_factor, extract_peak_trace,
                                  fit_peak_location, fit_slope, infer_rf2_field,
                                  peak_separation, row_peak)
from rydberg_eit.constants import MHZ

# Independent evaluations of the two empirical fits
APEX_40_138 = 6.1124     # MHz
SLOPE_40_138 = 0.077504  # A = 1


def gaussian_grid(centres, x, width=3.0):
    return np.array([np.exp(-((x - c) / width) ** 2) for c in centres])


def test_gaussian_peak_recovered():
    x = np.linspace(-40, 40, 161)
    step = x[1] - x[0]
    centres = np.array([-7.13, 0.0, 3.3, 12.77])
    trace = extract_peak_trace(x, np.arange(4.0), gaussian_grid(centres, x), (-30, 30))
    assert np.all(np.abs(trace.dc_peak - centres) < 0.05 * step)
    assert trace.method == "quadratic_interp"


def test_tie_goes_to_lower_detuning():
    x = np.linspace(-10, 10, 201)
    y = np.exp(-((x - 4) / 1.0) ** 2) + np.exp(-((x + 4) / 1.0) ** 2)
    peak, _ = row_peak(x, y, (-10, 10))
    assert peak == pytest.approx(-4.0, abs=1e-6)


def test_amplitude_scaling_invariance():
    x = np.linspace(-40, 40, 161)
    values = gaussian_grid([-3.1, 2.2, 8.9], x) + 0.1
    a = extract_peak_trace(x, np.arange(3.0), values, (-30, 30))
    b = extract_peak_trace(x, np.arange(3.0), 7.5 * values, (-30, 30))
    assert np.allclose(a.dc_peak, b.dc_peak, rtol=1e-12, atol=0)


def test_weak_rows_dropped_and_errors():
    x = np.linspace(-10, 10, 81)
    values = np.vstack([gaussian_grid([1.0], x), np.ones((1, 81))])
    trace = extract_peak_trace(x, np.array([0.0, 1.0]), values, (-10, 10))
    assert trace.scan_param.tolist() == [0.0]
    with pytest.raises(AnalysisError, match="no grid points"):
        extract_peak_trace(x, np.array([0.0, 1.0]), values, (20, 30))
    with pytest.raises(AnalysisError, match="prominence"):
        extract_peak_trace(x, np.array([0.0]), np.ones((1, 81)), (-10, 10))


def test_peak_near_window_edge_kept():
    x = np.linspace(-12, 12, 121)
    y = np.exp(-((x - 9.75) / 3) ** 2) + np.exp(-((x + 11) / 3) ** 2)
    peak, _ = row_peak(x, y, (-7.5, 10.2))
    assert peak == pytest.approx(9.75, abs=0.05)


def test_trace_sorted_and_validated():
    x = np.linspace(-10, 10, 81)
    trace = extract_peak_trace(x, np.array([2.0, -1.0]), gaussian_grid([3.0, -2.0], x),
                               (-10, 10))
    assert trace.scan_param.tolist() == [-1.0, 2.0]
    assert trace.dc_peak == pytest.approx([-2.0, 3.0], abs=1e-2)
    with pytest.raises(AnalysisError):
        PeakTrace(np.array([1.0, 0.0]), np.zeros(2), np.zeros(2))


def test_parabola_bell_features():
    k, z = 15.0 * MHZ, 162.45 * MHZ
    s = np.linspace(-300, 300, 121) * MHZ
    d = k * (1 - (s / z) ** 2)
    f = bell_features(PeakTrace(s, d, np.ones_like(s)))
    assert f.apex == pytest.approx(k, rel=1e-6)
    assert f.crossings[0] == pytest.approx(-z, rel=1e-6)
    assert f.crossings[1] == pytest.approx(z, rel=1e-6)
    assert f.slopes[0] == pytest.approx(2 * k / z, rel=1e-6)
    assert f.slopes[1] == pytest.approx(-2 * k / z, rel=1e-6)
    assert f.separation == pytest.approx(2 * z, rel=1e-6)


def test_no_crossing_reports_span():
    s = np.linspace(-100, 100, 11) * MHZ
    with pytest.raises(NoCrossingError, match="trace spans"):
        bell_features(PeakTrace(s, np.full(11, 5 * MHZ), np.ones(11)))


def test_fit_formulas():
    w1 = 40 * MHZ
    assert fit_peak_location(w1, 0.0) == w1 / 2
    assert fit_peak_location(w1, 138 * MHZ) / MHZ == pytest.approx(APEX_40_138, rel=1e-4)
    values = [fit_peak_location(w1, w * MHZ) for w in np.linspace(0, 200, 41)]
    assert np.all(np.diff(values) < 0)
    assert fit_slope(w1, 0.0, 0.8) == 0.8
    assert fit_slope(w1, w1, 0.7) == pytest.approx(0.35)
    assert fit_slope(w1, 138 * MHZ, 1.0) == pytest.approx(SLOPE_40_138, rel=1e-4)
    with pytest.raises(AnalysisError):
        fit_peak_location(0.0, 1.0)
    with pytest.raises(AnalysisError):
        fit_slope(0.0, 0.0, 1.0)


def test_inversion_examples():
    w1 = 40 * MHZ
    assert infer_rf2_field(w1, apex=w1 / 2) == 0.0
    assert infer_rf2_field(w1, slope=0.4, a=0.8) == pytest.approx(w1, rel=1e-12)
    assert infer_rf2_field(w1, apex=6.1 * MHZ) / MHZ == pytest.approx(138, rel=0.01)
    with pytest.raises(AnalysisError, match=r"\(0, "):
        infer_rf2_field(w1, apex=25 * MHZ)
    with pytest.raises(AnalysisError, match=r"\(0, 0.7"):
        infer_rf2_field(w1, slope=0.9, a=0.7)
    with pytest.raises(AnalysisError):
        infer_rf2_field(w1, apex=1.0, slope=0.5, a=1.0)


@settings(max_examples=200)
@given(w2=st.floats(5.0, 200.0), w1=st.floats(10.0, 70.0), a=st.sampled_from([1.0, 0.8, 0.7]))
def test_round_trip(w2, w1, a):
    w1, w2 = w1 * MHZ, w2 * MHZ
    assert infer_rf2_field(w1, apex=fit_peak_location(w1, w2)) == pytest.approx(w2, rel=1e-9)
    assert infer_rf2_field(w1, slope=fit_slope(w1, w2, a), a=a) == pytest.approx(w2, rel=1e-9)


def test_peak_separation():
    x = np.linspace(-40, 40, 401)
    y = np.exp(-((x - 19.7) / 2) ** 2) + np.exp(-((x + 20.3) / 2) ** 2)
    assert peak_separation(x, y) == pytest.approx(40.0, abs=0.01)
    with pytest.raises(AnalysisError):
        peak_separation(x, np.exp(-x ** 2))


def test_calibration_fit():
    unit = lambda p: 80.0 * MHZ * np.sqrt(p / 1e-3)          # noqa: E731
    powers = np.array([0.5e-3, 1e-3, 2e-3, 4e-3])
    f, resid = calibrate_cell_factor(powers, 0.37 * unit(powers), unit)
    assert f == pytest.approx(0.37, rel=1e-12)
    assert resid < 1e-6
    with pytest.raises(AnalysisError):
        calibrate_cell_factor([], [], unit)
    with pytest.raises(AnalysisError):
        calibrate_cell_factor([1e-3], [-5.0], unit)
