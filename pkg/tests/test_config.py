import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydberg_eit.config import (DopplerSettings, ParseError, ScanSpec, parse_config,
                                parse_scheme, serialize_config, serialize_scheme)
from rydberg_eit.constants import MHZ
from rydberg_eit.liouvillian import cumulative_detunings
from rydberg_eit.presets import EIGHT_LEVEL, PRESET_NAMES, SIX_LEVEL, builtin_preset
from rydberg_eit.scheme import SchemeError, StructureError, validate_scheme

KHZ = 2 * math.pi * 1e3


def _targets(scheme, drive_id):
    return [(t.pair, t.scale) for t in scheme.drive(drive_id).targets]


def test_six_level_topology():
    s = parse_scheme(SIX_LEVEL)
    assert (s.n, len(s.couplings), len(s.drives)) == (6, 5, 4)
    assert s.drive("RF2").pairs == ((4, 5), (4, 6))
    assert s.coupling(4, 5).direction == "down"
    assert s.coupling(4, 6).direction == "up"


def test_eight_level_scales():
    s = parse_scheme(EIGHT_LEVEL)
    assert s.n == 8
    assert _targets(s, "coupling") == [((2, 3), 1.0), ((2, 7), 0.82)]
    assert _targets(s, "RF1") == [((3, 4), 1.0), ((7, 8), 0.82)]


def test_preset_numbers():
    s = builtin_preset("six_level_rb85")
    rates = [lv.decay_rate for lv in s.levels]
    assert rates == pytest.approx([0.0, 6 * MHZ, 3 * KHZ, 2 * KHZ, 2 * KHZ, 2 * KHZ])
    assert s.coupling(4, 5).transition_freq == 28.92e9
    assert s.coupling(4, 6).transition_freq - s.coupling(4, 5).transition_freq == \
        pytest.approx(324.8e6, abs=1e-3)
    assert [c.dipole for c in s.couplings] == [1.93, 0.0099, 1430.4, 1282.4, 1250.77]
    e = builtin_preset("eight_level_rb85")
    assert e.level(7).decay_rate == e.level(3).decay_rate
    assert e.level(8).decay_rate == e.level(4).decay_rate


def test_four_level_truncation():
    s = builtin_preset("four_level_rb85")
    assert s.n == 4
    assert not s.has_drive("RF2")
    assert [d.id for d in s.drives] == ["probe", "coupling", "RF1"]


def test_unknown_preset():
    with pytest.raises(KeyError):
        builtin_preset("nine_level")


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_validate_and_round_trip(name):
    s = builtin_preset(name)
    validate_scheme(s)
    text = serialize_scheme(s)
    again = parse_scheme(text)
    assert again == s
    assert serialize_scheme(again) == text


def test_config_round_trip_with_scan():
    text = SIX_LEVEL + """
[scan]
x = coupling_detuning from=-60MHz to=60MHz points=201
y = rf_power_sweep drive=RF2 from=-20dBm to=10dBm points=31 scale=log-dBm

[vapor]
temperature=310K cell_length=7.5cm

[doppler]
span=3 points=401 poles=off
"""
    cfg = parse_config(text)
    assert cfg.scan.y_scale == "log-dBm"
    assert cfg.scan.y_values()[-1] == pytest.approx(10e-3)
    assert cfg.vapor.temperature == 310.0
    assert cfg.doppler == DopplerSettings(True, 3.0, 401, False)
    again = parse_config(serialize_config(cfg))
    assert again == cfg


def test_empty_text_reports_missing_levels():
    with pytest.raises(ParseError, match="missing levels"):
        parse_scheme("")


def test_missing_probe_drive():
    text = SIX_LEVEL.replace("probe targets=1-2", "laser targets=1-2")
    with pytest.raises(ParseError, match="probe"):
        parse_scheme(text)


def test_unknown_level_reference_has_location():
    text = SIX_LEVEL.replace("4-6 d=1250.77", "4-9 d=1250.77")
    with pytest.raises(ParseError) as info:
        parse_scheme(text)
    assert info.value.line == 18
    assert info.value.column >= 1


def test_duplicate_coupling():
    text = SIX_LEVEL.replace("[drives]", "5-4 d=1.0 freq=1GHz up\n\n[drives]")
    with pytest.raises(ParseError, match="duplicate coupling 4-5") as info:
        parse_scheme(text)
    assert info.value.line == 20


def test_units_required():
    text = SIX_LEVEL.replace("rabi=4.8MHz", "rabi=4.8")
    with pytest.raises(ParseError):
        parse_scheme(text)


def test_cyclic_graph_has_no_rotating_frame():
    text = SIX_LEVEL.replace("[drives]", "1-3 d=0.1 wavelength=300nm up\n\n[drives]")
    s = parse_scheme(text)
    with pytest.raises(StructureError):
        cumulative_detunings(s)


def test_decaying_ground_state_rejected():
    with pytest.raises(ParseError, match="ground"):
        parse_scheme(SIX_LEVEL.replace('F=3" gamma=0', 'F=3" gamma=1kHz'))


def test_scan_needs_known_drive():
    text = SIX_LEVEL + """
[scan]
x = coupling_detuning from=-60MHz to=60MHz points=11
y = rf_detuning_sweep drive=RF9 from=-300MHz to=300MHz points=5
"""
    with pytest.raises(ParseError, match="RF9"):
        parse_config(text)


def test_scan_spec_validation():
    with pytest.raises(SchemeError):
        ScanSpec(0.0, 1.0, 1)
    with pytest.raises(SchemeError):
        ScanSpec(0.0, 1.0, 5, "rf_detuning_sweep", "RF2", 0.0, 1.0, 1)
    with pytest.raises(SchemeError):
        ScanSpec(0.0, float("inf"), 5)


def test_scan_labels():
    det = ScanSpec(0, 1, 3, "rf_detuning_sweep", "RF2", -MHZ, MHZ, 3)
    assert det.y_label == "delta_rf2_mhz"
    assert det.y_display(det.y_values()).tolist() == pytest.approx([-1, 0, 1])
    pw = ScanSpec(0, 1, 3, "rf_power_sweep", "RF1", 1e-3, 1e-2, 2, "log-dBm")
    assert pw.y_label == "rf1_power_dbm"
    assert pw.y_display(pw.y_values()).tolist() == pytest.approx([0.0, 10.0])


line = st.text(alphabet=st.sampled_from(list('0123456789-=.[]"# abcdefghijklmnopqrstuvwxyzMHzkdBm*,\n')),
               max_size=80)


@settings(max_examples=300, deadline=None)
@given(st.lists(line, max_size=8))
def test_parser_is_total_on_noise(lines):
    text = "\n".join(lines)
    try:
        parse_config(text)
    except ParseError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.integers(0, len(SIX_LEVEL) - 1), st.integers(1, 6), st.text(max_size=4))
def test_parser_is_total_on_mutations(pos, cut, junk):
    text = SIX_LEVEL[:pos] + junk + SIX_LEVEL[pos + cut:]
    try:
        parse_config(text)
    except ParseError:
        pass
