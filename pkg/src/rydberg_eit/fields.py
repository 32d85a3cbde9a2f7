"""
Field calculus: laboratory knobs to Rabi frequencies, plus vapor thermodynamics.

All functions are pure. Angular frequencies are returned in rad/s; callers
divide by ``MHZ`` for the ordinary-frequency MHz used in figures and files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import (A_0, C, E_CHARGE, EPSILON_0, HBAR, K_B,
                        RB85_ABUNDANCE, RB85_MASS)


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class OpticalBeam:
    """A Gaussian laser beam characterised by power and FWHM diameter.

    Parameters
    ----------
    power : float
        Optical power in W.
    fwhm : float
        Full width at half maximum of the intensity profile in m.
    wavelength : float
        Vacuum wavelength in m.
    """

    power: float
    fwhm: float
    wavelength: float = 780.24e-9

    def __post_init__(self):
        _check_finite(power=self.power, fwhm=self.fwhm, wavelength=self.wavelength)
        if self.power < 0:
            raise ValueError("beam power must be >= 0")
        if self.fwhm <= 0:
            raise ValueError("beam fwhm must be > 0")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be > 0")


@dataclass(frozen=True)
class HornSource:
    """An RF horn antenna illuminating the vapor cell in the far field.

    ``cell_factor`` is the dimensionless perturbation of the incident field
    by the dielectric cell (standing waves); 0.5 for both bands used here.
    """

    power: float
    gain: float
    distance: float
    cell_factor: float = 0.5

    def __post_init__(self):
        _check_finite(power=self.power, gain=self.gain, distance=self.distance,
                      cell_factor=self.cell_factor)
        if self.power < 0:
            raise ValueError("horn power must be >= 0")
        if self.gain <= 0:
            raise ValueError("horn gain must be > 0")
        if self.distance <= 0:
            raise ValueError("horn distance must be > 0")
        if self.cell_factor < 0:
            raise ValueError("cell factor must be >= 0")


@dataclass(frozen=True)
class VaporConditions:
    temperature: float = 300.0
    cell_length: float = 0.075
    isotope_fraction: float = RB85_ABUNDANCE

    def __post_init__(self):
        _check_finite(temperature=self.temperature, cell_length=self.cell_length,
                      isotope_fraction=self.isotope_fraction)
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0 K")
        if self.cell_length <= 0:
            raise ValueError("cell length must be > 0")
        if not 0 < self.isotope_fraction <= 1:
            raise ValueError("isotope fraction must lie in (0, 1]")


def optical_field_magnitude(beam: OpticalBeam) -> float:
    """Peak field amplitude (V/m) of a Gaussian beam of given power and FWHM."""
    return math.sqrt(8.0 * math.log(2.0) / (math.pi * C * EPSILON_0)) \
        * math.sqrt(beam.power) / beam.fwhm


def rf_field_magnitude(src: HornSource) -> float:
    """Far-field amplitude (V/m) on the horn axis, scaled by the cell factor."""
    return src.cell_factor * math.sqrt(src.power * src.gain / (2.0 * math.pi * C * EPSILON_0)) \
        / src.distance


def rabi_frequency(d: float, field: float) -> float:
    """Rabi frequency in rad/s.

    Parameters
    ----------
    d : float
        Transition dipole moment in units of e*a0 (radial times angular part).
    field : float
        Electric field amplitude in V/m.
    """
    if d <= 0 or not math.isfinite(d):
        raise ValueError("dipole moment must be a positive finite number")
    if field < 0 or not math.isfinite(field):
        raise ValueError("field amplitude must be >= 0 and finite")
    return d * E_CHARGE * A_0 * field / HBAR


def field_from_rabi(d: float, rabi: float) -> float:
    """Inverse of :func:`rabi_frequency`: the field (V/m) giving ``rabi`` rad/s."""
    return rabi * HBAR / (d * E_CHARGE * A_0)


def vapor_pressure(temperature: float) -> float:
    """Rb vapor pressure in Pa."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0 K")
    # exponent kept as printed: 5.006 + 4.857
    return 10.0 ** (5.006 + 4.857 - 4215.0 / temperature)


def vapor_density(cond: VaporConditions) -> float:
    """Number density (m^-3) of the selected isotope."""
    return cond.isotope_fraction * vapor_pressure(cond.temperature) / (K_B * cond.temperature)


def most_probable_speed(temperature: float, mass: float = RB85_MASS) -> float:
    """u = sqrt(2 k_B T / m) in m/s."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0 K")
    return math.sqrt(2.0 * K_B * temperature / mass)


def hyperfine_coupling_offset(hf_split_hz: float, probe_wavelength: float,
                              coupling_wavelength: float) -> float:
    """Apparent coupling-detuning offset of a hyperfine-shifted EIT line.

    When the coupling laser is scanned with the probe locked, an intermediate
    state shifted by ``hf_split_hz`` shows up displaced by
    ``hf_split * (lambda_p / lambda_c - 1)`` on the coupling axis.
    """
    if coupling_wavelength <= 0:
        raise ValueError("coupling wavelength must be > 0")
    return hf_split_hz * (probe_wavelength / coupling_wavelength - 1.0)


def dbm_to_watts(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ValueError("power must be > 0 for a dBm value")
    return 10.0 * math.log10(watts / 1e-3)
