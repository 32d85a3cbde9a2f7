"""Physical constants (CODATA 2018, SI units) and Rb-85 data used throughout."""

import math

C = 299792458.0                    # speed of light, m/s (exact)
EPSILON_0 = 8.8541878128e-12       # vacuum permittivity, F/m
HBAR = 1.054571817e-34             # reduced Planck constant, J s (exact)
K_B = 1.380649e-23                 # Boltzmann constant, J/K (exact)
E_CHARGE = 1.602176634e-19         # elementary charge, C (exact)
A_0 = 5.29177210903e-11            # Bohr radius, m
AMU = 1.66053906660e-27            # atomic mass constant, kg

RB85_MASS = 84.9117897379 * AMU    # kg
RB85_ABUNDANCE = 0.7217

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6                 # 2*pi x 1 MHz in rad/s


def to_rad(mhz):
    """Ordinary frequency in MHz -> angular frequency in rad/s."""
    return mhz * MHZ


def to_mhz(rad_per_s):
    """Angular frequency in rad/s -> ordinary frequency in MHz."""
    return rad_per_s / MHZ
