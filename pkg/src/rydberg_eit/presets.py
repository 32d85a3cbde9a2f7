"""Built-in Rb-85 level schemes.

Levels: 5S1/2 -> 5P3/2 -> 50D5/2 -> 51P3/2, with 51S1/2 below and 52S1/2
above 51P3/2, both reached by one RF source. The eight-level variant adds
the m_J = 3/2 ladder (levels 7, 8) which the P->S RF transitions cannot
reach; its couplings use 0.82 of the m_J = 1/2 angular factor.

All drives start at the optical Rabi frequencies of the plain EIT
measurement with both RF sources off.
"""

from __future__ import annotations

import dataclasses

from .config import parse_scheme
from .scheme import LevelScheme

SIX_LEVEL = """\
name = six_level_rb85
ground = 1
probe = 1-2

[levels]
1 "5S1/2 F=3" gamma=0
2 "5P3/2 F=4" gamma=6MHz
3 "50D5/2" gamma=3kHz
4 "51P3/2 mJ=1/2" gamma=2kHz
5 "51S1/2" gamma=2kHz
6 "52S1/2" gamma=2kHz

[couplings]
1-2 d=1.93 wavelength=780.24nm up
2-3 d=0.0099 wavelength=480.1nm up
3-4 d=1430.4 freq=17040000000Hz up
4-5 d=1282.4 freq=28920000000Hz down
4-6 d=1250.77 freq=29244800000Hz up

[drives]
probe targets=1-2 rabi=4.8MHz detuning=0 fwhm=80um
coupling targets=2-3 rabi=8.5MHz detuning=0 fwhm=110um
RF1 targets=3-4 rabi=0 detuning=0 gain=50.1 distance=0.4m cell_factor=0.5
RF2 targets=4-5,4-6 rabi=0 detuning=0 gain=79.4 distance=0.4m cell_factor=0.5
"""

EIGHT_LEVEL = """\
name = eight_level_rb85
ground = 1
probe = 1-2

[levels]
1 "5S1/2 F=3" gamma=0
2 "5P3/2 F=4" gamma=6MHz
3 "50D5/2 mJ=1/2" gamma=3kHz
4 "51P3/2 mJ=1/2" gamma=2kHz
5 "51S1/2" gamma=2kHz
6 "52S1/2" gamma=2kHz
7 "50D5/2 mJ=3/2" gamma=3kHz
8 "51P3/2 mJ=3/2" gamma=2kHz

[couplings]
1-2 d=1.93 wavelength=780.24nm up
2-3 d=0.0099 wavelength=480.1nm up
3-4 d=1430.4 freq=17040000000Hz up
4-5 d=1282.4 freq=28920000000Hz down
4-6 d=1250.77 freq=29244800000Hz up
2-7 d=0.0099 wavelength=480.1nm up
7-8 d=1430.4 freq=17040000000Hz up

[drives]
probe targets=1-2 rabi=4.8MHz detuning=0 fwhm=80um
coupling targets=2-3,2-7*0.82 rabi=8.5MHz detuning=0 fwhm=110um
RF1 targets=3-4,7-8*0.82 rabi=0 detuning=0 gain=50.1 distance=0.4m cell_factor=0.5
RF2 targets=4-5,4-6 rabi=0 detuning=0 gain=79.4 distance=0.4m cell_factor=0.5
"""

PRESET_TEXT = {
    "six_level_rb85": SIX_LEVEL,
    "eight_level_rb85": EIGHT_LEVEL,
}

PRESET_NAMES = ("six_level_rb85", "eight_level_rb85", "four_level_rb85")


def truncate(scheme: LevelScheme, n_keep: int, name: str) -> LevelScheme:
    """Keep levels 1..n_keep; drop couplings and drive targets that leave the set."""
    levels = scheme.levels[:n_keep]
    couplings = tuple(c for c in scheme.couplings if max(c.pair) <= n_keep)
    drives = []
    for d in scheme.drives:
        targets = tuple(t for t in d.targets if max(t.pair) <= n_keep)
        if targets:
            drives.append(dataclasses.replace(d, targets=targets))
    return LevelScheme(name=name, levels=levels, couplings=couplings, drives=tuple(drives),
                       ground=scheme.ground, probe_pair=scheme.probe_pair)


def builtin_preset(name: str) -> LevelScheme:
    """Return one of the shipped schemes by name."""
    if name == "four_level_rb85":
        return truncate(builtin_preset("six_level_rb85"), 4, "four_level_rb85")
    try:
        text = PRESET_TEXT[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}") \
            from None
    return parse_scheme(text)
