"""
Level-scheme domain objects: levels, couplings, drives and their validation.

A scheme is an undirected graph of levels joined by dipole couplings. Drives
(lasers or RF sources) address one or more couplings; a single RF source can
address several couplings at once, each with its own angular scale factor.
Everything here is immutable; use :meth:`LevelScheme.with_drive` to derive
modified copies for scans.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

from .constants import C, TWO_PI
from .fields import (HornSource, OpticalBeam, optical_field_magnitude,
                     rabi_frequency, rf_field_magnitude)

Pair = Tuple[int, int]


class SchemeError(ValueError):
    """Raised when a level scheme violates a structural invariant."""


class StructureError(SchemeError):
    """Raised when a scheme is not a tree rooted at the ground state."""


def canonical_pair(a: int, b: int) -> Pair:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Level:
    id: int
    label: str
    decay_rate: float               # Gamma_i, rad/s
    dephasing: float = 0.0          # extra pure dephasing, rad/s


@dataclass(frozen=True)
class Coupling:
    """Dipole coupling between two levels.

    ``direction`` says whether ``to`` lies above (``"up"``) or below
    (``"down"``) ``from_`` in energy.
    """

    from_: int
    to: int
    dipole: float                   # units of e*a0
    transition_freq: float          # Hz
    direction: str = "up"

    @property
    def pair(self) -> Pair:
        return canonical_pair(self.from_, self.to)

    @property
    def wavelength(self) -> float:
        return C / self.transition_freq


@dataclass(frozen=True)
class Target:
    pair: Pair
    scale: float = 1.0


@dataclass(frozen=True)
class Source:
    """Physical source behind a drive, used to convert power into Rabi frequency.

    ``kind`` is ``"horn"`` (needs gain, distance, cell_factor) or ``"beam"``
    (needs fwhm). ``power`` is the configured power in W, or None when the
    drive was specified directly by its Rabi frequency.
    """

    kind: str
    power: Optional[float] = None
    gain: Optional[float] = None
    distance: Optional[float] = None
    cell_factor: float = 0.5
    fwhm: Optional[float] = None

    def field(self, power: float, wavelength: float = 780e-9) -> float:
        if self.kind == "horn":
            return rf_field_magnitude(HornSource(power, self.gain, self.distance,
                                                 self.cell_factor))
        return optical_field_magnitude(OpticalBeam(power, self.fwhm, wavelength))


@dataclass(frozen=True)
class DriveField:
    id: str
    rabi: float                     # rad/s
    detuning: float                 # rad/s, relative to the reference frequency
    targets: Tuple[Target, ...]
    source: Optional[Source] = None

    @property
    def pairs(self) -> Tuple[Pair, ...]:
        return tuple(t.pair for t in self.targets)


@dataclass(frozen=True)
class LevelScheme:
    name: str
    levels: Tuple[Level, ...]
    couplings: Tuple[Coupling, ...]
    drives: Tuple[DriveField, ...]
    ground: int = 1
    probe_pair: Pair = (1, 2)
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        validate_scheme(self)

    @property
    def n(self) -> int:
        return len(self.levels)

    def level(self, level_id: int) -> Level:
        return self.levels[level_id - 1]

    def coupling(self, a: int, b: int) -> Coupling:
        pair = canonical_pair(a, b)
        for c in self.couplings:
            if c.pair == pair:
                return c
        raise SchemeError(f"no coupling between levels {a} and {b}")

    def drive(self, drive_id: str) -> DriveField:
        for d in self.drives:
            if d.id == drive_id:
                return d
        raise SchemeError(f"unknown drive {drive_id!r}; known: "
                          f"{', '.join(d.id for d in self.drives)}")

    def has_drive(self, drive_id: str) -> bool:
        return any(d.id == drive_id for d in self.drives)

    def with_drive(self, drive_id: str, **changes) -> "LevelScheme":
        """Copy of the scheme with fields of one drive replaced."""
        self.drive(drive_id)
        drives = tuple(dataclasses.replace(d, **changes) if d.id == drive_id else d
                       for d in self.drives)
        return dataclasses.replace(self, drives=drives, _cache={})

    def with_coupling(self, a: int, b: int, **changes) -> "LevelScheme":
        self.coupling(a, b)
        pair = canonical_pair(a, b)
        couplings = tuple(dataclasses.replace(c, **changes) if c.pair == pair else c
                          for c in self.couplings)
        return dataclasses.replace(self, couplings=couplings, _cache={})

    def drive_rabi_for_power(self, drive_id: str, power: float) -> float:
        """Rabi frequency (rad/s) of a drive fed with ``power`` watts.

        The dipole of the drive's first target sets the conversion; further
        targets follow through their scale factors.
        """
        drive = self.drive(drive_id)
        if drive.source is None:
            raise SchemeError(f"drive {drive_id!r} has no source geometry "
                              "(gain/distance or fwhm) for power conversion")
        coupling = self.coupling(*drive.targets[0].pair)
        field_v_m = drive.source.field(power, coupling.wavelength)
        return rabi_frequency(coupling.dipole, field_v_m)

    def reference_frequency(self, drive_id: str) -> float:
        """Mean transition frequency (Hz) of the couplings a drive addresses."""
        drive = self.drive(drive_id)
        freqs = [self.coupling(*t.pair).transition_freq for t in drive.targets]
        return math.fsum(freqs) / len(freqs)

    @property
    def probe_wavelength(self) -> float:
        return self.coupling(*self.probe_pair).wavelength

    @property
    def coupling_wavelength(self) -> float:
        return self.coupling(*self.drive("coupling").targets[0].pair).wavelength

    @property
    def probe_dipole(self) -> float:
        return self.coupling(*self.probe_pair).dipole


def validate_scheme(s: LevelScheme) -> None:
    if not s.levels:
        raise SchemeError("scheme has no levels")
    ids = [lv.id for lv in s.levels]
    if ids != list(range(1, len(ids) + 1)):
        raise SchemeError(f"level ids must be contiguous from 1, got {ids}")
    for lv in s.levels:
        if not (lv.decay_rate >= 0 and math.isfinite(lv.decay_rate)):
            raise SchemeError(f"level {lv.id}: decay rate must be >= 0")
        if not (lv.dephasing >= 0 and math.isfinite(lv.dephasing)):
            raise SchemeError(f"level {lv.id}: dephasing must be >= 0")
    n = len(ids)
    if not 1 <= s.ground <= n:
        raise SchemeError(f"ground level {s.ground} does not exist")
    if s.level(s.ground).decay_rate != 0:
        # it has nowhere to decay to, so a nonzero rate would leak population
        raise SchemeError(f"ground level {s.ground} must have zero decay rate")
    seen = set()
    for c in s.couplings:
        if c.from_ == c.to:
            raise SchemeError(f"coupling {c.from_}-{c.to} joins a level to itself")
        for end in (c.from_, c.to):
            if not 1 <= end <= n:
                raise SchemeError(f"coupling {c.from_}-{c.to} references unknown level {end}")
        if c.pair in seen:
            raise SchemeError(f"duplicate coupling {c.pair[0]}-{c.pair[1]}")
        seen.add(c.pair)
        if not (c.dipole > 0 and math.isfinite(c.dipole)):
            raise SchemeError(f"coupling {c.from_}-{c.to}: dipole must be > 0")
        if not (c.transition_freq > 0 and math.isfinite(c.transition_freq)):
            raise SchemeError(f"coupling {c.from_}-{c.to}: transition frequency must be > 0")
        if c.direction not in ("up", "down"):
            raise SchemeError(f"coupling {c.from_}-{c.to}: direction must be up or down")
    _check_connected(n, [c.pair for c in s.couplings])

    drive_ids = set()
    driven = {}
    for d in s.drives:
        if d.id in drive_ids:
            raise SchemeError(f"duplicate drive {d.id!r}")
        drive_ids.add(d.id)
        if not (d.rabi >= 0 and math.isfinite(d.rabi)):
            raise SchemeError(f"drive {d.id!r}: Rabi frequency must be >= 0")
        if not math.isfinite(d.detuning):
            raise SchemeError(f"drive {d.id!r}: detuning must be finite")
        if not d.targets:
            raise SchemeError(f"drive {d.id!r} has no targets")
        for t in d.targets:
            if t.pair not in seen:
                raise SchemeError(f"drive {d.id!r} targets nonexistent coupling "
                                  f"{t.pair[0]}-{t.pair[1]}")
            if not (t.scale > 0 and math.isfinite(t.scale)):
                raise SchemeError(f"drive {d.id!r}: target scale must be > 0")
            if t.pair in driven:
                raise SchemeError(f"coupling {t.pair[0]}-{t.pair[1]} is driven by both "
                                  f"{driven[t.pair]!r} and {d.id!r}")
            driven[t.pair] = d.id
        if d.source is not None:
            if d.source.kind == "horn":
                if not (d.source.gain and d.source.gain > 0
                        and d.source.distance and d.source.distance > 0):
                    raise SchemeError(f"drive {d.id!r}: horn source needs gain and distance")
            elif d.source.kind == "beam":
                if not (d.source.fwhm and d.source.fwhm > 0):
                    raise SchemeError(f"drive {d.id!r}: beam source needs fwhm")
            else:
                raise SchemeError(f"drive {d.id!r}: unknown source kind {d.source.kind!r}")

    probe = canonical_pair(*s.probe_pair)
    if "probe" not in drive_ids:
        raise SchemeError("scheme has no drive named 'probe'")
    if driven.get(probe) != "probe":
        raise SchemeError(f"probe pair {probe[0]}-{probe[1]} must be driven by 'probe'")
    if s.ground not in probe:
        raise SchemeError("probe pair must include the ground level")


def _check_connected(n: int, pairs: Sequence[Pair]) -> None:
    adj = {i: [] for i in range(1, n + 1)}
    for a, b in pairs:
        adj[a].append(b)
        adj[b].append(a)
    seen = {1}
    queue = deque([1])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    if len(seen) != n:
        missing = sorted(set(adj) - seen)
        raise SchemeError(f"coupling graph is not connected; unreachable levels {missing}")


def excitation_paths(s: LevelScheme) -> Dict[int, Tuple[Tuple[Pair, int], ...]]:
    """Path from the ground state to every level as ``(coupling pair, sign)`` steps.

    ``sign`` is +1 for a step that goes up in energy and -1 for a step down.
    Raises :class:`StructureError` if the coupling graph contains a cycle,
    since the rotating frame is then not unique.
    """
    cached = s._cache.get("paths")
    if cached is not None:
        return cached
    if len(s.couplings) != s.n - 1:
        raise StructureError("coupling graph has a cycle; excitation paths are not unique")
    adj = {i: [] for i in range(1, s.n + 1)}
    for c in s.couplings:
        up = 1 if c.direction == "up" else -1
        adj[c.from_].append((c.to, c.pair, up))
        adj[c.to].append((c.from_, c.pair, -up))
    paths = {s.ground: ()}
    queue = deque([s.ground])
    while queue:
        cur = queue.popleft()
        for nb, pair, sign in adj[cur]:
            if nb not in paths:
                paths[nb] = paths[cur] + ((pair, sign),)
                queue.append(nb)
    s._cache["paths"] = paths
    return paths


def parents(s: LevelScheme) -> Dict[int, Optional[int]]:
    """Predecessor of each level on its excitation path (None for ground)."""
    result = {}
    for level, path in excitation_paths(s).items():
        if not path:
            result[level] = None
        else:
            a, b = path[-1][0]
            result[level] = a if b == level else b
    return result


def coupling_detunings(s: LevelScheme,
                       overrides: Optional[Mapping[str, float]] = None) -> Dict[Pair, float]:
    """Detuning (rad/s) of every driven coupling.

    A drive's detuning is measured from the mean transition frequency of its
    targets, so for a single RF source addressing two transitions each
    coupling sees ``detuning + 2*pi*(f_ref - f_transition)``.
    Undriven couplings get zero.
    """
    overrides = overrides or {}
    unknown = set(overrides) - {d.id for d in s.drives}
    if unknown:
        raise SchemeError(f"detuning given for unknown drive(s) {sorted(unknown)}")
    out = {c.pair: 0.0 for c in s.couplings}
    for d in s.drives:
        det = overrides.get(d.id, d.detuning)
        f_ref = s.reference_frequency(d.id)
        for t in d.targets:
            out[t.pair] = det + TWO_PI * (f_ref - s.coupling(*t.pair).transition_freq)
    return out


def coupling_rabis(s: LevelScheme) -> Dict[Pair, float]:
    """Rabi frequency (rad/s) on each coupling: drive Rabi times target scale."""
    out = {c.pair: 0.0 for c in s.couplings}
    for d in s.drives:
        for t in d.targets:
            out[t.pair] = d.rabi * t.scale
    return out
