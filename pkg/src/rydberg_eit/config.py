"""
The ``.scheme`` text format: a line-oriented description of a level scheme,
an optional 2-D scan, vapor conditions and Doppler quadrature settings.

Grammar (``#`` starts a comment, blank lines are ignored)::

    name   = <identifier>
    ground = <level id>
    probe  = <i>-<j>

    [levels]
    <id> "<label>" gamma=<freq> [dephasing=<freq>]

    [couplings]
    <i>-<j> d=<float> (freq=<freq> | wavelength=<length>) [up|down]

    [drives]
    <name> targets=<i>-<j>[*<scale>][,...]
           (rabi=<freq> | power=<power>)
           [detuning=<freq> | frequency=<freq>]
           [gain=<float> distance=<length> [cell_factor=<float>]]   # RF horn
           [fwhm=<length>]                                          # laser beam

    [scan]
    x = coupling_detuning from=<freq> to=<freq> points=<int>
    y = rf_power_sweep drive=<name> from=<power> to=<power> points=<int> [scale=linear|log-dBm]
    y = rf_detuning_sweep drive=<name> from=<freq> to=<freq> points=<int>
    y = probe_transmission_only

    [vapor]
    temperature=<temp> cell_length=<length> [isotope_fraction=<float>]

    [doppler]
    span=<float> points=<odd int> [poles=on|off]     # or the single word: off

Frequencies carry a unit (Hz, kHz, MHz, GHz, THz or rad/s); an ordinary
frequency unit means 2*pi times that value for rates, Rabi frequencies and
detunings. Powers need mW, uW, nW, W or dBm; lengths m, cm, mm, um or nm;
temperatures K. A bare ``0`` is accepted for any zero quantity.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .constants import C, MHZ, TWO_PI
from .fields import VaporConditions, dbm_to_watts, rabi_frequency, watts_to_dbm
from .scheme import (Coupling, DriveField, Level, LevelScheme, SchemeError,
                     Source, Target, canonical_pair)


class ParseError(SchemeError):
    """Malformed ``.scheme`` text, with the 1-based line and column of the fault."""

    def __init__(self, reason: str, line: int = 0, column: int = 0):
        self.reason = reason
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + reason)


# -- scan / doppler descriptions ---------------------------------------------

X_KINDS = ("coupling_detuning",)
Y_KINDS = ("rf_power_sweep", "rf_detuning_sweep", "probe_transmission_only")


@dataclass(frozen=True)
class ScanSpec:
    """A 2-D scan: coupling detuning on x, one drive parameter on y.

    Detunings are in rad/s and powers in W. For ``probe_transmission_only``
    the y axis is a single dummy row.
    """

    x_start: float
    x_stop: float
    x_points: int
    y_kind: str = "probe_transmission_only"
    y_drive: Optional[str] = None
    y_start: float = 0.0
    y_stop: float = 0.0
    y_points: int = 1
    y_scale: str = "linear"
    x_kind: str = "coupling_detuning"

    def __post_init__(self):
        if self.x_kind not in X_KINDS:
            raise SchemeError(f"unknown x axis {self.x_kind!r}")
        if self.y_kind not in Y_KINDS:
            raise SchemeError(f"unknown y axis {self.y_kind!r}")
        if self.x_points < 2:
            raise SchemeError("x axis needs at least 2 points")
        for v in (self.x_start, self.x_stop, self.y_start, self.y_stop):
            if not math.isfinite(v):
                raise SchemeError("scan ranges must be finite")
        if self.y_kind == "probe_transmission_only":
            if self.y_points != 1:
                raise SchemeError("probe_transmission_only scans have a single row")
        else:
            if self.y_drive is None:
                raise SchemeError(f"{self.y_kind} needs a drive")
            if self.y_points < 2:
                raise SchemeError("y axis needs at least 2 points")
        if self.y_scale not in ("linear", "log-dBm"):
            raise SchemeError(f"unknown y scale {self.y_scale!r}")
        if self.y_scale == "log-dBm":
            if self.y_kind != "rf_power_sweep":
                raise SchemeError("log-dBm scale only applies to power sweeps")
            if self.y_start <= 0 or self.y_stop <= 0:
                raise SchemeError("log-dBm sweep needs positive powers")
        if self.y_kind == "rf_power_sweep" and min(self.y_start, self.y_stop) < 0:
            raise SchemeError("powers must be >= 0")

    def x_values(self) -> np.ndarray:
        return np.linspace(self.x_start, self.x_stop, self.x_points)

    def y_values(self) -> np.ndarray:
        """y axis in natural units (W for power sweeps, rad/s for detunings)."""
        if self.y_kind == "probe_transmission_only":
            return np.zeros(1)
        if self.y_scale == "log-dBm":
            dbm = np.linspace(watts_to_dbm(self.y_start), watts_to_dbm(self.y_stop),
                              self.y_points)
            return 1e-3 * 10.0 ** (dbm / 10.0)
        return np.linspace(self.y_start, self.y_stop, self.y_points)

    @property
    def y_label(self) -> str:
        if self.y_kind == "rf_power_sweep":
            unit = "dbm" if self.y_scale == "log-dBm" else "mw"
            return f"{self.y_drive.lower()}_power_{unit}"
        if self.y_kind == "rf_detuning_sweep":
            return f"delta_{self.y_drive.lower()}_mhz"
        return "row"

    def y_display(self, values: np.ndarray) -> np.ndarray:
        """Convert natural-unit y values into the units named by :attr:`y_label`."""
        values = np.asarray(values, dtype=float)
        if self.y_kind == "rf_power_sweep":
            if self.y_scale == "log-dBm":
                return 10.0 * np.log10(values / 1e-3)
            return values * 1e3
        if self.y_kind == "rf_detuning_sweep":
            return values / MHZ
        return values


@dataclass(frozen=True)
class DopplerSpec:
    """Velocity quadrature: ``points`` trapezoid nodes over ``[-span*u, span*u]``.

    With ``pole_subtraction`` the near-real poles of rho21(v) are integrated
    in closed form and only the smooth remainder is left to the trapezoid.
    """

    u: float
    span: float = 3.0
    points: int = 301
    pole_subtraction: bool = True

    def __post_init__(self):
        if not (self.u >= 0 and math.isfinite(self.u)):
            raise SchemeError("Doppler u must be >= 0")
        if not (self.span > 0 and math.isfinite(self.span)):
            raise SchemeError("Doppler span must be > 0")
        if self.points < 3 or self.points % 2 == 0:
            raise SchemeError("Doppler points must be odd and >= 3")


@dataclass(frozen=True)
class DopplerSettings:
    """Doppler settings as written in a config; ``u`` follows from the vapor."""

    enabled: bool = True
    span: float = 3.0
    points: int = 301
    pole_subtraction: bool = True


@dataclass(frozen=True)
class SchemeConfig:
    scheme: LevelScheme
    scan: Optional[ScanSpec] = None
    vapor: VaporConditions = field(default_factory=VaporConditions)
    doppler: DopplerSettings = field(default_factory=DopplerSettings)


# -- lexical helpers ------------------------------------------------------------

_TOKEN = re.compile(r'"[^"]*"|[^\s"]+')
_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANTITY = re.compile(rf"^({_NUMBER})\s*([A-Za-z/]*)$")

_ANGULAR = {"Hz": TWO_PI, "kHz": TWO_PI * 1e3, "MHz": MHZ, "GHz": TWO_PI * 1e9,
            "THz": TWO_PI * 1e12}
_HERTZ = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9, "THz": 1e12}
_LENGTH = {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "nm": 1e-9}
_POWER = {"W": 1.0, "mW": 1e-3, "uW": 1e-6, "nW": 1e-9}


@dataclass
class _Tok:
    text: str
    col: int


def _tokenize(line: str) -> List[_Tok]:
    toks = []
    for m in _TOKEN.finditer(line):
        if m.group().startswith("#"):
            break
        toks.append(_Tok(m.group(), m.start() + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.lineno = 0

    def fail(self, reason: str, col: int = 1):
        raise ParseError(reason, self.lineno, col)

    # quantities
    def _split(self, tok: _Tok) -> Tuple[float, str]:
        m = _QUANTITY.match(tok.text)
        if not m:
            self.fail(f"malformed quantity {tok.text!r}", tok.col)
        value = float(m.group(1))
        if not math.isfinite(value):
            self.fail(f"non-finite quantity {tok.text!r}", tok.col)
        return value, m.group(2)

    def _unit(self, tok: _Tok, table: Dict[str, float], kind: str) -> Tuple[float, float]:
        value, unit = self._split(tok)
        if unit == "" and value == 0.0:
            return 0.0, 1.0
        if unit not in table:
            self.fail(f"{kind} {tok.text!r} needs a unit ({', '.join(table)})", tok.col)
        return value, table[unit]

    def angular(self, tok: _Tok) -> float:
        value, unit = self._split(tok)
        if unit == "rad/s" or (unit == "" and value == 0.0):
            return value
        value, mult = self._unit(tok, _ANGULAR, "frequency")
        return value * mult

    def hertz(self, tok: _Tok) -> float:
        value, mult = self._unit(tok, _HERTZ, "frequency")
        return value * mult

    def length(self, tok: _Tok) -> float:
        value, mult = self._unit(tok, _LENGTH, "length")
        return value * mult

    def power(self, tok: _Tok) -> float:
        value, unit = self._split(tok)
        if unit == "dBm":
            return dbm_to_watts(value)
        value, mult = self._unit(tok, _POWER, "power")
        return value * mult

    def temperature(self, tok: _Tok) -> float:
        value, mult = self._unit(tok, {"K": 1.0}, "temperature")
        return value * mult

    def number(self, tok: _Tok) -> float:
        try:
            value = float(tok.text)
        except ValueError:
            self.fail(f"expected a number, got {tok.text!r}", tok.col)
        if not math.isfinite(value):
            self.fail(f"non-finite number {tok.text!r}", tok.col)
        return value

    def integer(self, tok: _Tok) -> int:
        if not re.fullmatch(r"[-+]?\d+", tok.text):
            self.fail(f"expected an integer, got {tok.text!r}", tok.col)
        return int(tok.text)

    def pair(self, tok: _Tok) -> Tuple[int, int]:
        m = re.fullmatch(r"(\d+)-(\d+)", tok.text)
        if not m:
            self.fail(f"expected a level pair like 1-2, got {tok.text!r}", tok.col)
        return int(m.group(1)), int(m.group(2))

    def keyvals(self, toks: List[_Tok], allowed: Tuple[str, ...]) -> Dict[str, _Tok]:
        out = {}
        for tok in toks:
            key, sep, value = tok.text.partition("=")
            if not sep or not value:
                self.fail(f"expected key=value, got {tok.text!r}", tok.col)
            if key not in allowed:
                self.fail(f"unknown key {key!r} (allowed: {', '.join(allowed)})", tok.col)
            if key in out:
                self.fail(f"duplicate key {key!r}", tok.col)
            out[key] = _Tok(value, tok.col + len(key) + 1)
        return out

    # document
    def parse(self) -> SchemeConfig:
        header: Dict[str, _Tok] = {}
        levels: List[Level] = []
        couplings: List[Coupling] = []
        coupling_lines: List[Tuple[int, int]] = []
        raw_drives: List[Tuple[int, List[_Tok]]] = []
        scan_lines: Dict[str, Tuple[int, List[_Tok]]] = {}
        vapor_toks: List[_Tok] = []
        doppler_toks: List[_Tok] = []
        section = None
        sections_seen = set()

        for self.lineno, line in enumerate(self.lines, start=1):
            toks = _tokenize(line)
            if not toks:
                continue
            first = toks[0]
            m = re.fullmatch(r"\[(\w+)\]", first.text)
            if m:
                section = m.group(1)
                if section not in ("levels", "couplings", "drives", "scan", "vapor", "doppler"):
                    self.fail(f"unknown section [{section}]", first.col)
                if section in sections_seen:
                    self.fail(f"section [{section}] appears twice", first.col)
                if len(toks) > 1:
                    self.fail("unexpected text after section header", toks[1].col)
                sections_seen.add(section)
                continue
            if section is None or section == "scan":
                toks = self._assignment(toks, section)
            if section is None:
                key, value = toks[0].text, toks[1:]
                if key not in ("name", "ground", "probe"):
                    self.fail(f"unknown setting {key!r}", toks[0].col)
                if key in header:
                    self.fail(f"duplicate setting {key!r}", toks[0].col)
                if len(value) != 1:
                    self.fail(f"setting {key!r} takes exactly one value", toks[0].col)
                header[key] = value[0]
            elif section == "levels":
                levels.append(self._level(toks))
            elif section == "couplings":
                couplings.append(self._coupling(toks))
                coupling_lines.append((self.lineno, toks[0].col))
            elif section == "drives":
                raw_drives.append((self.lineno, toks))
            elif section == "scan":
                axis = toks[0].text
                if axis not in ("x", "y"):
                    self.fail(f"scan lines must start with x = or y =, got {axis!r}", toks[0].col)
                if axis in scan_lines:
                    self.fail(f"duplicate scan axis {axis}", toks[0].col)
                scan_lines[axis] = (self.lineno, toks[1:])
            elif section == "vapor":
                vapor_toks.extend(toks)
            elif section == "doppler":
                doppler_toks.extend(toks)

        self.lineno = 0
        if not levels:
            self.fail("missing levels: the [levels] section is empty or absent")
        name = header["name"].text if "name" in header else "custom"
        self.lineno = 0
        ground = self.integer(header["ground"]) if "ground" in header else 1
        probe = self.pair(header["probe"]) if "probe" in header else (1, 2)

        seen_pairs = set()
        for c, (lineno, col) in zip(couplings, coupling_lines):
            self.lineno = lineno
            for end in (c.from_, c.to):
                if not 1 <= end <= len(levels):
                    self.fail(f"unknown level reference {end} in coupling {c.from_}-{c.to}", col)
            if c.pair in seen_pairs:
                self.fail(f"duplicate coupling {c.pair[0]}-{c.pair[1]}", col)
            seen_pairs.add(c.pair)
        self.lineno = 0
        partial = _PartialScheme(levels, couplings)
        drives = []
        for lineno, toks in raw_drives:
            self.lineno = lineno
            drives.append(self._drive(toks, partial))
        self.lineno = 0
        if not any(d.id == "probe" for d in drives):
            self.fail("missing probe drive: no drive named 'probe'")
        try:
            scheme = LevelScheme(name=name, levels=tuple(levels), couplings=tuple(couplings),
                                 drives=tuple(drives), ground=ground,
                                 probe_pair=canonical_pair(*probe))
        except SchemeError as exc:
            raise ParseError(str(exc)) from None

        vapor = self._vapor(vapor_toks) if vapor_toks else VaporConditions()
        doppler = self._doppler(doppler_toks) if doppler_toks else DopplerSettings()
        scan = self._scan(scan_lines, scheme) if scan_lines else None
        return SchemeConfig(scheme=scheme, scan=scan, vapor=vapor, doppler=doppler)

    def _assignment(self, toks: List[_Tok], section) -> List[_Tok]:
        """Normalise ``key = a b`` / ``key=a b`` into [key, a, b]."""
        first = toks[0]
        key, sep, rest = first.text.partition("=")
        if sep:
            out = [_Tok(key, first.col)]
            if rest:
                out.append(_Tok(rest, first.col + len(key) + 1))
            out.extend(toks[1:])
        elif len(toks) > 1 and toks[1].text.startswith("="):
            out = [first]
            if toks[1].text != "=":
                out.append(_Tok(toks[1].text[1:], toks[1].col + 1))
            out.extend(toks[2:])
        else:
            where = "header" if section is None else f"[{section}]"
            self.fail(f"expected 'key = value' in {where}, got {first.text!r}", first.col)
        if not out[0].text:
            self.fail("missing key before '='", first.col)
        return out

    def _level(self, toks: List[_Tok]) -> Level:
        if len(toks) < 2:
            self.fail("level lines need an id, a label and gamma=", toks[0].col)
        level_id = self.integer(toks[0])
        label_tok = toks[1]
        if "=" in label_tok.text and not label_tok.text.startswith('"'):
            self.fail("level label missing (quote labels containing spaces)", label_tok.col)
        label = label_tok.text.strip('"')
        kv = self.keyvals(toks[2:], ("gamma", "dephasing"))
        if "gamma" not in kv:
            self.fail(f"level {level_id} needs gamma=", toks[0].col)
        gamma = self.angular(kv["gamma"])
        dephasing = self.angular(kv["dephasing"]) if "dephasing" in kv else 0.0
        if gamma < 0 or dephasing < 0:
            self.fail(f"level {level_id}: rates must be >= 0", toks[0].col)
        return Level(level_id, label, gamma, dephasing)

    def _coupling(self, toks: List[_Tok]) -> Coupling:
        a, b = self.pair(toks[0])
        direction = "up"
        rest = []
        for tok in toks[1:]:
            if tok.text in ("up", "down"):
                direction = tok.text
            else:
                rest.append(tok)
        kv = self.keyvals(rest, ("d", "freq", "wavelength"))
        if "d" not in kv:
            self.fail(f"coupling {a}-{b} needs d=", toks[0].col)
        if ("freq" in kv) == ("wavelength" in kv):
            self.fail(f"coupling {a}-{b} needs exactly one of freq= or wavelength=",
                      toks[0].col)
        if "freq" in kv:
            freq = self.hertz(kv["freq"])
        else:
            wl = self.length(kv["wavelength"])
            if wl <= 0:
                self.fail("wavelength must be > 0", kv["wavelength"].col)
            freq = C / wl
        return Coupling(a, b, self.number(kv["d"]), freq, direction)

    def _targets(self, tok: _Tok, partial: "_PartialScheme") -> Tuple[Target, ...]:
        targets = []
        for piece in tok.text.split(","):
            pair_txt, star, scale_txt = piece.partition("*")
            pair = self.pair(_Tok(pair_txt, tok.col))
            if not partial.has_coupling(pair):
                self.fail(f"unknown level reference: no coupling {pair[0]}-{pair[1]}", tok.col)
            scale = self.number(_Tok(scale_txt, tok.col)) if star else 1.0
            targets.append(Target(canonical_pair(*pair), scale))
        return tuple(targets)

    def _drive(self, toks: List[_Tok], partial: "_PartialScheme") -> DriveField:
        name = toks[0].text
        if "=" in name or not re.fullmatch(r"[A-Za-z_][\w.-]*", name):
            self.fail(f"drive lines start with a drive name, got {name!r}", toks[0].col)
        kv = self.keyvals(toks[1:], ("targets", "rabi", "power", "detuning", "frequency",
                                     "gain", "distance", "cell_factor", "fwhm"))
        if "targets" not in kv:
            self.fail(f"drive {name!r} needs targets=", toks[0].col)
        targets = self._targets(kv["targets"], partial)
        if ("rabi" in kv) == ("power" in kv):
            self.fail(f"drive {name!r} needs exactly one of rabi= or power=", toks[0].col)
        if "detuning" in kv and "frequency" in kv:
            self.fail(f"drive {name!r}: give detuning= or frequency=, not both", toks[0].col)

        source = None
        if "gain" in kv or "distance" in kv or "cell_factor" in kv:
            if "fwhm" in kv:
                self.fail(f"drive {name!r} mixes horn and beam geometry", toks[0].col)
            if "gain" not in kv or "distance" not in kv:
                self.fail(f"drive {name!r}: horn geometry needs gain= and distance=",
                          toks[0].col)
            gain = self.number(kv["gain"])
            dist = self.length(kv["distance"])
            cf = self.number(kv["cell_factor"]) if "cell_factor" in kv else 0.5
            if gain <= 0 or dist <= 0 or cf < 0:
                self.fail(f"drive {name!r}: gain and distance must be > 0, cell_factor >= 0",
                          toks[0].col)
            source = Source("horn", gain=gain, distance=dist, cell_factor=cf)
        elif "fwhm" in kv:
            fwhm = self.length(kv["fwhm"])
            if fwhm <= 0:
                self.fail(f"drive {name!r}: fwhm must be > 0", kv["fwhm"].col)
            source = Source("beam", fwhm=fwhm)

        first = partial.coupling(targets[0].pair)
        if "power" in kv:
            if source is None:
                self.fail(f"drive {name!r}: power= needs horn (gain, distance) or beam "
                          "(fwhm) geometry", kv["power"].col)
            power = self.power(kv["power"])
            if power < 0:
                self.fail("power must be >= 0", kv["power"].col)
            source = Source(source.kind, power, source.gain, source.distance,
                            source.cell_factor, source.fwhm)
            rabi = rabi_frequency(first.dipole, source.field(power, first.wavelength))
        else:
            rabi = self.angular(kv["rabi"])
            if rabi < 0:
                self.fail(f"drive {name!r}: Rabi frequency must be >= 0", kv["rabi"].col)

        if "frequency" in kv:
            f = self.hertz(kv["frequency"])
            f_ref = math.fsum(partial.coupling(t.pair).transition_freq
                              for t in targets) / len(targets)
            detuning = TWO_PI * (f - f_ref)
        elif "detuning" in kv:
            detuning = self.angular(kv["detuning"])
        else:
            detuning = 0.0
        return DriveField(name, rabi, detuning, targets, source)

    def _scan(self, lines, scheme: LevelScheme) -> ScanSpec:
        if "x" not in lines:
            self.lineno = lines["y"][0]
            self.fail("scan needs an x axis")
        self.lineno, toks = lines["x"]
        if not toks or toks[0].text not in X_KINDS:
            self.fail(f"x axis must be one of {', '.join(X_KINDS)}")
        kv = self.keyvals(toks[1:], ("from", "to", "points"))
        for key in ("from", "to", "points"):
            if key not in kv:
                self.fail(f"x axis needs {key}=")
        x = (self.angular(kv["from"]), self.angular(kv["to"]), self.integer(kv["points"]))

        y_kind, y = "probe_transmission_only", {}
        if "y" in lines:
            self.lineno, toks = lines["y"]
            if not toks or toks[0].text not in Y_KINDS:
                self.fail(f"y axis must be one of {', '.join(Y_KINDS)}")
            y_kind = toks[0].text
            if y_kind != "probe_transmission_only":
                kv = self.keyvals(toks[1:], ("drive", "from", "to", "points", "scale"))
                for key in ("drive", "from", "to", "points"):
                    if key not in kv:
                        self.fail(f"y axis needs {key}=")
                drive = kv["drive"].text
                if not scheme.has_drive(drive):
                    self.fail(f"scan references unknown drive {drive!r}", kv["drive"].col)
                conv = self.power if y_kind == "rf_power_sweep" else self.angular
                scale = kv["scale"].text if "scale" in kv else "linear"
                y = dict(y_drive=drive, y_start=conv(kv["from"]), y_stop=conv(kv["to"]),
                         y_points=self.integer(kv["points"]), y_scale=scale)
            elif len(toks) > 1:
                self.fail("probe_transmission_only takes no options", toks[1].col)
        try:
            return ScanSpec(x[0], x[1], x[2], y_kind=y_kind, **y)
        except SchemeError as exc:
            self.fail(str(exc))

    def _vapor(self, toks: List[_Tok]) -> VaporConditions:
        self.lineno = 0
        kv = self.keyvals(toks, ("temperature", "cell_length", "isotope_fraction"))
        args = {}
        if "temperature" in kv:
            args["temperature"] = self.temperature(kv["temperature"])
        if "cell_length" in kv:
            args["cell_length"] = self.length(kv["cell_length"])
        if "isotope_fraction" in kv:
            args["isotope_fraction"] = self.number(kv["isotope_fraction"])
        try:
            return VaporConditions(**args)
        except ValueError as exc:
            self.fail(f"invalid vapor conditions: {exc}")

    def _doppler(self, toks: List[_Tok]) -> DopplerSettings:
        self.lineno = 0
        if len(toks) == 1 and toks[0].text == "off":
            return DopplerSettings(enabled=False)
        kv = self.keyvals(toks, ("span", "points", "poles"))
        span = self.number(kv["span"]) if "span" in kv else 3.0
        points = self.integer(kv["points"]) if "points" in kv else 301
        if span <= 0 or points < 3 or points % 2 == 0:
            self.fail("Doppler span must be > 0 and points odd and >= 3")
        poles = True
        if "poles" in kv:
            if kv["poles"].text not in ("on", "off"):
                self.fail("poles must be on or off", kv["poles"].col)
            poles = kv["poles"].text == "on"
        return DopplerSettings(True, span, points, poles)


class _PartialScheme:
    def __init__(self, levels, couplings):
        self.levels = levels
        self.by_pair = {c.pair: c for c in couplings}

    def has_coupling(self, pair) -> bool:
        return canonical_pair(*pair) in self.by_pair

    def coupling(self, pair) -> Coupling:
        return self.by_pair[canonical_pair(*pair)]


def parse_config(text: str) -> SchemeConfig:
    """Parse a full ``.scheme`` document.

    Never raises anything but :class:`ParseError` on bad input.
    """
    if not isinstance(text, str):
        raise ParseError("config text must be a string")
    parser = _Parser(text)
    try:
        return parser.parse()
    except ParseError:
        raise
    except Exception as exc:  # parsing is total: anything else is still a parse failure
        raise ParseError(f"{type(exc).__name__}: {exc}", parser.lineno, 1) from None


def parse_scheme(text: str) -> LevelScheme:
    return parse_config(text).scheme


# -- canonical serialisation ----------------------------------------------------

def _exact(value: float, units: Dict[str, float], fallback: str) -> str:
    """Shortest rendering of ``value`` that re-parses to exactly the same float."""
    if value == 0.0:
        return "0"
    best = f"{value!r}{fallback}"
    for unit, scale in units.items():
        shown = value / scale
        text = f"{shown!r}{unit}"
        if float(repr(shown)) * scale == value and len(text) < len(best):
            best = text
    return best


def _fmt_angular(value: float) -> str:
    return _exact(value, {k: _ANGULAR[k] for k in ("kHz", "MHz", "GHz")}, "rad/s")


def _fmt_hertz(value: float) -> str:
    return _exact(value, _HERTZ, "Hz")


def _fmt_length(value: float) -> str:
    return _exact(value, _LENGTH, "m")


def _fmt_power(value: float) -> str:
    return _exact(value, _POWER, "W")


def serialize_scheme(s: LevelScheme) -> str:
    lines = [f"name = {s.name}", f"ground = {s.ground}",
             f"probe = {s.probe_pair[0]}-{s.probe_pair[1]}", "", "[levels]"]
    for lv in s.levels:
        extra = f" dephasing={_fmt_angular(lv.dephasing)}" if lv.dephasing else ""
        lines.append(f'{lv.id} "{lv.label}" gamma={_fmt_angular(lv.decay_rate)}{extra}')
    lines += ["", "[couplings]"]
    for c in s.couplings:
        lines.append(f"{c.from_}-{c.to} d={c.dipole!r} freq={_fmt_hertz(c.transition_freq)} "
                     f"{c.direction}")
    lines += ["", "[drives]"]
    for d in s.drives:
        targets = ",".join(f"{t.pair[0]}-{t.pair[1]}" + (f"*{t.scale!r}" if t.scale != 1.0 else "")
                           for t in d.targets)
        parts = [d.id, f"targets={targets}"]
        src = d.source
        if src is not None and src.power is not None:
            parts.append(f"power={_fmt_power(src.power)}")
        else:
            parts.append(f"rabi={_fmt_angular(d.rabi)}")
        parts.append(f"detuning={_fmt_angular(d.detuning)}")
        if src is not None and src.kind == "horn":
            parts += [f"gain={src.gain!r}", f"distance={_fmt_length(src.distance)}",
                      f"cell_factor={src.cell_factor!r}"]
        elif src is not None:
            parts.append(f"fwhm={_fmt_length(src.fwhm)}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def serialize_config(cfg: SchemeConfig) -> str:
    out = [serialize_scheme(cfg.scheme)]
    if cfg.scan is not None:
        sc = cfg.scan
        out += ["[scan]", f"x = {sc.x_kind} from={_fmt_angular(sc.x_start)} "
                          f"to={_fmt_angular(sc.x_stop)} points={sc.x_points}"]
        if sc.y_kind == "probe_transmission_only":
            out.append("y = probe_transmission_only")
        else:
            fmt = _fmt_power if sc.y_kind == "rf_power_sweep" else _fmt_angular
            out.append(f"y = {sc.y_kind} drive={sc.y_drive} from={fmt(sc.y_start)} "
                       f"to={fmt(sc.y_stop)} points={sc.y_points} scale={sc.y_scale}")
        out.append("")
    v = cfg.vapor
    out += ["[vapor]", f"temperature={v.temperature!r}K cell_length={_fmt_length(v.cell_length)} "
                       f"isotope_fraction={v.isotope_fraction!r}", "", "[doppler]"]
    d = cfg.doppler
    poles = "on" if d.pole_subtraction else "off"
    out.append(f"span={d.span!r} points={d.points} poles={poles}" if d.enabled else "off")
    return "\n".join(out) + "\n"
