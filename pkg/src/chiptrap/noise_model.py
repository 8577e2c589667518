"""Johnson-noise heating of a trapped ion fed through an RC filter ladder.

The electrode is connected to an ideal (noiseless) voltage source through a
ladder of series resistors with shunt capacitors to ground, followed by an
unfiltered series resistance ``r3`` (tracks, bonds, electrode).  Seen from the
electrode, the source is a short circuit, so the ladder impedance is built up
stage by stage starting from zero.
"""

from __future__ import annotations

import configparser
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as ct

__all__ = ["NoiseChain", "HeatingEstimate", "RegimeWarning", "NoiseConfigError",
           "ladder_impedance", "effective_resistance_exact", "effective_resistance_approx",
           "johnson_psd", "heating_rate", "chain_report", "load_noise_config",
           "default_chain_config_text"]

AMU = ct.physical_constants["atomic mass constant"][0]


class RegimeWarning(UserWarning):
    """The closed-form effective resistance is used outside its validity regime."""


class NoiseConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseChain:
    """RC ladder from source to electrode.

    Parameters
    ----------
    stages : sequence of (R, C)
        Series resistance (ohm) and shunt capacitance (F), ordered from the
        source towards the electrode.
    r3 : float
        Unfiltered series resistance between the last filter and the electrode.
    r3_items : dict
        Optional itemization of ``r3`` (name -> ohm).  Kept separate from the
        stated total so rounding differences stay visible.
    temperature : float
        Kelvin.
    pairs : int
        Number of electrodes with uncorrelated noise acting on the ion.
    """

    stages: tuple = ()
    r3: float = 0.0
    r3_items: dict = field(default_factory=dict)
    temperature: float = 300.0
    pairs: int = 2

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple((float(r), float(c)) for r, c in self.stages))
        for r, c in self.stages:
            if r < 0 or c < 0:
                raise ValueError("stage resistance and capacitance must be >= 0")
        if self.r3 < 0 or any(v < 0 for v in self.r3_items.values()):
            raise ValueError("r3 and its items must be >= 0")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.pairs < 1:
            raise ValueError("pairs must be >= 1")

    @property
    def r3_itemized(self):
        return float(sum(self.r3_items.values()))

    @property
    def r3_discrepancy(self):
        """Stated ``r3`` minus the sum of its items (0 when no items are given)."""
        return self.r3 - self.r3_itemized if self.r3_items else 0.0

    def with_r3(self, r3):
        return NoiseChain(self.stages, r3, dict(self.r3_items), self.temperature, self.pairs)


def ladder_impedance(stages, omega):
    """Complex impedance of the filter ladder seen from its output, source shorted."""
    z = 0j
    for r, c in stages:
        z = z + r
        if c > 0:
            y_c = 1j * omega * c
            z = z / (1 + z * y_c)
    return z


def effective_resistance_exact(chain, omega):
    """Re Z(j omega) of the ladder plus ``r3`` in series (ohm)."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    return float(ladder_impedance(chain.stages, omega).real) + chain.r3


def effective_resistance_approx(r2, c2, omega, r1=None, c1=None):
    """Closed form R2 / ((omega R2 C2)^2 + 1) for the last filter stage.

    Valid when the upstream stage is negligible (``r1 << r2`` and ``c1 >> c2``).
    If ``r1``/``c1`` are given and the margin is below 100x a
    :class:`RegimeWarning` is emitted.
    """
    if r1 is not None and c1 is not None:
        if r1 * 100 > r2 or c2 * 100 > c1:
            warnings.warn(RegimeWarning(
                f"approximation assumes R1 << R2 and C1 >> C2 (got R1/R2={r1 / r2:.3g}, "
                f"C2/C1={c2 / c1:.3g})"), stacklevel=2)
    x = omega * r2 * c2
    return r2 / (x * x + 1.0)


def johnson_psd(r_eff, temperature):
    """Voltage-noise spectral density 4 k_B T R (V^2/Hz)."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    return 4.0 * ct.k * temperature * r_eff


def heating_rate(s_v, omega_sec, mass, distance, pairs=2, charge=1):
    """Phonon heating rate (1/s) from voltage noise on ``pairs`` electrodes.

    ``omega_sec`` is angular (rad/s), ``mass`` in kg, ``distance`` the
    characteristic distance D in metres and ``charge`` in elementary charges.
    """
    if omega_sec <= 0 or mass <= 0 or distance <= 0:
        raise ValueError("omega_sec, mass and distance must be positive")
    q = charge * ct.e
    return q * q / (4.0 * mass * ct.hbar * omega_sec) * pairs * s_v / distance ** 2


@dataclass(frozen=True)
class HeatingEstimate:
    r_eff_ladder: float
    r3: float
    r_eff: float
    s_v: float
    heating_rate: float
    omega_sec: float
    mass: float
    distance: float
    temperature: float
    pairs: int
    r_eff_approx: float | None = None
    r3_itemized: float | None = None
    warnings: tuple = ()

    def rows(self):
        rows = [("r_eff_ladder", "ohm", self.r_eff_ladder),
                ("r3", "ohm", self.r3),
                ("r_eff_total", "ohm", self.r_eff),
                ("s_v", "V^2/Hz", self.s_v),
                ("heating_rate", "1/s", self.heating_rate),
                ("omega_sec", "rad/s", self.omega_sec),
                ("mass", "kg", self.mass),
                ("distance", "m", self.distance),
                ("temperature", "K", self.temperature),
                ("pairs", "1", self.pairs)]
        if self.r_eff_approx is not None:
            rows.append(("r_eff_ladder_approx", "ohm", self.r_eff_approx))
        if self.r3_itemized is not None:
            rows.append(("r3_itemized", "ohm", self.r3_itemized))
        return rows

    def text(self):
        lines = [f"{name:>20s} = {value:.6g} {unit}" for name, unit, value in self.rows()]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def chain_report(chain, omega_sec, mass, distance, charge=1):
    """Run the full pipeline: ladder resistance, PSD, heating rate."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RegimeWarning)
        approx = None
        if chain.stages:
            r2, c2 = chain.stages[-1]
            r1, c1 = chain.stages[-2] if len(chain.stages) > 1 else (None, None)
            approx = effective_resistance_approx(r2, c2, omega_sec, r1, c1)
    msgs = [str(w.message) for w in caught]
    if chain.r3_items and abs(chain.r3_discrepancy) > 0:
        msgs.append(f"r3 = {chain.r3:.6g} ohm differs from its itemized sum "
                    f"{chain.r3_itemized:.6g} ohm by {chain.r3_discrepancy:.3g} ohm")
    r_ladder = float(ladder_impedance(chain.stages, omega_sec).real)
    r_eff = r_ladder + chain.r3
    s_v = johnson_psd(r_eff, chain.temperature)
    rate = heating_rate(s_v, omega_sec, mass, distance, chain.pairs, charge)
    return HeatingEstimate(r_ladder, chain.r3, r_eff, s_v, rate, omega_sec, mass, distance,
                           chain.temperature, chain.pairs, approx,
                           chain.r3_itemized if chain.r3_items else None, tuple(msgs))


# ------------------------------------------------------------------ config

def default_chain_config_text():
    from importlib import resources
    return resources.files("chiptrap.data").joinpath("noise_chain.ini").read_text()


def _pairs_list(text, key):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            out.append((a.strip(), float(b)))
        except ValueError as exc:
            raise NoiseConfigError(f"[noise] {key}: cannot parse {item!r}") from exc
    return out


def load_noise_config(text):
    """Parse a ``[noise]`` section into ``(chain, params)``.

    ``params`` holds ``omega_sec`` (rad/s), ``mass`` (kg), ``distance`` (m) and
    ``charge`` taken from the ``[noise]``/``[species]`` sections.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise NoiseConfigError(str(exc)) from exc
    if not cp.has_section("noise"):
        raise NoiseConfigError("missing [noise] section")
    sec = cp["noise"]

    def num(key, default=None):
        if key not in sec:
            if default is None:
                raise NoiseConfigError(f"[noise] missing key {key!r}")
            return default
        try:
            return float(sec[key])
        except ValueError as exc:
            raise NoiseConfigError(f"[noise] {key}: not a number: {sec[key]!r}") from exc

    stages = [(float(r), c) for r, c in _pairs_list(sec.get("stages", ""), "stages")] \
        if "stages" in sec else []
    items = dict(_pairs_list(sec.get("r3_items", ""), "r3_items"))
    try:
        chain = NoiseChain(stages=stages, r3=num("r3", 0.0), r3_items=items,
                           temperature=num("temperature", 300.0),
                           pairs=int(num("pairs", 2.0)))
    except ValueError as exc:
        raise NoiseConfigError(str(exc)) from exc
    freq = num("secular_frequency")
    mass_amu = 171.0
    charge = 1
    if cp.has_section("species"):
        mass_amu = float(cp["species"].get("mass", mass_amu))
        charge = int(cp["species"].get("charge", charge))
    params = dict(omega_sec=2 * np.pi * freq, mass=mass_amu * AMU,
                  distance=num("characteristic_distance") * 1e-3, charge=charge)
    if params["omega_sec"] <= 0 or params["distance"] <= 0:
        raise NoiseConfigError("secular_frequency and characteristic_distance must be positive")
    return chain, params
