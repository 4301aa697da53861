"""Experiment parameter sets, derived constants and cavity-mode geometry.

All quantities here are SI (rad/s, m, s, K, kg).  The numeric engine works
in units of the cavity halfwidth kappa; conversion happens at its boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .constants import K_B, SPECIES_BY_WAVELENGTH_NM, species_mass_kg

TWO_PI = 2.0 * math.pi

CAVITY_KINDS = ("standing-wave", "ring")
TRUNCATIONS = ("one-quantum", "two-quanta", "three-quanta")


class ConfigError(ValueError):
    """Malformed configuration file or invalid parameter values."""


@dataclass(frozen=True)
class PhysicalParameters:
    """Full set of experiment constants plus run knobs (tilt, drive, cutoff)."""

    kappa: float           # cavity field halfwidth (rad/s)
    gamma: float           # atomic linewidth (rad/s)
    g_max: float           # peak dipole coupling (rad/s)
    w0: float              # mode waist (m)
    wavelength: float      # (m); config key "lambda"
    n_eff_bar: float       # effective atom number
    T: float               # oven temperature (K)
    M: float               # atomic mass (kg)
    drive: float = 0.0     # driving amplitude (rad/s)
    tilt: float = 0.0      # beam tilt from perpendicular (rad)
    F: float = 0.01        # interaction-volume cutoff
    cavity_kind: str = "standing-wave"
    delta_c: float = 0.0   # cavity detuning from the drive (rad/s)
    delta_a: float = 0.0   # atomic detuning from the drive (rad/s)
    truncation: str = "two-quanta"

    def __post_init__(self):
        for name in ("kappa", "gamma", "g_max", "w0", "wavelength", "T", "M"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not (0.0 < self.F < 1.0):
            raise ConfigError("F must satisfy 0 < F < 1")
        if self.n_eff_bar <= 0:
            raise ConfigError("n_eff_bar must be positive")
        if self.drive < 0:
            raise ConfigError("drive must be non-negative")
        if abs(self.tilt) >= math.pi / 2:
            raise ConfigError("|tilt| must be below pi/2")
        if self.cavity_kind not in CAVITY_KINDS:
            raise ConfigError(f"cavity_kind must be one of {CAVITY_KINDS}")
        if self.truncation not in TRUNCATIONS:
            raise ConfigError(f"truncation must be one of {TRUNCATIONS}")

    @property
    def k_wave(self) -> float:
        return TWO_PI / self.wavelength

    def geometry(self) -> "ModeGeometry":
        return ModeGeometry(w0=self.w0, wavelength=self.wavelength,
                            F=self.F, kind=self.cavity_kind)


@dataclass(frozen=True)
class ModeGeometry:
    w0: float
    wavelength: float
    F: float
    kind: str = "standing-wave"

    @property
    def half_span(self) -> float:
        """Half side of the square interaction cross section, w0*sqrt(|ln F|)."""
        return self.w0 * math.sqrt(abs(math.log(self.F)))

    @property
    def k_wave(self) -> float:
        return TWO_PI / self.wavelength


@dataclass(frozen=True)
class DerivedQuantities:
    xi: float                 # 2 kappa / gamma
    c1: float                 # g_max^2 / (kappa gamma)
    two_c: float              # 2 n_eff_bar c1
    antibunch_scale: float    # 2 c1 xi / (1 + xi)
    omega_rabi: float         # vacuum Rabi frequency (rad/s); NaN if overdamped
    overdamped: bool
    decay_time: float         # 2 (kappa + gamma/2)^-1 (s)
    v_oven: float             # mean speed in the oven (m/s)
    v_beam: float             # mean speed in the beam (m/s)
    rate_R: float             # effusive source rate (1/s)
    transit_time: float       # w0 / v_oven (s)
    quarter_wave_time: float | None  # lambda / (4 v_oven sin tilt); None at tilt 0


def mean_speeds(T: float, M: float) -> tuple[float, float]:
    """Mean atomic speed in the oven and in the beam (flux weighted)."""
    if T <= 0 or M <= 0:
        raise ValueError("T and M must be positive")
    v_beam = math.sqrt(9.0 * math.pi * K_B * T / (8.0 * M))
    v_oven = (8.0 / (3.0 * math.pi)) * v_beam
    return v_oven, v_beam


def source_rate(n_eff_bar: float, v_beam: float, w0: float) -> float:
    """Average escape rate of the effusive source (1/s)."""
    return 64.0 * n_eff_bar * v_beam / (3.0 * math.pi**2 * w0)


def beam_density(n_eff_bar: float, w0: float, l: float) -> float:
    """Atomic density of the beam for beam width l (1/m^3)."""
    return 4.0 * n_eff_bar / (math.pi * w0**2 * l)


def effective_fraction(F) -> float:
    """Collective-coupling fraction captured by the cutoff volume, Neff^F/Neff."""
    F = np.asarray(F, dtype=float)
    if np.any(F < 0) or np.any(F > 1):
        raise ValueError("F must lie in [0, 1]")
    out = (2.0 / np.pi) * ((1.0 - 2.0 * F**2) * np.arccos(F)
                           + F * np.sqrt(1.0 - F**2))
    return float(out) if out.ndim == 0 else out


def coupling(position, geom: ModeGeometry, g_max: float):
    """Dipole coupling constant at a position (vectorized over leading axes).

    Standing wave: g_max cos(kz) exp(-(x^2+y^2)/w0^2), real.
    Ring: (g_max/sqrt(2)) e^{ikz} exp(-(x^2+y^2)/w0^2), complex; the sqrt(2)
    keeps the collective coupling strength unchanged.
    """
    pos = np.asarray(position, dtype=float)
    x, y, z = pos[..., 0], pos[..., 1], pos[..., 2]
    envelope = np.exp(-(x**2 + y**2) / geom.w0**2)
    kz = geom.k_wave * z
    if geom.kind == "ring":
        g = (g_max / math.sqrt(2.0)) * np.exp(1j * kz) * envelope
    else:
        g = g_max * np.cos(kz) * envelope
    return complex(g) if g.ndim == 0 else g


def derive(params: PhysicalParameters) -> DerivedQuantities:
    """All derived constants; pure and deterministic."""
    p = params
    xi = 2.0 * p.kappa / p.gamma
    c1 = p.g_max**2 / (p.kappa * p.gamma)
    omega_sq = p.n_eff_bar * p.g_max**2 - 0.25 * (p.kappa - p.gamma / 2.0) ** 2
    overdamped = omega_sq < 0.0
    v_oven, v_beam = mean_speeds(p.T, p.M)
    qwt = None
    if p.tilt != 0.0:
        qwt = p.wavelength / (4.0 * v_oven * abs(math.sin(p.tilt)))
    return DerivedQuantities(
        xi=xi,
        c1=c1,
        two_c=2.0 * p.n_eff_bar * c1,
        antibunch_scale=2.0 * c1 * xi / (1.0 + xi),
        omega_rabi=math.sqrt(omega_sq) if not overdamped else float("nan"),
        overdamped=overdamped,
        decay_time=2.0 / (p.kappa + p.gamma / 2.0),
        v_oven=v_oven,
        v_beam=v_beam,
        rate_R=source_rate(p.n_eff_bar, v_beam, p.w0),
        transit_time=p.w0 / v_oven,
        quarter_wave_time=qwt,
    )


# ---------------------------------------------------------------------------
# presets and key=value configuration files
# ---------------------------------------------------------------------------

def _preset(kappa_mhz, g_over_k, gamma_over_k, w0, wavelength, n_eff, T,
            drive_over_k=2.5e-2):
    kappa = TWO_PI * kappa_mhz * 1e6
    species = SPECIES_BY_WAVELENGTH_NM[round(wavelength * 1e9)]
    return PhysicalParameters(
        kappa=kappa,
        gamma=gamma_over_k * kappa,
        g_max=g_over_k * kappa,
        w0=w0,
        wavelength=wavelength,
        n_eff_bar=n_eff,
        T=T,
        M=species_mass_kg(species),
        drive=drive_over_k * kappa,
    )


#: Table-style presets for the two experiments the simulator reproduces.
PRESETS = {
    "set1": _preset(0.9, 3.56, 5.56, 50e-6, 852e-9, 18.0, 473.0),
    "set2": _preset(7.9, 1.47, 0.77, 21.5e-6, 780e-9, 13.0, 430.0),
}

_FLOAT_KEYS = {
    "kappa", "gamma", "g_max", "w0", "lambda", "n_eff_bar", "T", "M",
    "drive", "tilt", "F", "delta_c", "delta_a",
}
_STR_KEYS = {"cavity_kind", "truncation"}
_KEY_TO_FIELD = {"lambda": "wavelength"}


def parse_kv(text: str) -> dict[str, str]:
    """Parse flat key=value text with '#' comments."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def params_from_kv(kv: dict[str, str], ignore_unknown: frozenset[str] = frozenset()) -> PhysicalParameters:
    """Build PhysicalParameters from parsed key=value pairs.

    A 'preset' key selects a base parameter set that other keys override.
    Unknown keys are errors unless listed in ignore_unknown.
    """
    kv = dict(kv)
    base = None
    if "preset" in kv:
        name = kv.pop("preset")
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}")
        base = PRESETS[name]
    overrides = {}
    for key, value in kv.items():
        if key in ignore_unknown:
            continue
        if key in _FLOAT_KEYS:
            try:
                parsed = float(value)
            except ValueError as exc:
                raise ConfigError(f"key {key!r}: not a number: {value!r}") from exc
        elif key in _STR_KEYS:
            parsed = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
        overrides[_KEY_TO_FIELD.get(key, key)] = parsed
    if base is not None:
        return replace(base, **overrides)
    try:
        return PhysicalParameters(**overrides)
    except TypeError as exc:
        raise ConfigError(f"incomplete parameter set: {exc}") from exc


def params_to_kv(params: PhysicalParameters) -> dict[str, str]:
    """Inverse of params_from_kv up to float formatting (repr round-trips)."""
    field_to_key = {v: k for k, v in _KEY_TO_FIELD.items()}
    out = {}
    for f in fields(params):
        key = field_to_key.get(f.name, f.name)
        value = getattr(params, f.name)
        out[key] = value if isinstance(value, str) else repr(value)
    return out


def load_params(path) -> PhysicalParameters:
    with open(path) as fh:
        return params_from_kv(parse_kv(fh.read()))
