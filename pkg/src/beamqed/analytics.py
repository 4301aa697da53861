"""Closed-form stationary-atom correlation functions and their averages.

The fixed-configuration second-order correlation function is a perfect
square,

    g2(tau) = {1 - A exp[-(kappa+gamma/2)tau/2]
                   [cos(W tau) + ((kappa+gamma/2)/2W) sin(W tau)]}^2,

with the oscillation amplitude A set either by the ideal all-antinode
coupling or by the actual couplings of a spatial configuration.  When the
collective coupling is too weak the vacuum Rabi frequency W is imaginary
and the bracket continues analytically to cosh/sinh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import PhysicalParameters, coupling, derive


@dataclass(frozen=True)
class AtomConfiguration:
    """Frozen set of atom positions with their derived couplings."""
    positions: np.ndarray          # (N, 3) m
    couplings: np.ndarray          # complex g_j (rad/s)
    c1j: np.ndarray                # per-atom cooperativity |g_j|^2/kappa gamma
    c_sum: float                   # sum of c1j
    n_eff: float                   # sum |g_j|^2 / g_max^2

    @property
    def n_atoms(self) -> int:
        return len(self.c1j)


def make_configuration(positions, params: PhysicalParameters) -> AtomConfiguration:
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    g = np.atleast_1d(coupling(pos, params.geometry(), params.g_max)) \
        if len(pos) else np.empty(0, dtype=complex)
    c1j = np.abs(g) ** 2 / (params.kappa * params.gamma)
    return AtomConfiguration(
        positions=pos, couplings=np.atleast_1d(np.asarray(g, dtype=complex)),
        c1j=c1j, c_sum=float(c1j.sum()),
        n_eff=float(np.sum(np.abs(g) ** 2) / params.g_max**2))


@dataclass(frozen=True)
class G2Curve:
    tau_kappa: np.ndarray
    tau_ns: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if np.any(self.values < -1e-12):
            raise ValueError("correlation values must be non-negative")


def tau_grid(tau_max: float = 6.0, n: int = 200) -> np.ndarray:
    return np.linspace(0.0, tau_max, n)


def _envelope(tau_k, xi, omega_sq_k):
    """exp decay times the oscillation bracket; tau and rates in kappa units."""
    d = 1.0 + 1.0 / xi            # (kappa + gamma/2)/kappa
    decay = np.exp(-0.5 * d * tau_k)
    if omega_sq_k > 0:
        w = math.sqrt(omega_sq_k)
        osc = np.cos(w * tau_k) + (0.5 * d / w) * np.sin(w * tau_k)
    elif omega_sq_k < 0:
        w = math.sqrt(-omega_sq_k)
        osc = np.cosh(w * tau_k) + (0.5 * d / w) * np.sinh(w * tau_k)
    else:
        osc = 1.0 + 0.5 * d * tau_k
    return decay * osc


def _curve(tau_k, amplitude, xi, omega_sq_k, kappa) -> G2Curve:
    tau_k = np.asarray(tau_k, dtype=float)
    vals = (1.0 - amplitude * _envelope(tau_k, xi, omega_sq_k)) ** 2
    return G2Curve(tau_kappa=tau_k, tau_ns=tau_k / kappa * 1e9, values=vals)


def _omega_sq_k(params, n_eff) -> float:
    p = params
    return (n_eff * (p.g_max / p.kappa) ** 2
            - 0.25 * (1.0 - p.gamma / (2 * p.kappa)) ** 2)


def g2_ideal(params: PhysicalParameters, tau_k) -> G2Curve:
    """All atoms maximally coupled; amplitude set by 2C1 xi/(1+xi)."""
    d = derive(params)
    amp = d.antibunch_scale * d.two_c / (1.0 + d.two_c - d.antibunch_scale)
    return _curve(tau_k, amp, d.xi, _omega_sq_k(params, params.n_eff_bar),
                  params.kappa)


def fixed_amplitude(config: AtomConfiguration, params: PhysicalParameters) -> float:
    """Oscillation amplitude for an arbitrary fixed configuration."""
    xi = derive(params).xi
    c = config.c_sum
    s = float(np.sum(2.0 * config.c1j
                     / (1.0 + xi * (1.0 + c) - 2.0 * xi * config.c1j)))
    return ((1.0 + xi * (1.0 + c)) * s - 2.0 * c) / (1.0 + (1.0 + xi / 2.0) * s)


def g2_fixed(config: AtomConfiguration, params: PhysicalParameters,
             tau_k) -> G2Curve:
    d = derive(params)
    return _curve(tau_k, fixed_amplitude(config, params), d.xi,
                  _omega_sq_k(params, config.n_eff), params.kappa)


def weak_field_photon_number(config: AtomConfiguration,
                             params: PhysicalParameters) -> float:
    """Stationary photon expectation (E/kappa)^2/(1+2C)^2."""
    return (params.drive / params.kappa) ** 2 / (1.0 + 2.0 * config.c_sum) ** 2


def sample_configuration(params: PhysicalParameters,
                         rng: np.random.Generator) -> AtomConfiguration:
    """One stationary-atom draw in the cylindrical cutoff volume.

    N is Poisson with mean density x volume = 4 n_eff_bar |ln F|; transverse
    positions are uniform over the disk of radius w0 sqrt(|ln F|) and the
    axial position uniform over one wavelength.
    """
    h = params.geometry().half_span
    n = rng.poisson(4.0 * params.n_eff_bar * abs(math.log(params.F)))
    r = h * np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    pos = np.column_stack([r * np.cos(phi), r * np.sin(phi),
                           rng.uniform(0.0, params.wavelength, n)])
    return make_configuration(pos, params)


def g2_mc_average(params: PhysicalParameters, scheme: str, n_samples: int,
                  rng: np.random.Generator, tau_k) -> G2Curve:
    """Stationary-atom Monte-Carlo average over configurations.

    naive: plain mean of the per-configuration correlation functions.
    weighted: coincidence-rate average, weighting each configuration by its
    squared photon number and normalizing by the squared mean photon number;
    this is the procedure matching how measurements are normalized and
    yields a tau->infinity limit above one.
    """
    if scheme not in ("naive", "weighted"):
        raise ValueError(f"unknown averaging scheme {scheme!r}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    tau_k = np.asarray(tau_k, dtype=float)
    d = derive(params)
    acc = np.zeros_like(tau_k)
    wsum = 0.0
    nsum = 0.0
    for _ in range(n_samples):
        cfg = sample_configuration(params, rng)
        vals = _curve(tau_k, fixed_amplitude(cfg, params), d.xi,
                      _omega_sq_k(params, cfg.n_eff), params.kappa).values
        if scheme == "naive":
            acc += vals
            wsum += 1.0
        else:
            n_r = 1.0 / (1.0 + 2.0 * cfg.c_sum) ** 2  # (E/kappa)^2 cancels
            acc += n_r**2 * vals
            nsum += n_r
            wsum = 1.0
    if scheme == "naive":
        vals = acc / wsum
    else:
        vals = acc * n_samples / nsum**2
    return G2Curve(tau_kappa=tau_k, tau_ns=tau_k / params.kappa * 1e9,
                   values=vals)


def g2_semiclassical(series, tau_max: float) -> G2Curve:
    """Normalized photon-number autocorrelation of a jump-free record."""
    n = np.asarray(series.n, dtype=float)
    lags = int(round(tau_max / series.dt))
    if len(n) < 2 * max(lags, 1):
        raise ValueError("series too short for the requested lag span")
    mean = n.mean()
    vals = np.empty(lags + 1)
    for l in range(lags + 1):
        vals[l] = np.mean(n[: len(n) - l] * n[l:]) / mean**2
    tau_k = series.dt * np.arange(lags + 1)
    return G2Curve(tau_kappa=tau_k, tau_ns=tau_k * np.nan, values=vals)


@dataclass(frozen=True)
class PhotonHistogram:
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    prob: np.ndarray
    mean: float
    rel_variance: float            # Var[n]/mean^2


def photon_histogram(series, bins: int = 50) -> PhotonHistogram:
    n = np.asarray(series.n, dtype=float)
    if len(n) == 0:
        raise ValueError("empty series")
    if bins < 2:
        raise ValueError("need at least 2 bins")
    counts, edges = np.histogram(n, bins=bins)
    mean = n.mean()
    return PhotonHistogram(bin_lo=edges[:-1], bin_hi=edges[1:],
                           prob=counts / counts.sum(), mean=mean,
                           rel_variance=float(n.var() / mean**2))


@dataclass(frozen=True)
class ScatteringDiagnostics:
    r_forwards: float              # photons/s out the cavity mirror
    r_side: float                  # photons/s spontaneously emitted
    ratio: float                   # r_side/r_forwards = 2C
    weak_field_bound: float        # photon number must sit well below this


def scattering_diagnostics(config: AtomConfiguration,
                           params: PhysicalParameters) -> ScatteringDiagnostics:
    n_ph = weak_field_photon_number(config, params)
    r_fwd = 2.0 * params.kappa * n_ph
    ratio = 2.0 * config.c_sum
    d = derive(params)
    bound = (1.0 + params.gamma / (2 * params.kappa)) / (4.0 * d.two_c)
    return ScatteringDiagnostics(r_forwards=r_fwd, r_side=ratio * r_fwd,
                                 ratio=ratio, weak_field_bound=bound)
