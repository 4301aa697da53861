"""Trajectory engine: stochastic evolution, enforced jumps, g2 estimation.

The engine advances the truncated conditional state in segments between
discrete events (atom arrival, atom exit, enforced cavity jump), each
segment integrated by the numba kernel with a frozen atom set.  All engine
times are in units of 1/kappa; the beam bookkeeping stays in SI seconds.

Correlation estimate: cavity jumps are enforced at regular sample times t_k;
g2(tau) = mean_k[n(t_k) n(t_k+tau)] / mean_l[n(t_l)]^2 with the denominator
times t_l restricted to fall outside an exclusion window after each t_k.
Reported standard errors come from the scatter of the numerator samples
only; the denominator samples are strongly correlated between steps and
contribute negligibly for long runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .beam import _create_atoms, make_beam
from .params import ConfigError, PhysicalParameters, derive
from .state import TRUNCATION_LEVELS, TruncatedState

MODES = ("full-quantum", "semiclassical", "semiclassical-adiabatic")


class ResourceCapError(RuntimeError):
    """Atom count exceeded the configured cap."""


class JumpProbabilityError(RuntimeError):
    """Per-step jump probability reached one: dt too large."""


@dataclass(frozen=True)
class TrajectoryConfig:
    duration: float                  # total simulated time (1/kappa), warmup included
    dt: float | None = None          # integrator step (1/kappa); None = auto
    sample_spacing: float = 50.0     # enforced-jump interval (1/kappa)
    exclusion_window: float | None = None  # None = 10 correlation decay times
    warmup: float | None = None      # None = from transit/decay times
    tau_max: float = 6.0
    n_tau: int = 121
    veto_max_jumps: int | None = None
    veto_window: float = 0.0
    seed: int = 0
    mode: str = "full-quantum"
    speed_scale: float = 1.0
    max_atoms: int = 512
    workers: int = 1
    fixed_atoms: tuple | None = None  # ((x,y,z), ...) m; disables the beam
    fixed_velocities: tuple | None = None  # optional ((vx,vy,vz), ...) m/s
    series_stride: int = 10          # photon-number series subsampling
    collect_snapshots: bool = False  # record atom positions at sample times

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.duration <= 0 or (self.dt is not None and self.dt <= 0):
            raise ConfigError("duration and dt must be positive")
        if self.veto_max_jumps is not None and self.veto_max_jumps < 1:
            raise ConfigError("veto max_jumps must be >= 1")
        if self.tau_max <= 0 or self.n_tau < 2:
            raise ConfigError("need tau_max > 0 and n_tau >= 2")
        if not (0 < self.speed_scale <= 1.0):
            raise ConfigError("speed_scale must be in (0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def default_dt(params: PhysicalParameters) -> float:
    """Automatic step: resolves the vacuum Rabi period and grating transit."""
    d = derive(params)
    dt = 0.01
    if not d.overdamped:
        dt = min(dt, 2.0 * math.pi / (d.omega_rabi / params.kappa) / 25.0)
    if d.quarter_wave_time is not None:
        dt = min(dt, d.quarter_wave_time * params.kappa / 40.0)
    return dt


@dataclass
class Resolved:
    """Concrete integer-step schedule derived from a config + parameters."""
    dt: float
    spacing_steps: int
    excl_steps: int
    warmup_steps: int
    total_steps: int
    tau_offsets: np.ndarray          # integer step offsets of the tau grid
    tau: np.ndarray                  # = tau_offsets * dt


def resolve(params: PhysicalParameters, cfg: TrajectoryConfig) -> Resolved:
    d = derive(params)
    dt = cfg.dt if cfg.dt is not None else default_dt(params)
    decay_k = d.decay_time * params.kappa
    excl = cfg.exclusion_window if cfg.exclusion_window is not None \
        else 10.0 * decay_k
    if cfg.warmup is not None:
        warmup = cfg.warmup
    else:
        transit_k = (2.0 * params.geometry().half_span * params.kappa
                     / (d.v_oven * cfg.speed_scale * math.cos(params.tilt)))
        warmup = max(5.0 * decay_k, 2.0 * transit_k) \
            if cfg.fixed_atoms is None else 5.0 * decay_k
    if cfg.mode == "full-quantum" and \
            cfg.sample_spacing <= cfg.tau_max + excl:
        raise ConfigError("sample_spacing must exceed tau_max + exclusion_window")
    offsets = np.unique(np.rint(
        np.linspace(0.0, cfg.tau_max, cfg.n_tau) / dt).astype(np.int64))
    return Resolved(
        dt=dt,
        spacing_steps=max(1, int(round(cfg.sample_spacing / dt))),
        excl_steps=int(round(excl / dt)),
        warmup_steps=int(round(warmup / dt)),
        total_steps=int(round(cfg.duration / dt)),
        tau_offsets=offsets,
        tau=offsets * dt,
    )


@dataclass
class G2Estimate:
    tau: np.ndarray
    g2: np.ndarray
    stderr: np.ndarray
    n_samples: int
    mean_n: float                    # denominator mean photon number
    num_sum: np.ndarray
    num_sumsq: np.ndarray
    den_sum: float
    den_sumsq: float
    den_count: int
    events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    @staticmethod
    def merge(parts: list["G2Estimate"]) -> "G2Estimate":
        tau = parts[0].tau
        num_sum = sum(p.num_sum for p in parts)
        num_sumsq = sum(p.num_sumsq for p in parts)
        k = sum(p.n_samples for p in parts)
        den_sum = sum(p.den_sum for p in parts)
        den_sumsq = sum(p.den_sumsq for p in parts)
        den_count = sum(p.den_count for p in parts)
        events = [e for p in parts for e in p.events]
        snapshots = [s for p in parts for s in p.snapshots]
        return _finalize(tau, num_sum, num_sumsq, k, den_sum, den_sumsq,
                         den_count, events, snapshots)


def _finalize(tau, num_sum, num_sumsq, k, den_sum, den_sumsq, den_count,
              events, snapshots=None) -> G2Estimate:
    if k < 1 or den_count < 1:
        raise RuntimeError("no correlation samples accumulated "
                           "(duration too short for warmup + spacing)")
    mean_n = den_sum / den_count
    m = num_sum / k
    var = np.maximum(num_sumsq / k - m**2, 0.0) * (k / max(k - 1, 1))
    sem = np.sqrt(var / k)
    return G2Estimate(tau=tau, g2=m / mean_n**2, stderr=sem / mean_n**2,
                      n_samples=k, mean_n=mean_n, num_sum=num_sum,
                      num_sumsq=num_sumsq, den_sum=den_sum,
                      den_sumsq=den_sumsq, den_count=den_count, events=events,
                      snapshots=snapshots or [])


@dataclass
class SemiclassicalSeries:
    t: np.ndarray                    # 1/kappa, subsampled
    n: np.ndarray                    # photon-number expectation
    dt: float                        # spacing of the series


class Engine:
    """One trajectory realization; see module docstring for the scheme."""

    def __init__(self, params: PhysicalParameters, cfg: TrajectoryConfig,
                 seed_key=None, log_beam_events: bool = False):
        self.p = params
        self.d = derive(params)
        self.cfg = cfg
        self.res = resolve(params, cfg)
        if cfg.mode != "full-quantum":
            truncation = "one-quantum"
        else:
            truncation = params.truncation
        self.level = TRUNCATION_LEVELS[truncation]
        self.rng = np.random.default_rng(
            np.random.SeedSequence(seed_key if seed_key is not None
                                   else cfg.seed))
        self.state = TruncatedState(truncation, max_atoms=None)
        self.atoms: dict[int, object] = {}
        self.exit_steps: dict[int, int] = {}
        self.step = 0
        self.events: list[tuple] = []
        self.veto_times = np.full(max(cfg.veto_max_jumps or 1, 1), -np.inf)
        geom = params.geometry()
        self._kargs = dict(
            kwave=geom.k_wave,
            inv_w0sq=1.0 / params.w0**2,
            gmax_k=params.g_max / params.kappa,
            is_ring=params.cavity_kind == "ring",
            e=params.drive / params.kappa,
            ck=1.0 + 1j * params.delta_c / params.kappa,
            ca=params.gamma / (2 * params.kappa)
            + 1j * params.delta_a / params.kappa,
            gamma_k=params.gamma / params.kappa,
        )
        self.dt_s = self.res.dt / params.kappa
        if cfg.fixed_atoms is not None:
            self.beam = None
            self.next_arrival_step = None
            from .beam import Atom
            vels = cfg.fixed_velocities or [(0.0, 0.0, 0.0)] * len(cfg.fixed_atoms)
            if len(vels) != len(cfg.fixed_atoms):
                raise ConfigError("fixed_velocities must match fixed_atoms")
            for pos, vel in zip(cfg.fixed_atoms, vels):
                atom = Atom(id=len(self.atoms), birth_time=0.0,
                            position=np.array(pos, dtype=float),
                            velocity=np.array(vel, dtype=float))
                self._admit(atom)
        else:
            self.beam = make_beam(params, self.rng, cfg.speed_scale,
                                  log_events=log_beam_events)
            self.next_arrival_step = self._draw_arrival_step()

    # -- atom lifecycle ---------------------------------------------------
    def _admit(self, atom):
        if len(self.atoms) + 1 > self.cfg.max_atoms:
            raise ResourceCapError(
                f"atom count would exceed max_atoms={self.cfg.max_atoms}")
        self.atoms[atom.id] = atom
        self.state.add_atom(atom.id)
        if atom.velocity[0] > 0:
            h = self.p.geometry().half_span
            t_exit_s = (h - atom.position[0]) / atom.velocity[0]
            self.exit_steps[atom.id] = self.step + max(
                1, int(math.ceil(t_exit_s / self.dt_s)))

    def _draw_arrival_step(self):
        gap_s = self.rng.exponential(1.0 / self.beam.rate)
        return self.step + max(1, int(math.ceil(
            (self._pending_birth_gap(gap_s)) / self.dt_s)))

    def _pending_birth_gap(self, gap_s):
        # remember the exact birth time for fractional advance
        self._birth_s = self.step * self.dt_s + gap_s
        return gap_s

    def _arrivals_due(self):
        while self.next_arrival_step is not None \
                and self.next_arrival_step <= self.step:
            self.beam.time = self.step * self.dt_s
            atoms = _create_atoms(self.beam, np.array([self._birth_s]),
                                  self.beam.time)
            self._admit(atoms[0])
            gap_s = self.rng.exponential(1.0 / self.beam.rate)
            self.next_arrival_step = self.step + max(1, int(math.ceil(
                (self._birth_s + gap_s - self.step * self.dt_s) / self.dt_s)))
            self._birth_s = self._birth_s + gap_s

    def _exits_due(self):
        due = [aid for aid, s in self.exit_steps.items() if s <= self.step]
        for aid in sorted(due, key=lambda a: self.exit_steps[a]):
            atom = self.atoms.pop(aid)
            del self.exit_steps[aid]
            excited = self.state.remove_atom(aid, self.rng)
            if self.beam is not None:
                self.beam.atoms = [a for a in self.beam.atoms if a.id != aid]
                if self.beam.event_log is not None:
                    self.beam.event_log.append(
                        (self.step * self.dt_s, "exit", aid, *atom.position,
                         atom.speed, self.p.tilt))
            if excited:
                self.events.append((self.step * self.res.dt, "exit-emission",
                                    aid, 0))

    def _next_exit_step(self):
        return min(self.exit_steps.values(), default=None)

    # -- segment integration ----------------------------------------------
    def run_steps(self, n_steps: int, do_jumps: bool) -> np.ndarray:
        """Integrate n_steps with the current atom set; returns the per-step
        photon-number record (value at each step start)."""
        n = self.state.n_atoms
        order = self.state.ids
        xs = np.array([self.atoms[a].position[0] for a in order])
        zs = np.array([self.atoms[a].position[2] for a in order])
        dxs = np.array([self.atoms[a].velocity[0] for a in order]) * self.dt_s
        dzs = np.array([self.atoms[a].velocity[2] for a in order]) * self.dt_s
        eys = np.exp(-np.array([self.atoms[a].position[1] for a in order]) ** 2
                     * self._kargs["inv_w0sq"])
        n_out = np.empty(n_steps)
        cap = n_steps + 8 if do_jumps else 1
        events = np.empty((cap, 4))
        if do_jumps:
            kernels.seed_rng(int(self.rng.integers(1, 2**31 - 1)))
        ka = self._kargs
        n_ev, status = kernels.run_segment(
            self.state.vec, self.level, n, n_steps, self.res.dt,
            xs, zs, dxs, dzs, eys,
            ka["kwave"], ka["inv_w0sq"], ka["gmax_k"], ka["is_ring"],
            ka["e"], ka["ck"], ka["ca"], ka["gamma_k"],
            do_jumps,
            self.cfg.veto_max_jumps is not None, self.cfg.veto_window,
            self.veto_times,
            self.step * self.res.dt,
            n_out, events)
        if status == kernels.STATUS_PROB_OVERFLOW:
            raise JumpProbabilityError(
                "per-step jump probability reached 1; reduce dt")
        for i, aid in enumerate(order):
            self.atoms[aid].position[0] = xs[i]
            self.atoms[aid].position[2] = zs[i]
        for r in range(min(n_ev, cap)):
            t, kind, slot, vetoed = events[r]
            name = "forwards" if kind == kernels.EV_CAVITY else \
                f"side({order[int(slot)]})"
            self.events.append((t, name, -1 if kind == kernels.EV_CAVITY
                                else order[int(slot)], int(vetoed)))
        self.step += n_steps
        return n_out

    def _record_veto(self, t):
        m = len(self.veto_times)
        self.veto_times[:-1] = self.veto_times[1:]
        self.veto_times[m - 1] = t

    def enforced_jump(self):
        """Photon detection forced at a sample time; returns (n_pre, n_post)."""
        n_pre = self.state.photon_number()
        self.state.apply_cavity_jump()
        self._record_veto(self.step * self.res.dt)
        self.events.append((self.step * self.res.dt, "enforced", -1, 0))
        return n_pre, self.state.photon_number()

    def adiabatic_photon_record(self, n_steps: int) -> np.ndarray:
        """Instantaneous weak-field photon number from atom positions only."""
        p, ka = self.p, self._kargs
        t = np.arange(n_steps) * self.dt_s
        c_r = np.zeros(n_steps)
        for atom in self.atoms.values():
            x = atom.position[0] + atom.velocity[0] * t
            z = atom.position[2] + atom.velocity[2] * t
            env2 = np.exp(-2.0 * (x**2 + atom.position[1] ** 2)
                          * ka["inv_w0sq"])
            if ka["is_ring"]:
                g2 = 0.5 * ka["gmax_k"] ** 2 * env2
            else:
                g2 = ka["gmax_k"] ** 2 * np.cos(ka["kwave"] * z) ** 2 * env2
            c_r += g2 / ka["gamma_k"]
        for atom in self.atoms.values():
            atom.position += atom.velocity * (n_steps * self.dt_s)
        self.step += n_steps
        return (ka["e"]) ** 2 / (1.0 + 2.0 * c_r) ** 2


def _run_shard(params, cfg, res, seed_key, collect_series=False):
    """One independent trajectory worth cfg.duration of simulated time."""
    eng = Engine(params, cfg, seed_key=seed_key)
    full = cfg.mode == "full-quantum"
    adiabatic = cfg.mode == "semiclassical-adiabatic"
    if full and params.drive <= 0:
        raise ConfigError("full-quantum correlation runs require drive > 0")
    offs = res.tau_offsets
    n_tau = len(offs)
    num_sum = np.zeros(n_tau)
    num_sumsq = np.zeros(n_tau)
    k_samples = 0
    den_sum = den_sumsq = 0.0
    den_count = 0
    excl_until = res.warmup_steps
    pending = None                  # (s0, n_pre, buf, n_filled)
    next_enforced = res.warmup_steps + res.spacing_steps if full else None
    series_t = []
    series_n = []
    snapshots = []
    stride = max(1, cfg.series_stride)
    max_chunk = max(res.spacing_steps, 20000)
    while eng.step < res.total_steps:
        bounds = [res.total_steps, eng.step + max_chunk]
        if next_enforced is not None:
            bounds.append(next_enforced)
        if eng.next_arrival_step is not None:
            bounds.append(eng.next_arrival_step)
        ne = eng._next_exit_step()
        if ne is not None:
            bounds.append(ne)
        seg_end = min(bounds)
        if seg_end > eng.step:
            start = eng.step
            if adiabatic:
                n_out = eng.adiabatic_photon_record(seg_end - start)
            else:
                n_out = eng.run_steps(seg_end - start, do_jumps=full)
            if collect_series and start + len(n_out) > res.warmup_steps:
                i0 = max(res.warmup_steps - start, 0)
                i0 += (-(start + i0)) % stride
                sel = np.arange(i0, len(n_out), stride)
                series_t.append((start + sel) * res.dt)
                series_n.append(n_out[sel])
            if full:
                # numerator lags from the open enforced-jump window
                if pending is not None:
                    s0, n_pre, buf, filled = pending
                    idx = s0 + offs
                    sel = (idx >= start) & (idx < start + len(n_out))
                    buf[sel] = n_out[idx[sel] - start]
                    filled += int(sel.sum())
                    if idx[-1] < start + len(n_out):
                        prods = n_pre * buf
                        num_sum += prods
                        num_sumsq += prods**2
                        k_samples += 1
                        pending = None
                    else:
                        pending = (s0, n_pre, buf, filled)
                # denominator outside warmup and exclusion windows
                lo = max(excl_until, res.warmup_steps)
                if start + len(n_out) > lo:
                    den = n_out[max(lo - start, 0):]
                    den_sum += den.sum()
                    den_sumsq += (den**2).sum()
                    den_count += len(den)
        if eng.next_arrival_step is not None \
                and eng.next_arrival_step <= eng.step:
            eng._arrivals_due()
        if eng._next_exit_step() is not None \
                and eng._next_exit_step() <= eng.step:
            eng._exits_due()
        if next_enforced is not None and eng.step == next_enforced \
                and eng.step < res.total_steps:
            if cfg.collect_snapshots:
                snapshots.append(np.array(
                    [eng.atoms[a].position for a in eng.state.ids],
                    dtype=float).reshape(-1, 3))
            n_pre, n_post = eng.enforced_jump()
            buf = np.empty(n_tau)
            buf[0] = n_post
            pending = (eng.step, n_pre,
                       buf, 1) if offs[0] == 0 else (eng.step, n_pre, buf, 0)
            excl_until = eng.step + res.excl_steps
            next_enforced += res.spacing_steps
    if pending is not None and snapshots:
        # last enforced window ran past the end; its snapshot never
        # produced a numerator sample
        snapshots.pop()
    out = {
        "num_sum": num_sum, "num_sumsq": num_sumsq, "k": k_samples,
        "den_sum": den_sum, "den_sumsq": den_sumsq, "den_count": den_count,
        "events": eng.events, "snapshots": snapshots,
    }
    if collect_series:
        out["t"] = np.concatenate(series_t) if series_t else np.empty(0)
        out["n"] = np.concatenate(series_n) if series_n else np.empty(0)
    return out


def run_g2(params: PhysicalParameters, cfg: TrajectoryConfig) -> G2Estimate:
    """Enforced-jump correlation estimate, optionally over parallel shards.

    With workers > 1 the duration is split into independent trajectories
    (each with its own warmup) whose accumulators are merged; results are
    deterministic in (seed, workers).
    """
    res = resolve(params, cfg)
    if cfg.mode != "full-quantum":
        raise ConfigError("run_g2 requires mode=full-quantum")
    shards = cfg.workers
    shard_cfg = cfg if shards == 1 else replace(
        cfg, duration=cfg.duration / shards)
    shard_res = resolve(params, shard_cfg)
    keys = [(cfg.seed, i) for i in range(shards)]
    if shards == 1:
        outs = [_run_shard(params, shard_cfg, shard_res, keys[0])]
    else:
        import multiprocessing as mp
        with mp.Pool(min(shards, mp.cpu_count())) as pool:
            outs = pool.starmap(
                _shard_entry, [(params, shard_cfg, shard_res, k) for k in keys])
    parts = [G2Estimate(tau=shard_res.tau, g2=np.zeros_like(shard_res.tau),
                        stderr=np.zeros_like(shard_res.tau),
                        n_samples=o["k"], mean_n=0.0, num_sum=o["num_sum"],
                        num_sumsq=o["num_sumsq"], den_sum=o["den_sum"],
                        den_sumsq=o["den_sumsq"], den_count=o["den_count"],
                        events=o["events"],
                        snapshots=o["snapshots"]) for o in outs]
    return G2Estimate.merge(parts)


def _shard_entry(params, cfg, res, key):
    return _run_shard(params, cfg, res, key)


def run_semiclassical(params: PhysicalParameters,
                      cfg: TrajectoryConfig) -> SemiclassicalSeries:
    """Photon-number record without jumps (one-quantum or adiabatic mode)."""
    if cfg.mode == "full-quantum":
        raise ConfigError("run_semiclassical needs a semiclassical mode")
    res = resolve(params, cfg)
    out = _run_shard(params, cfg, res, (cfg.seed, 0), collect_series=True)
    stride_dt = res.dt * max(1, cfg.series_stride)
    return SemiclassicalSeries(t=out["t"], n=out["n"], dt=stride_dt)
