"""Command-line front end.

Three subcommands share a common configuration pipeline (preset or key=value
config file, plus --set overrides):

  analytic      closed-form and Monte-Carlo averaged correlation curves
  simulate      trajectory runs: correlation, semiclassical records, beam stats
  oracle-check  trajectory engine vs independent references, with tolerances

Exit codes: 0 ok, 1 tolerance failure, 2 usage/config error, 3 resource cap.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analytics as an
from . import io as bio
from .beam import advance, collect_exits, little_number, make_beam, spawn
from .dense import OracleError, dense_g2
from .params import (ConfigError, PRESETS, _FLOAT_KEYS, _STR_KEYS, derive,
                     params_from_kv, parse_kv)
from .trajectory import (JumpProbabilityError, ResourceCapError,
                         TrajectoryConfig, run_g2, run_semiclassical)

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3

PARAM_KEYS = _FLOAT_KEYS | _STR_KEYS | {"preset"}
TRAJ_FLOAT = {"duration", "dt", "sample_spacing", "exclusion_window",
              "warmup", "tau_max", "veto_window", "speed_scale"}
TRAJ_INT = {"n_tau", "veto_max_jumps", "seed", "max_atoms", "workers",
            "series_stride"}
TRAJ_STR = {"mode", "fixed_atoms", "fixed_velocities"}
TRAJ_BOOL = {"collect_snapshots"}
RUN_KEYS = TRAJ_FLOAT | TRAJ_INT | TRAJ_STR | TRAJ_BOOL
META_KEYS = {"tool_version", "content_hash", "command", "formula", "samples",
             "scenario"}

#: user-facing simulate modes to engine modes (identity entries let a written
#: manifest be reloaded as a config file)
MODE_MAP = {
    "g2": "full-quantum",
    "full-quantum": "full-quantum",
    "semiclassical": "semiclassical",
    "semiclassical-adiabatic": "semiclassical-adiabatic",
    "beam-stats": "beam-stats",
}


def parse_triples(text: str) -> tuple:
    """Inverse of the manifest encoding 'x,y,z;x,y,z'."""
    text = text.strip()
    if not text:
        return ()
    out = []
    for group in text.split(";"):
        parts = group.split(",")
        if len(parts) != 3:
            raise ConfigError(f"expected x,y,z triple, got {group!r}")
        out.append(tuple(float(c) for c in parts))
    return tuple(out)


def split_config(kv: dict) -> tuple[dict, dict]:
    """Separate physical-parameter keys from run keys; reject unknown ones."""
    param_kv, run_kv = {}, {}
    for k, v in kv.items():
        if k in PARAM_KEYS:
            param_kv[k] = v
        elif k in RUN_KEYS:
            run_kv[k] = v
        elif k not in META_KEYS:
            raise ConfigError(f"unknown configuration key {k!r}")
    return param_kv, run_kv


def gather_config(args) -> tuple[dict, dict]:
    param_kv, run_kv = {}, {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            param_kv, run_kv = split_config(parse_kv(fh.read()))
    if getattr(args, "preset", None):
        param_kv["preset"] = args.preset
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        if k in PARAM_KEYS:
            param_kv[k] = v
        elif k in RUN_KEYS:
            run_kv[k] = v
        else:
            raise ConfigError(f"unknown configuration key {k!r}")
    if "preset" not in param_kv and not getattr(args, "config", None):
        raise ConfigError("one of --preset or --config is required")
    return param_kv, run_kv


def build_params(args, param_kv):
    p = params_from_kv(param_kv)
    if getattr(args, "tilt_mrad", None) is not None:
        p = replace(p, tilt=args.tilt_mrad * 1e-3)
    if getattr(args, "truncation", None):
        p = replace(p, truncation=args.truncation)
    scale = getattr(args, "scale", None)
    if scale is not None:
        if scale <= 0:
            raise ConfigError("--scale must be positive")
        p = replace(p, n_eff_bar=p.n_eff_bar * scale)
    return p


def coerce_run_kv(run_kv: dict) -> dict:
    kw = {}
    for k, v in run_kv.items():
        if k in TRAJ_FLOAT:
            kw[k] = float(v)
        elif k in TRAJ_INT:
            kw[k] = int(v)
        elif k in TRAJ_BOOL:
            kw[k] = v.strip().lower() in ("true", "1", "yes")
        elif k in ("fixed_atoms", "fixed_velocities"):
            kw[k] = parse_triples(v)
        elif k == "mode":
            if v not in MODE_MAP:
                raise ConfigError(f"unknown mode {v!r}")
            kw[k] = v
    return kw


def out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- analytic ---------------------------------------------------------------

def cmd_analytic(args) -> int:
    param_kv, _ = gather_config(args)
    p = build_params(args, param_kv)
    tau_k = np.linspace(0.0, args.tau_max, args.n_tau)
    rng = np.random.default_rng(args.seed)
    if args.formula == "ideal":
        curve, n = an.g2_ideal(p, tau_k), 0
    elif args.formula == "fixed":
        cfgn = an.sample_configuration(p, rng)
        curve, n = an.g2_fixed(cfgn, p, tau_k), 1
    else:
        scheme = args.formula.split("-", 1)[1]
        curve = an.g2_mc_average(p, scheme, args.samples, rng, tau_k)
        n = args.samples
    out = out_dir(args)
    g2_path = out / "g2.csv"
    bio.write_g2_csv(g2_path, curve.tau_kappa, curve.values, 0.0, n, p.kappa)
    run_keys = {"command": "analytic", "formula": args.formula,
                "tau_max": args.tau_max, "n_tau": args.n_tau,
                "samples": args.samples, "seed": args.seed}
    bio.write_manifest(out / "manifest.txt", p, run_keys, [g2_path])
    print(f"analytic {args.formula}: {len(tau_k)} points -> {g2_path}")
    return EXIT_OK


# -- simulate ---------------------------------------------------------------

def _beam_stats(p, run_kv, args, out: Path) -> int:
    duration = args.duration if args.duration is not None \
        else float(run_kv["duration"]) if "duration" in run_kv else None
    if duration is None:
        raise ConfigError("beam-stats requires a duration")
    seed = args.seed if args.seed is not None else int(run_kv.get("seed", 0))
    speed_scale = float(run_kv.get("speed_scale", 1.0))
    rng = np.random.default_rng(seed)
    st = make_beam(p, rng, speed_scale, log_events=True)
    d = derive(p)
    transit_s = 2.0 * st.half_span / (d.v_oven * speed_scale)
    dt_s = transit_s / 100.0
    total_s = duration / p.kappa
    n_steps = max(1, int(math.ceil(total_s / dt_s)))
    settle = int(math.ceil(2.0 * transit_s / dt_s))
    counts = []
    for i in range(n_steps):
        advance(st, dt_s)
        spawn(st, dt_s)
        collect_exits(st)
        if i >= settle:
            counts.append(len(st.atoms))
    beam_path = out / "beam.csv"
    bio.write_beam_csv(beam_path, st.event_log)
    mean_count = float(np.mean(counts)) if counts else float("nan")
    want = little_number(st)
    run_keys = {"command": "simulate", "mode": "beam-stats",
                "duration": duration, "seed": seed,
                "speed_scale": speed_scale}
    bio.write_manifest(out / "manifest.txt", p, run_keys, [beam_path])
    print(f"beam-stats: mean atom count {mean_count:.3f}, "
          f"steady-flow prediction {want:.3f} "
          f"({100 * (mean_count / want - 1):+.2f}%)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    param_kv, run_kv = gather_config(args)
    p = build_params(args, param_kv)
    mode_str = args.mode or run_kv.get("mode") or "g2"
    if mode_str not in MODE_MAP:
        raise ConfigError(f"unknown mode {mode_str!r}")
    mode = MODE_MAP[mode_str]
    out = out_dir(args)
    if mode == "beam-stats":
        return _beam_stats(p, run_kv, args, out)
    kw = coerce_run_kv(run_kv)
    kw["mode"] = mode
    for k in ("duration", "seed", "workers"):
        v = getattr(args, k)
        if v is not None:
            kw[k] = v
    if "duration" not in kw:
        raise ConfigError("duration is required (flag or config key)")
    cfg = TrajectoryConfig(**kw)
    if mode == "full-quantum":
        est = run_g2(p, cfg)
        g2_path = out / "g2.csv"
        ev_path = out / "events.csv"
        bio.write_g2_csv(g2_path, est.tau, est.g2, est.stderr,
                         est.n_samples, p.kappa)
        bio.write_events_csv(ev_path, est.events)
        paths = [g2_path, ev_path]
        print(f"simulate g2: {est.n_samples} samples, "
              f"mean photon number {est.mean_n:.3e}, g2(0)={est.g2[0]:.4f}")
    else:
        series = run_semiclassical(p, cfg)
        s_path = out / "series.csv"
        h_path = out / "hist.csv"
        bio.write_series_csv(s_path, series.t, series.n)
        bio.write_hist_csv(h_path, an.photon_histogram(series))
        paths = [s_path, h_path]
        print(f"simulate {mode}: {len(series.n)} record points, "
              f"mean photon number {float(np.mean(series.n)):.3e}")
    run_keys = {"command": "simulate", **bio.trajectory_run_keys(cfg)}
    bio.write_manifest(out / "manifest.txt", p, run_keys, paths)
    return EXIT_OK


# -- oracle-check -----------------------------------------------------------

def _report(name, dev, tol, ok):
    print(f"{name}: max deviation {dev:.3e} (tolerance {tol:.3e}) "
          f"{'PASS' if ok else 'FAIL'}")


def _static_estimate(p, positions, duration, tau_max=4.0, n_tau=41,
                     velocities=None, seed=1):
    cfg = TrajectoryConfig(duration=duration, sample_spacing=10.0,
                           exclusion_window=5.0, tau_max=tau_max,
                           n_tau=n_tau, warmup=25.0, seed=seed,
                           fixed_atoms=tuple(tuple(q) for q in positions),
                           fixed_velocities=velocities)
    return run_g2(p, cfg)


def _check_empty_cavity(args, out: Path) -> int:
    p = replace(PRESETS["set1"], drive=1e-3 * PRESETS["set1"].kappa)
    est = _static_estimate(p, (), args.duration, seed=args.seed)
    tol = np.maximum(3.0 * est.stderr, 1e-6)
    dev = np.abs(est.g2 - 1.0)
    ok = bool(np.all(dev <= tol))
    bio.write_g2_csv(out / "trajectory.csv", est.tau, est.g2, est.stderr,
                     est.n_samples, p.kappa)
    bio.write_g2_csv(out / "reference.csv", est.tau, np.ones_like(est.tau),
                     0.0, 0, p.kappa)
    _report("empty-cavity vs flat unity", float(dev.max()),
            float(tol.min()), ok)
    return EXIT_OK if ok else EXIT_TOLERANCE


def _check_fixed_atoms(args, out: Path, positions) -> int:
    p = replace(PRESETS["set1"], drive=1e-3 * PRESETS["set1"].kappa)
    est = _static_estimate(p, positions, args.duration, seed=args.seed)
    cfgn = an.make_configuration(np.asarray(positions, dtype=float), p)
    closed = an.g2_fixed(cfgn, p, est.tau).values
    _, oracle = dense_g2(positions, 3, p, est.tau)
    bio.write_g2_csv(out / "trajectory.csv", est.tau, est.g2, est.stderr,
                     est.n_samples, p.kappa)
    bio.write_g2_csv(out / "oracle.csv", est.tau, oracle, 0.0, 0, p.kappa)
    bio.write_g2_csv(out / "closed_form.csv", est.tau, closed, 0.0, 0,
                     p.kappa)
    ok = True
    for name, ref in (("dense oracle", oracle), ("closed form", closed)):
        tol = 0.05 * np.maximum(1.0, np.abs(ref))
        dev = np.abs(est.g2 - ref)
        good = bool(np.all(dev <= tol))
        _report(f"{len(positions)}-atom trajectory vs {name}",
                float(dev.max()), float(tol.min()), good)
        ok = ok and good
    return EXIT_OK if ok else EXIT_TOLERANCE


def _check_ring_compensation(args, out: Path) -> int:
    base = PRESETS["set2"]
    p0 = replace(base, drive=1e-3 * base.kappa, cavity_kind="ring")
    d = derive(p0)
    tilt = 17.3e-3
    vz = d.v_oven * math.sin(tilt)
    shift = p0.k_wave * vz            # mean axial Doppler shift (rad/s)
    pc = replace(p0, delta_c=shift, delta_a=shift)
    runs = {
        "aligned": (p0, None),
        "tilted": (p0, ((0.0, 0.0, vz),)),
        "compensated": (pc, ((0.0, 0.0, vz),)),
    }
    g2_0 = {}
    for name, (p, vel) in runs.items():
        est = _static_estimate(p, ((0.0, 0.0, 0.0),), args.duration,
                               tau_max=2.0, n_tau=21, velocities=vel,
                               seed=args.seed)
        g2_0[name] = float(est.g2[0])
        bio.write_g2_csv(out / f"{name}.csv", est.tau, est.g2, est.stderr,
                         est.n_samples, p.kappa)
    dev_raw = abs(g2_0["tilted"] - g2_0["aligned"])
    dev_comp = abs(g2_0["compensated"] - g2_0["aligned"])
    ok = dev_comp < dev_raw
    print(f"g2(0): aligned {g2_0['aligned']:.4f}, tilted {g2_0['tilted']:.4f},"
          f" compensated {g2_0['compensated']:.4f}")
    _report("compensated offset vs uncompensated", dev_comp, dev_raw, ok)
    return EXIT_OK if ok else EXIT_TOLERANCE


def cmd_oracle_check(args) -> int:
    out = out_dir(args)
    if args.scenario == "empty-cavity":
        return _check_empty_cavity(args, out)
    if args.scenario == "one-atom":
        return _check_fixed_atoms(args, out, [[0.0, 0.0, 0.0]])
    if args.scenario == "two-atom":
        w0 = PRESETS["set1"].w0
        lam = PRESETS["set1"].wavelength
        return _check_fixed_atoms(
            args, out, [[0.0, 0.0, 0.0], [0.5 * w0, 0.0, lam / 8.0]])
    return _check_ring_compensation(args, out)


# -- parser -----------------------------------------------------------------

def _add_config_flags(sp):
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--config", help="key=value configuration file")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a configuration key (repeatable)")
    sp.add_argument("--out", "-o", required=True,
                    help="output directory (created if missing)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="beamqed",
        description="Photon-correlation simulator for a thermal atomic beam "
                    "crossing a driven optical cavity.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("analytic", help="closed-form correlation curves")
    _add_config_flags(sp)
    sp.add_argument("--formula", required=True,
                    choices=("ideal", "fixed", "mc-naive", "mc-weighted"))
    sp.add_argument("--tau-max", type=float, default=6.0)
    sp.add_argument("--n-tau", type=int, default=200)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tilt-mrad", type=float)
    sp.set_defaults(func=cmd_analytic)

    sp = sub.add_parser("simulate", help="trajectory simulation runs")
    _add_config_flags(sp)
    sp.add_argument("--mode", choices=sorted(MODE_MAP))
    sp.add_argument("--tilt-mrad", type=float)
    sp.add_argument("--truncation",
                    choices=("one-quantum", "two-quanta", "three-quanta"))
    sp.add_argument("--duration", type=float,
                    help="simulated time in units of 1/kappa")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--scale", type=float,
                    help="multiply the effective atom number for desk-scale "
                         "runs (approximation: changes the cooperativity)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("oracle-check",
                        help="engine vs independent reference solutions")
    sp.add_argument("--scenario", required=True,
                    choices=("empty-cavity", "one-atom", "two-atom",
                             "ring-compensation-toy"))
    sp.add_argument("--out", "-o", required=True)
    sp.add_argument("--duration", type=float, default=3000.0)
    sp.add_argument("--seed", type=int, default=1)
    sp.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, JumpProbabilityError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ResourceCapError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
