"""CSV emission and run manifests.

Schemas:
  g2.csv      tau_kappa,tau_ns,g2,stderr,n
  series.csv  t_kappa,photon_number
  hist.csv    bin_lo,bin_hi,prob
  events.csv  time_kappa,kind,atom_id,vetoed
  beam.csv    time_s,event,atom_id,x,y,z,speed,tilt

The manifest is flat key=value text carrying every physical and run setting
plus the tool version and a content hash over the emitted files, so a run
can be reproduced bit-identically from the manifest alone.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .params import PhysicalParameters, params_to_kv

FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x)


def _write_rows(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_g2_csv(path, tau_kappa, g2, stderr, n_samples, kappa):
    tau_ns = np.asarray(tau_kappa) / kappa * 1e9
    if np.isscalar(stderr):
        stderr = np.full_like(np.asarray(g2, dtype=float), stderr)
    if np.isscalar(n_samples):
        n_samples = [n_samples] * len(tau_kappa)
    _write_rows(path, ["tau_kappa", "tau_ns", "g2", "stderr", "n"],
                zip(tau_kappa, tau_ns, g2, stderr, n_samples))


def read_g2_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data


def write_series_csv(path, t_kappa, photon_number):
    _write_rows(path, ["t_kappa", "photon_number"],
                zip(t_kappa, photon_number))


def write_hist_csv(path, hist):
    _write_rows(path, ["bin_lo", "bin_hi", "prob"],
                zip(hist.bin_lo, hist.bin_hi, hist.prob))


def write_events_csv(path, events):
    _write_rows(path, ["time_kappa", "kind", "atom_id", "vetoed"], events)


def write_beam_csv(path, event_log):
    rows = [(t, kind, aid, x, y, z, v, tilt)
            for (t, kind, aid, x, y, z, v, tilt) in event_log]
    _write_rows(path, ["time_s", "event", "atom_id", "x", "y", "z",
                       "speed", "tilt"], rows)


def content_hash(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(Path(p) for p in paths):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def write_manifest(path, params: PhysicalParameters, run_keys: dict,
                   output_paths) -> None:
    kv = dict(params_to_kv(params))
    for k, v in run_keys.items():
        if v is None:
            continue
        kv[k] = _fmt(v) if not isinstance(v, str) else v
    kv["tool_version"] = __version__
    kv["content_hash"] = content_hash(output_paths)
    with open(path, "w") as fh:
        for k in sorted(kv):
            fh.write(f"{k} = {kv[k]}\n")


def trajectory_run_keys(cfg) -> dict:
    """Manifest entries for a TrajectoryConfig (flattened, skipping unset)."""
    out = {}
    for k, v in asdict(cfg).items():
        if k in ("fixed_atoms", "fixed_velocities") and v is not None:
            out[k] = ";".join(",".join(FLOAT_FMT % c for c in p) for p in v)
        else:
            out[k] = v
    return out
