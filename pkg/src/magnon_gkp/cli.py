"""Command-line front end.

Config files are JSON. Frequencies and rates are ordinary frequencies in Hz
(the code multiplies by 2 pi), times are in seconds, temperatures in kelvin,
lengths in meters::

    {
      "device": {
        "f_c": 5.127e9, "f_q": 4.790e9, "f_m": 18.016e9, "xi": 17.368e9,
        "g_cq": 65e6, "g_cm": 103e6,
        "kappa_m": 10e3, "gamma": 2e3, "gamma_phi": 2e3, "T": 0.01,
        "epsilon": 55.63e6, "f_p": 4.784e9,
        "geometry": {"a": ..., "b": ..., "c": ...},            (optional)
        "material": {"gamma0": 28.0e9, "mu0_Ms": 0.175, "B0": 0.1}   (gamma0 in Hz/T)
      },
      "sequence": "0_L",            preset name, or a list of steps
      "noise": true,
      "gates": "ideal",             or "noisy"
      "dim": 140,                   optional Fock cutoff
      "steps_per_t1": 2000,
      "grid": {"extent": 6.0, "points": 161},
      "sweep": {"parameter": "device.kappa_m", "values": [0.5, 1, 2, 5, 10],
                "relative_to": "device.gamma"}
    }

Explicit steps look like {"kind": "cd", "duration_t1": 1.0} (or "duration" in
seconds), {"kind": "project", "outcome": "g"}, {"kind": "displace",
"alpha": [re, im]} (in-frame), {"kind": "rotate", "axis": "x", "angle": 1.57},
{"kind": "idle", "duration": 1e-7}.

Exit codes: 0 success, 2 config error, 3 physics-validity failure,
4 numerical drift.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import hilbert as hb
from .analysis import (SUPPORT_TOL, default_axes, effective_squeezing, grid_to_csv, grid_to_json,
                       jsonable, logical_tomography, marginals_to_csv, six_state_summary, wigner,
                       write_json)
from .dynamics import DriftError, IntegratorSettings
from .params import (TWO_PI, DeviceConfig, EllipsoidGeometry, MaterialParams, PhysicsError,
                     derive_model)
from .protocol import (TARGETS, Sequence, canonical_target, default_dim, initial_state,
                       preset_sequence, run_presets, run_sequence, step_from_dict, to_lab_frame)

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_DRIFT = 0, 2, 3, 4

_HZ_KEYS = {"f_c": "omega_c", "f_q": "omega_q", "f_m": "omega_m", "xi": "xi", "g_cq": "g_cq",
            "g_cm": "g_cm", "kappa_m": "kappa_m", "gamma": "gamma", "gamma_phi": "gamma_phi",
            "epsilon": "epsilon", "f_p": "omega_p"}
_REQUIRED = ("f_c", "f_q", "g_cq", "g_cm")
_TOP_KEYS = {"device", "sequence", "noise", "gates", "dim", "steps_per_t1", "grid", "sweep"}


class ConfigError(ValueError):
    """Malformed or incomplete configuration."""


@dataclass
class RunConfig:
    device: DeviceConfig
    raw: dict
    sequence: object = "0_L"  # preset name or list of step dicts
    noise: bool = False
    gates: str = "ideal"
    dim: Optional[int] = None
    steps_per_t1: int = 2000
    grid_extent: float = 6.0
    grid_points: int = 161
    sweep: Optional[dict] = None


def _number(d: dict, key: str, ctx: str, positive: bool = False) -> float:
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ConfigError(f"{ctx}.{key}: expected a finite number, got {val!r}")
    if positive and val <= 0:
        raise ConfigError(f"{ctx}.{key}: must be positive, got {val!r}")
    return float(val)


def device_from_dict(d: dict) -> DeviceConfig:
    if not isinstance(d, dict):
        raise ConfigError("device: expected an object")
    missing = [k for k in _REQUIRED if k not in d]
    if missing:
        raise ConfigError(f"device: missing required key '{missing[0]}'")
    known = set(_HZ_KEYS) | {"T", "geometry", "material"}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"device: unknown key '{unknown[0]}'")
    kw = {}
    for key, name in _HZ_KEYS.items():
        if key in d:
            kw[name] = TWO_PI * _number(d, key, "device")
    if "T" in d:
        kw["T"] = _number(d, "T", "device")
    if "geometry" in d:
        g = d["geometry"]
        try:
            kw["geometry"] = EllipsoidGeometry(*(_number(g, k, "device.geometry", True) for k in "abc"))
        except KeyError as exc:
            raise ConfigError(f"device.geometry: missing required key '{exc.args[0]}'") from None
    if "material" in d:
        m = d["material"]
        try:
            kw["material"] = MaterialParams(
                gamma0=TWO_PI * _number(m, "gamma0", "device.material", True),
                mu0_Ms=_number(m, "mu0_Ms", "device.material", True),
                B0=_number(m, "B0", "device.material", True),
            )
        except KeyError as exc:
            raise ConfigError(f"device.material: missing required key '{exc.args[0]}'") from None
    try:
        return DeviceConfig(**kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PhysicsError):
            raise
        raise ConfigError(f"device: {exc}") from None


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key '{unknown[0]}'")
    if "device" not in raw:
        raise ConfigError("missing required key 'device'")
    rc = RunConfig(device=device_from_dict(raw["device"]), raw=raw)
    seq = raw.get("sequence", "0_L")
    if isinstance(seq, str):
        try:
            rc.sequence = canonical_target(seq)
        except ValueError as exc:
            raise ConfigError(f"sequence: {exc}") from None
    elif isinstance(seq, list):
        if not all(isinstance(s, dict) and "kind" in s for s in seq):
            raise ConfigError("sequence: every step needs a 'kind'")
        rc.sequence = seq
    else:
        raise ConfigError("sequence: expected a preset name or a list of steps")
    if "noise" in raw:
        if not isinstance(raw["noise"], bool):
            raise ConfigError("noise: expected true or false")
        rc.noise = raw["noise"]
    rc.gates = raw.get("gates", "ideal")
    if rc.gates not in ("ideal", "noisy"):
        raise ConfigError(f"gates: expected 'ideal' or 'noisy', got {rc.gates!r}")
    if raw.get("dim") is not None:
        rc.dim = _int(raw, "dim", "", 2)
    if "steps_per_t1" in raw:
        rc.steps_per_t1 = _int(raw, "steps_per_t1", "", 1)
    if "grid" in raw:
        g = raw["grid"]
        if not isinstance(g, dict):
            raise ConfigError("grid: expected an object")
        if "extent" in g:
            rc.grid_extent = _number(g, "extent", "grid", True)
        if "points" in g:
            rc.grid_points = _int(g, "points", "grid", 2)
    if "sweep" in raw:
        rc.sweep = _parse_sweep(raw["sweep"])
    return rc


def _int(d: dict, key: str, ctx: str, minimum: int) -> int:
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, int) or val < minimum:
        raise ConfigError(f"{(ctx + '.') if ctx else ''}{key}: expected an integer >= {minimum}, got {val!r}")
    return val


def _parse_sweep(s) -> dict:
    if not isinstance(s, dict):
        raise ConfigError("sweep: expected an object")
    for key in ("parameter", "values"):
        if key not in s:
            raise ConfigError(f"sweep: missing required key '{key}'")
    path = s["parameter"]
    if not isinstance(path, str) or not path.startswith("device."):
        raise ConfigError("sweep.parameter: expected a path like 'device.kappa_m'")
    vals = s["values"]
    if not isinstance(vals, list) or not vals:
        raise ConfigError("sweep.values: expected a non-empty list")
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
            raise ConfigError(f"sweep.values: entries must be finite and non-negative, got {v!r}")
    rel = s.get("relative_to")
    if rel is not None and (not isinstance(rel, str) or not rel.startswith("device.")):
        raise ConfigError("sweep.relative_to: expected a path like 'device.gamma'")
    return {"parameter": path, "values": [float(v) for v in vals], "relative_to": rel}


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(raw)


# ---------------------------------------------------------------------------
# state dumps

def dump_state(state: hb.State, path) -> Path:
    if isinstance(state, hb.HybridState):
        payload = {"kind": "pure", "space_dims": list(state.space_dims),
                   "amplitudes": [[z.real, z.imag] for z in state.amplitudes]}
    else:
        payload = {"kind": "density", "space_dims": list(state.space_dims),
                   "matrix": [[z.real, z.imag] for z in state.matrix.ravel()]}
    return write_json(payload, path)


def load_state(path) -> hb.State:
    try:
        d = json.loads(Path(path).read_text())
        dims = tuple(int(x) for x in d["space_dims"])
        if d.get("kind", "pure") == "pure":
            amps = np.array([complex(a, b) for a, b in d["amplitudes"]])
            return hb.HybridState(amps, dims)
        vals = np.array([complex(a, b) for a, b in d["matrix"]])
        n = math.prod(dims)
        return hb.DensityState(vals.reshape(n, n), dims)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot load state dump {path}: {exc}") from None


# ---------------------------------------------------------------------------
# commands

def cmd_derive(rc: RunConfig, out: Optional[Path] = None) -> dict:
    em = derive_model(rc.device)
    report = em.report()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_json(report, out / "derive.json")
    return report


def _grid_axes(rc: RunConfig):
    return default_axes(rc.grid_extent, rc.grid_points)


def _write_state_artifacts(lab: hb.State, out: Path, rc: RunConfig, jobs: int, stem: str = "") -> dict:
    q, p = _grid_axes(rc)
    grid = wigner(lab, q, p, jobs=jobs)
    grid_to_csv(grid, out / f"{stem}wigner.csv")
    grid_to_json(grid, out / f"{stem}wigner.json")
    marginals_to_csv(grid, out / f"{stem}marginals.csv")
    tomo = logical_tomography(lab)
    sq = effective_squeezing(lab)
    write_json(tomo.to_dict(), out / f"{stem}tomography.json")
    write_json(sq.to_dict(), out / f"{stem}squeezing.json")
    dump_state(hb.resize(lab, hb.support_dim(lab, SUPPORT_TOL)), out / f"{stem}state.json")
    return {"tomography": tomo.to_dict(), "squeezing": sq.to_dict(), "wigner_integral": grid.integral()}


def cmd_prepare(rc: RunConfig, out: Path, jobs: int = 1) -> dict:
    em = derive_model(rc.device)
    settings = IntegratorSettings.for_model(em, rc.steps_per_t1)
    if isinstance(rc.sequence, str):
        seq = preset_sequence(rc.sequence, em, rc.gates)
    else:
        seq = Sequence(tuple(_resolve_step(s, em) for s in rc.sequence), "explicit")
    dim = rc.dim or default_dim(seq.max_displacement(em.chi))
    res = run_sequence(seq, initial_state(dim), em, noise=rc.noise, settings=settings)
    lab = to_lab_frame(res.magnon(), em.r)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "sequence": seq.name,
        "steps": seq.to_list(),
        "noise": rc.noise,
        "dim": dim,
        "probabilities": res.probabilities,
        "success_probability": res.success_probability,
        "integrator": res.diagnostics,
    }
    summary.update(_write_state_artifacts(lab, out, rc, jobs))
    write_json(summary, out / "summary.json")
    return summary


def _resolve_step(d: dict, em) -> object:
    d = dict(d)
    if "duration_t1" in d:
        d["duration"] = d.pop("duration_t1") * em.t1
    try:
        return step_from_dict(d)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"sequence step {d!r}: {exc}") from None


def _set_path(raw: dict, path: str, value: float) -> dict:
    new = copy.deepcopy(raw)
    node = new
    parts = path.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return new


def _get_path(raw: dict, path: str):
    node = raw
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"sweep: config has no key '{path}'")
        node = node[part]
    return node


SWEEP_COLUMNS = (["value", "F_bar"] + [f"F_{t}" for t in TARGETS]
                 + ["mean_abs_SX", "mean_abs_SZ", "dB_X", "dB_Z", "error"])


def _sweep_row(raw: dict, path: str, value: float, jobs_noise: bool) -> dict:
    row = {"value": value}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rc = parse_config(raw)
            em = derive_model(rc.device)
            settings = IntegratorSettings.for_model(em, rc.steps_per_t1)
            runs = run_presets(em, noise=rc.noise, dim=rc.dim, gates=rc.gates, settings=settings)
            s = six_state_summary({t: to_lab_frame(r.magnon(), em.r) for t, r in runs.items()})
        row.update({"F_bar": s.mean_fidelity, "mean_abs_SX": s.mean_abs_SX,
                    "mean_abs_SZ": s.mean_abs_SZ, "dB_X": s.dB_X, "dB_Z": s.dB_Z, "error": ""})
        row.update({f"F_{t}": s.fidelities[t] for t in TARGETS})
    except Exception as exc:  # recorded per row; the sweep continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(rc: RunConfig, out: Path, jobs: int = 1) -> list:
    if rc.sweep is None:
        raise ConfigError("sweep: missing 'sweep' section")
    sw = rc.sweep
    base = float(_get_path(rc.raw, sw["relative_to"])) if sw["relative_to"] else 1.0
    raws = [_set_path(rc.raw, sw["parameter"], v * base) for v in sw["values"]]
    for r in raws:
        r["noise"] = rc.noise
        if rc.dim is not None:
            r["dim"] = rc.dim
        r.pop("sweep", None)
    args = [(r, sw["parameter"], v, rc.noise) for r, v in zip(raws, sw["values"])]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, *zip(*args)))
    else:
        rows = [_sweep_row(*a) for a in args]
    out.mkdir(parents=True, exist_ok=True)
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return rows


def cmd_wigner(state_path, out: Path, rc: Optional[RunConfig] = None, jobs: int = 1) -> dict:
    state = load_state(state_path)
    extent, points = (rc.grid_extent, rc.grid_points) if rc else (6.0, 161)
    q, p = default_axes(extent, points)
    grid = wigner(state, q, p, jobs=jobs)
    out.mkdir(parents=True, exist_ok=True)
    grid_to_csv(grid, out / "wigner.csv")
    grid_to_json(grid, out / "wigner.json")
    marginals_to_csv(grid, out / "marginals.csv")
    return {"integral": grid.integral(), "min": float(grid.values.min())}


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magnon-gkp", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON run config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--dim", type=int, help="override the magnon Fock cutoff")
        p.add_argument("--noise", choices=("on", "off"), help="override dissipation")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")

    common(sub.add_parser("derive", help="derived parameter report"))
    common(sub.add_parser("prepare", help="run a preparation sequence"))
    common(sub.add_parser("sweep", help="six-state sweep over one device parameter"))
    w = sub.add_parser("wigner", help="Wigner grid from a saved state dump")
    common(w, config_required=False)
    w.add_argument("--state", required=True, help="state dump JSON from 'prepare'")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        rc = load_config(args.config) if args.config else None
        if rc is not None:
            if args.dim is not None:
                if args.dim < 2:
                    raise ConfigError("--dim must be >= 2")
                rc.dim = args.dim
            if args.noise is not None:
                rc.noise = args.noise == "on"
        if args.command == "derive":
            result = cmd_derive(rc, out)
        elif args.command == "prepare":
            result = cmd_prepare(rc, out, args.jobs)
        elif args.command == "sweep":
            result = cmd_sweep(rc, out, args.jobs)
        else:
            result = cmd_wigner(args.state, out, rc, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsError as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except DriftError as exc:
        print(f"numerical drift: {exc}", file=sys.stderr)
        return EXIT_DRIFT
    print(json.dumps(jsonable(_headline(args.command, result)), indent=2))
    return EXIT_OK


def _headline(command: str, result):
    if command == "derive":
        keys = ("r", "omega_m_prime_hz", "g_cm_prime_hz", "chi_hz", "t1", "validity", "residuals")
        return {k: result[k] for k in keys}
    if command == "prepare":
        return {"success_probability": result["success_probability"],
                "fidelities": result["tomography"]["fidelities"],
                "squeezing": result["squeezing"]}
    if command == "sweep":
        return [{k: row.get(k) for k in ("value", "F_bar", "error")} for row in result]
    return result


if __name__ == "__main__":
    sys.exit(main())
