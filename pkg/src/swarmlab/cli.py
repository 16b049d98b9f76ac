"""Experiment runner: one JSON config per run, reproducible outputs.

A run is fully determined by (config, seed): every numeric output file is
byte-identical across repeats at any SWARM_THREADS setting. The manifest
records the config hash, seed, version and the emitted file list; its
timestamps are the only non-reproducible bytes a run produces.

Exit codes: 0 success, 2 config problem, 3 numeric abort, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, noise
from .core import (
    ModelParams,
    PhaseEnsemble,
    SphereEnsemble,
    config_hash,
    ensemble_from_csv,
    ensemble_from_json,
    ensemble_to_csv,
    ensemble_to_json,
    project_measure,
)
from .eps_dynamics import EpsRunConfig, simulate
from .errors import (
    BadBand,
    BadKernelParams,
    DimensionMismatch,
    FlowBlowup,
    MissingSnapshot,
    ParseError,
    SwarmError,
    TooLarge,
    ValidationError,
    ZeroVelocityParticle,
)
from .kernels import builtin_kernels
from .relaxation import blowup_time, root_asymptotics, solve_roots, speed_flow
from .sphere_dynamics import SphereRunConfig, simulate_limit, spherical_coords_3d
from .transport import convergence_study, w1_exact

MODES = ("simulate-eps", "simulate-limit", "compare", "sweep", "roots", "flow", "project")

INTEGRATOR_DEFAULTS = {"dt": 1e-3, "stride": 100, "scheme": "strang", "diffusion": False}


@dataclass(frozen=True)
class RunConfig:
    mode: str
    model: dict = field(default_factory=dict)
    kernels: dict = field(default_factory=dict)
    init: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    roots: dict = field(default_factory=dict)
    flow: dict = field(default_factory=dict)
    compare: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v or k == "mode"}


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    seed: int
    version: str
    started: str
    finished: str
    files: tuple


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object")
    known = {"mode", "model", "kernels", "init", "integrator", "sweep",
             "roots", "flow", "compare", "output"}
    unknown = set(doc) - known
    if unknown:
        raise ParseError(f"unknown config sections: {sorted(unknown)}")
    mode = doc.get("mode")
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    cfg = RunConfig(
        mode=mode,
        model=dict(doc.get("model", {})),
        kernels=dict(doc.get("kernels", {})),
        init=dict(doc.get("init", {})),
        integrator={**INTEGRATOR_DEFAULTS, **doc.get("integrator", {})},
        sweep=dict(doc.get("sweep", {})),
        roots=dict(doc.get("roots", {})),
        flow=dict(doc.get("flow", {})),
        compare=dict(doc.get("compare", {})),
        output=dict(doc.get("output", {})),
    )
    _validate(cfg)
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.as_dict(), sort_keys=True, indent=1)


def _validate(cfg: RunConfig):
    mode = cfg.mode
    if mode in ("simulate-eps", "simulate-limit", "sweep", "project"):
        _model_params(cfg, need_eps=(mode == "simulate-eps"))
        _init_ensemble_checks(cfg)
        _kernel_spec(cfg)
    if mode in ("roots", "flow"):
        _model_params(cfg, need_eps=False)
    if mode == "roots":
        if "A" not in cfg.roots or not cfg.roots.get("eps_list"):
            raise ValidationError("roots mode needs roots.A and roots.eps_list")
    if mode == "flow":
        if not cfg.flow.get("v0_list") or not cfg.flow.get("s_list"):
            raise ValidationError("flow mode needs flow.v0_list and flow.s_list")
    if mode == "sweep":
        eps_list = cfg.sweep.get("eps_list")
        t_grid = cfg.sweep.get("t_grid")
        if not eps_list or not t_grid:
            raise ValidationError("sweep mode needs sweep.eps_list and sweep.t_grid")
        if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
            raise ValidationError("sweep.eps_list must be strictly decreasing")
    if mode == "compare":
        if not (cfg.compare.get("file_a") and cfg.compare.get("file_b")):
            raise ValidationError("compare mode needs compare.file_a and compare.file_b")
    dt = cfg.integrator["dt"]
    if not (isinstance(dt, (int, float)) and dt > 0):
        raise ValidationError(f"integrator.dt must be positive, got {dt}")
    if cfg.integrator["scheme"] not in ("strang", "lie"):
        raise ValidationError(f"unknown scheme {cfg.integrator['scheme']!r}")
    if int(cfg.integrator["stride"]) < 1:
        raise ValidationError("integrator.stride must be >= 1")


def _model_params(cfg: RunConfig, need_eps: bool) -> ModelParams:
    model = cfg.model
    for key in ("alpha", "beta"):
        if key not in model:
            raise ValidationError(f"model.{key} is required")
    eps = model.get("eps")
    if need_eps and eps is None:
        raise ValidationError("model.eps is required for this mode")
    return ModelParams(alpha=model["alpha"], beta=model["beta"],
                       eps=eps if eps is not None else 1.0)


def _kernel_spec(cfg: RunConfig):
    name = cfg.kernels.get("name", "zero_potential")
    return builtin_kernels(name, cfg.kernels.get("params", {}))


def _init_ensemble_checks(cfg: RunConfig):
    init = cfg.init
    if "n" not in init or int(init["n"]) < 1:
        raise ValidationError("init.n (particle count) is required and positive")
    dist = init.get("distribution", "uniform_annulus")
    if dist not in ("uniform_annulus", "on_sphere", "two_clusters"):
        raise ValidationError(f"unknown init.distribution {dist!r}")
    params = _model_params(cfg, need_eps=False)
    if dist in ("uniform_annulus", "two_clusters"):
        r0, big_r0 = init.get("r0"), init.get("R0")
        if r0 is None or big_r0 is None:
            raise ValidationError("annulus init needs init.r0 and init.R0")
        if not r0 < params.r:
            raise ValidationError(f"r0 < r required, got r0={r0}, r={params.r}")
        if not (0 < r0 < params.r < big_r0):
            raise ValidationError(
                f"need 0 < r0 < r < R0, got r0={r0}, r={params.r}, R0={big_r0}"
            )


def _unit_directions(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _uniform_ball(rng, n, d, radius):
    dirs = _unit_directions(rng, n, d)
    rad = radius * rng.random(n) ** (1.0 / d)
    return dirs * rad[:, None]


def build_initial_ensemble(init: dict, params: ModelParams) -> PhaseEnsemble:
    """Sample the configured initial datum (deterministic in init.seed)."""
    n = int(init["n"])
    d = int(init.get("dim", 2))
    seed = int(init.get("seed", 0))
    l0 = float(init.get("L0", 1.0))
    dist = init.get("distribution", "uniform_annulus")
    rng = noise.generator(seed, noise.INIT_SAMPLING)
    if dist == "on_sphere":
        x = _uniform_ball(rng, n, d, l0)
        v = params.r * _unit_directions(rng, n, d)
    elif dist == "uniform_annulus":
        x = _uniform_ball(rng, n, d, l0)
        speeds = rng.uniform(float(init["r0"]), float(init["R0"]), size=n)
        v = _unit_directions(rng, n, d) * speeds[:, None]
    else:  # two_clusters
        half = n // 2
        centers = np.zeros((n, d))
        centers[:half, 0] = -0.5 * l0
        centers[half:, 0] = +0.5 * l0
        x = centers + _uniform_ball(rng, n, d, 0.25 * l0)
        bias = np.zeros((n, d))
        bias[:half, 1] = 1.0
        bias[half:, 1] = -1.0
        dirs = bias + 0.5 * rng.standard_normal((n, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        speeds = rng.uniform(float(init["r0"]), float(init["R0"]), size=n)
        v = dirs * speeds[:, None]
    return PhaseEnsemble.uniform_weights(x, v)


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------

def _write(path: Path, text: str, files: list):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    files.append(str(path))


def _sphere_snapshot_csv(ens: SphereEnsemble) -> str:
    """Sphere snapshots gain chart angles when d = 3."""
    base = ensemble_to_csv(ens)
    if ens.dim != 3:
        return base
    lines = base.splitlines()
    out = [lines[0] + ",theta,phi"]
    for i, line in enumerate(lines[1:]):
        theta, phi = spherical_coords_3d(ens.omega[i], ens.r)
        out.append(f"{line},{theta!r},{phi!r}")
    return "\n".join(out) + "\n"


def _moments_csv(traj) -> str:
    d = traj.snapshots[0].dim
    cols = ["t", "mass"] + [f"momentum_{k+1}" for k in range(d)] + \
        ["kinetic", "total_energy", "speed_min", "speed_max"]
    lines = [",".join(cols)]
    for t, rep, energy in zip(traj.times, traj.moment_reports, traj.energies):
        row = [repr(float(t)), repr(rep.mass)]
        row += [repr(float(c)) for c in rep.momentum]
        row += [repr(energy), repr(rep.speed_min), repr(rep.speed_max)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _emit_trajectory(traj, outdir: Path, formats, prefix: str, files: list,
                     sphere: bool):
    for k, snap in enumerate(traj.snapshots):
        if "csv" in formats:
            text = _sphere_snapshot_csv(snap) if sphere else ensemble_to_csv(snap)
            _write(outdir / f"{prefix}_{k:05d}.csv", text, files)
        if "json" in formats:
            _write(outdir / f"{prefix}_{k:05d}.json", ensemble_to_json(snap), files)
    _write(outdir / "moments.csv", _moments_csv(traj), files)


def load_snapshot(path: str):
    """Read a snapshot file (JSON preferred; CSV yields a PhaseEnsemble)."""
    p = Path(path)
    text = p.read_text()
    if p.suffix == ".json":
        return ensemble_from_json(text)
    return ensemble_from_csv(text)


# ---------------------------------------------------------------------------
# Mode handlers
# ---------------------------------------------------------------------------

def _eps_run_config(cfg: RunConfig, params, spec, seed, horizon=None) -> EpsRunConfig:
    integ = cfg.integrator
    return EpsRunConfig(
        params=params, spec=spec, dt=float(integ["dt"]),
        T=float(horizon if horizon is not None else integ.get("T", 1.0)),
        snapshot_stride=int(integ["stride"]),
        diffusion=bool(integ["diffusion"]), rng_seed=seed,
        scheme=integ["scheme"],
    )


def _mode_simulate_eps(cfg, outdir, seed, formats, files):
    params = _model_params(cfg, need_eps=True)
    spec = _kernel_spec(cfg)
    ens = build_initial_ensemble({**cfg.init, "seed": seed}, params)
    traj = simulate(ens, _eps_run_config(cfg, params, spec, seed))
    _emit_trajectory(traj, outdir, formats, "snap_eps", files, sphere=False)


def _mode_simulate_limit(cfg, outdir, seed, formats, files):
    params = _model_params(cfg, need_eps=False)
    spec = _kernel_spec(cfg)
    ens = build_initial_ensemble({**cfg.init, "seed": seed}, params)
    sphere0 = project_measure(ens, params.r)
    integ = cfg.integrator
    run = SphereRunConfig(
        params=params, spec=spec, dt=float(integ["dt"]),
        T=float(integ.get("T", 1.0)), snapshot_stride=int(integ["stride"]),
        diffusion=bool(integ["diffusion"]), rng_seed=seed,
    )
    traj = simulate_limit(sphere0, run)
    _emit_trajectory(traj, outdir, formats, "snap_limit", files, sphere=True)


def _mode_project(cfg, outdir, seed, formats, files):
    params = _model_params(cfg, need_eps=False)
    source = cfg.init.get("input")
    if source:
        ens = load_snapshot(source)
    else:
        ens = build_initial_ensemble({**cfg.init, "seed": seed}, params)
    sphere = project_measure(ens, params.r)
    if "csv" in formats:
        _write(outdir / "source.csv", ensemble_to_csv(ens), files)
        _write(outdir / "projected.csv", _sphere_snapshot_csv(sphere), files)
    if "json" in formats:
        _write(outdir / "source.json", ensemble_to_json(ens), files)
        _write(outdir / "projected.json", ensemble_to_json(sphere), files)


def _mode_roots(cfg, outdir, seed, formats, files):
    params = _model_params(cfg, need_eps=False)
    amp = float(cfg.roots["A"])
    lims = root_asymptotics(amp, params) if amp != 0.0 else (math.nan,) * 3
    lines = ["eps,A,rho1,rho2,rho3,ratio1,ratio2,ratio3,lim1,lim2,lim3"]
    for eps in cfg.roots["eps_list"]:
        triple = solve_roots(float(eps), amp, params)
        vals = [triple.rho1, triple.rho2, triple.rho3]
        ratios = [
            vals[0] / eps if vals[0] is not None else math.nan,
            (params.r - vals[1]) / eps if vals[1] is not None else math.nan,
            (vals[2] - params.r) / eps if vals[2] is not None else math.nan,
        ]
        cells = [repr(float(eps)), repr(amp)]
        cells += ["" if v is None else repr(v) for v in vals]
        cells += [repr(v) for v in ratios]
        cells += [repr(v) for v in lims]
        lines.append(",".join(cells))
    _write(outdir / "roots.csv", "\n".join(lines) + "\n", files)


def _mode_flow(cfg, outdir, seed, formats, files):
    params = _model_params(cfg, need_eps=False)
    lines = ["v0,s,speed,blowup_time"]
    for v0 in cfg.flow["v0_list"]:
        s_v = blowup_time(np.array([float(v0)]), params)
        for s in cfg.flow["s_list"]:
            speed = speed_flow(float(v0), float(s), params)
            lines.append(f"{float(v0)!r},{float(s)!r},{speed!r},{s_v!r}")
    _write(outdir / "flow.csv", "\n".join(lines) + "\n", files)


def _mode_compare(cfg, outdir, seed, formats, files):
    a = load_snapshot(cfg.compare["file_a"])
    b = load_snapshot(cfg.compare["file_b"])
    rep = w1_exact(a, b)
    doc = {
        "value": rep.value,
        "solver": rep.solver,
        "iterations": rep.iterations,
        "residual": rep.residual,
        "plan": [[i, j, m] for (i, j, m) in rep.plan],
    }
    _write(outdir / "w1_report.json", json.dumps(doc, indent=1), files)


def _mode_sweep(cfg, outdir, seed, formats, files):
    params = _model_params(cfg, need_eps=False)
    spec = _kernel_spec(cfg)
    ens = build_initial_ensemble({**cfg.init, "seed": seed}, params)
    eps_list = [float(e) for e in cfg.sweep["eps_list"]]
    t_grid = [float(t) for t in cfg.sweep["t_grid"]]
    base = _eps_run_config(
        cfg, ModelParams(params.alpha, params.beta, eps_list[0]), spec, seed,
        horizon=max(t_grid),
    )
    table = convergence_study(ens, eps_list, t_grid, base)
    lines = ["eps,t,w1,n,seed,runtime_ms"]
    for row in table.rows:
        lines.append(",".join([
            repr(row["eps"]), repr(row["t"]), repr(row["w1"]),
            str(table.metadata["n"]), str(table.metadata["seed"]),
            repr(row["runtime_ms"]),
        ]))
    _write(outdir / "sweep.csv", "\n".join(lines) + "\n", files)


_HANDLERS = {
    "simulate-eps": _mode_simulate_eps,
    "simulate-limit": _mode_simulate_limit,
    "project": _mode_project,
    "roots": _mode_roots,
    "flow": _mode_flow,
    "compare": _mode_compare,
    "sweep": _mode_sweep,
}


def run(cfg: RunConfig, output_dir: str | None = None,
        seed: int | None = None) -> RunManifest:
    """Dispatch a validated config and write outputs plus a manifest."""
    seed = int(seed if seed is not None else cfg.init.get("seed", 0))
    outdir = Path(output_dir or cfg.output.get("directory", "out"))
    formats = list(cfg.output.get("formats", ["csv"]))
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    files: list = []
    _HANDLERS[cfg.mode](cfg, outdir, seed, formats, files)
    finished = time.strftime("%Y-%m-%dT%H:%M:%S")
    digest = config_hash({**cfg.as_dict(), "seed": seed})
    manifest = RunManifest(config_hash=digest, seed=seed, version=__version__,
                           started=started, finished=finished, files=tuple(files))
    mpath = outdir / "manifest.json"
    mpath.parent.mkdir(parents=True, exist_ok=True)
    mpath.write_text(json.dumps(
        {**asdict(manifest), "files": list(manifest.files)}, indent=1))
    return manifest


_RUNTIME_ERRORS = (FlowBlowup, ZeroVelocityParticle, TooLarge, MissingSnapshot,
                   DimensionMismatch)
_CONFIG_ERRORS = (ParseError, ValidationError, BadKernelParams, BadBand)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="swarmlab",
                                     description="speed-constrained swarming lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        if mode == "compare":
            p.add_argument("file_a", nargs="?")
            p.add_argument("file_b", nargs="?")
            p.add_argument("--config")
        else:
            p.add_argument("config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output", default=None)
    args = parser.parse_args(argv)
    try:
        if args.command == "compare" and args.file_a and args.file_b:
            cfg = RunConfig(mode="compare",
                            compare={"file_a": args.file_a, "file_b": args.file_b})
        else:
            path = args.config
            if path is None:
                raise ValidationError("compare needs two snapshot files or --config")
            cfg = parse_config(Path(path).read_text())
            if cfg.mode != args.command:
                raise ValidationError(
                    f"config mode {cfg.mode!r} does not match subcommand {args.command!r}"
                )
        manifest = run(cfg, output_dir=args.output, seed=args.seed)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except SwarmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"ok: {len(manifest.files)} files, config {manifest.config_hash[:12]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
