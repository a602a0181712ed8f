"""Configuration-driven command line: solve, diagnose, sweep.

Experiments are JSON configs; outputs are a flat binary field snapshot, a
JSON report per probe with a CSV twin for plotting, and a manifest that
echoes the config (plus its hash, the seed, and the format version) so any
run can be reproduced exactly. Existing output files are never overwritten
unless --force is given.

Snapshot layout (little-endian): magic b"FRM1", uint32 header length, a
UTF-8 JSON header (format_version, s, p, n, N, h, box, collar_width,
num_cells), float64 row-major cell values, then the frozen mask as uint8.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import struct
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (blowup_normalize, caccioppoli_sweep, cellwise_energy,
                          decay_probe, gehring_probe, holder_fit,
                          holefill_convergence_check, singular_detect)
from .energy import FieldMap, build_kernel, localized_energy
from .grid import BallSpec, build_grid
from .manifold import ManifoldSpec
from .minimize import MinimizeOptions, minimize
from .params import FractionalParams

FORMAT_VERSION = 1
SNAPSHOT_MAGIC = b"FRM1"


class ConfigError(ValueError):
    """Config validation failure; collects every violated precondition."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid config:\n" + "\n".join(
            f"  - {v}" for v in self.violations))


# ---------------------------------------------------------------------------
# snapshot IO
# ---------------------------------------------------------------------------

def write_snapshot(path, field: FieldMap, force: bool = False):
    path = Path(path)
    _refuse_overwrite(path, force)
    grid = field.grid
    params = grid.params
    header = {
        "format_version": FORMAT_VERSION,
        "s": params.s, "p": params.p, "n": params.n, "N": field.N,
        "h": grid.h,
        "box": [[float(a), float(b)] for a, b in zip(grid.lo, grid.hi)],
        "collar_width": grid.collar_width,
        "num_cells": grid.num_cells,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
        f.write(field.frozen.astype(np.uint8).tobytes())


def read_snapshot(path):
    """Load a snapshot, rebuilding its grid from the header."""
    raw = Path(path).read_bytes()
    if raw[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a field snapshot (bad magic)")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(
            f"{path}: snapshot format {header['format_version']} "
            f"!= supported {FORMAT_VERSION}")
    params = FractionalParams(s=header["s"], p=header["p"],
                              n=header["n"], N=header["N"])
    grid = build_grid(params, header["box"], header["h"],
                      collar_width=header["collar_width"])
    if grid.num_cells != header["num_cells"]:
        raise ValueError(f"{path}: cell count mismatch on grid rebuild")
    M, N = header["num_cells"], header["N"]
    off = 8 + hlen
    values = np.frombuffer(raw, dtype="<f8", count=M * N,
                           offset=off).reshape(M, N).copy()
    frozen = np.frombuffer(raw, dtype=np.uint8, count=M,
                           offset=off + 8 * M * N).astype(bool)
    return FieldMap(grid, values, frozen)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

PRESETS = ("constant", "radial-degree-1", "smooth-bump", "holder-alpha",
           "file")


def build_preset(name, grid, params, options):
    """Initial/boundary field for a named scenario."""
    M, N = grid.num_cells, params.N
    x = grid.centers
    if name == "constant":
        vec = np.asarray(options.get("value", [1.0] + [0.0] * (N - 1)),
                         dtype=float)
        if vec.shape != (N,):
            raise ConfigError([f"constant preset value must have {N} entries"])
        return FieldMap(grid, np.tile(vec, (M, 1)))
    if name == "radial-degree-1":
        if N != params.n:
            raise ConfigError(["radial-degree-1 needs N == n (values x/|x|)"])
        r = np.linalg.norm(x, axis=1)
        if np.any(r < 1e-12):
            raise ConfigError(["radial-degree-1: a cell center sits at the "
                               "origin; shift the box or change h"])
        return FieldMap(grid, x / r[:, None])
    if name == "smooth-bump":
        # rotate away from the first basis vector by a compact smooth angle
        amp = float(options.get("amplitude", 1.0))
        r0 = float(options.get("radius", 0.8))
        r = np.linalg.norm(x, axis=1) / r0
        phi = np.zeros(M)
        inside = r < 1.0
        phi[inside] = amp * np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        vals = np.zeros((M, N))
        vals[:, 0] = np.cos(phi)
        vals[:, 1] = np.sin(phi)
        return FieldMap(grid, vals)
    if name == "holder-alpha":
        # sphere-valued profile (cos g, sin g, 0, ...) with g = amp |x|^alpha;
        # the second component inherits the exact Hölder exponent alpha
        if params.n != 1:
            raise ConfigError(["holder-alpha preset is one-dimensional"])
        alpha = float(options.get("alpha", 0.5))
        if not (0.0 < alpha <= 1.0):
            raise ConfigError([f"holder-alpha: alpha must lie in (0, 1], "
                               f"got {alpha}"])
        amp = float(options.get("amplitude", 1.0))
        g = amp * np.abs(x[:, 0]) ** alpha
        vals = np.zeros((M, N))
        vals[:, 0] = np.cos(g)
        vals[:, 1] = np.sin(g)
        return FieldMap(grid, vals)
    if name == "file":
        snap = read_snapshot(options["path"])
        _check_snapshot_grid(snap, grid, params)
        return FieldMap(grid, snap.values.copy(), snap.frozen.copy())
    raise ConfigError([f"unknown preset {name!r}; known: {PRESETS}"])


def _check_snapshot_grid(snap, grid, params):
    mism = []
    if snap.grid.n != grid.n:
        mism.append(f"dimension {snap.grid.n} != {grid.n}")
    if abs(snap.grid.h - grid.h) > 1e-12:
        mism.append(f"cell size {snap.grid.h} != {grid.h}")
    if snap.N != params.N:
        mism.append(f"target dimension {snap.N} != {params.N}")
    if snap.grid.num_cells != grid.num_cells:
        mism.append(f"cell count {snap.grid.num_cells} != {grid.num_cells}")
    if mism:
        raise ConfigError(["snapshot/grid mismatch: " + "; ".join(mism)])


# ---------------------------------------------------------------------------
# config parsing / validation
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict):
    """Check every precondition up front; report all violations at once."""
    errs = []
    if cfg.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        errs.append(f"format_version must be {FORMAT_VERSION}")
    pr = cfg.get("params", {})
    s, p = pr.get("s"), pr.get("p")
    n, N = pr.get("n"), pr.get("N")
    if s is None or not (0.0 < s < 1.0):
        errs.append(f"params.s must lie in (0, 1), got {s}")
    if p is None or not (p > 1.0):
        errs.append(f"params.p must exceed 1, got {p}")
    if n not in (1, 2, 3):
        errs.append(f"params.n must be 1, 2, or 3, got {n}")
    if N is None or N < 2:
        errs.append(f"params.N must be at least 2, got {N}")
    gr = cfg.get("grid", {})
    h = gr.get("h")
    if h is None or h <= 0:
        errs.append(f"grid.h must be positive, got {h}")
    if "box" not in gr:
        errs.append("grid.box is required")
    cw = gr.get("collar_width")
    if cw is not None and h is not None and h > 0 and cw < h:
        errs.append(f"grid.collar_width must be at least h, got {cw}")
    man = cfg.get("manifold", {"kind": "sphere"})
    if man.get("kind") not in ("sphere", "none"):
        errs.append(f"manifold.kind must be 'sphere' or 'none', "
                    f"got {man.get('kind')}")
    preset = cfg.get("preset", {})
    if preset.get("name") not in PRESETS:
        errs.append(f"preset.name must be one of {PRESETS}, "
                    f"got {preset.get('name')}")
    mo = cfg.get("minimize", {})
    for key, cond, msg in [
            ("backtrack", lambda v: 0 < v < 1, "lie in (0, 1)"),
            ("max_iters", lambda v: v > 0, "be positive"),
            ("restarts", lambda v: v > 0, "be positive"),
            ("grad_tol", lambda v: v > 0, "be positive")]:
        if key in mo and not cond(mo[key]):
            errs.append(f"minimize.{key} must {msg}, got {mo[key]}")
    for k, probe in enumerate(cfg.get("diagnostics", [])):
        kind = probe.get("probe")
        tag = f"diagnostics[{k}]"
        if kind == "decay":
            theta = probe.get("theta", 0.25)
            if not (0.0 < theta < 0.5):
                errs.append(f"{tag}: decay ratio theta must lie in the "
                            f"open interval (0, 1/2), got {theta}")
        elif kind == "caccioppoli":
            if not probe.get("rhos"):
                errs.append(f"{tag}: caccioppoli needs a nonempty rho list")
        elif kind == "holder":
            if len(probe.get("radii", [])) < 3:
                errs.append(f"{tag}: holder fit needs at least 3 radii")
        elif kind == "gehring":
            q = probe.get("q")
            if q is not None and p is not None and not (1.0 < q < p):
                errs.append(f"{tag}: gehring needs 1 < q < p, got q={q}")
        elif kind not in ("singular", "holefill", "blowup"):
            errs.append(f"{tag}: unknown probe {kind!r}")
    if errs:
        raise ConfigError(errs)


def _build_setup(cfg):
    """(grid, kernel, manifold, initial field) from a validated config."""
    pr = cfg["params"]
    params = FractionalParams(s=pr["s"], p=pr["p"], n=pr["n"], N=pr["N"])
    gr = cfg["grid"]
    grid = build_grid(params, gr["box"], gr["h"],
                      collar_width=gr.get("collar_width"))
    kernel = build_kernel(grid, params)
    man_cfg = cfg.get("manifold", {"kind": "sphere"})
    manifold = (ManifoldSpec.sphere(params.N)
                if man_cfg.get("kind") == "sphere" else None)
    preset = cfg["preset"]
    field = build_preset(preset["name"], grid, params,
                         {k: v for k, v in preset.items() if k != "name"})
    return grid, kernel, manifold, field


def calibrate_eps1(field, kernel, R_max) -> float:
    """Default concentration threshold: a tenth of the grid-median
    normalized energy at the largest probe scale."""
    grid = kernel.grid
    cell_e = cellwise_energy(field, kernel)
    vals = []
    for i in grid.interior_indices():
        d2 = np.sum((grid.centers - grid.centers[i][None, :]) ** 2, axis=1)
        e = float(cell_e[d2 < R_max * R_max].sum())
        vals.append(R_max ** kernel.params.sp_minus_n * e)
    return 0.1 * float(np.median(vals))


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _refuse_overwrite(path: Path, force: bool):
    if path.exists() and not force:
        raise FileExistsError(
            f"{path} already exists; pass --force to overwrite")


def _write_json(path, payload, force):
    path = Path(path)
    _refuse_overwrite(path, force)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _write_csv(path, fieldnames, rows, force):
    path = Path(path)
    _refuse_overwrite(path, force)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def _write_manifest(outdir, cfg, seed, command, force,
                    name="manifest.json"):
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    manifest = {
        "format_version": FORMAT_VERSION,
        "command": command,
        "config": cfg,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "seed": seed,
        "version": __version__,
    }
    _write_json(Path(outdir) / name, manifest, force)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_solve(config_path, out=None, seed=None, force=False) -> int:
    try:
        cfg = load_config(config_path)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if seed is not None:
        cfg.setdefault("minimize", {})["seed"] = seed
    outdir = Path(out or cfg.get("out", "out"))
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        grid, kernel, manifold, field = _build_setup(cfg)
        opts = MinimizeOptions(**cfg.get("minimize", {}))
        result = minimize(field, kernel, manifold, opts)
        write_snapshot(outdir / "field.snap", result.field, force)
        _write_json(outdir / "result.json", {
            "energy": result.energy,
            "energy_history": result.energy_history,
            "projected_grad_norm": result.projected_grad_norm,
            "converged": result.converged,
            "iterations": result.iterations,
            "winning_restart": result.winning_restart,
            "tangential_residual": result.tangential_residual,
            "meta": result.meta,
        }, force)
        _write_manifest(outdir, cfg, cfg.get("minimize", {}).get("seed", 0),
                        "solve", force)
    except (ConfigError, ValueError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _run_probe(probe, field, kernel, outdir, force):
    """Run one configured probe; write its JSON + CSV pair."""
    kind = probe["probe"]
    name = probe.get("label", kind)
    jpath = Path(outdir) / f"{name}.json"
    cpath = Path(outdir) / f"{name}.csv"
    if kind == "caccioppoli":
        rep = caccioppoli_sweep(field, kernel, probe["x0"], probe["rhos"])
        _write_json(jpath, rep.to_dict(), force)
        _write_csv(cpath, ["rho", "lhs", "rhs_core", "ratio", "resolved"],
                   rep.entries, force)
        return {"sup_ratio": rep.sup_ratio}
    if kind == "decay":
        eps1 = probe.get("eps1")
        if eps1 is None:
            eps1 = calibrate_eps1(field, kernel, probe["R"])
        rep = decay_probe(field, kernel, probe["x0"], probe["R"],
                          probe.get("theta", 0.25), eps1)
        _write_json(jpath, rep.to_dict(), force)
        _write_csv(cpath, ["R", "theta", "e_R", "e_thetaR", "ratio", "small"],
                   [{"R": rep.R, "theta": rep.theta, "e_R": rep.e_R,
                     "e_thetaR": rep.e_thetaR, "ratio": rep.ratio,
                     "small": rep.small}], force)
        return {"decay_ratio": rep.ratio}
    if kind == "singular":
        scales = probe["scales"]
        eps1 = probe.get("eps1")
        if eps1 is None:
            eps1 = calibrate_eps1(field, kernel, max(scales))
        rep = singular_detect(field, kernel, eps1, scales)
        _write_json(jpath, rep.to_dict(), force)
        rows = [{"cell": i, "min_energy": min(rep.curves[i]),
                 "max_energy": max(rep.curves[i])} for i in rep.flagged]
        _write_csv(cpath, ["cell", "min_energy", "max_energy"], rows, force)
        return {"flagged": len(rep.flagged), "clusters": len(rep.clusters)}
    if kind == "holder":
        region = BallSpec(tuple(probe["center"]), probe["radius"])
        rep = holder_fit(field, region, probe.get("p", kernel.params.p),
                         probe["radii"])
        _write_json(jpath, rep.to_dict(), force)
        _write_csv(cpath, ["z", "slope", "residual"],
                   [{"z": s["z"], "slope": s["slope"],
                     "residual": s["residual"]} for s in rep.samples], force)
        return {"alpha": rep.alpha, "accepted": rep.accepted}
    if kind == "gehring":
        balls = [BallSpec(tuple(b["center"]), b["radius"])
                 for b in probe["balls"]]
        rep = gehring_probe(field, kernel, balls, probe["q"], probe["pbar"])
        _write_json(jpath, rep.to_dict(), force)
        _write_csv(cpath, ["center", "radius", "ratio", "mean_p", "mean_q"],
                   [{k: b[k] for k in
                     ("center", "radius", "ratio", "mean_p", "mean_q")}
                    for b in rep.per_ball], force)
        return {"stable_constant": rep.stable_constant}
    if kind == "holefill":
        x0 = tuple(probe["x0"])
        radii = sorted(probe["radii"])
        hvals = [localized_energy(field, kernel, BallSpec(x0, r))
                 for r in radii]
        rep = holefill_convergence_check(
            radii, hvals, alpha=probe.get("alpha", 1.0),
            beta=probe.get("beta", 2.0))
        _write_json(jpath, rep.to_dict(), force)
        _write_csv(cpath, ["r", "h"],
                   [{"r": r, "h": v} for r, v in zip(radii, hvals)], force)
        return {"consistent": rep.consistent, "theta": rep.theta}
    if kind == "blowup":
        ball = BallSpec(tuple(probe["center"]), probe["radius"])
        e = localized_energy(field, kernel, ball)
        out = blowup_normalize(field, kernel, ball)
        write_snapshot(Path(outdir) / f"{name}.snap", out, force)
        check = localized_energy(out, kernel, ball)
        _write_json(jpath, {"ball_energy": e,
                            "normalized_ball_energy": check}, force)
        _write_csv(cpath, ["ball_energy", "normalized_ball_energy"],
                   [{"ball_energy": e, "normalized_ball_energy": check}],
                   force)
        return {"normalized_ball_energy": check}
    raise ConfigError([f"unknown probe {kind!r}"])


def cmd_diagnose(config_path, snapshot_path, out=None, force=False) -> int:
    try:
        cfg = load_config(config_path)
        field = read_snapshot(snapshot_path)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outdir = Path(out or cfg.get("out", "out"))
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        pr = cfg["params"]
        params = FractionalParams(s=pr["s"], p=pr["p"], n=pr["n"], N=pr["N"])
        gr = cfg["grid"]
        grid = build_grid(params, gr["box"], gr["h"],
                          collar_width=gr.get("collar_width"))
        _check_snapshot_grid(field, grid, params)
        kernel = build_kernel(grid, params)
        field = FieldMap(grid, field.values.copy(), field.frozen.copy())
        summary = {}
        for probe in cfg.get("diagnostics", []):
            summary[probe.get("label", probe["probe"])] = _run_probe(
                probe, field, kernel, outdir, force)
        # separate file so solve + diagnose can share an output directory
        _write_manifest(outdir, cfg, cfg.get("minimize", {}).get("seed", 0),
                        "diagnose", force, name="manifest_diagnose.json")
        if summary:
            _write_json(outdir / "summary.json", summary, force)
    except (ConfigError, ValueError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(config_path, out=None, force=False) -> int:
    try:
        cfg = load_config(config_path)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outdir = Path(out or cfg.get("out", "out"))
    outdir.mkdir(parents=True, exist_ok=True)
    sweep = cfg.get("sweep", {})
    axes = sorted(sweep)  # fixed axis order -> fixed point indexing
    values = [sweep[a] for a in axes]
    points = [()]
    for vals in values:
        points = [pt + (v,) for pt in points for v in vals]

    rows = []
    for k, pt in enumerate(points):
        point_cfg = json.loads(json.dumps(cfg))
        point_cfg.pop("sweep", None)
        overrides = dict(zip(axes, pt))
        for key, val in overrides.items():
            if key in ("s", "p"):
                point_cfg["params"][key] = val
            elif key == "h":
                point_cfg["grid"]["h"] = val
            elif key in ("theta", "eps1"):
                for probe in point_cfg.get("diagnostics", []):
                    if key == "theta" and probe["probe"] == "decay":
                        probe["theta"] = val
                    if key == "eps1" and probe["probe"] in ("decay",
                                                            "singular"):
                        probe["eps1"] = val
            else:
                raise ConfigError([f"unknown sweep axis {key!r}"])
        pdir = outdir / f"point_{k:03d}"
        row = {"point": k, **overrides}
        try:
            pdir.mkdir(parents=True, exist_ok=True)
            cfg_path = pdir / "config.json"
            _write_json(cfg_path, point_cfg, force)
            rc = cmd_solve(cfg_path, out=pdir, force=force)
            if rc != 0:
                raise RuntimeError(f"solve failed with exit code {rc}")
            rc = cmd_diagnose(cfg_path, pdir / "field.snap", out=pdir,
                              force=True)
            if rc != 0:
                raise RuntimeError(f"diagnose failed with exit code {rc}")
            result = json.loads((pdir / "result.json").read_text())
            row.update(status="ok", energy=result["energy"],
                       converged=result["converged"])
        except (ConfigError, ValueError, RuntimeError,
                FileExistsError) as exc:
            row.update(status=f"error: {exc}", energy="", converged="")
        rows.append(row)

    fieldnames = ["point", *axes, "status", "energy", "converged"]
    _write_csv(outdir / "sweep.csv", fieldnames, rows, force)
    _write_manifest(outdir, cfg, cfg.get("minimize", {}).get("seed", 0),
                    "sweep", force)
    return 0 if all(r["status"] == "ok" for r in rows) else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracmap",
        description="Fractional p-energy minimization and regularity probes")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="minimize from a config")
    p_solve.add_argument("config")
    p_solve.add_argument("--out", default=None)
    p_solve.add_argument("--seed", type=int, default=None)
    p_solve.add_argument("--force", action="store_true")

    p_diag = sub.add_parser("diagnose", help="run probes on a snapshot")
    p_diag.add_argument("config")
    p_diag.add_argument("snapshot")
    p_diag.add_argument("--out", default=None)
    p_diag.add_argument("--force", action="store_true")

    p_sweep = sub.add_parser("sweep", help="Cartesian parameter sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--force", action="store_true")

    args = parser.parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.config, out=args.out, seed=args.seed,
                         force=args.force)
    if args.command == "diagnose":
        return cmd_diagnose(args.config, args.snapshot, out=args.out,
                            force=args.force)
    return cmd_sweep(args.config, out=args.out, force=args.force)


if __name__ == "__main__":
    sys.exit(main())
